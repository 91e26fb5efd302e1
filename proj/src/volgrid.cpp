#include "srt2/volgrid.hpp"

namespace srt2 {

Grid3D Grid3D::centered(const Eigen::Vector3i& dims, const Eigen::Vector3d& spacing) {
    Grid3D g;
    g.dims = dims;
    g.spacing = spacing;
    g.origin = -0.5 * (dims.cast<double>() - Eigen::Vector3d::Ones()).cwiseProduct(spacing);
    return g;
}

void Grid3D::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 1) throw ConfigError("grid dims must be >= 1");
        if (!(spacing[a] > 0.0)) throw ConfigError("grid spacing must be > 0");
    }
    const Eigen::Matrix3d gram = axes.transpose() * axes;
    if (!((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= 1e-9))
        throw ConfigError("grid axes are not orthonormal");
}

bool same_grid(const Grid3D& a, const Grid3D& b, double tol_mm) {
    return a.dims == b.dims && (a.spacing - b.spacing).cwiseAbs().maxCoeff() <= tol_mm &&
           (a.origin - b.origin).cwiseAbs().maxCoeff() <= tol_mm &&
           (a.axes - b.axes).cwiseAbs().maxCoeff() <= 1e-6;
}

Eigen::VectorXd gaussian_kernel(double sigma_vox) {
    if (!(sigma_vox > 0.0)) return Eigen::VectorXd::Ones(1);
    const Index radius = Index(std::floor(4.0 * sigma_vox));
    Eigen::VectorXd k(2 * radius + 1);
    for (Index t = -radius; t <= radius; ++t)
        k[t + radius] = std::exp(-0.5 * double(t * t) / (sigma_vox * sigma_vox));
    return k / k.sum();
}

Eigen::MatrixXd extract_slice(const Volume3D& vol, int axis, Index index) {
    const Grid3D& g = vol.grid();
    if (axis < 0 || axis > 2 || index < 0 || index >= g.dims[axis])
        throw DataError("slice index out of range");
    const auto [a, b] = in_plane_axes(axis);
    Eigen::MatrixXd out(g.dims[a], g.dims[b]);
    Eigen::Vector3i ijk;
    ijk[axis] = int(index);
    for (int v = 0; v < g.dims[b]; ++v)
        for (int u = 0; u < g.dims[a]; ++u) {
            ijk[a] = u;
            ijk[b] = v;
            out(u, v) = vol(ijk[0], ijk[1], ijk[2]);
        }
    return out;
}

}  // namespace srt2
