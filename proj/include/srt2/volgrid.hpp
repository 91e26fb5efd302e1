#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include "srt2/errors.hpp"

namespace srt2 {

using Index = Eigen::Index;

/// FWHM of a Gaussian expressed in units of its standard deviation, 2*sqrt(2*ln 2).
inline constexpr double kFwhmToSigma = 2.3548;

/// Oriented voxel grid. Voxel (i,j,k) sits at origin + axes * (spacing .* (i,j,k)),
/// i.e. `origin` is the center of voxel (0,0,0) and the columns of `axes` are the
/// row, column and slice directions.
struct Grid3D {
    Eigen::Vector3i dims{1, 1, 1};
    Eigen::Vector3d spacing{1.0, 1.0, 1.0};
    Eigen::Vector3d origin = Eigen::Vector3d::Zero();
    Eigen::Matrix3d axes = Eigen::Matrix3d::Identity();

    /// Grid with identity axes whose geometric center is the physical origin.
    static Grid3D centered(const Eigen::Vector3i& dims, const Eigen::Vector3d& spacing);

    Index size() const { return Index(dims.x()) * dims.y() * dims.z(); }
    Index linear(Index i, Index j, Index k) const { return i + dims.x() * (j + dims.y() * k); }

    Eigen::Vector3d world(const Eigen::Vector3d& index) const {
        return origin + axes * spacing.cwiseProduct(index);
    }
    Eigen::Vector3d index_of(const Eigen::Vector3d& point) const {
        return (axes.transpose() * (point - origin)).cwiseQuotient(spacing);
    }
    /// Physical center of the grid's bounding box.
    Eigen::Vector3d center() const {
        return world(0.5 * (dims.cast<double>() - Eigen::Vector3d::Ones()));
    }

    /// Throws ConfigError if dims/spacing are non-positive or axes are not orthonormal.
    void validate() const;
};

/// Geometric equality with a tolerance in mm, loose enough to survive a float32 round trip.
bool same_grid(const Grid3D& a, const Grid3D& b, double tol_mm = 1e-4);

/// Scalar field on a Grid3D, stored x-fastest.
template <typename Scalar>
class Volume {
public:
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Volume() = default;
    explicit Volume(const Grid3D& grid, Scalar fill = Scalar(0))
        : grid_(grid), data_(Vector::Constant(grid.size(), fill)) {}
    Volume(const Grid3D& grid, Vector data) : grid_(grid), data_(std::move(data)) {
        if (data_.size() != grid_.size())
            throw DataError("volume data length " + std::to_string(data_.size()) +
                            " does not match grid size " + std::to_string(grid_.size()));
    }

    const Grid3D& grid() const { return grid_; }
    const Vector& data() const { return data_; }
    Vector& data() { return data_; }
    Index size() const { return data_.size(); }

    Scalar operator()(Index i, Index j, Index k) const { return data_[grid_.linear(i, j, k)]; }
    Scalar& operator()(Index i, Index j, Index k) { return data_[grid_.linear(i, j, k)]; }

    template <typename Other>
    Volume<Other> cast() const {
        return Volume<Other>(grid_, data_.template cast<Other>());
    }

private:
    Grid3D grid_;
    Vector data_;
};

using Volume3D = Volume<double>;
using MaskVolume = Volume<std::uint8_t>;

/// Trilinear interpolation at a physical point; coordinates outside the grid are
/// clamped to the edge voxels.
template <typename Scalar>
Scalar trilinear_sample(const Volume<Scalar>& vol, const Eigen::Vector3d& point) {
    const Grid3D& g = vol.grid();
    const Eigen::Vector3d idx = g.index_of(point);
    Index lo[3], hi[3];
    double frac[3];
    for (int a = 0; a < 3; ++a) {
        const double c = std::clamp(idx[a], 0.0, double(g.dims[a] - 1));
        lo[a] = Index(std::floor(c));
        hi[a] = std::min<Index>(lo[a] + 1, g.dims[a] - 1);
        frac[a] = c - double(lo[a]);
    }
    double acc = 0.0;
    for (int corner = 0; corner < 8; ++corner) {
        const bool bx = corner & 1, by = corner & 2, bz = corner & 4;
        const double w = (bx ? frac[0] : 1.0 - frac[0]) * (by ? frac[1] : 1.0 - frac[1]) *
                         (bz ? frac[2] : 1.0 - frac[2]);
        if (w == 0.0) continue;
        acc += w * double(vol(bx ? hi[0] : lo[0], by ? hi[1] : lo[1], bz ? hi[2] : lo[2]));
    }
    return Scalar(acc);
}

/// Normalized discrete Gaussian with standard deviation `sigma_vox` (in samples),
/// truncated at +-4 sigma. Entry r corresponds to offset r - radius.
Eigen::VectorXd gaussian_kernel(double sigma_vox);

/// 1D Gaussian convolution along `axis` with clamp-to-edge boundary.
template <typename Scalar>
Volume<Scalar> gaussian_blur_axis(const Volume<Scalar>& vol, int axis, double fwhm_mm) {
    if (axis < 0 || axis > 2) throw ConfigError("blur axis must be 0, 1 or 2");
    if (!(fwhm_mm >= 0.0)) throw ConfigError("blur fwhm must be >= 0");
    if (fwhm_mm == 0.0) return vol;
    const Grid3D& g = vol.grid();
    const Eigen::VectorXd kernel = gaussian_kernel(fwhm_mm / kFwhmToSigma / g.spacing[axis]);
    const Index radius = (kernel.size() - 1) / 2;
    const Index n = g.dims[axis];
    const Index stride = axis == 0 ? 1 : (axis == 1 ? g.dims.x() : Index(g.dims.x()) * g.dims.y());

    Volume<Scalar> out(g);
    const auto& src = vol.data();
    auto& dst = out.data();
    for (Index lin = 0; lin < g.size(); ++lin) {
        const Index pos = (lin / stride) % n;
        const Index base = lin - pos * stride;
        double acc = 0.0;
        for (Index t = -radius; t <= radius; ++t) {
            const Index q = std::clamp<Index>(pos + t, 0, n - 1);
            acc += kernel[t + radius] * double(src[base + q * stride]);
        }
        dst[lin] = Scalar(acc);
    }
    return out;
}

/// 2D plane of `vol` at `index` along `axis`; rows follow the lower remaining axis.
Eigen::MatrixXd extract_slice(const Volume3D& vol, int axis, Index index);

/// The two axes other than `axis`, in increasing order.
inline std::pair<int, int> in_plane_axes(int axis) {
    return axis == 0 ? std::pair{1, 2} : (axis == 1 ? std::pair{0, 2} : std::pair{0, 1});
}

/// Reads a single-file NIfTI-1 float32 volume. Throws FormatError naming the bad field.
Volume3D read_volume(const std::filesystem::path& path);
/// Writes `vol` as a single-file NIfTI-1 float32 volume with sform_code = 1.
void write_volume(const Volume3D& vol, const std::filesystem::path& path);

}  // namespace srt2
