#include "srt2/acquire.hpp"

#include <unsupported/Eigen/FFT>

#include <array>
#include <cmath>
#include <limits>
#include <complex>
#include <numbers>

namespace srt2 {

Orientation Orientation::from_name(const std::string& name) {
    if (name == "axial") return axial();
    if (name == "coronal") return coronal();
    if (name == "sagittal") return sagittal();
    throw ConfigError("unknown orientation '" + name + "'");
}

std::string Orientation::name() const {
    switch (label) {
        case OrientationLabel::axial: return "axial";
        case OrientationLabel::coronal: return "coronal";
        case OrientationLabel::sagittal: return "sagittal";
    }
    return "?";
}

void SeriesGeometry::validate() const {
    if (!(in_plane_spacing.minCoeff() > 0.0) || !(slice_thickness > 0.0))
        throw ConfigError("series spacing and thickness must be > 0");
    if (!(gap_fraction >= 0.0)) throw ConfigError("gap_fraction must be >= 0");
    if (matrix.minCoeff() < 1 || n_slices < 1) throw ConfigError("series matrix and slice count must be >= 1");
    if (!(slice_fwhm_factor >= 0.0)) throw ConfigError("slice_fwhm_factor must be >= 0");
    if (orientation != Orientation::axial() && orientation != Orientation::coronal() &&
        orientation != Orientation::sagittal())
        throw ConfigError("orientation label and slice axis disagree");
}

SeriesGeometry SeriesGeometry::covering(const Grid3D& hr, Orientation orientation,
                                        const Eigen::Vector2d& in_plane_spacing, double slice_thickness,
                                        double gap_fraction) {
    SeriesGeometry g;
    g.orientation = orientation;
    g.in_plane_spacing = in_plane_spacing;
    g.slice_thickness = slice_thickness;
    g.gap_fraction = gap_fraction;
    const Eigen::Vector3d extent = hr.dims.cast<double>().cwiseProduct(hr.spacing);
    const auto [a, b] = in_plane_axes(orientation.slice_axis);
    auto cells = [](double length, double step) { return std::max(1, int(std::ceil(length / step - 1e-9))); };
    g.matrix = {cells(extent[a], in_plane_spacing[0]), cells(extent[b], in_plane_spacing[1])};
    g.n_slices = cells(extent[orientation.slice_axis], g.slice_spacing());
    g.validate();
    return g;
}

Grid3D series_grid(const Grid3D& hr, const SeriesGeometry& geometry) {
    const int s = geometry.orientation.slice_axis;
    const auto [a, b] = in_plane_axes(s);
    Grid3D g;
    g.axes = hr.axes;
    g.dims[a] = geometry.matrix[0];
    g.dims[b] = geometry.matrix[1];
    g.dims[s] = geometry.n_slices;
    g.spacing[a] = geometry.in_plane_spacing[0];
    g.spacing[b] = geometry.in_plane_spacing[1];
    g.spacing[s] = geometry.slice_spacing();
    g.origin = hr.center() - g.axes * g.spacing.cwiseProduct(0.5 * (g.dims.cast<double>() - Eigen::Vector3d::Ones()));
    return g;
}

void AcquisitionProtocol::validate() const {
    if (te_list.empty()) throw ConfigError("protocol needs at least one echo time");
    for (std::size_t i = 0; i < te_list.size(); ++i) {
        if (!(te_list[i] > 0.0)) throw ConfigError("echo times must be > 0");
        if (i > 0 && !(te_list[i] > te_list[i - 1])) throw ConfigError("echo times must be strictly increasing");
    }
    if (geometries.empty()) throw ConfigError("protocol needs at least one series geometry");
    for (const auto& g : geometries) g.validate();
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
    if (!(kspace_truncation > 0.0 && kspace_truncation <= 1.0))
        throw ConfigError("kspace_truncation must lie in (0, 1]");
    if (first_echo_count < 0) throw ConfigError("first_echo_count must be >= 0");
}

std::vector<std::pair<Index, double>> box_weights(double center, double width, Index n) {
    std::vector<std::pair<Index, double>> out;
    const double lo = center - 0.5 * width, hi = center + 0.5 * width;
    const Index first = std::clamp<Index>(Index(std::floor(lo + 0.5)), 0, n - 1);
    const Index last = std::clamp<Index>(Index(std::floor(hi + 0.5)), 0, n - 1);
    for (Index i = first; i <= last; ++i) {
        const double cell_lo = i == 0 ? -std::numeric_limits<double>::infinity() : i - 0.5;
        const double cell_hi = i == n - 1 ? std::numeric_limits<double>::infinity() : i + 0.5;
        const double overlap = std::min(hi, cell_hi) - std::max(lo, cell_lo);
        if (overlap > 0.0) out.emplace_back(i, overlap / width);
    }
    return out;
}

std::vector<std::pair<Index, double>> slice_profile_weights(double center, double sigma_vox, Index n) {
    const Eigen::VectorXd kernel = gaussian_kernel(sigma_vox);
    const Index radius = (kernel.size() - 1) / 2;
    const double c = std::clamp(center, 0.0, double(n - 1));
    const Index j0 = Index(std::floor(c));
    const Index j1 = std::min<Index>(j0 + 1, n - 1);
    const double frac = c - double(j0);

    std::vector<double> dense(std::size_t(n), 0.0);
    for (const auto& [j, wj] : {std::pair{j0, 1.0 - frac}, std::pair{j1, frac}}) {
        if (wj == 0.0) continue;
        for (Index t = -radius; t <= radius; ++t)
            dense[std::size_t(std::clamp<Index>(j + t, 0, n - 1))] += wj * kernel[t + radius];
    }
    std::vector<std::pair<Index, double>> out;
    for (Index i = 0; i < n; ++i)
        if (dense[std::size_t(i)] != 0.0) out.emplace_back(i, dense[std::size_t(i)]);
    return out;
}

ForwardOperator::ForwardOperator(const Grid3D& hr_grid, const SeriesGeometry& geometry,
                                 std::vector<Eigen::Isometry3d> motion)
    : hr_grid_(hr_grid), geometry_(geometry), lr_grid_(series_grid(hr_grid, geometry)) {
    hr_grid_.validate();
    geometry_.validate();
    if (!motion.empty() && int(motion.size()) != geometry_.n_slices)
        throw ConfigError("motion needs one transform per slice");

    const int s = geometry_.orientation.slice_axis;
    const double sigma_vox = geometry_.slice_fwhm() / kFwhmToSigma / hr_grid_.spacing[s];

    // The series grid shares the HR axes, so each LR cell factors into three 1D weight lists.
    using Weights = std::vector<std::pair<Index, double>>;
    std::array<std::vector<Weights>, 3> per_axis;
    for (int ax = 0; ax < 3; ++ax) {
        per_axis[ax].resize(std::size_t(lr_grid_.dims[ax]));
        for (int i = 0; i < lr_grid_.dims[ax]; ++i) {
            Eigen::Vector3d idx = Eigen::Vector3d::Zero();
            idx[ax] = i;
            const double c = hr_grid_.index_of(lr_grid_.world(idx))[ax];
            per_axis[ax][std::size_t(i)] =
                ax == s ? slice_profile_weights(c, sigma_vox, hr_grid_.dims[ax])
                        : box_weights(c, lr_grid_.spacing[ax] / hr_grid_.spacing[ax], hr_grid_.dims[ax]);
        }
    }

    std::vector<Eigen::Triplet<double>> triplets;
    std::size_t estimate = 0;
    for (int ax = 0; ax < 3; ++ax) {
        std::size_t mean = 0;
        for (const auto& w : per_axis[ax]) mean = std::max(mean, w.size());
        estimate = ax == 0 ? mean : estimate * mean;
    }
    triplets.reserve(std::size_t(lr_grid_.size()) * estimate);

    for (Index k = 0; k < lr_grid_.dims.z(); ++k)
        for (Index j = 0; j < lr_grid_.dims.y(); ++j)
            for (Index i = 0; i < lr_grid_.dims.x(); ++i) {
                const Index row = lr_grid_.linear(i, j, k);
                const Index l = s == 0 ? i : (s == 1 ? j : k);
                const bool moved = !motion.empty() && !motion[std::size_t(l)].isApprox(Eigen::Isometry3d::Identity(), 0.0);
                for (const auto& [hk, wk] : per_axis[2][std::size_t(k)])
                    for (const auto& [hj, wj] : per_axis[1][std::size_t(j)])
                        for (const auto& [hi, wi] : per_axis[0][std::size_t(i)]) {
                            const double w = wi * wj * wk;
                            if (!moved) {
                                triplets.emplace_back(row, hr_grid_.linear(hi, hj, hk), w);
                                continue;
                            }
                            // Trilinear weights of the moved sample position (clamp-to-edge).
                            const Eigen::Vector3d q = hr_grid_.index_of(
                                motion[std::size_t(l)] * hr_grid_.world(Eigen::Vector3d(double(hi), double(hj), double(hk))));
                            Index lo[3], up[3];
                            double f[3];
                            for (int ax = 0; ax < 3; ++ax) {
                                const double c = std::clamp(q[ax], 0.0, double(hr_grid_.dims[ax] - 1));
                                lo[ax] = Index(std::floor(c));
                                up[ax] = std::min<Index>(lo[ax] + 1, hr_grid_.dims[ax] - 1);
                                f[ax] = c - double(lo[ax]);
                            }
                            for (int corner = 0; corner < 8; ++corner) {
                                const bool bx = corner & 1, by = corner & 2, bz = corner & 4;
                                const double wt = (bx ? f[0] : 1.0 - f[0]) * (by ? f[1] : 1.0 - f[1]) *
                                                  (bz ? f[2] : 1.0 - f[2]);
                                if (wt == 0.0) continue;
                                triplets.emplace_back(row,
                                                      hr_grid_.linear(bx ? up[0] : lo[0], by ? up[1] : lo[1],
                                                                      bz ? up[2] : lo[2]),
                                                      w * wt);
                            }
                        }
            }
    matrix_.resize(lr_grid_.size(), hr_grid_.size());
    matrix_.setFromTriplets(triplets.begin(), triplets.end());
    matrix_.makeCompressed();
}

Volume3D ForwardOperator::apply(const Volume3D& x) const {
    if (!same_grid(x.grid(), hr_grid_)) throw DataError("forward operator: input grid does not match HR grid");
    return Volume3D(lr_grid_, Eigen::VectorXd(matrix_ * x.data()));
}

Volume3D ForwardOperator::adjoint(const Volume3D& y) const {
    if (!same_grid(y.grid(), lr_grid_)) throw DataError("forward operator: input grid does not match series grid");
    return Volume3D(hr_grid_, Eigen::VectorXd(matrix_.transpose() * y.data()));
}

std::vector<double> te_schedule(int n, double te_min, double te_max) {
    if (n < 2) throw ConfigError("te_schedule needs n >= 2");
    if (!(te_max > te_min)) throw ConfigError("te_schedule needs te_max > te_min");
    std::vector<double> te(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) te[std::size_t(i)] = te_min + i * (te_max - te_min) / (n - 1);
    return te;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

double unit_open(std::uint64_t h) { return (double(h >> 11) + 0.5) * 0x1.0p-53; }

}  // namespace

std::pair<double, double> counter_normal_pair(std::uint64_t seed, std::uint64_t series, std::uint64_t slice,
                                              std::uint64_t pixel) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ series);
    h = splitmix64(h ^ slice);
    h = splitmix64(h ^ pixel);
    const double u1 = unit_open(h);
    const double u2 = unit_open(splitmix64(h));
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(phi), r * std::sin(phi)};
}

Eigen::MatrixXd truncate_phase_encode(const Eigen::MatrixXd& image, double keep_fraction) {
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw ConfigError("kspace_truncation must lie in (0, 1]");
    const Index n = image.cols();
    const Index keep = std::max<Index>(1, Index(std::lround(keep_fraction * double(n))));
    const Index half = (keep - 1) / 2;
    // Readout-direction transforms cancel, so only the phase-encode axis is transformed.
    Eigen::FFT<double> fft;
    Eigen::MatrixXd out(image.rows(), n);
    std::vector<double> line(static_cast<std::size_t>(n));
    std::vector<std::complex<double>> spectrum, back;
    for (Index r = 0; r < image.rows(); ++r) {
        for (Index c = 0; c < n; ++c) line[std::size_t(c)] = image(r, c);
        fft.fwd(spectrum, line);
        for (Index f = 0; f < n; ++f) {
            const Index freq = f <= (n - 1) / 2 ? f : f - n;
            if (std::abs(freq) > half) spectrum[std::size_t(f)] = 0.0;
        }
        fft.inv(back, spectrum);
        for (Index c = 0; c < n; ++c) out(r, c) = std::abs(back[std::size_t(c)]);
    }
    return out;
}

LRSeries simulate_series(const Volume3D& m0, const Volume3D& t2, const ForwardOperator& op, double te,
                         int series_index, const SimulationKnobs& knobs) {
    if (!same_grid(m0.grid(), t2.grid())) throw DataError("simulate_series: m0 and t2 grids differ");
    if (!(knobs.kspace_truncation > 0.0 && knobs.kspace_truncation <= 1.0))
        throw ConfigError("kspace_truncation must lie in (0, 1]");
    if (!(knobs.noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");

    const double scale = knobs.is_first_echo ? 1.0 + knobs.first_echo_offset : 1.0;
    Volume3D contrast(m0.grid());
    for (Index i = 0; i < contrast.size(); ++i)
        contrast.data()[i] = scale * ideal_signal(m0.data()[i], t2.data()[i], te);

    LRSeries series{op.apply(contrast), op.geometry(), te, series_index};
    Volume3D& y = series.data;
    const Grid3D& g = y.grid();
    const int s = op.geometry().orientation.slice_axis;
    const auto [a, b] = in_plane_axes(s);

    Eigen::Vector3i ijk;
    if (knobs.kspace_truncation < 1.0) {
        for (int l = 0; l < g.dims[s]; ++l) {
            const Eigen::MatrixXd ringing = truncate_phase_encode(series.slice(l), knobs.kspace_truncation);
            ijk[s] = l;
            for (int v = 0; v < g.dims[b]; ++v)
                for (int u = 0; u < g.dims[a]; ++u) {
                    ijk[a] = u;
                    ijk[b] = v;
                    y(ijk[0], ijk[1], ijk[2]) = ringing(u, v);
                }
        }
    }
    if (knobs.noise_sigma > 0.0) {
        for (int l = 0; l < g.dims[s]; ++l) {
            ijk[s] = l;
            for (int v = 0; v < g.dims[b]; ++v)
                for (int u = 0; u < g.dims[a]; ++u) {
                    ijk[a] = u;
                    ijk[b] = v;
                    const auto [g1, g2] = counter_normal_pair(knobs.seed, std::uint64_t(series_index),
                                                              std::uint64_t(l), std::uint64_t(u + g.dims[a] * v));
                    double& px = y(ijk[0], ijk[1], ijk[2]);
                    px = std::hypot(px + g1 * knobs.noise_sigma, g2 * knobs.noise_sigma);
                }
        }
    }
    return series;
}

LRSeries simulate_series(const Volume3D& m0, const Volume3D& t2, const SeriesGeometry& geometry, double te,
                         int series_index, const SimulationKnobs& knobs) {
    return simulate_series(m0, t2, ForwardOperator(m0.grid(), geometry), te, series_index, knobs);
}

}  // namespace srt2
