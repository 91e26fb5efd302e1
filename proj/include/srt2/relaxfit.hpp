#pragma once

#include <optional>
#include <span>
#include <vector>

#include "srt2/volgrid.hpp"

namespace srt2 {

struct FitConfig {
    int skip_first_n = 1;
    double t2_min = 1.0;  // ms
    double t2_max = 5000.0;
    double m0_min = 0.0;
    double m0_max = 1e9;
    int max_iters = 50;
    double ftol = 1e-10;
    double signal_floor = 1e-6;

    /// Throws ConfigError unless bounds are ordered and at least two echoes remain.
    void validate(std::size_t n_te) const;
};

/// Sentinel stored in t2_sd / r2 when a voxel could not be fitted.
inline constexpr double kUnsetSentinel = -1.0;

struct DecayParams {
    double m0 = 0.0;
    double t2 = 0.0;
};

struct VoxelFit {
    double m0 = 0.0;
    double t2 = 0.0;
    double t2_sd = kUnsetSentinel;
    double r2 = kUnsetSentinel;
    bool converged = false;
};

/// Log-linear least squares on samples above cfg.signal_floor, t2 clamped to the bounds.
/// Empty when fewer than two samples are usable.
std::optional<DecayParams> loglinear_init(std::span<const double> signal, std::span<const double> te,
                                          const FitConfig& cfg = {});

/// Sum of squared residuals of m0 * exp(-te / t2) against `signal`.
double decay_rss(const DecayParams& p, std::span<const double> signal, std::span<const double> te);

/// Analytic Jacobian rows (d/dm0, d/dt2) of the mono-exponential model.
Eigen::MatrixX2d decay_jacobian(const DecayParams& p, std::span<const double> te);

/// Mono-exponential Levenberg-Marquardt fit after dropping the cfg.skip_first_n earliest echoes.
VoxelFit fit_voxel(std::span<const double> signal, std::span<const double> te, const FitConfig& cfg = {});

struct T2FitResult {
    Volume3D t2_map;
    Volume3D m0_map;
    Volume3D t2_sd_map;
    Volume3D r2_map;
    MaskVolume converged_mask;
};

/// fit_voxel on every masked voxel; unmasked voxels hold zeros and converged = 0.
T2FitResult fit_volume(std::span<const Volume3D> volumes, std::span<const double> te, const MaskVolume& mask,
                       const FitConfig& cfg = {}, int threads = 1);

}  // namespace srt2
