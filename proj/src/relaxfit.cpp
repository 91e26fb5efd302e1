#include "srt2/relaxfit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "srt2/parallel.hpp"

namespace srt2 {

void FitConfig::validate(std::size_t n_te) const {
    if (skip_first_n < 0) throw ConfigError("fit.skip_first_n must be >= 0");
    if (std::size_t(skip_first_n) + 2 > n_te)
        throw ConfigError("fit.skip_first_n = " + std::to_string(skip_first_n) + " leaves fewer than 2 of " +
                          std::to_string(n_te) + " echoes");
    if (!(t2_min > 0.0 && t2_max > t2_min)) throw ConfigError("fit T2 bounds must satisfy 0 < min < max");
    if (!(m0_max > m0_min)) throw ConfigError("fit M0 bounds must be ordered");
    if (max_iters < 1) throw ConfigError("fit.max_iters must be >= 1");
    if (!(ftol > 0.0)) throw ConfigError("fit.ftol must be > 0");
}

std::optional<DecayParams> loglinear_init(std::span<const double> signal, std::span<const double> te,
                                          const FitConfig& cfg) {
    double n = 0, st = 0, sy = 0, stt = 0, sty = 0;
    for (std::size_t i = 0; i < signal.size(); ++i) {
        if (!(signal[i] > cfg.signal_floor)) continue;
        const double y = std::log(signal[i]);
        n += 1;
        st += te[i];
        sy += y;
        stt += te[i] * te[i];
        sty += te[i] * y;
    }
    const double denom = n * stt - st * st;
    if (n < 2 || !(denom > 0.0)) return std::nullopt;
    const double slope = (n * sty - st * sy) / denom;
    const double intercept = (sy - slope * st) / n;
    const double t2 = slope < 0.0 ? std::clamp(-1.0 / slope, cfg.t2_min, cfg.t2_max) : cfg.t2_max;
    return DecayParams{std::clamp(std::exp(intercept), cfg.m0_min, cfg.m0_max), t2};
}

double decay_rss(const DecayParams& p, std::span<const double> signal, std::span<const double> te) {
    double rss = 0.0;
    for (std::size_t i = 0; i < signal.size(); ++i) {
        const double r = p.m0 * std::exp(-te[i] / p.t2) - signal[i];
        rss += r * r;
    }
    return rss;
}

Eigen::MatrixX2d decay_jacobian(const DecayParams& p, std::span<const double> te) {
    Eigen::MatrixX2d j(Index(te.size()), 2);
    for (std::size_t i = 0; i < te.size(); ++i) {
        const double e = std::exp(-te[i] / p.t2);
        j(Index(i), 0) = e;
        j(Index(i), 1) = p.m0 * te[i] / (p.t2 * p.t2) * e;
    }
    return j;
}

namespace {

bool singular(const Eigen::Matrix2d& jtj) {
    const double scale = jtj(0, 0) * jtj(1, 1);
    return !(scale > 0.0) || !(jtj.determinant() > 1e-14 * scale);
}

}  // namespace

VoxelFit fit_voxel(std::span<const double> signal, std::span<const double> te, const FitConfig& cfg) {
    if (signal.size() != te.size()) throw ConfigError("fit_voxel: signal and TE lengths differ");
    cfg.validate(te.size());

    std::vector<std::size_t> order(te.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return te[a] < te[b]; });
    std::vector<double> s, t;
    for (std::size_t i = std::size_t(cfg.skip_first_n); i < order.size(); ++i) {
        s.push_back(signal[order[i]]);
        t.push_back(te[order[i]]);
    }

    VoxelFit fit;
    const auto init = loglinear_init(s, t, cfg);
    if (!init) return fit;
    fit.m0 = init->m0;
    fit.t2 = init->t2;

    auto clamp = [&](DecayParams p) {
        return DecayParams{std::clamp(p.m0, cfg.m0_min, cfg.m0_max), std::clamp(p.t2, cfg.t2_min, cfg.t2_max)};
    };
    const Eigen::Map<const Eigen::VectorXd> sv(s.data(), Index(s.size()));
    const double energy = sv.squaredNorm();

    DecayParams p = *init;
    double rss = decay_rss(p, s, t);
    double mu = -1.0;
    bool converged = false;
    for (int it = 0; it < cfg.max_iters && !converged; ++it) {
        if (rss <= 1e-30 * energy) {
            converged = true;
            break;
        }
        const Eigen::MatrixX2d j = decay_jacobian(p, t);
        Eigen::VectorXd r(j.rows());
        for (Index i = 0; i < r.size(); ++i) r[i] = p.m0 * std::exp(-t[std::size_t(i)] / p.t2) - s[std::size_t(i)];
        const Eigen::Matrix2d jtj = j.transpose() * j;
        const Eigen::Vector2d grad = j.transpose() * r;
        if (mu < 0.0) mu = 1e-3;

        bool accepted = false;
        while (!accepted) {
            Eigen::Matrix2d damped = jtj;
            damped.diagonal() *= 1.0 + mu;
            const Eigen::Vector2d step = damped.ldlt().solve(-grad);
            const DecayParams cand = clamp({p.m0 + step[0], p.t2 + step[1]});
            const double cand_rss = decay_rss(cand, s, t);
            if (std::isfinite(cand_rss) && cand_rss < rss) {
                const double decrease = rss - cand_rss;
                p = cand;
                rss = cand_rss;
                mu /= 10.0;
                accepted = true;
                if (decrease <= cfg.ftol * (rss + decrease)) converged = true;
            } else {
                mu *= 10.0;
                // No downhill step left at any damping: a (possibly constrained) minimum.
                if (mu > 1e16) {
                    converged = true;
                    break;
                }
            }
        }
    }

    const Eigen::MatrixX2d j = decay_jacobian(p, t);
    const Eigen::Matrix2d jtj = j.transpose() * j;
    if (singular(jtj)) return fit;  // m0/t2 from the initializer, sentinels elsewhere

    const auto n = Index(s.size());
    fit.m0 = p.m0;
    fit.t2 = p.t2;
    fit.converged = converged;
    fit.t2_sd = n > 2 ? std::sqrt(rss / double(n - 2) * jtj.inverse()(1, 1)) : 0.0;
    const double tss = (sv.array() - sv.mean()).square().sum();
    fit.r2 = tss > 0.0 ? 1.0 - rss / tss : (rss == 0.0 ? 1.0 : 0.0);
    return fit;
}

T2FitResult fit_volume(std::span<const Volume3D> volumes, std::span<const double> te, const MaskVolume& mask,
                       const FitConfig& cfg, int threads) {
    if (volumes.size() != te.size())
        throw DataError("fit_volume: " + std::to_string(volumes.size()) + " volumes for " + std::to_string(te.size()) +
                        " echo times");
    if (volumes.empty()) throw DataError("fit_volume: no volumes");
    const Grid3D& grid = volumes.front().grid();
    for (const auto& v : volumes)
        if (!same_grid(v.grid(), grid)) throw DataError("fit_volume: volumes do not share one grid");
    if (!same_grid(mask.grid(), grid)) throw DataError("fit_volume: mask grid differs from volume grid");
    cfg.validate(te.size());

    T2FitResult out{Volume3D(grid), Volume3D(grid), Volume3D(grid), Volume3D(grid), MaskVolume(grid)};
    parallel_for(grid.size(), threads, [&](std::ptrdiff_t i) {
        if (!mask.data()[i]) return;
        std::vector<double> signal(volumes.size());
        for (std::size_t e = 0; e < volumes.size(); ++e) signal[e] = volumes[e].data()[i];
        const VoxelFit f = fit_voxel(signal, te, cfg);
        out.t2_map.data()[i] = f.t2;
        out.m0_map.data()[i] = f.m0;
        out.t2_sd_map.data()[i] = f.t2_sd;
        out.r2_map.data()[i] = f.r2;
        out.converged_mask.data()[i] = f.converged ? 1 : 0;
    });
    return out;
}

}  // namespace srt2
