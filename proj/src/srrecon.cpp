#include "srt2/srrecon.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

namespace srt2 {

void SolverConfig::validate() const {
    if (!(lambda > 0.0)) throw ConfigError("solver.lambda must be > 0");
    if (max_iters < 1) throw ConfigError("solver.max_iters must be >= 1");
    if (!(rel_tol > 0.0)) throw ConfigError("solver.rel_tol must be > 0");
    if (operator_norm_iters < 1) throw ConfigError("solver.operator_norm_iters must be >= 1");
    if (!(tv_epsilon >= 0.0)) throw ConfigError("solver.tv_epsilon must be >= 0");
}

SRProblem SRProblem::from_series(std::span<const LRSeries> series, const Grid3D& target_grid,
                                 const SolverConfig& config) {
    SRProblem prob{{}, target_grid, config};
    for (const LRSeries& s : series)
        prob.series.push_back({std::make_shared<const ForwardOperator>(target_grid, s.geometry), s.data.data()});
    prob.validate();
    return prob;
}

void SRProblem::validate() const {
    config.validate();
    if (series.empty()) throw ConfigError("SR problem has no series");
    for (const SeriesTerm& term : series) {
        if (!term.op) throw ConfigError("SR problem has a null operator");
        if (!same_grid(term.op->hr_grid(), target_grid))
            throw DataError("SR problem: operator HR grid differs from the target grid");
        if (term.data.size() != term.op->rows()) throw DataError("SR problem: series size differs from operator rows");
    }
}

Eigen::MatrixX3d gradient(const Grid3D& grid, const Eigen::VectorXd& x) {
    Eigen::MatrixX3d g = Eigen::MatrixX3d::Zero(grid.size(), 3);
    const Index nx = grid.dims.x(), ny = grid.dims.y(), nz = grid.dims.z();
    const Index stride[3] = {1, nx, nx * ny};
    for (Index k = 0; k < nz; ++k)
        for (Index j = 0; j < ny; ++j)
            for (Index i = 0; i < nx; ++i) {
                const Index p = grid.linear(i, j, k);
                if (i + 1 < nx) g(p, 0) = x[p + stride[0]] - x[p];
                if (j + 1 < ny) g(p, 1) = x[p + stride[1]] - x[p];
                if (k + 1 < nz) g(p, 2) = x[p + stride[2]] - x[p];
            }
    return g;
}

Eigen::VectorXd divergence(const Grid3D& grid, const Eigen::MatrixX3d& p) {
    Eigen::VectorXd d(grid.size());
    const Index nx = grid.dims.x(), ny = grid.dims.y(), nz = grid.dims.z();
    const Index stride[3] = {1, nx, nx * ny};
    for (Index k = 0; k < nz; ++k)
        for (Index j = 0; j < ny; ++j)
            for (Index i = 0; i < nx; ++i) {
                const Index q = grid.linear(i, j, k);
                const Index pos[3] = {i, j, k};
                const Index n[3] = {nx, ny, nz};
                double acc = 0.0;
                for (int a = 0; a < 3; ++a) {
                    if (pos[a] + 1 < n[a]) acc += p(q, a);
                    if (pos[a] > 0) acc -= p(q - stride[a], a);
                }
                d[q] = acc;
            }
    return d;
}

double tv_seminorm(const Volume3D& x) { return gradient(x.grid(), x.data()).rowwise().norm().sum(); }

ObjectiveTerms objective_terms(const Volume3D& x, const SRProblem& prob) {
    if (!same_grid(x.grid(), prob.target_grid)) throw DataError("objective: volume grid differs from target grid");
    ObjectiveTerms t;
    for (const SeriesTerm& term : prob.series) t.fidelity += (term.op->apply(x.data()) - term.data).squaredNorm();
    t.tv = tv_seminorm(x);
    t.total = 0.5 * prob.config.lambda * t.fidelity + t.tv;
    return t;
}

OperatorBlock matrix_block(Eigen::MatrixXd a, double weight) {
    auto m = std::make_shared<const Eigen::MatrixXd>(std::move(a));
    return {weight, [m](const Eigen::VectorXd& x) -> Eigen::VectorXd { return *m * x; },
            [m](const Eigen::VectorXd& y) -> Eigen::VectorXd { return m->transpose() * y; }};
}

OperatorBlock series_block(std::shared_ptr<const ForwardOperator> op, double weight) {
    return {weight, [op](const Eigen::VectorXd& x) { return op->apply(x); },
            [op](const Eigen::VectorXd& y) { return op->adjoint(y); }};
}

OperatorBlock gradient_block(const Grid3D& grid) {
    return {1.0,
            [grid](const Eigen::VectorXd& x) -> Eigen::VectorXd {
                Eigen::MatrixX3d g = gradient(grid, x);
                return Eigen::Map<const Eigen::VectorXd>(g.data(), g.size());
            },
            [grid](const Eigen::VectorXd& y) -> Eigen::VectorXd {
                return -divergence(grid, Eigen::Map<const Eigen::MatrixX3d>(y.data(), grid.size(), 3));
            }};
}

double estimate_operator_norm(std::span<const OperatorBlock> blocks, Index cols, int iters) {
    if (iters < 1) throw ConfigError("operator norm estimation needs iters >= 1");
    Eigen::VectorXd x(cols);
    for (Index i = 0; i < cols; ++i) x[i] = counter_normal_pair(0x5eedULL, 0, 0, std::uint64_t(i)).first;
    x.normalize();
    double best = 0.0;
    for (int it = 0; it < iters; ++it) {
        Eigen::VectorXd back = Eigen::VectorXd::Zero(cols);
        double sq = 0.0;
        for (const OperatorBlock& b : blocks) {
            const Eigen::VectorXd y = b.weight * b.forward(x);
            sq += y.squaredNorm();
            back += b.weight * b.adjoint(y);
        }
        // Rayleigh quotients of power iterates on K^T K never decrease; the max guards rounding.
        best = std::max(best, std::sqrt(sq));
        const double n = back.norm();
        if (n == 0.0) break;
        x = back / n;
    }
    return best;
}

void ConvergenceReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out << "iteration,objective,fidelity,tv,rel_change\n" << std::setprecision(17);
    for (const auto& e : entries)
        out << e.iteration << ',' << e.objective << ',' << e.fidelity << ',' << e.tv << ',' << e.rel_change << '\n';
    if (!out) throw DataError("write failed: " + path.string());
}

Volume3D adjoint_average(const SRProblem& prob) {
    const Index n = prob.target_grid.size();
    Eigen::VectorXd num = Eigen::VectorXd::Zero(n), den = Eigen::VectorXd::Zero(n);
    for (const SeriesTerm& term : prob.series) {
        num += term.op->adjoint(term.data);
        den += term.op->adjoint(Eigen::VectorXd::Ones(term.op->rows()));
    }
    const double floor = 1e-6 * den.maxCoeff();
    return Volume3D(prob.target_grid, num.cwiseQuotient(den.cwiseMax(floor)));
}

SRResult sr_reconstruct(const SRProblem& prob) {
    prob.validate();
    const SolverConfig& cfg = prob.config;
    const Grid3D& grid = prob.target_grid;
    const double root_lambda = std::sqrt(cfg.lambda);
    const std::size_t n_series = prob.series.size();

    std::vector<OperatorBlock> blocks;
    for (const SeriesTerm& term : prob.series) blocks.push_back(series_block(term.op, root_lambda));
    blocks.push_back(gradient_block(grid));

    SRResult result{adjoint_average(prob), {}};
    ConvergenceReport& report = result.report;
    report.operator_norm = estimate_operator_norm(blocks, grid.size(), cfg.operator_norm_iters);
    const double tau = 0.99 / report.operator_norm;
    const double sigma = tau;

    Eigen::VectorXd x = result.volume.data();
    std::vector<Eigen::VectorXd> hx(n_series), hx_bar(n_series), dual(n_series);
    double fidelity = 0.0;
    for (std::size_t s = 0; s < n_series; ++s) {
        hx[s] = prob.series[s].op->apply(x);
        hx_bar[s] = hx[s];
        dual[s] = Eigen::VectorXd::Zero(hx[s].size());
        fidelity += (hx[s] - prob.series[s].data).squaredNorm();
    }
    Eigen::VectorXd x_bar = x;
    Eigen::MatrixX3d tv_dual = Eigen::MatrixX3d::Zero(grid.size(), 3);

    auto record = [&](int it, double fid, const Eigen::VectorXd& v, double rel) {
        const double tv = gradient(grid, v).rowwise().norm().sum();
        report.entries.push_back({it, 0.5 * cfg.lambda * fid + tv, fid, tv, rel});
    };
    record(0, fidelity, x, 0.0);

    for (int it = 1; it <= cfg.max_iters; ++it) {
        // Dual ascent: prox of the conjugate of 1/2||z - sqrt(lambda) y||^2, and projection
        // of the TV dual onto the unit ball.
        Eigen::VectorXd kt_dual = Eigen::VectorXd::Zero(grid.size());
        for (std::size_t s = 0; s < n_series; ++s) {
            dual[s] = (dual[s] + sigma * root_lambda * (hx_bar[s] - prob.series[s].data)) / (1.0 + sigma);
            kt_dual += root_lambda * prob.series[s].op->adjoint(dual[s]);
        }
        tv_dual += sigma * gradient(grid, x_bar);
        const Eigen::VectorXd norms = tv_dual.rowwise().norm().cwiseMax(1.0);
        tv_dual.array().colwise() /= norms.array();
        if (tv_dual.rowwise().norm().maxCoeff() > 1.0 + cfg.tv_epsilon)
            throw NumericError("TV dual left the unit ball at iteration " + std::to_string(it), it);
        kt_dual -= divergence(grid, tv_dual);

        Eigen::VectorXd x_new = x - tau * kt_dual;
        fidelity = 0.0;
        for (std::size_t s = 0; s < n_series; ++s) {
            Eigen::VectorXd h = prob.series[s].op->apply(x_new);
            hx_bar[s] = 2.0 * h - hx[s];
            fidelity += (h - prob.series[s].data).squaredNorm();
            hx[s] = std::move(h);
        }
        if (!x_new.allFinite() || !std::isfinite(fidelity))
            throw NumericError("non-finite values at SR iteration " + std::to_string(it), it);

        const double rel = (x_new - x).norm() / std::max(x_new.norm(), std::numeric_limits<double>::min());
        x_bar = 2.0 * x_new - x;
        x = std::move(x_new);
        record(it, fidelity, x, rel);
        if (rel < cfg.rel_tol) {
            report.converged = true;
            break;
        }
    }
    result.volume.data() = x;
    return result;
}

}  // namespace srt2
