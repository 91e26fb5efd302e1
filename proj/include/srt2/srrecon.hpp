#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "srt2/acquire.hpp"

namespace srt2 {

struct SolverConfig {
    double lambda = 0.75;
    int max_iters = 300;
    double rel_tol = 1e-5;
    int operator_norm_iters = 30;
    /// Slack allowed on the TV dual constraint |q| <= 1 before the solver reports a
    /// numeric failure.
    double tv_epsilon = 1e-9;

    void validate() const;
};

/// One data term: a forward operator and the series it should reproduce.
struct SeriesTerm {
    std::shared_ptr<const ForwardOperator> op;
    Eigen::VectorXd data;
};

struct SRProblem {
    std::vector<SeriesTerm> series;
    Grid3D target_grid;
    SolverConfig config;

    /// Builds one term per series, each with its own operator on `target_grid`.
    static SRProblem from_series(std::span<const LRSeries> series, const Grid3D& target_grid,
                                 const SolverConfig& config);
    void validate() const;
};

/// Forward-difference gradient with replicate boundary, one column per axis (index units).
Eigen::MatrixX3d gradient(const Grid3D& grid, const Eigen::VectorXd& x);
/// Exact negative adjoint of gradient(): <gradient(x), p> = -<x, divergence(p)>.
Eigen::VectorXd divergence(const Grid3D& grid, const Eigen::MatrixX3d& p);

/// Isotropic total variation: sum of voxel gradient magnitudes.
double tv_seminorm(const Volume3D& x);

struct ObjectiveTerms {
    double fidelity = 0.0;  // sum_k ||H_k x - y_k||^2, unweighted
    double tv = 0.0;
    double total = 0.0;  // lambda/2 * fidelity + tv
};

ObjectiveTerms objective_terms(const Volume3D& x, const SRProblem& prob);
inline double objective(const Volume3D& x, const SRProblem& prob) { return objective_terms(x, prob).total; }

/// A block of a vertically stacked linear operator K = [w_1 A_1; w_2 A_2; ...].
struct OperatorBlock {
    double weight = 1.0;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> forward;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> adjoint;
};

OperatorBlock matrix_block(Eigen::MatrixXd a, double weight = 1.0);
OperatorBlock series_block(std::shared_ptr<const ForwardOperator> op, double weight = 1.0);
/// The gradient as an operator from R^N to R^{3N}.
OperatorBlock gradient_block(const Grid3D& grid);

/// Power-iteration estimate of ||K||; non-decreasing in `iters`, deterministic start vector.
double estimate_operator_norm(std::span<const OperatorBlock> blocks, Index cols, int iters);

struct ConvergenceEntry {
    int iteration = 0;
    double objective = 0.0;
    double fidelity = 0.0;
    double tv = 0.0;
    double rel_change = 0.0;
};

struct ConvergenceReport {
    std::vector<ConvergenceEntry> entries;  // entries[0] is the initial estimate
    double operator_norm = 0.0;
    bool converged = false;

    void write_csv(const std::filesystem::path& path) const;
};

struct SRResult {
    Volume3D volume;
    ConvergenceReport report;
};

/// Normalized adjoint average sum_k H_k^T y_k / sum_k H_k^T 1.
Volume3D adjoint_average(const SRProblem& prob);

/// Primal-dual minimization of lambda/2 sum_k ||H_k x - y_k||^2 + TV(x).
SRResult sr_reconstruct(const SRProblem& prob);

}  // namespace srt2
