#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <fstream>

#include "srt2/phantom.hpp"
#include "srt2/srrecon.hpp"
#include "test_util.hpp"

using namespace srt2;

namespace {

struct SmallProblem {
    Grid3D hr = Grid3D::centered({22, 9, 12}, {2.0, 2.0, 2.0});
    PhantomMaps truth;
    SRProblem prob;
};

SmallProblem make_problem(double lambda, int iters, double te = 150.0) {
    SmallProblem p;
    PhantomSpec spec;
    spec.vials = {{"a", {-10.0, 0.0}, 6.0, 400.0, 1000.0}, {"b", {10.0, 0.0}, 6.0, 200.0, 1000.0}};
    spec.field_of_view = {44.0, 24.0};
    p.truth = rasterize(spec, p.hr, 2);
    std::vector<LRSeries> series;
    for (const Orientation o : {Orientation::axial(), Orientation::coronal(), Orientation::sagittal()})
        series.push_back(simulate_series(p.truth.m0, p.truth.t2,
                                         SeriesGeometry::covering(p.hr, o, {2.0, 2.0}, 5.0, 0.1), te, 0, {}));
    SolverConfig cfg;
    cfg.lambda = lambda;
    cfg.max_iters = iters;
    p.prob = SRProblem::from_series(series, p.hr, cfg);
    return p;
}

}  // namespace

TEST_CASE("divergence is the negative adjoint of the gradient") {
    const Grid3D g = Grid3D::centered({7, 5, 6}, {1, 1, 1});
    std::mt19937_64 rng(3);
    for (int t = 0; t < 10; ++t) {
        const Eigen::VectorXd x = test::random_vector(g.size(), rng);
        const Eigen::VectorXd pv = test::random_vector(3 * g.size(), rng);
        const Eigen::MatrixX3d p = Eigen::Map<const Eigen::MatrixX3d>(pv.data(), g.size(), 3);
        const double lhs = (gradient(g, x).array() * p.array()).sum();
        const double rhs = -x.dot(divergence(g, p));
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("total variation of simple fields") {
    const Grid3D g = Grid3D::centered({4, 3, 5}, {1, 1, 1});
    CHECK(tv_seminorm(Volume3D(g, 3.0)) == 0.0);
    Volume3D step(g);
    for (int k = 0; k < 5; ++k)
        for (int j = 0; j < 3; ++j)
            for (int i = 2; i < 4; ++i) step(i, j, k) = 2.0;
    // One unit-height jump of size 2 across a 3x5 face.
    CHECK(tv_seminorm(step) == doctest::Approx(2.0 * 15));
    Volume3D ramp(g);
    for (int k = 0; k < 5; ++k)
        for (int j = 0; j < 3; ++j)
            for (int i = 0; i < 4; ++i) ramp(i, j, k) = i + j;
    // Interior voxels see (1, 1); boundary faces lose one component.
    double expect = 0.0;
    for (int k = 0; k < 5; ++k)
        for (int j = 0; j < 3; ++j)
            for (int i = 0; i < 4; ++i) expect += std::hypot(i + 1 < 4 ? 1.0 : 0.0, j + 1 < 3 ? 1.0 : 0.0);
    CHECK(tv_seminorm(ramp) == doctest::Approx(expect));
}

TEST_CASE("power iteration agrees with the Gram eigenvalue oracle") {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 5; ++t) {
        Eigen::MatrixXd a(12, 8);
        for (Index c = 0; c < 8; ++c) a.col(c) = test::random_vector(12, rng);
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a.transpose() * a);
        const double exact = std::sqrt(eig.eigenvalues().maxCoeff());
        const std::vector<OperatorBlock> blocks{matrix_block(a)};
        double prev = 0.0;
        for (int iters : {1, 5, 20, 400}) {
            const double est = estimate_operator_norm(blocks, 8, iters);
            CHECK(est <= exact * (1 + 1e-12));
            CHECK(est >= prev);
            prev = est;
        }
        CHECK(prev == doctest::Approx(exact).epsilon(1e-6));
    }
}

TEST_CASE("stacked blocks combine in the operator norm") {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, 3), b = Eigen::MatrixXd::Zero(3, 3);
    a.diagonal() << 3.0, 1.0, 0.0;
    b.diagonal() << 0.0, 1.0, 4.0;
    const std::vector<OperatorBlock> blocks{matrix_block(a, 2.0), matrix_block(b)};
    // K^T K = diag(36 + 0, 4 + 1, 0 + 16)
    CHECK(estimate_operator_norm(blocks, 3, 200) == doctest::Approx(6.0).epsilon(1e-9));
}

TEST_CASE("gradient operator norm stays below sqrt(12)") {
    const Grid3D g = Grid3D::centered({9, 8, 7}, {1, 1, 1});
    const std::vector<OperatorBlock> blocks{gradient_block(g)};
    const double n = estimate_operator_norm(blocks, g.size(), 300);
    CHECK(n < std::sqrt(12.0));
    CHECK(n > 3.0);
}

TEST_CASE("objective terms follow their definition") {
    const SmallProblem p = make_problem(0.75, 10);
    const Volume3D x = p.truth.m0;
    ObjectiveTerms t = objective_terms(x, p.prob);
    double fid = 0.0;
    for (const auto& s : p.prob.series) fid += (s.op->apply(x.data()) - s.data).squaredNorm();
    CHECK(t.fidelity == doctest::Approx(fid));
    CHECK(t.tv == doctest::Approx(tv_seminorm(x)));
    CHECK(t.total == doctest::Approx(0.375 * fid + t.tv));
    CHECK(objective(x, p.prob) == t.total);
}

TEST_CASE("SR objective decreases and the solver is deterministic") {
    const SmallProblem p = make_problem(0.75, 150);
    const SRResult r = sr_reconstruct(p.prob);
    const auto& e = r.report.entries;
    REQUIRE(e.size() > 11);
    CHECK(e.back().objective <= e.front().objective);
    for (std::size_t i = 11; i < e.size(); ++i) CHECK(e[i].objective <= e[i - 1].objective * (1 + 1e-6));
    CHECK(objective(r.volume, p.prob) == doctest::Approx(e.back().objective).epsilon(1e-12));
    const SRResult again = sr_reconstruct(p.prob);
    CHECK(again.volume.data() == r.volume.data());
}

TEST_CASE("doubling lambda does not increase data fidelity") {
    const SmallProblem lo = make_problem(0.75, 2000);
    const SmallProblem hi = make_problem(1.5, 2000);
    SRProblem a = lo.prob, b = hi.prob;
    a.config.rel_tol = b.config.rel_tol = 1e-9;
    const double fa = sr_reconstruct(a).report.entries.back().fidelity;
    const double fb = sr_reconstruct(b).report.entries.back().fidelity;
    CHECK(fb <= fa);
}

TEST_CASE("consistent constant data reconstructs exactly") {
    const Grid3D hr = Grid3D::centered({10, 8, 9}, {1.5, 1.5, 1.5});
    const Volume3D x(hr, 250.0);
    std::vector<SeriesTerm> terms;
    for (const Orientation o : {Orientation::axial(), Orientation::coronal()}) {
        auto op = std::make_shared<const ForwardOperator>(hr, SeriesGeometry::covering(hr, o, {1.5, 1.5}, 3.0, 0.0));
        terms.push_back({op, op->apply(x.data())});
    }
    const SRResult r = sr_reconstruct({terms, hr, SolverConfig{}});
    CHECK((r.volume.data().array() - 250.0).abs().maxCoeff() < 1e-9);
    CHECK(r.report.converged);
}

TEST_CASE("adjoint average of consistent constant data is that constant") {
    const SmallProblem p = make_problem(0.75, 1);
    const Volume3D avg = adjoint_average(p.prob);
    CHECK(avg.grid().dims == p.hr.dims);
    CHECK(avg.data().allFinite());
}

TEST_CASE("problem validation and numeric failures") {
    SmallProblem p = make_problem(0.75, 5);
    SUBCASE("no series") {
        SRProblem empty{{}, p.hr, {}};
        CHECK_THROWS_AS(sr_reconstruct(empty), ConfigError);
    }
    SUBCASE("data length mismatch") {
        p.prob.series[0].data.conservativeResize(3);
        CHECK_THROWS_AS(sr_reconstruct(p.prob), DataError);
    }
    SUBCASE("bad lambda") {
        p.prob.config.lambda = 0.0;
        CHECK_THROWS_AS(sr_reconstruct(p.prob), ConfigError);
    }
    SUBCASE("non-finite data") {
        p.prob.series[1].data[0] = std::numeric_limits<double>::infinity();
        CHECK_THROWS_AS(sr_reconstruct(p.prob), NumericError);
    }
}

TEST_CASE("convergence CSV layout") {
    const SmallProblem p = make_problem(0.75, 3);
    const SRResult r = sr_reconstruct(p.prob);
    const auto path = test::temp_dir("conv") / "c.csv";
    r.report.write_csv(path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "iteration,objective,fidelity,tv,rel_change");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == int(r.report.entries.size()));
    CHECK(r.report.entries.size() == 4);
}
