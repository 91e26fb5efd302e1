#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>

#include "srt2/acquire.hpp"
#include "srt2/phantom.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace srt2;

namespace {

SeriesGeometry small_geometry(const Grid3D& hr, Orientation o) {
    SeriesGeometry g = SeriesGeometry::covering(hr, o, {1.5, 1.3}, 2.0, 0.25);
    return g;
}

}  // namespace

TEST_CASE("te_schedule spaces echo times uniformly over the protocol range") {
    const auto te = te_schedule(6);
    REQUIRE(te.size() == 6);
    const double expect[] = {90.0, 131.6, 173.2, 214.8, 256.4, 298.0};
    for (int i = 0; i < 6; ++i) CHECK(te[std::size_t(i)] == doctest::Approx(expect[i]).epsilon(1e-14));
    for (int n : {4, 5, 8, 10, 18}) {
        const auto t = te_schedule(n);
        CHECK(t.front() == 90.0);
        CHECK(t.back() == doctest::Approx(298.0).epsilon(1e-14));
    }
    CHECK_THROWS_AS(te_schedule(1), ConfigError);
}

TEST_CASE("orientation names round trip") {
    for (const Orientation o : {Orientation::axial(), Orientation::coronal(), Orientation::sagittal()})
        CHECK(Orientation::from_name(o.name()) == o);
    CHECK_THROWS_AS(Orientation::from_name("oblique"), ConfigError);
}

TEST_CASE("covering geometry spans the HR extent along every axis") {
    const Grid3D hr = Grid3D::centered({66, 21, 27}, {1.1, 1.1, 1.1});
    for (const Orientation o : {Orientation::axial(), Orientation::coronal(), Orientation::sagittal()}) {
        const SeriesGeometry geo = SeriesGeometry::covering(hr, o, {1.13, 1.13}, 3.0, 0.1);
        const Grid3D lr = series_grid(hr, geo);
        CHECK((lr.center() - hr.center()).norm() < 1e-9);
        for (int ax = 0; ax < 3; ++ax)
            CHECK(lr.dims[ax] * lr.spacing[ax] >= hr.dims[ax] * hr.spacing[ax] - 1e-9);
        CHECK(lr.spacing[o.slice_axis] == doctest::Approx(3.3));
    }
}

TEST_CASE("forward operator equals the dense definition on an 8x8x8 grid") {
    const Grid3D hr = Grid3D::centered({8, 8, 8}, {1.0, 1.0, 1.0});
    for (const Orientation o : {Orientation::axial(), Orientation::coronal(), Orientation::sagittal()}) {
        CAPTURE(o.name());
        const SeriesGeometry geo = small_geometry(hr, o);
        const ForwardOperator op(hr, geo);
        const Eigen::MatrixXd dense = Eigen::MatrixXd(op.matrix());
        double worst = 0.0;
        for (Index p = 0; p < hr.size(); ++p) {
            Volume3D e(hr);
            e.data()[p] = 1.0;
            worst = std::max(worst, (test::oracle_apply(e, geo).data() - dense.col(p)).cwiseAbs().maxCoeff());
        }
        CHECK(worst <= 1e-10);
    }
}

TEST_CASE("forward operator with per-slice motion equals D B applied to the resampled volume") {
    const Grid3D hr = Grid3D::centered({8, 8, 8}, {1.0, 1.0, 1.0});
    const SeriesGeometry geo = small_geometry(hr, Orientation::axial());
    std::vector<Eigen::Isometry3d> motion(std::size_t(geo.n_slices), Eigen::Isometry3d::Identity());
    motion[1] = Eigen::Translation3d(0.4, -0.3, 0.2) * Eigen::AngleAxisd(0.1, Eigen::Vector3d::UnitZ());
    const ForwardOperator op(hr, geo, motion);
    const Volume3D x = test::random_volume(hr, 13);
    const Volume3D y = op.apply(x);
    for (int l = 0; l < geo.n_slices; ++l) {
        Volume3D moved(hr);
        for (int k = 0; k < 8; ++k)
            for (int j = 0; j < 8; ++j)
                for (int i = 0; i < 8; ++i)
                    moved(i, j, k) = trilinear_sample(x, motion[std::size_t(l)] * hr.world(Eigen::Vector3d(i, j, k)));
        const Volume3D expect = test::oracle_apply(moved, geo);
        for (int j = 0; j < geo.matrix[1]; ++j)
            for (int i = 0; i < geo.matrix[0]; ++i) CHECK(y(i, j, l) == doctest::Approx(expect(i, j, l)).epsilon(1e-10));
    }
    // Identity motion reproduces the static operator.
    const ForwardOperator still(hr, geo, std::vector<Eigen::Isometry3d>(std::size_t(geo.n_slices), Eigen::Isometry3d::Identity()));
    CHECK((Eigen::MatrixXd(still.matrix()) - Eigen::MatrixXd(ForwardOperator(hr, geo).matrix())).norm() == 0.0);
}

TEST_CASE("dot-product adjoint test across orientations") {
    const Grid3D hr = Grid3D::centered({20, 14, 16}, {1.1, 1.1, 1.1});
    std::mt19937_64 rng(99);
    int draws = 0;
    for (const Orientation o : {Orientation::axial(), Orientation::coronal(), Orientation::sagittal()}) {
        const SeriesGeometry geo = SeriesGeometry::covering(hr, o, {1.13, 1.13}, 3.0, 0.1);
        std::vector<Eigen::Isometry3d> motion;
        for (int l = 0; l < geo.n_slices; ++l)
            motion.push_back(Eigen::Isometry3d(Eigen::Translation3d(0.3 * l, 0.0, -0.2) *
                                               Eigen::AngleAxisd(0.02 * l, Eigen::Vector3d::UnitY())));
        for (const ForwardOperator& op : {ForwardOperator(hr, geo), ForwardOperator(hr, geo, motion)})
            for (int t = 0; t < 4; ++t) {
                const Eigen::VectorXd x = test::random_vector(op.cols(), rng);
                const Eigen::VectorXd y = test::random_vector(op.rows(), rng);
                const double lhs = op.apply(x).dot(y), rhs = x.dot(op.adjoint(y));
                CHECK(std::abs(lhs - rhs) <= 1e-8 * std::max(std::abs(lhs), std::abs(rhs)));
                ++draws;
            }
    }
    CHECK(draws >= 20);
}

TEST_CASE("forward operator rows are averaging weights") {
    const Grid3D hr = Grid3D::centered({20, 14, 16}, {1.1, 1.1, 1.1});
    const ForwardOperator op(hr, SeriesGeometry::covering(hr, Orientation::coronal(), {1.13, 1.13}, 3.0, 0.1));
    const Eigen::VectorXd ones = op.apply(Eigen::VectorXd::Ones(op.cols()));
    CHECK((ones.array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(op.matrix().coeffs().minCoeff() >= 0.0);
    CHECK_THROWS_AS(op.apply(Volume3D(Grid3D::centered({3, 3, 3}, {1, 1, 1}))), DataError);
}

TEST_CASE("box weights integrate the cell overlap") {
    const auto w = box_weights(2.0, 2.0, 8);
    REQUIRE(w.size() == 3);
    CHECK(w[0].first == 1);
    CHECK(w[0].second == doctest::Approx(0.25));
    CHECK(w[1].second == doctest::Approx(0.5));
    // Mass beyond the edge lands on the edge cell.
    const auto edge = box_weights(0.0, 3.0, 8);
    CHECK(edge.front().first == 0);
    CHECK(edge.front().second == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("simulation applies the first-echo offset multiplicatively") {
    const Grid3D hr = Grid3D::centered({20, 14, 16}, {1.1, 1.1, 1.1});
    const Volume3D m0(hr, 1000.0), t2(hr, 200.0);
    const SeriesGeometry geo = SeriesGeometry::covering(hr, Orientation::coronal(), {1.13, 1.13}, 3.0, 0.1);
    const ForwardOperator op(hr, geo);
    SimulationKnobs knobs;
    knobs.first_echo_offset = 0.1;
    const LRSeries plain = simulate_series(m0, t2, op, 90.0, 0, knobs);
    knobs.is_first_echo = true;
    const LRSeries first = simulate_series(m0, t2, op, 90.0, 0, knobs);
    CHECK((first.data.data() - 1.1 * plain.data.data()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(plain.data.data()[0] == doctest::Approx(1000.0 * std::exp(-90.0 / 200.0)).epsilon(1e-12));
}

TEST_CASE("Rician noise on zero signal has the Rayleigh mean and is seed deterministic") {
    const Grid3D hr = Grid3D::centered({40, 40, 40}, {1.0, 1.0, 1.0});
    const Volume3D m0(hr, 0.0), t2(hr, 100.0);
    SeriesGeometry geo = SeriesGeometry::covering(hr, Orientation::axial(), {1.0, 1.0}, 1.0, 0.0);
    const ForwardOperator op(hr, geo);
    SimulationKnobs knobs;
    knobs.noise_sigma = 5.0;
    knobs.seed = 42;
    const LRSeries a = simulate_series(m0, t2, op, 50.0, 3, knobs);
    const double n = double(a.data.size());
    const double mean = a.data.data().mean();
    const double rayleigh = 5.0 * std::sqrt(std::numbers::pi / 2.0);
    const double se = 5.0 * std::sqrt((4.0 - std::numbers::pi) / 2.0) / std::sqrt(n);
    CHECK(std::abs(mean - rayleigh) < 4.0 * se);

    CHECK(simulate_series(m0, t2, op, 50.0, 3, knobs).data.data() == a.data.data());
    knobs.seed = 43;
    CHECK(simulate_series(m0, t2, op, 50.0, 3, knobs).data.data() != a.data.data());
    knobs.seed = 42;
    CHECK(simulate_series(m0, t2, op, 50.0, 4, knobs).data.data() != a.data.data());
}

TEST_CASE("Rician noise at high SNR has SD close to sigma") {
    const Grid3D hr = Grid3D::centered({40, 40, 40}, {1.0, 1.0, 1.0});
    const Volume3D m0(hr, 1000.0), t2(hr, 1e6);
    const ForwardOperator op(hr, SeriesGeometry::covering(hr, Orientation::axial(), {1.0, 1.0}, 1.0, 0.0));
    SimulationKnobs knobs;
    knobs.noise_sigma = 20.0;
    knobs.seed = 5;
    const Eigen::VectorXd y = simulate_series(m0, t2, op, 0.0, 0, knobs).data.data();
    const double mean = y.mean();
    const double sd = std::sqrt((y.array() - mean).square().sum() / double(y.size() - 1));
    CHECK(sd == doctest::Approx(20.0).epsilon(0.02));
    // Rician bias sigma^2 / (2 A) = 0.2.
    CHECK(mean - 1000.0 == doctest::Approx(0.2).epsilon(0.5));
}

TEST_CASE("counter normals are standard normal") {
    double s1 = 0.0, s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const auto [g1, g2] = counter_normal_pair(1, 2, 3, std::uint64_t(i));
        s1 += g1 + g2;
        s2 += g1 * g1 + g2 * g2;
    }
    CHECK(std::abs(s1 / (2.0 * n)) < 4.0 / std::sqrt(2.0 * n));
    CHECK(s2 / (2.0 * n) == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("phase-encode truncation") {
    Eigen::MatrixXd step(4, 64);
    for (int c = 0; c < 64; ++c) step.col(c).setConstant(c >= 16 && c < 48 ? 100.0 : 10.0);
    SUBCASE("full k-space is the identity for non-negative images") {
        CHECK((truncate_phase_encode(step, 1.0) - step).cwiseAbs().maxCoeff() < 1e-9);
    }
    SUBCASE("a constant image is untouched") {
        const Eigen::MatrixXd c = Eigen::MatrixXd::Constant(3, 32, 7.0);
        CHECK((truncate_phase_encode(c, 0.5) - c).cwiseAbs().maxCoeff() < 1e-9);
    }
    SUBCASE("truncating a step rings along columns only") {
        const Eigen::MatrixXd r = truncate_phase_encode(step, 0.5);
        CHECK(r.maxCoeff() > 100.0 + 1.0);  // Gibbs overshoot
        for (int row = 1; row < 4; ++row) CHECK((r.row(row) - r.row(0)).cwiseAbs().maxCoeff() < 1e-9);
    }
    CHECK_THROWS_AS(truncate_phase_encode(step, 0.0), ConfigError);
}

TEST_CASE("simulating from the default phantom keeps the vial signal") {
    const Grid3D hr = Grid3D::centered({66, 21, 27}, {1.1, 1.1, 1.1});
    const PhantomMaps maps = rasterize(default_phantom(), hr, 2);
    const SeriesGeometry geo = SeriesGeometry::covering(hr, Orientation::coronal(), {1.13, 1.13}, 3.0, 0.1);
    const LRSeries s = simulate_series(maps.m0, maps.t2, geo, 90.0, 0, {});
    const Eigen::Vector3d c = s.data.grid().index_of({0.0, 0.0, 0.0});
    const double center = s.data(std::lround(c.x()), std::lround(c.y()), std::lround(c.z()));
    CHECK(center == doctest::Approx(1000.0 * std::exp(-90.0 / 258.4)).epsilon(1e-9));
}
