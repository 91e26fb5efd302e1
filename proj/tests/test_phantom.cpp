#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "srt2/phantom.hpp"

using namespace srt2;

TEST_CASE("default phantom carries the plate reference T2 values") {
    const PhantomSpec spec = default_phantom();
    REQUIRE(spec.vials.size() == 3);
    CHECK(spec.vials[0].t2 == 428.3);
    CHECK(spec.vials[1].t2 == 258.4);
    CHECK(spec.vials[2].t2 == 186.1);
    CHECK_NOTHROW(spec.validate());
}

TEST_CASE("phantom validation") {
    PhantomSpec spec = default_phantom();
    SUBCASE("overlapping vials") {
        spec.vials[1].center = {-20.0, 0.0};
        CHECK_THROWS_AS(spec.validate(), ConfigError);
    }
    SUBCASE("vial outside the field of view") {
        spec.vials[2].center = {44.0, 0.0};
        CHECK_THROWS_AS(spec.validate(), ConfigError);
    }
    SUBCASE("non-positive T2") {
        spec.vials[0].t2 = 0.0;
        CHECK_THROWS_AS(spec.validate(), ConfigError);
    }
    SUBCASE("thin plate") {
        spec.plate_thickness = 0.0;
        CHECK_THROWS_AS(spec.validate(), ConfigError);
    }
}

TEST_CASE("rasterize gives exact material values inside and air outside the plate") {
    const PhantomSpec spec = default_phantom();
    const Grid3D g = Grid3D::centered({66, 21, 27}, {1.1, 1.1, 1.1});
    const PhantomMaps maps = rasterize(spec, g, 4);
    for (const Vial& v : spec.vials) {
        const Eigen::Vector3d idx = g.index_of({v.center.x(), 0.0, v.center.y()});
        const Index i = std::lround(idx.x()), j = std::lround(idx.y()), k = std::lround(idx.z());
        CHECK(maps.t2(i, j, k) == v.t2);
        CHECK(maps.m0(i, j, k) == v.m0);
    }
    // |y| = 11 mm lies outside the 10 mm plate.
    CHECK(maps.m0(10, 0, 10) == 0.0);
    CHECK(maps.t2(10, 0, 10) == spec.background_t2);
    // Plate area between vials is background.
    const Eigen::Vector3d bg = g.index_of({-12.0, 0.0, 11.0});
    CHECK(maps.m0(std::lround(bg.x()), std::lround(bg.y()), std::lround(bg.z())) == spec.background_m0);
}

TEST_CASE("partial-volume voxels average sub-samples by material count") {
    PhantomSpec spec;
    spec.vials = {{"a", {0.0, 0.0}, 2.0, 300.0, 900.0}};
    spec.background_m0 = 100.0;
    spec.background_t2 = 50.0;
    spec.plate_thickness = 40.0;
    spec.field_of_view = {40.0, 40.0};
    const Grid3D g = Grid3D::centered({8, 1, 8}, {1.0, 1.0, 1.0});
    const int ss = 6;
    const PhantomMaps maps = rasterize(spec, g, ss);
    for (int k = 0; k < 8; ++k)
        for (int i = 0; i < 8; ++i) {
            int inside = 0;
            for (int c = 0; c < ss; ++c)
                for (int b = 0; b < ss; ++b)
                    for (int a = 0; a < ss; ++a) {
                        const double x = g.world({i - 0.5 + (a + 0.5) / ss, 0, 0}).x();
                        const double z = g.world({0, 0, k - 0.5 + (c + 0.5) / ss}).z();
                        (void)b;
                        inside += x * x + z * z <= 4.0;
                    }
            const double f = inside / double(ss * ss * ss);
            CHECK(maps.m0(i, 0, k) == doctest::Approx(f * 900.0 + (1 - f) * 100.0).epsilon(1e-12));
            CHECK(maps.t2(i, 0, k) == doctest::Approx(f * 300.0 + (1 - f) * 50.0).epsilon(1e-12));
        }
}

TEST_CASE("supersample bounds") {
    const Grid3D g = Grid3D::centered({4, 4, 4}, {1, 1, 1});
    CHECK_THROWS_AS(rasterize(default_phantom(), g, 0), ConfigError);
    CHECK_THROWS_AS(rasterize(default_phantom(), g, 9), ConfigError);
}
