#include "srt2/phantom.hpp"

#include <algorithm>
#include <cmath>

namespace srt2 {

PhantomSpec default_phantom() {
    PhantomSpec spec;
    spec.vials = {
        {"a", {-24.0, 0.0}, 8.0, 428.3, 1000.0},
        {"b", {0.0, 0.0}, 8.0, 258.4, 1000.0},
        {"c", {24.0, 0.0}, 8.0, 186.1, 1000.0},
    };
    return spec;
}

void PhantomSpec::validate() const {
    if (!(plate_thickness > 0.0)) throw ConfigError("phantom plate_thickness must be > 0");
    if (!(background_t2 > 0.0) || !(background_m0 >= 0.0))
        throw ConfigError("phantom background requires t2 > 0 and m0 >= 0");
    for (std::size_t i = 0; i < vials.size(); ++i) {
        const Vial& v = vials[i];
        if (!(v.radius > 0.0) || !(v.t2 > 0.0) || !(v.m0 >= 0.0))
            throw ConfigError("vial " + v.label + " requires radius > 0, t2 > 0, m0 >= 0");
        for (int a = 0; a < 2; ++a)
            if (std::abs(v.center[a]) + v.radius > 0.5 * field_of_view[a])
                throw ConfigError("vial " + v.label + " leaves the field of view");
        for (std::size_t j = 0; j < i; ++j)
            if (!((v.center - vials[j].center).norm() > v.radius + vials[j].radius))
                throw ConfigError("vials " + vials[j].label + " and " + v.label + " overlap");
    }
}

PhantomMaps rasterize(const PhantomSpec& spec, const Grid3D& grid, int supersample) {
    if (supersample < 1 || supersample > 8) throw ConfigError("supersample must be in [1, 8]");
    spec.validate();
    grid.validate();

    const int n_materials = int(spec.vials.size()) + 2;  // vials, background, air
    const int background = int(spec.vials.size());
    const int air = background + 1;
    auto material_at = [&](const Eigen::Vector3d& p) {
        if (std::abs(p.y()) > 0.5 * spec.plate_thickness || std::abs(p.x()) > 0.5 * spec.field_of_view.x() ||
            std::abs(p.z()) > 0.5 * spec.field_of_view.y())
            return air;
        const Eigen::Vector2d q(p.x(), p.z());
        for (std::size_t v = 0; v < spec.vials.size(); ++v)
            if ((q - spec.vials[v].center).squaredNorm() <= spec.vials[v].radius * spec.vials[v].radius)
                return int(v);
        return background;
    };
    auto m0_of = [&](int m) {
        return m < background ? spec.vials[m].m0 : (m == background ? spec.background_m0 : 0.0);
    };
    auto t2_of = [&](int m) { return m < background ? spec.vials[m].t2 : spec.background_t2; };

    PhantomMaps maps{Volume3D(grid), Volume3D(grid)};
    const int total = supersample * supersample * supersample;
    std::vector<int> counts(n_materials);
    for (int k = 0; k < grid.dims.z(); ++k)
        for (int j = 0; j < grid.dims.y(); ++j)
            for (int i = 0; i < grid.dims.x(); ++i) {
                std::fill(counts.begin(), counts.end(), 0);
                for (int c = 0; c < supersample; ++c)
                    for (int b = 0; b < supersample; ++b)
                        for (int a = 0; a < supersample; ++a) {
                            const Eigen::Vector3d sub =
                                Eigen::Vector3d(i, j, k) +
                                (Eigen::Vector3d(a, b, c).array() + 0.5).matrix() / supersample -
                                Eigen::Vector3d::Constant(0.5);
                            ++counts[material_at(grid.world(sub))];
                        }
                double m0 = 0.0, t2 = 0.0;
                if (const auto pure = std::find(counts.begin(), counts.end(), total); pure != counts.end()) {
                    m0 = m0_of(int(pure - counts.begin()));
                    t2 = t2_of(int(pure - counts.begin()));
                } else {
                    for (int m = 0; m < n_materials; ++m) {
                        m0 += counts[m] * m0_of(m);
                        t2 += counts[m] * t2_of(m);
                    }
                    m0 /= total;
                    t2 /= total;
                }
                maps.m0(i, j, k) = m0;
                maps.t2(i, j, k) = t2;
            }
    return maps;
}

}  // namespace srt2
