#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "srt2/acquire.hpp"

namespace test {

using namespace srt2;

// Integral over [lo, hi] of the nearest-cell interpolant of `v` (end cells extend
// to infinity), divided by the interval length. Splits at the half-integer breakpoints.
inline double box_average(const std::vector<double>& v, double lo, double hi) {
    const Index n = Index(v.size());
    std::vector<double> cuts{lo};
    for (Index i = 0; i + 1 < n; ++i)
        if (i + 0.5 > lo && i + 0.5 < hi) cuts.push_back(i + 0.5);
    cuts.push_back(hi);
    double acc = 0.0;
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
        const double mid = 0.5 * (cuts[s] + cuts[s + 1]);
        const Index cell = std::clamp<Index>(Index(std::floor(mid + 0.5)), 0, n - 1);
        acc += (cuts[s + 1] - cuts[s]) * v[std::size_t(cell)];
    }
    return acc / (hi - lo);
}

// H x straight from its definition: blur along the slice axis, interpolate linearly at
// each slice center, box-average in-plane over the LR pixel footprint.
inline Volume3D oracle_apply(const Volume3D& x, const SeriesGeometry& geo) {
    const Grid3D& hr = x.grid();
    const Grid3D lr = series_grid(hr, geo);
    const int s = geo.orientation.slice_axis;
    const auto [a, b] = in_plane_axes(s);
    const Volume3D blurred = gaussian_blur_axis(x, s, geo.slice_fwhm());
    Volume3D y(lr);
    for (int k = 0; k < lr.dims.z(); ++k)
        for (int j = 0; j < lr.dims.y(); ++j)
            for (int i = 0; i < lr.dims.x(); ++i) {
                const Eigen::Vector3d c = hr.index_of(lr.world(Eigen::Vector3d(i, j, k)));
                const double cs = std::clamp(c[s], 0.0, double(hr.dims[s] - 1));
                const int s0 = int(std::floor(cs));
                const int s1 = std::min(s0 + 1, hr.dims[s] - 1);
                const double f = cs - s0;
                const double wa = lr.spacing[a] / hr.spacing[a], wb = lr.spacing[b] / hr.spacing[b];
                // Box along b of (box along a) of the interpolated plane.
                std::vector<double> along_b(std::size_t(hr.dims[b]));
                for (int q = 0; q < hr.dims[b]; ++q) {
                    std::vector<double> along_a(std::size_t(hr.dims[a]));
                    for (int p = 0; p < hr.dims[a]; ++p) {
                        Eigen::Vector3i i0, i1;
                        i0[a] = i1[a] = p;
                        i0[b] = i1[b] = q;
                        i0[s] = s0;
                        i1[s] = s1;
                        along_a[std::size_t(p)] = (1 - f) * blurred(i0[0], i0[1], i0[2]) + f * blurred(i1[0], i1[1], i1[2]);
                    }
                    along_b[std::size_t(q)] = box_average(along_a, c[a] - 0.5 * wa, c[a] + 0.5 * wa);
                }
                y(i, j, k) = box_average(along_b, c[b] - 0.5 * wb, c[b] + 0.5 * wb);
            }
    return y;
}

// Brute-force versions written from the metric definitions.
inline double brute_mape(const std::vector<double>& v) {
    std::vector<double> terms;
    for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t j = 0; j < v.size(); ++j)
            if (i != j) terms.push_back(100.0 * std::abs(v[i] - v[j]) / v[j]);
    double s = 0.0;
    for (double t : terms) s += t;
    return s / double(terms.size());
}

inline double brute_cv(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x / double(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return 100.0 * std::sqrt(ss / double(v.size())) / mean;
}

}  // namespace test
