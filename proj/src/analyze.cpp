#include "srt2/analyze.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace srt2 {
namespace {

void require_pairs(std::span<const double> values, const char* what) {
    if (values.size() < 2) throw ConfigError(std::string(what) + " needs at least two values");
    for (double v : values)
        if (!std::isfinite(v)) throw ConfigError(std::string(what) + " got a non-finite value");
}

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

double population_sd(std::span<const double> v) {
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / double(v.size()));
}

Eigen::MatrixXd sobel_magnitude(const Eigen::MatrixXd& img) {
    const Index nr = img.rows(), nc = img.cols();
    auto at = [&](Index r, Index c) {
        return img(std::clamp<Index>(r, 0, nr - 1), std::clamp<Index>(c, 0, nc - 1));
    };
    Eigen::MatrixXd mag(nr, nc);
    for (Index c = 0; c < nc; ++c)
        for (Index r = 0; r < nr; ++r) {
            const double gr = (at(r + 1, c - 1) + 2 * at(r + 1, c) + at(r + 1, c + 1)) -
                              (at(r - 1, c - 1) + 2 * at(r - 1, c) + at(r - 1, c + 1));
            const double gc = (at(r - 1, c + 1) + 2 * at(r, c + 1) + at(r + 1, c + 1)) -
                              (at(r - 1, c - 1) + 2 * at(r, c - 1) + at(r + 1, c - 1));
            mag(r, c) = std::hypot(gr, gc);
        }
    return mag;
}

// Integer offsets whose rounded length equals r.
std::vector<Eigen::Vector2i> ring_offsets(int r) {
    std::vector<Eigen::Vector2i> ring;
    for (int dc = -r - 1; dc <= r + 1; ++dc)
        for (int dr = -r - 1; dr <= r + 1; ++dr)
            if (std::lround(std::sqrt(double(dr * dr + dc * dc))) == r) ring.emplace_back(dr, dc);
    return ring;
}

double disk_mean(const Eigen::MatrixXd& img, const Eigen::Vector2i& center, double radius) {
    double acc = 0.0;
    Index n = 0;
    for (Index c = 0; c < img.cols(); ++c)
        for (Index r = 0; r < img.rows(); ++r) {
            const double dr = double(r - center.x()), dc = double(c - center.y());
            if (dr * dr + dc * dc <= radius * radius) {
                acc += img(r, c);
                ++n;
            }
        }
    return n ? acc / double(n) : 0.0;
}

}  // namespace

std::vector<CircleROI> hough_circles(const Eigen::MatrixXd& image, int r_min, int r_max, int n_expected) {
    if (r_min < 1 || r_max < r_min) throw ConfigError("hough_circles needs 1 <= r_min <= r_max");
    if (n_expected < 1) throw ConfigError("hough_circles needs n_expected >= 1");
    const Index nr = image.rows(), nc = image.cols();

    const Eigen::MatrixXd mag = sobel_magnitude(image);
    const double max_grad = mag.maxCoeff();
    if (!(max_grad > 0.0)) throw DetectionError("no edges found: found 0 of " + std::to_string(n_expected) + " circles", 0);
    std::vector<Eigen::Vector2i> edges;
    for (Index c = 0; c < nc; ++c)
        for (Index r = 0; r < nr; ++r)
            if (mag(r, c) >= 0.5 * max_grad) edges.emplace_back(int(r), int(c));

    struct Candidate {
        double score;
        int r, row, col;
    };
    std::vector<Candidate> candidates;
    for (int rad = r_min; rad <= r_max; ++rad) {
        const auto ring = ring_offsets(rad);
        Eigen::MatrixXi acc = Eigen::MatrixXi::Zero(nr, nc);
        for (const auto& e : edges)
            for (const auto& o : ring) {
                const int row = e.x() + o.x(), col = e.y() + o.y();
                if (row >= 0 && row < nr && col >= 0 && col < nc) ++acc(row, col);
            }
        for (int col = rad; col + rad < nc; ++col)
            for (int row = rad; row + rad < nr; ++row)
                if (acc(row, col) > 0) candidates.push_back({double(acc(row, col)) / double(ring.size()), rad, row, col});
    }
    if (candidates.empty())
        throw DetectionError("no circle candidates: found 0 of " + std::to_string(n_expected) + " circles", 0);
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

    const double floor = 0.25 * candidates.front().score;
    std::vector<CircleROI> found;
    for (const Candidate& cand : candidates) {
        if (cand.score < floor || int(found.size()) == n_expected) break;
        const Eigen::Vector2i center(cand.row, cand.col);
        const bool clear = std::all_of(found.begin(), found.end(), [&](const CircleROI& f) {
            return (f.center - center).cast<double>().norm() > double(r_min);
        });
        if (clear) found.push_back({center, cand.r, 0, 1, "", cand.score});
    }
    if (int(found.size()) < n_expected)
        throw DetectionError("circle detection found " + std::to_string(found.size()) + " of " +
                                 std::to_string(n_expected) + " circles above 25% of the best score",
                             int(found.size()));

    std::vector<double> brightness;
    for (const auto& f : found) brightness.push_back(disk_mean(image, f.center, std::max(1, f.radius - 1)));
    std::vector<std::size_t> order(found.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return brightness[a] > brightness[b]; });
    std::vector<CircleROI> labeled;
    for (std::size_t i = 0; i < order.size(); ++i) {
        labeled.push_back(found[order[i]]);
        labeled.back().label = i < 26 ? std::string(1, char('a' + i)) : "roi" + std::to_string(i);
    }
    return labeled;
}

ROIStats erode_then_stat(const CircleROI& roi, const Volume3D& map, int margin) {
    const Eigen::MatrixXd plane = extract_slice(map, roi.slice_axis, roi.slice_index);
    const double reach = double(roi.radius + margin);
    std::vector<double> values;
    if (reach >= 0.0)
        for (Index c = 0; c < plane.cols(); ++c)
            for (Index r = 0; r < plane.rows(); ++r) {
                const double dr = double(r - roi.center.x()), dc = double(c - roi.center.y());
                if (dr * dr + dc * dc <= reach * reach) values.push_back(plane(r, c));
            }
    if (values.empty()) throw DataError("ROI " + roi.label + " selects no voxels");
    return {mean_of(values), population_sd(values), Index(values.size())};
}

double relative_error(double measured, double reference) {
    if (!(reference > 0.0)) throw ConfigError("relative_error needs a positive reference");
    return 100.0 * (measured - reference) / reference;
}

double cv_percent(std::span<const double> values) {
    require_pairs(values, "cv_percent");
    const double m = mean_of(values);
    if (!(m > 0.0)) throw ConfigError("cv_percent needs a positive mean");
    return 100.0 * population_sd(values) / m;
}

double mape_percent(std::span<const double> values) {
    require_pairs(values, "mape_percent");
    for (double v : values)
        if (!(v > 0.0)) throw ConfigError("mape_percent needs positive values");
    double acc = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i)
        for (std::size_t j = 0; j < values.size(); ++j)
            if (i != j) acc += 100.0 * std::abs(values[i] - values[j]) / values[j];
    return acc / double(values.size() * (values.size() - 1));
}

double mean_abs_diff(std::span<const double> values) {
    require_pairs(values, "mean_abs_diff");
    double acc = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i)
        for (std::size_t j = 0; j < values.size(); ++j)
            if (i != j) acc += std::abs(values[i] - values[j]);
    return acc / double(values.size() * (values.size() - 1));
}

BlandAltmanStats bland_altman(std::span<const std::pair<double, double>> pairs) {
    if (pairs.size() < 2) throw ConfigError("bland_altman needs at least two pairs");
    BlandAltmanStats ba;
    std::vector<double> diffs;
    for (const auto& [m, r] : pairs) {
        if (!std::isfinite(m) || !std::isfinite(r)) throw ConfigError("bland_altman got a non-finite value");
        diffs.push_back(m - r);
        ba.points.emplace_back(0.5 * (m + r), m - r);
    }
    ba.bias = mean_of(diffs);
    ba.sd_diff = population_sd(diffs);
    ba.loa_low = ba.bias - 1.96 * ba.sd_diff;
    ba.loa_high = ba.bias + 1.96 * ba.sd_diff;
    return ba;
}

RepeatabilityStats repeatability(std::span<const double> values) {
    require_pairs(values, "repeatability");
    return {mean_of(values), population_sd(values), cv_percent(values), mean_abs_diff(values), mape_percent(values)};
}

}  // namespace srt2
