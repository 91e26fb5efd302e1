#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "srt2/volgrid.hpp"

namespace srt2 {

/// Circle in a 2D plane of a volume. `center` indexes (row, column) of extract_slice().
struct CircleROI {
    Eigen::Vector2i center = Eigen::Vector2i::Zero();
    int radius = 1;
    int slice_index = 0;
    int slice_axis = 1;
    std::string label;
    double score = 0.0;  // fraction of the discrete circle covered by edge pixels
};

struct ROIStats {
    double mean = 0.0;
    double sd = 0.0;  // population
    Index n_voxels = 0;
};

/// Sobel edges at half the maximum gradient, circle Hough accumulator over
/// (center, radius) normalized by circle length, greedy peak picking with centers kept
/// more than r_min apart. Circles are labeled a, b, c, ... by descending mean interior
/// intensity of `image`. Throws DetectionError if fewer than n_expected peaks reach 25%
/// of the best score.
std::vector<CircleROI> hough_circles(const Eigen::MatrixXd& image, int r_min, int r_max, int n_expected);

/// Statistics of `map` over voxels within radius + margin of the ROI center
/// (margin = -1 keeps a one-pixel inward margin).
ROIStats erode_then_stat(const CircleROI& roi, const Volume3D& map, int margin = -1);

/// Signed percentage 100 (measured - reference) / reference.
double relative_error(double measured, double reference);
/// 100 * population SD / mean.
double cv_percent(std::span<const double> values);
/// Mean over ordered pairs i != j of 100 |v_i - v_j| / v_j.
double mape_percent(std::span<const double> values);
/// Mean over ordered pairs i != j of |v_i - v_j|.
double mean_abs_diff(std::span<const double> values);

struct BlandAltmanStats {
    double bias = 0.0;
    double sd_diff = 0.0;
    double loa_low = 0.0;
    double loa_high = 0.0;
    std::vector<std::pair<double, double>> points;  // (mean, difference)
};

/// Pairs are (measured, reference); limits of agreement are bias -/+ 1.96 population SD.
BlandAltmanStats bland_altman(std::span<const std::pair<double, double>> pairs);

struct RepeatabilityStats {
    double mean_t2 = 0.0;
    double sd_t2 = 0.0;
    double cv_percent = 0.0;
    double mean_abs_diff = 0.0;
    double mape_percent = 0.0;
};

/// Table-style repeatability summary of one (ROI, method) over repeated experiments.
RepeatabilityStats repeatability(std::span<const double> values);

}  // namespace srt2
