#pragma once

#include <Eigen/Geometry>
#include <Eigen/SparseCore>

#include <cstdint>
#include <string>
#include <vector>

#include "srt2/volgrid.hpp"

namespace srt2 {

enum class OrientationLabel { axial, coronal, sagittal };

struct Orientation {
    OrientationLabel label = OrientationLabel::axial;
    int slice_axis = 2;

    static Orientation axial() { return {OrientationLabel::axial, 2}; }
    static Orientation coronal() { return {OrientationLabel::coronal, 1}; }
    static Orientation sagittal() { return {OrientationLabel::sagittal, 0}; }
    static Orientation from_name(const std::string& name);

    std::string name() const;
    bool operator==(const Orientation&) const = default;
};

/// Multi-slice stack geometry. In-plane axes are the two grid axes other than the
/// slice axis, in increasing order; the phase-encode direction is the second of them.
struct SeriesGeometry {
    Eigen::Vector2d in_plane_spacing{1.13, 1.13};  // mm
    double slice_thickness = 3.0;                  // mm
    double gap_fraction = 0.1;
    Eigen::Vector2i matrix{1, 1};
    int n_slices = 1;
    Orientation orientation;
    /// Slice-profile FWHM as a multiple of slice_thickness.
    double slice_fwhm_factor = 1.0;

    double slice_spacing() const { return slice_thickness * (1.0 + gap_fraction); }
    double slice_fwhm() const { return slice_fwhm_factor * slice_thickness; }
    void validate() const;

    /// Smallest centered stack whose matrix and slice count cover `hr` along every axis.
    static SeriesGeometry covering(const Grid3D& hr, Orientation orientation,
                                   const Eigen::Vector2d& in_plane_spacing, double slice_thickness,
                                   double gap_fraction);
};

/// Grid of the stacked low-resolution series: same axes as `hr`, centered on it, with
/// slice-axis spacing equal to the slice-center spacing.
Grid3D series_grid(const Grid3D& hr, const SeriesGeometry& geometry);

/// One low-resolution multi-slice stack at one echo time.
struct LRSeries {
    Volume3D data;  // on series_grid(hr, geometry)
    SeriesGeometry geometry;
    double te = 0.0;  // ms
    int series_index = 0;

    int n_slices() const { return geometry.n_slices; }
    Eigen::MatrixXd slice(int l) const { return extract_slice(data, geometry.orientation.slice_axis, l); }
};

struct AcquisitionProtocol {
    std::vector<double> te_list;
    std::vector<SeriesGeometry> geometries;
    double noise_sigma = 0.0;
    double kspace_truncation = 1.0;
    double first_echo_offset = 0.1;
    /// Number of leading echoes carrying the offset.
    int first_echo_count = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

/// H = D B M for one series as an explicit sparse matrix, rows in series-grid order.
/// M resamples the volume through a per-slice rigid transform (identity by default),
/// B is the Gaussian slice profile along the slice axis, and D box-averages in-plane
/// and samples the slice centers.
class ForwardOperator {
public:
    using Matrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

    ForwardOperator(const Grid3D& hr_grid, const SeriesGeometry& geometry,
                    std::vector<Eigen::Isometry3d> motion = {});

    const Grid3D& hr_grid() const { return hr_grid_; }
    const Grid3D& lr_grid() const { return lr_grid_; }
    const SeriesGeometry& geometry() const { return geometry_; }
    const Matrix& matrix() const { return matrix_; }
    Index rows() const { return matrix_.rows(); }
    Index cols() const { return matrix_.cols(); }

    Volume3D apply(const Volume3D& x) const;
    Volume3D adjoint(const Volume3D& y) const;
    Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return matrix_ * x; }
    Eigen::VectorXd adjoint(const Eigen::VectorXd& y) const { return matrix_.transpose() * y; }

private:
    Grid3D hr_grid_;
    SeriesGeometry geometry_;
    Grid3D lr_grid_;
    Matrix matrix_;
};

/// Weights of a box of `width` (in voxels) centered at continuous index `center` over
/// cells [i-1/2, i+1/2] of a length-n axis; mass outside the axis goes to the end cells.
std::vector<std::pair<Index, double>> box_weights(double center, double width, Index n);

/// Weights of "blur with Gaussian of sigma_vox, then linearly interpolate at `center`"
/// on a length-n axis with clamp-to-edge boundaries.
std::vector<std::pair<Index, double>> slice_profile_weights(double center, double sigma_vox, Index n);

inline double ideal_signal(double m0, double t2, double te) { return m0 * std::exp(-te / t2); }

/// n echo times spaced uniformly over [te_min, te_max].
std::vector<double> te_schedule(int n, double te_min = 90.0, double te_max = 298.0);

/// Knobs of one simulated acquisition.
struct SimulationKnobs {
    double noise_sigma = 0.0;
    double kspace_truncation = 1.0;
    double first_echo_offset = 0.0;
    bool is_first_echo = false;
    std::uint64_t seed = 0;
};

/// Contrast -> forward operator -> optional phase-encode truncation -> Rician noise.
LRSeries simulate_series(const Volume3D& m0, const Volume3D& t2, const ForwardOperator& op, double te,
                         int series_index, const SimulationKnobs& knobs);
LRSeries simulate_series(const Volume3D& m0, const Volume3D& t2, const SeriesGeometry& geometry, double te,
                         int series_index, const SimulationKnobs& knobs);

/// Keeps the central keep_fraction of k-space lines along the second image dimension
/// (phase encode), zeroes the rest and returns the magnitude image.
Eigen::MatrixXd truncate_phase_encode(const Eigen::MatrixXd& image, double keep_fraction);

/// Standard-normal pair for a (seed, series, slice, pixel) counter.
std::pair<double, double> counter_normal_pair(std::uint64_t seed, std::uint64_t series, std::uint64_t slice,
                                              std::uint64_t pixel);

}  // namespace srt2
