#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "srt2/acquire.hpp"
#include "srt2/phantom.hpp"
#include "srt2/relaxfit.hpp"
#include "srt2/srrecon.hpp"

namespace srt2 {

/// Ordered `key = value` lines; '#' starts a comment. Duplicate keys are errors.
class KeyValues {
public:
    static KeyValues parse(const std::string& text, const std::string& origin = "<config>");
    static KeyValues load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::string& at(const std::string& key) const;
    const std::map<std::string, std::string>& entries() const { return values_; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    double number(const std::string& key) const;
    long long integer(const std::string& key) const;
    std::uint64_t unsigned_integer(const std::string& key) const;
    bool boolean(const std::string& key) const;
    std::vector<double> numbers(const std::string& key) const;

    std::string str() const;
    void save(const std::filesystem::path& path) const;

private:
    std::map<std::string, std::string> values_;
};

std::string format_number(double v);
std::string format_list(const std::vector<double>& v);

/// Single-slice dense-TE reference acquisition.
struct ReferenceProtocol {
    enum class Kind { SE, MESE };
    Kind kind = Kind::SE;
    std::vector<double> te_list;
    SeriesGeometry slice;

    std::string name() const { return kind == Kind::SE ? "se" : "mese"; }
    /// 25 echo times over [10, 400] ms.
    static ReferenceProtocol se(const Grid3D& hr, const Eigen::Vector2d& in_plane, double thickness);
    /// 32 echo times equally spaced over [13, 416] ms.
    static ReferenceProtocol mese(const Grid3D& hr, const Eigen::Vector2d& in_plane, double thickness);
};

struct PipelineConfig {
    PhantomSpec phantom = default_phantom();
    int supersample = 4;

    Eigen::Vector3i grid_dims{66, 21, 27};
    double grid_spacing = 1.1;

    // Acquisition protocol; explicit `te` wins over the (n_te, te_min, te_max) schedule.
    int n_te = 6;
    double te_min = 90.0;
    double te_max = 298.0;
    std::vector<double> te;
    std::vector<Orientation> orientations{Orientation::axial(), Orientation::coronal(), Orientation::sagittal()};
    Eigen::Vector2d in_plane_spacing{1.13, 1.13};
    double slice_thickness = 3.0;
    double gap_fraction = 0.1;
    double slice_fwhm_factor = 1.0;
    double noise_sigma = 0.0;
    double kspace_truncation = 1.0;
    double first_echo_offset = 0.1;
    int first_echo_count = 1;

    bool reference_enabled = true;
    Eigen::Vector2d reference_in_plane{0.98, 0.98};
    double reference_thickness = 6.0;
    double reference_noise_sigma = 0.0;
    int reference_skip_first_n = 0;

    SolverConfig solver;
    FitConfig fit;
    /// Voxels whose first-echo signal is below this fraction of the maximum are not fitted.
    double mask_fraction = 0.01;

    int roi_margin = -1;
    int r_min = 5;
    int r_max = 10;
    int n_expected = 3;
    std::string ba_reference = "se";

    std::uint64_t seed = 1;
    int repeats = 1;
    std::vector<std::uint64_t> seeds;
    int threads = 1;

    static PipelineConfig from_key_values(const KeyValues& kv);
    static PipelineConfig load(const std::filesystem::path& path);
    /// Canonical, complete key-value form (threads excluded: they never change results).
    KeyValues to_key_values() const;

    void validate() const;
    Grid3D hr_grid() const;
    std::vector<double> te_list() const;
    std::vector<std::uint64_t> repeat_seeds() const;
    AcquisitionProtocol protocol(std::uint64_t run_seed) const;
    std::vector<ReferenceProtocol> references() const;
    /// FitConfig for an arm ("sr", "haste", "se", "mese").
    FitConfig fit_for(const std::string& arm) const;
};

}  // namespace srt2
