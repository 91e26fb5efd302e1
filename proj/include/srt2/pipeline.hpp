#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "srt2/analyze.hpp"
#include "srt2/config.hpp"

namespace srt2 {

namespace fs = std::filesystem;

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const fs::path& path);
/// Relative path (generic form) -> SHA-256 for every regular file below `root`.
std::map<std::string, std::string> hash_tree(const fs::path& root);

/// One simulated artifact. kind is truth_m0, truth_t2, series, se or mese; orientation
/// is "-" when it does not apply.
struct ManifestEntry {
    std::string kind;
    int te_index = -1;
    std::string orientation = "-";
    double te = 0.0;
    std::string path;  // relative to the run directory
    std::string sha256;
};

struct Manifest {
    std::vector<ManifestEntry> entries;

    /// Paths inside are relative to the run directory, wherever the file itself lives.
    static Manifest load(const fs::path& file);
    void save(const fs::path& file) const;
    /// Entries of `kind` (and orientation, if given) sorted by TE index.
    std::vector<ManifestEntry> select(const std::string& kind, const std::string& orientation = "") const;
    /// Throws DataError if the listed file is missing or its hash differs.
    fs::path verified(const fs::path& run_dir, const ManifestEntry& e) const;
};

/// Series NIfTI plus a key-value sidecar `<stem>.txt` holding geometry, TE and knobs.
void write_series(const LRSeries& s, const SimulationKnobs& knobs, const fs::path& nii);
LRSeries read_series(const fs::path& nii);

/// Run directories of an output tree: the tree itself when it holds a manifest,
/// otherwise its rep<N> subdirectories in numeric order.
std::vector<fs::path> run_dirs(const fs::path& root);
/// Layout written by cmd_simulate for `cfg.repeats` repeats.
std::vector<fs::path> planned_run_dirs(const PipelineConfig& cfg, const fs::path& root);

void cmd_simulate(const PipelineConfig& cfg, const fs::path& out);
void cmd_reconstruct(const PipelineConfig& cfg, const fs::path& root);
/// Fits every arm (sr, haste and, with references enabled, se and mese) of every run.
void cmd_fit(const PipelineConfig& cfg, const fs::path& root);
/// Direct mode: fits explicit volumes against explicit echo times into `out`.
void cmd_fit_files(const std::vector<fs::path>& volumes, const std::vector<double>& te, const FitConfig& fit,
                   double mask_fraction, const fs::path& out, int threads);

struct RoiRecord {
    int repeat = 0;
    std::string method;
    CircleROI roi;
    Eigen::Vector2d center_mm = Eigen::Vector2d::Zero();  // (x, z)
    std::string vial;  // nearest phantom vial
    double truth_t2 = 0.0;
    ROIStats stats;
};

struct RelativeErrorRow {
    int repeat = 0;
    std::string method, roi, reference;
    double measured = 0.0, reference_t2 = 0.0, relative_error = 0.0;
};

struct AnalysisReport {
    int n_te = 0;
    std::vector<RoiRecord> rois;
    std::vector<RelativeErrorRow> relative_errors;
    /// Mean ROI T2 over repeats, keyed by (method, roi).
    std::map<std::pair<std::string, std::string>, double> mean_t2;
};

/// ROI detection and statistics on every arm of every run; writes CSVs to root/analysis.
AnalysisReport cmd_analyze(const PipelineConfig& cfg, const fs::path& root);
AnalysisReport cmd_pipeline(const PipelineConfig& cfg, const fs::path& out);

struct SweepRow {
    std::string method;
    int n_te = 0;
    std::string roi;
    double measured = 0.0, truth_t2 = 0.0, relative_error = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<std::string> diagnostics;
};

/// Full pipeline per n under out/n_te_<n>; aggregated rows go to out/sweep.csv and any
/// per-n failure to out/sweep_diagnostics.txt.
SweepResult cmd_sweep_tes(const PipelineConfig& cfg, const fs::path& out, const std::vector<int>& n_list);

}  // namespace srt2
