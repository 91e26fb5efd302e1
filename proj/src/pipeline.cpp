#include "srt2/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "srt2/parallel.hpp"
#include "srt2/srrecon.hpp"

namespace srt2 {
namespace {

const char* kManifestHeader = "# kind te_index orientation te path sha256";

std::string te_tag(std::size_t k) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "te%02zu", k);
    return buf;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw DataError("write failed: " + path.string());
}

std::string csv_number(double v) { return format_number(v); }

PipelineConfig run_config(const PipelineConfig& cfg, std::uint64_t seed) {
    PipelineConfig c = cfg;
    c.seed = seed;
    c.repeats = 1;
    c.seeds.clear();
    return c;
}

bool has_coronal(const PipelineConfig& cfg) {
    return std::find(cfg.orientations.begin(), cfg.orientations.end(), Orientation::coronal()) !=
           cfg.orientations.end();
}

std::vector<std::string> arms(const PipelineConfig& cfg) {
    std::vector<std::string> out{"sr"};
    if (has_coronal(cfg)) out.push_back("haste");
    if (cfg.reference_enabled) {
        out.push_back("se");
        out.push_back("mese");
    }
    return out;
}

// Counter offsets that keep reference noise streams apart from the multi-slice series.
constexpr int kSeSeriesBase = 1 << 20;
constexpr int kMeseSeriesBase = 2 << 20;

void simulate_run(const PipelineConfig& cfg, const fs::path& dir) {
    const Grid3D hr = cfg.hr_grid();
    const PhantomMaps truth = rasterize(cfg.phantom, hr, cfg.supersample);
    ensure_dir(dir / "truth");
    ensure_dir(dir / "series");
    write_volume(truth.m0, dir / "truth/m0.nii");
    write_volume(truth.t2, dir / "truth/t2.nii");

    Manifest manifest;
    manifest.entries.push_back({"truth_m0", -1, "-", 0.0, "truth/m0.nii", ""});
    manifest.entries.push_back({"truth_t2", -1, "-", 0.0, "truth/t2.nii", ""});

    const AcquisitionProtocol proto = cfg.protocol(cfg.seed);
    const std::size_t n_orient = proto.geometries.size();
    std::vector<std::unique_ptr<ForwardOperator>> ops(n_orient);
    parallel_for(std::ptrdiff_t(n_orient), cfg.threads,
                 [&](std::ptrdiff_t o) { ops[o] = std::make_unique<ForwardOperator>(hr, proto.geometries[o]); });

    const std::size_t n_units = proto.te_list.size() * n_orient;
    std::vector<ManifestEntry> units(n_units);
    parallel_for(std::ptrdiff_t(n_units), cfg.threads, [&](std::ptrdiff_t u) {
        const std::size_t k = std::size_t(u) / n_orient, o = std::size_t(u) % n_orient;
        SimulationKnobs knobs{proto.noise_sigma, proto.kspace_truncation, proto.first_echo_offset,
                              int(k) < proto.first_echo_count, proto.seed};
        const LRSeries s = simulate_series(truth.m0, truth.t2, *ops[o], proto.te_list[k], int(u), knobs);
        const std::string orient = proto.geometries[o].orientation.name();
        const std::string rel = "series/" + te_tag(k) + "_" + orient + ".nii";
        write_series(s, knobs, dir / rel);
        units[std::size_t(u)] = {"series", int(k), orient, proto.te_list[k], rel, ""};
    });
    manifest.entries.insert(manifest.entries.end(), units.begin(), units.end());

    const auto refs = cfg.references();
    if (!refs.empty()) ensure_dir(dir / "reference");
    for (const ReferenceProtocol& ref : refs) {
        const ForwardOperator op(hr, ref.slice);
        const int base = ref.kind == ReferenceProtocol::Kind::SE ? kSeSeriesBase : kMeseSeriesBase;
        std::vector<ManifestEntry> ref_units(ref.te_list.size());
        parallel_for(std::ptrdiff_t(ref.te_list.size()), cfg.threads, [&](std::ptrdiff_t k) {
            SimulationKnobs knobs{cfg.reference_noise_sigma, 1.0, 0.0, false, cfg.seed};
            const LRSeries s = simulate_series(truth.m0, truth.t2, op, ref.te_list[k], base + int(k), knobs);
            const std::string rel = "reference/" + ref.name() + "_" + te_tag(std::size_t(k)) + ".nii";
            write_series(s, knobs, dir / rel);
            ref_units[std::size_t(k)] = {ref.name(), int(k), "coronal", ref.te_list[k], rel, ""};
        });
        manifest.entries.insert(manifest.entries.end(), ref_units.begin(), ref_units.end());
    }

    for (ManifestEntry& e : manifest.entries) e.sha256 = sha256_file(dir / e.path);
    cfg.to_key_values().save(dir / "config.cfg");
    manifest.save(dir / "manifest.txt");
}

struct ArmData {
    std::vector<Volume3D> volumes;
    std::vector<double> te;
};

ArmData load_entries(const fs::path& dir, const Manifest& m, const std::vector<ManifestEntry>& entries) {
    ArmData d;
    for (const ManifestEntry& e : entries) {
        d.volumes.push_back(read_volume(m.verified(dir, e)));
        d.te.push_back(e.te);
    }
    return d;
}

ArmData load_arm(const fs::path& dir, const std::string& arm) {
    if (arm == "sr") {
        const fs::path file = dir / "sr/manifest.txt";
        if (!fs::exists(file)) throw DataError("no SR reconstruction in " + dir.string() + " (missing sr/manifest.txt)");
        const Manifest m = Manifest::load(file);
        return load_entries(dir, m, m.select("sr"));
    }
    const Manifest m = Manifest::load(dir / "manifest.txt");
    if (arm == "haste") return load_entries(dir, m, m.select("series", "coronal"));
    return load_entries(dir, m, m.select(arm));
}

void write_fit(const ArmData& data, const FitConfig& fit, double mask_fraction, const fs::path& out, int threads) {
    if (data.volumes.size() != data.te.size())
        throw ConfigError("fit got " + std::to_string(data.volumes.size()) + " volumes but " +
                          std::to_string(data.te.size()) + " echo times");
    fit.validate(data.te.size());
    for (const Volume3D& v : data.volumes)
        if (!same_grid(v.grid(), data.volumes.front().grid())) throw DataError("fit volumes do not share one grid");
    const std::size_t first = std::size_t(std::min_element(data.te.begin(), data.te.end()) - data.te.begin());
    const Volume3D& ref = data.volumes[first];
    const double cut = mask_fraction * ref.data().maxCoeff();
    MaskVolume mask(ref.grid());
    Index n_masked = 0;
    for (Index i = 0; i < ref.data().size(); ++i) {
        mask.data()[i] = ref.data()[i] > cut ? 1 : 0;
        n_masked += mask.data()[i];
    }
    const T2FitResult res = fit_volume(data.volumes, data.te, mask, fit, threads);

    ensure_dir(out);
    write_volume(res.t2_map, out / "t2.nii");
    write_volume(res.m0_map, out / "m0.nii");
    write_volume(res.t2_sd_map, out / "t2_sd.nii");
    write_volume(res.r2_map, out / "r2.nii");
    Index n_conv = 0;
    for (Index i = 0; i < res.converged_mask.data().size(); ++i) n_conv += res.converged_mask.data()[i];
    KeyValues side;
    side.set("te", format_list(data.te));
    side.set("skip_first_n", std::to_string(fit.skip_first_n));
    side.set("t2_min", format_number(fit.t2_min));
    side.set("t2_max", format_number(fit.t2_max));
    side.set("m0_min", format_number(fit.m0_min));
    side.set("m0_max", format_number(fit.m0_max));
    side.set("max_iters", std::to_string(fit.max_iters));
    side.set("ftol", format_number(fit.ftol));
    side.set("signal_floor", format_number(fit.signal_floor));
    side.set("mask_fraction", format_number(mask_fraction));
    side.set("masked_voxels", std::to_string(n_masked));
    side.set("converged_voxels", std::to_string(n_conv));
    side.save(out / "fit.txt");
}

Volume3D detection_volume(const fs::path& dir, const std::string& arm) {
    if (arm == "sr") {
        const Manifest m = Manifest::load(dir / "sr/manifest.txt");
        const auto e = m.select("sr");
        if (e.empty()) throw DataError("no SR volumes in " + dir.string());
        return read_volume(m.verified(dir, e.front()));
    }
    const Manifest m = Manifest::load(dir / "manifest.txt");
    const auto e = arm == "haste" ? m.select("series", "coronal") : m.select(arm);
    if (e.empty()) throw DataError("no " + arm + " images in " + dir.string());
    return read_volume(m.verified(dir, e.front()));
}

const RoiRecord* find_roi(const std::vector<RoiRecord>& rois, int repeat, const std::string& method,
                          const std::string& label) {
    for (const RoiRecord& r : rois)
        if (r.repeat == repeat && r.method == method && r.roi.label == label) return &r;
    return nullptr;
}

std::optional<double> reference_value(const std::vector<RoiRecord>& rois, const RoiRecord& rec,
                                      const std::string& reference) {
    if (reference == "truth") return rec.truth_t2;
    const RoiRecord* ref = find_roi(rois, rec.repeat, reference, rec.roi.label);
    if (!ref) return std::nullopt;
    return ref->stats.mean;
}

}  // namespace

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read for hashing: " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw DataError("SHA-256 unavailable");
    }
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), std::size_t(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::string hex;
    char byte[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(byte, sizeof byte, "%02x", md[i]);
        hex += byte;
    }
    return hex;
}

std::map<std::string, std::string> hash_tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file())
            out[fs::relative(entry.path(), root).generic_string()] = sha256_file(entry.path());
    return out;
}

Manifest Manifest::load(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw DataError("missing manifest: " + file.string());
    Manifest m;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        ManifestEntry e;
        std::string te;
        if (!(ls >> e.kind >> e.te_index >> e.orientation >> te >> e.path >> e.sha256))
            throw DataError(file.string() + ":" + std::to_string(lineno) + ": malformed manifest line");
        KeyValues one;
        one.set("te", te);
        try {
            e.te = one.number("te");
        } catch (const ConfigError&) {
            throw DataError(file.string() + ":" + std::to_string(lineno) + ": bad echo time");
        }
        m.entries.push_back(e);
    }
    return m;
}

void Manifest::save(const fs::path& file) const {
    std::string text = std::string(kManifestHeader) + "\n";
    for (const ManifestEntry& e : entries)
        text += e.kind + " " + std::to_string(e.te_index) + " " + e.orientation + " " + format_number(e.te) + " " +
                e.path + " " + e.sha256 + "\n";
    write_text(file, text);
}

std::vector<ManifestEntry> Manifest::select(const std::string& kind, const std::string& orientation) const {
    std::vector<ManifestEntry> out;
    for (const ManifestEntry& e : entries)
        if (e.kind == kind && (orientation.empty() || e.orientation == orientation)) out.push_back(e);
    std::stable_sort(out.begin(), out.end(),
                     [](const ManifestEntry& a, const ManifestEntry& b) { return a.te_index < b.te_index; });
    return out;
}

fs::path Manifest::verified(const fs::path& run_dir, const ManifestEntry& e) const {
    const fs::path p = run_dir / e.path;
    if (!fs::exists(p)) throw DataError("manifest lists a missing file: " + p.string());
    if (sha256_file(p) != e.sha256) throw DataError("hash mismatch for " + p.string());
    return p;
}

void write_series(const LRSeries& s, const SimulationKnobs& knobs, const fs::path& nii) {
    ensure_dir(nii.parent_path());
    write_volume(s.data, nii);
    const SeriesGeometry& g = s.geometry;
    KeyValues kv;
    kv.set("te", format_number(s.te));
    kv.set("series_index", std::to_string(s.series_index));
    kv.set("orientation", g.orientation.name());
    kv.set("in_plane_spacing", format_number(g.in_plane_spacing.x()) + "," + format_number(g.in_plane_spacing.y()));
    kv.set("slice_thickness", format_number(g.slice_thickness));
    kv.set("gap_fraction", format_number(g.gap_fraction));
    kv.set("matrix", std::to_string(g.matrix.x()) + "," + std::to_string(g.matrix.y()));
    kv.set("n_slices", std::to_string(g.n_slices));
    kv.set("slice_fwhm_factor", format_number(g.slice_fwhm_factor));
    kv.set("noise_sigma", format_number(knobs.noise_sigma));
    kv.set("kspace_truncation", format_number(knobs.kspace_truncation));
    kv.set("first_echo_offset", format_number(knobs.first_echo_offset));
    kv.set("is_first_echo", knobs.is_first_echo ? "true" : "false");
    kv.set("seed", std::to_string(knobs.seed));
    fs::path side = nii;
    kv.save(side.replace_extension(".txt"));
}

LRSeries read_series(const fs::path& nii) {
    fs::path side = nii;
    side.replace_extension(".txt");
    KeyValues kv;
    try {
        kv = KeyValues::load(side);
    } catch (const ConfigError& e) {
        throw DataError(std::string("series sidecar: ") + e.what());
    }
    try {
        LRSeries s{read_volume(nii), {}, kv.number("te"), int(kv.integer("series_index"))};
        SeriesGeometry& g = s.geometry;
        g.orientation = Orientation::from_name(kv.at("orientation"));
        const auto sp = kv.numbers("in_plane_spacing");
        const auto mx = kv.numbers("matrix");
        if (sp.size() != 2 || mx.size() != 2) throw ConfigError("bad in_plane_spacing or matrix");
        g.in_plane_spacing = {sp[0], sp[1]};
        g.matrix = {int(mx[0]), int(mx[1])};
        g.slice_thickness = kv.number("slice_thickness");
        g.gap_fraction = kv.number("gap_fraction");
        g.n_slices = int(kv.integer("n_slices"));
        g.slice_fwhm_factor = kv.number("slice_fwhm_factor");
        g.validate();
        const auto [a, b] = in_plane_axes(g.orientation.slice_axis);
        const Eigen::Vector3i& d = s.data.grid().dims;
        if (d[a] != g.matrix[0] || d[b] != g.matrix[1] || d[g.orientation.slice_axis] != g.n_slices)
            throw ConfigError("volume dimensions disagree with the sidecar");
        return s;
    } catch (const ConfigError& e) {
        throw DataError(side.string() + ": " + e.what());
    }
}

std::vector<fs::path> run_dirs(const fs::path& root) {
    if (fs::exists(root / "manifest.txt")) return {root};
    std::vector<std::pair<long, fs::path>> reps;
    if (fs::is_directory(root))
        for (const auto& entry : fs::directory_iterator(root)) {
            const std::string name = entry.path().filename().string();
            if (!entry.is_directory() || name.rfind("rep", 0) != 0 || name.size() == 3) continue;
            if (!std::all_of(name.begin() + 3, name.end(), [](char c) { return c >= '0' && c <= '9'; })) continue;
            if (fs::exists(entry.path() / "manifest.txt")) reps.emplace_back(std::stol(name.substr(3)), entry.path());
        }
    std::sort(reps.begin(), reps.end());
    std::vector<fs::path> out;
    for (auto& [n, p] : reps) out.push_back(p);
    if (out.empty()) throw DataError("no manifest found under " + root.string());
    return out;
}

std::vector<fs::path> planned_run_dirs(const PipelineConfig& cfg, const fs::path& root) {
    if (cfg.repeats == 1) return {root};
    std::vector<fs::path> out;
    for (int r = 0; r < cfg.repeats; ++r) out.push_back(root / ("rep" + std::to_string(r)));
    return out;
}

void cmd_simulate(const PipelineConfig& cfg, const fs::path& out) {
    cfg.validate();
    ensure_dir(out);
    const auto dirs = planned_run_dirs(cfg, out);
    const auto seeds = cfg.repeat_seeds();
    if (dirs.size() > 1) cfg.to_key_values().save(out / "config.cfg");
    for (std::size_t r = 0; r < dirs.size(); ++r) {
        ensure_dir(dirs[r]);
        simulate_run(run_config(cfg, seeds[r]), dirs[r]);
    }
}

void cmd_reconstruct(const PipelineConfig& cfg, const fs::path& root) {
    cfg.validate();
    const std::vector<double> te = cfg.te_list();
    const Grid3D hr = cfg.hr_grid();
    for (const fs::path& dir : run_dirs(root)) {
        const Manifest manifest = Manifest::load(dir / "manifest.txt");
        // Load and check everything before the first reconstruction.
        std::vector<std::vector<LRSeries>> per_te(te.size());
        for (std::size_t k = 0; k < te.size(); ++k)
            for (const Orientation& o : cfg.orientations) {
                const auto entries = manifest.select("series", o.name());
                auto it = std::find_if(entries.begin(), entries.end(),
                                       [&](const ManifestEntry& e) { return e.te_index == int(k); });
                if (it == entries.end())
                    throw DataError("missing series for TE index " + std::to_string(k) + " (" + format_number(te[k]) +
                                    " ms), orientation " + o.name() + " in " + dir.string());
                if (std::abs(it->te - te[k]) > 1e-9)
                    throw DataError("series " + it->path + " has TE " + format_number(it->te) + " ms, expected " +
                                    format_number(te[k]));
                per_te[k].push_back(read_series(manifest.verified(dir, *it)));
            }

        std::map<std::string, std::shared_ptr<const ForwardOperator>> ops;
        for (const LRSeries& s : per_te.front()) {
            auto op = std::make_shared<const ForwardOperator>(hr, s.geometry);
            ops[s.geometry.orientation.name()] = op;
        }
        for (const auto& series : per_te)
            for (const LRSeries& s : series) {
                const auto& op = ops.at(s.geometry.orientation.name());
                if (!same_grid(op->lr_grid(), s.data.grid()))
                    throw DataError("series grids differ across echo times in " + dir.string());
            }

        ensure_dir(dir / "sr");
        Manifest sr_manifest;
        sr_manifest.entries.resize(te.size());
        parallel_for(std::ptrdiff_t(te.size()), cfg.threads, [&](std::ptrdiff_t k) {
            SRProblem prob{{}, hr, cfg.solver};
            for (const LRSeries& s : per_te[k])
                prob.series.push_back({ops.at(s.geometry.orientation.name()), s.data.data()});
            const SRResult res = sr_reconstruct(prob);
            const std::string tag = te_tag(std::size_t(k));
            write_volume(res.volume, dir / "sr" / (tag + ".nii"));
            res.report.write_csv(dir / "sr" / (tag + "_convergence.csv"));
            sr_manifest.entries[k] = {"sr", int(k), "-", te[k], "sr/" + tag + ".nii",
                                      sha256_file(dir / "sr" / (tag + ".nii"))};
        });
        sr_manifest.save(dir / "sr/manifest.txt");
    }
}

void cmd_fit(const PipelineConfig& cfg, const fs::path& root) {
    cfg.validate();
    for (const fs::path& dir : run_dirs(root))
        for (const std::string& arm : arms(cfg))
            write_fit(load_arm(dir, arm), cfg.fit_for(arm), cfg.mask_fraction, dir / "fit" / arm, cfg.threads);
}

void cmd_fit_files(const std::vector<fs::path>& volumes, const std::vector<double>& te, const FitConfig& fit,
                   double mask_fraction, const fs::path& out, int threads) {
    if (volumes.size() != te.size())
        throw ConfigError("fit got " + std::to_string(volumes.size()) + " volumes but " + std::to_string(te.size()) +
                          " echo times");
    if (!(mask_fraction >= 0.0 && mask_fraction < 1.0)) throw ConfigError("mask_fraction must be in [0, 1)");
    fit.validate(te.size());
    ArmData data;
    data.te = te;
    for (const fs::path& p : volumes) data.volumes.push_back(read_volume(p));
    write_fit(data, fit, mask_fraction, out, threads);
}

AnalysisReport cmd_analyze(const PipelineConfig& cfg, const fs::path& root) {
    cfg.validate();
    const auto dirs = run_dirs(root);
    AnalysisReport report;
    report.n_te = int(cfg.te_list().size());
    const auto methods = arms(cfg);

    for (std::size_t r = 0; r < dirs.size(); ++r)
        for (const std::string& arm : methods) {
            const fs::path map_path = dirs[r] / "fit" / arm / "t2.nii";
            if (!fs::exists(map_path)) throw DataError("missing T2 map " + map_path.string());
            const Volume3D t2 = read_volume(map_path);
            const Volume3D image = detection_volume(dirs[r], arm);
            if (!same_grid(t2.grid(), image.grid())) throw DataError("T2 map and images differ in grid for " + arm);
            const Grid3D& g = image.grid();
            const int slice = std::clamp(int(std::lround(g.index_of(Eigen::Vector3d::Zero())[1])), 0, g.dims[1] - 1);
            std::vector<CircleROI> rois;
            try {
                rois = hough_circles(extract_slice(image, 1, slice), cfg.r_min, cfg.r_max, cfg.n_expected);
            } catch (const DetectionError& e) {
                throw DetectionError("ROI detection failed for arm " + arm + " in " + dirs[r].string() + ", slice " +
                                         std::to_string(slice) + ": " + e.what(),
                                     e.found());
            }
            for (CircleROI& roi : rois) {
                roi.slice_axis = 1;
                roi.slice_index = slice;
                RoiRecord rec{int(r), arm, roi, {}, "", 0.0, erode_then_stat(roi, t2, cfg.roi_margin)};
                const Eigen::Vector3d w = g.world(Eigen::Vector3d(roi.center.x(), slice, roi.center.y()));
                rec.center_mm = {w.x(), w.z()};
                double best = std::numeric_limits<double>::infinity();
                for (const Vial& v : cfg.phantom.vials) {
                    const double d = (v.center - rec.center_mm).norm();
                    if (d < best) {
                        best = d;
                        rec.vial = v.label;
                        rec.truth_t2 = v.t2;
                    }
                }
                report.rois.push_back(rec);
            }
        }

    std::vector<std::string> references{"truth"};
    if (cfg.reference_enabled) references.insert(references.end(), {"se", "mese"});
    for (const RoiRecord& rec : report.rois)
        for (const std::string& ref : references) {
            if (ref == rec.method) continue;
            const auto value = reference_value(report.rois, rec, ref);
            if (!value) continue;
            report.relative_errors.push_back({rec.repeat, rec.method, rec.roi.label, ref, rec.stats.mean, *value,
                                              relative_error(rec.stats.mean, *value)});
        }

    std::map<std::pair<std::string, std::string>, std::vector<double>> per_key;
    for (const RoiRecord& rec : report.rois) per_key[{rec.method, rec.roi.label}].push_back(rec.stats.mean);
    for (const auto& [key, values] : per_key)
        report.mean_t2[key] = std::accumulate(values.begin(), values.end(), 0.0) / double(values.size());

    const fs::path out = root / "analysis";
    ensure_dir(out);
    const std::string n_te = std::to_string(report.n_te);

    std::string roi_csv = "repeat,method,n_te,roi,vial,center_row,center_col,slice,radius,center_x_mm,center_z_mm,"
                          "score,mean_t2,sd_t2,n_voxels\n";
    for (const RoiRecord& rec : report.rois)
        roi_csv += std::to_string(rec.repeat) + "," + rec.method + "," + n_te + "," + rec.roi.label + "," + rec.vial +
                   "," + std::to_string(rec.roi.center.x()) + "," + std::to_string(rec.roi.center.y()) + "," +
                   std::to_string(rec.roi.slice_index) + "," + std::to_string(rec.roi.radius) + "," +
                   csv_number(rec.center_mm.x()) + "," + csv_number(rec.center_mm.y()) + "," +
                   csv_number(rec.roi.score) + "," + csv_number(rec.stats.mean) + "," + csv_number(rec.stats.sd) +
                   "," + std::to_string(rec.stats.n_voxels) + "\n";
    write_text(out / "roi_stats.csv", roi_csv);

    std::string rel_csv = "repeat,method,n_te,roi,reference,measured_t2,reference_t2,relative_error_percent\n";
    for (const RelativeErrorRow& row : report.relative_errors)
        rel_csv += std::to_string(row.repeat) + "," + row.method + "," + n_te + "," + row.roi + "," + row.reference +
                   "," + csv_number(row.measured) + "," + csv_number(row.reference_t2) + "," +
                   csv_number(row.relative_error) + "\n";
    write_text(out / "relative_error.csv", rel_csv);

    std::string rep_csv = "method,n_te,roi,n_repeats,mean_t2,sd_t2,cv_percent,mean_abs_diff,mape_percent\n";
    for (const auto& [key, values] : per_key) {
        rep_csv += key.first + "," + n_te + "," + key.second + "," + std::to_string(values.size()) + ",";
        if (values.size() >= 2) {
            const RepeatabilityStats s = repeatability(values);
            rep_csv += csv_number(s.mean_t2) + "," + csv_number(s.sd_t2) + "," + csv_number(s.cv_percent) + "," +
                       csv_number(s.mean_abs_diff) + "," + csv_number(s.mape_percent) + "\n";
        } else {
            rep_csv += csv_number(values.front()) + ",,,,\n";
        }
    }
    write_text(out / "repeatability.csv", rep_csv);

    std::string ba_csv = "method,n_te,reference,repeat,roi,mean,difference\n";
    std::string ba_sum = "method,n_te,reference,n_pairs,bias,sd_diff,loa_low,loa_high\n";
    for (const std::string& method : methods) {
        if (method == cfg.ba_reference) continue;
        std::vector<std::pair<double, double>> pairs;
        std::vector<const RoiRecord*> recs;
        for (const RoiRecord& rec : report.rois) {
            if (rec.method != method) continue;
            if (const auto value = reference_value(report.rois, rec, cfg.ba_reference)) {
                pairs.emplace_back(rec.stats.mean, *value);
                recs.push_back(&rec);
            }
        }
        if (pairs.size() < 2) continue;
        const BlandAltmanStats ba = bland_altman(pairs);
        for (std::size_t i = 0; i < recs.size(); ++i)
            ba_csv += method + "," + n_te + "," + cfg.ba_reference + "," + std::to_string(recs[i]->repeat) + "," +
                      recs[i]->roi.label + "," + csv_number(ba.points[i].first) + "," +
                      csv_number(ba.points[i].second) + "\n";
        ba_sum += method + "," + n_te + "," + cfg.ba_reference + "," + std::to_string(pairs.size()) + "," +
                  csv_number(ba.bias) + "," + csv_number(ba.sd_diff) + "," + csv_number(ba.loa_low) + "," +
                  csv_number(ba.loa_high) + "\n";
    }
    write_text(out / "bland_altman.csv", ba_csv);
    write_text(out / "bland_altman_summary.csv", ba_sum);
    return report;
}

AnalysisReport cmd_pipeline(const PipelineConfig& cfg, const fs::path& out) {
    cmd_simulate(cfg, out);
    cmd_reconstruct(cfg, out);
    cmd_fit(cfg, out);
    return cmd_analyze(cfg, out);
}

SweepResult cmd_sweep_tes(const PipelineConfig& cfg, const fs::path& out, const std::vector<int>& n_list) {
    if (n_list.empty()) throw ConfigError("sweep needs at least one TE count");
    cfg.validate();
    ensure_dir(out);
    SweepResult result;
    for (int n : n_list) {
        PipelineConfig c = cfg;
        c.n_te = n;
        c.te.clear();
        try {
            const AnalysisReport rep = cmd_pipeline(c, out / ("n_te_" + std::to_string(n)));
            for (const std::string method : {"sr", "haste"}) {
                std::map<std::string, double> truth;
                for (const RoiRecord& rec : rep.rois)
                    if (rec.method == method) truth[rec.roi.label] = rec.truth_t2;
                for (const auto& [roi, t] : truth) {
                    const double m = rep.mean_t2.at({method, roi});
                    result.rows.push_back({method, n, roi, m, t, relative_error(m, t)});
                }
            }
        } catch (const std::exception& e) {
            result.diagnostics.push_back("n_te=" + std::to_string(n) + ": " + e.what());
        }
    }
    std::string csv = "method,n_te,roi,measured_t2,truth_t2,relative_error_percent\n";
    for (const SweepRow& row : result.rows)
        csv += row.method + "," + std::to_string(row.n_te) + "," + row.roi + "," + csv_number(row.measured) + "," +
               csv_number(row.truth_t2) + "," + csv_number(row.relative_error) + "\n";
    write_text(out / "sweep.csv", csv);
    std::string diag;
    for (const auto& d : result.diagnostics) diag += d + "\n";
    write_text(out / "sweep_diagnostics.txt", diag);
    return result;
}

}  // namespace srt2
