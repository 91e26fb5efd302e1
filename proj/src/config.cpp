#include "srt2/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace srt2 {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) out.push_back(trim(item));
    return out;
}

double parse_double(const std::string& key, const std::string& text) {
    double v = 0.0;
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v))
        throw ConfigError("config key '" + key + "': expected a number, got '" + text + "'");
    return v;
}

std::vector<std::string> fields(const KeyValues& kv, const std::string& key, std::size_t n) {
    auto parts = split(kv.at(key), ',');
    if (parts.size() != n)
        throw ConfigError("config key '" + key + "': expected " + std::to_string(n) + " comma-separated values");
    return parts;
}

}  // namespace

KeyValues KeyValues::parse(const std::string& text, const std::string& origin) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = origin + ":" + std::to_string(lineno);
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(where + ": empty key");
        if (kv.has(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
        kv.values_[key] = value;
    }
    return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

const std::string& KeyValues::at(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
    return it->second;
}

double KeyValues::number(const std::string& key) const { return parse_double(key, at(key)); }

long long KeyValues::integer(const std::string& key) const {
    const std::string& text = at(key);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw ConfigError("config key '" + key + "': expected an integer, got '" + text + "'");
    return v;
}

std::uint64_t KeyValues::unsigned_integer(const std::string& key) const {
    const std::string& text = at(key);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + text + "'");
    return v;
}

bool KeyValues::boolean(const std::string& key) const {
    const std::string& text = at(key);
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '" + text + "'");
}

std::vector<double> KeyValues::numbers(const std::string& key) const {
    std::vector<double> out;
    if (trim(at(key)).empty()) return out;
    for (const auto& part : split(at(key), ',')) out.push_back(parse_double(key, part));
    return out;
}

std::string KeyValues::str() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

void KeyValues::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out << str();
    if (!out) throw DataError("write failed: " + path.string());
}

std::string format_number(double v) {
    char buf[64];
    // Shortest form that round-trips.
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, ptr);
}

std::string format_list(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_number(v[i]);
    return out;
}

ReferenceProtocol ReferenceProtocol::se(const Grid3D& hr, const Eigen::Vector2d& in_plane, double thickness) {
    ReferenceProtocol p;
    p.kind = Kind::SE;
    p.te_list = te_schedule(25, 10.0, 400.0);
    p.slice = SeriesGeometry::covering(hr, Orientation::coronal(), in_plane, thickness, 0.0);
    p.slice.n_slices = 1;
    return p;
}

ReferenceProtocol ReferenceProtocol::mese(const Grid3D& hr, const Eigen::Vector2d& in_plane, double thickness) {
    ReferenceProtocol p = se(hr, in_plane, thickness);
    p.kind = Kind::MESE;
    p.te_list = te_schedule(32, 13.0, 416.0);
    return p;
}

PipelineConfig PipelineConfig::from_key_values(const KeyValues& kv) {
    PipelineConfig c;
    std::set<std::string> used;
    auto get = [&](const std::string& key, auto apply) {
        if (!kv.has(key)) return;
        used.insert(key);
        apply(key);
    };
    auto num = [&](const std::string& key, double& dst) { get(key, [&](auto& k) { dst = kv.number(k); }); };
    auto int_ = [&](const std::string& key, int& dst) {
        get(key, [&](auto& k) {
            const long long v = kv.integer(k);
            if (v < -1000000000LL || v > 1000000000LL) throw ConfigError("config key '" + k + "' out of range");
            dst = int(v);
        });
    };
    auto pair = [&](const std::string& key, Eigen::Vector2d& dst) {
        get(key, [&](auto& k) {
            auto v = kv.numbers(k);
            if (v.size() == 1) v.push_back(v[0]);
            if (v.size() != 2) throw ConfigError("config key '" + k + "': expected one or two values");
            dst = {v[0], v[1]};
        });
    };

    // Phantom: any vial key replaces the default vial set.
    bool vials_given = false;
    for (const auto& [key, value] : kv.entries()) {
        const std::string prefix = "phantom.vial.";
        if (key.rfind(prefix, 0) != 0) continue;
        if (!vials_given) c.phantom.vials.clear();
        vials_given = true;
        used.insert(key);
        const auto f = fields(kv, key, 5);
        Vial v;
        v.label = key.substr(prefix.size());
        if (v.label.empty()) throw ConfigError("config key '" + key + "': empty vial label");
        v.center = {parse_double(key, f[0]), parse_double(key, f[1])};
        v.radius = parse_double(key, f[2]);
        v.t2 = parse_double(key, f[3]);
        v.m0 = parse_double(key, f[4]);
        c.phantom.vials.push_back(v);
    }
    num("phantom.plate_thickness", c.phantom.plate_thickness);
    num("phantom.background_m0", c.phantom.background_m0);
    num("phantom.background_t2", c.phantom.background_t2);
    pair("phantom.fov", c.phantom.field_of_view);
    int_("phantom.supersample", c.supersample);

    get("grid.dims", [&](auto& k) {
        const auto f = fields(kv, k, 3);
        for (int a = 0; a < 3; ++a) {
            const double d = parse_double(k, f[a]);
            if (d != std::floor(d) || d < 1 || d > 4096) throw ConfigError("config key '" + k + "': bad dimension");
            c.grid_dims[a] = int(d);
        }
    });
    num("grid.spacing", c.grid_spacing);

    int_("protocol.n_te", c.n_te);
    num("protocol.te_min", c.te_min);
    num("protocol.te_max", c.te_max);
    get("protocol.te", [&](auto& k) { c.te = kv.numbers(k); });
    get("protocol.orientations", [&](auto& k) {
        c.orientations.clear();
        for (const auto& name : split(kv.at(k), ',')) c.orientations.push_back(Orientation::from_name(name));
    });
    pair("protocol.in_plane_spacing", c.in_plane_spacing);
    num("protocol.slice_thickness", c.slice_thickness);
    num("protocol.gap", c.gap_fraction);
    num("protocol.slice_fwhm_factor", c.slice_fwhm_factor);
    num("protocol.noise_sigma", c.noise_sigma);
    num("protocol.kspace_truncation", c.kspace_truncation);
    num("protocol.first_echo_offset", c.first_echo_offset);
    int_("protocol.first_echo_count", c.first_echo_count);

    get("reference.enabled", [&](auto& k) { c.reference_enabled = kv.boolean(k); });
    pair("reference.in_plane_spacing", c.reference_in_plane);
    num("reference.slice_thickness", c.reference_thickness);
    num("reference.noise_sigma", c.reference_noise_sigma);
    int_("reference.skip_first_n", c.reference_skip_first_n);

    num("solver.lambda", c.solver.lambda);
    int_("solver.max_iters", c.solver.max_iters);
    num("solver.rel_tol", c.solver.rel_tol);
    int_("solver.operator_norm_iters", c.solver.operator_norm_iters);
    num("solver.tv_epsilon", c.solver.tv_epsilon);

    int_("fit.skip_first_n", c.fit.skip_first_n);
    num("fit.t2_min", c.fit.t2_min);
    num("fit.t2_max", c.fit.t2_max);
    num("fit.m0_min", c.fit.m0_min);
    num("fit.m0_max", c.fit.m0_max);
    int_("fit.max_iters", c.fit.max_iters);
    num("fit.ftol", c.fit.ftol);
    num("fit.signal_floor", c.fit.signal_floor);
    num("fit.mask_fraction", c.mask_fraction);

    int_("analysis.roi_margin", c.roi_margin);
    int_("analysis.r_min", c.r_min);
    int_("analysis.r_max", c.r_max);
    int_("analysis.n_expected", c.n_expected);
    get("analysis.reference", [&](auto& k) { c.ba_reference = kv.at(k); });

    get("run.seed", [&](auto& k) { c.seed = kv.unsigned_integer(k); });
    int_("run.repeats", c.repeats);
    get("run.seeds", [&](auto& k) {
        for (const auto& s : split(kv.at(k), ',')) {
            KeyValues one;
            one.set(k, s);
            c.seeds.push_back(one.unsigned_integer(k));
        }
    });
    int_("run.threads", c.threads);

    for (const auto& [key, value] : kv.entries())
        if (!used.count(key)) throw ConfigError("unknown config key '" + key + "'");
    return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    return from_key_values(KeyValues::load(path));
}

KeyValues PipelineConfig::to_key_values() const {
    KeyValues kv;
    auto pair = [](const Eigen::Vector2d& v) { return format_number(v.x()) + "," + format_number(v.y()); };
    for (const Vial& v : phantom.vials)
        kv.set("phantom.vial." + v.label, format_list({v.center.x(), v.center.y(), v.radius, v.t2, v.m0}));
    kv.set("phantom.plate_thickness", format_number(phantom.plate_thickness));
    kv.set("phantom.background_m0", format_number(phantom.background_m0));
    kv.set("phantom.background_t2", format_number(phantom.background_t2));
    kv.set("phantom.fov", pair(phantom.field_of_view));
    kv.set("phantom.supersample", std::to_string(supersample));

    kv.set("grid.dims", std::to_string(grid_dims.x()) + "," + std::to_string(grid_dims.y()) + "," +
                            std::to_string(grid_dims.z()));
    kv.set("grid.spacing", format_number(grid_spacing));

    kv.set("protocol.n_te", std::to_string(n_te));
    kv.set("protocol.te_min", format_number(te_min));
    kv.set("protocol.te_max", format_number(te_max));
    if (!te.empty()) kv.set("protocol.te", format_list(te));
    std::string orient;
    for (std::size_t i = 0; i < orientations.size(); ++i) orient += (i ? "," : "") + orientations[i].name();
    kv.set("protocol.orientations", orient);
    kv.set("protocol.in_plane_spacing", pair(in_plane_spacing));
    kv.set("protocol.slice_thickness", format_number(slice_thickness));
    kv.set("protocol.gap", format_number(gap_fraction));
    kv.set("protocol.slice_fwhm_factor", format_number(slice_fwhm_factor));
    kv.set("protocol.noise_sigma", format_number(noise_sigma));
    kv.set("protocol.kspace_truncation", format_number(kspace_truncation));
    kv.set("protocol.first_echo_offset", format_number(first_echo_offset));
    kv.set("protocol.first_echo_count", std::to_string(first_echo_count));

    kv.set("reference.enabled", reference_enabled ? "true" : "false");
    kv.set("reference.in_plane_spacing", pair(reference_in_plane));
    kv.set("reference.slice_thickness", format_number(reference_thickness));
    kv.set("reference.noise_sigma", format_number(reference_noise_sigma));
    kv.set("reference.skip_first_n", std::to_string(reference_skip_first_n));

    kv.set("solver.lambda", format_number(solver.lambda));
    kv.set("solver.max_iters", std::to_string(solver.max_iters));
    kv.set("solver.rel_tol", format_number(solver.rel_tol));
    kv.set("solver.operator_norm_iters", std::to_string(solver.operator_norm_iters));
    kv.set("solver.tv_epsilon", format_number(solver.tv_epsilon));

    kv.set("fit.skip_first_n", std::to_string(fit.skip_first_n));
    kv.set("fit.t2_min", format_number(fit.t2_min));
    kv.set("fit.t2_max", format_number(fit.t2_max));
    kv.set("fit.m0_min", format_number(fit.m0_min));
    kv.set("fit.m0_max", format_number(fit.m0_max));
    kv.set("fit.max_iters", std::to_string(fit.max_iters));
    kv.set("fit.ftol", format_number(fit.ftol));
    kv.set("fit.signal_floor", format_number(fit.signal_floor));
    kv.set("fit.mask_fraction", format_number(mask_fraction));

    kv.set("analysis.roi_margin", std::to_string(roi_margin));
    kv.set("analysis.r_min", std::to_string(r_min));
    kv.set("analysis.r_max", std::to_string(r_max));
    kv.set("analysis.n_expected", std::to_string(n_expected));
    kv.set("analysis.reference", ba_reference);

    kv.set("run.seed", std::to_string(seed));
    kv.set("run.repeats", std::to_string(repeats));
    if (!seeds.empty()) {
        std::string s;
        for (std::size_t i = 0; i < seeds.size(); ++i) s += (i ? "," : "") + std::to_string(seeds[i]);
        kv.set("run.seeds", s);
    }
    return kv;
}

void PipelineConfig::validate() const {
    phantom.validate();
    if (supersample < 1 || supersample > 8) throw ConfigError("phantom.supersample must be in [1, 8]");
    if ((grid_dims.array() < 1).any()) throw ConfigError("grid.dims must be positive");
    if (!(grid_spacing > 0.0)) throw ConfigError("grid.spacing must be > 0");
    if (te.empty()) {
        if (n_te < 2) throw ConfigError("protocol.n_te must be >= 2");
        if (!(te_min > 0.0) || !(te_max > te_min)) throw ConfigError("protocol needs 0 < te_min < te_max");
    }
    if (orientations.empty()) throw ConfigError("protocol.orientations is empty");
    for (std::size_t i = 0; i < orientations.size(); ++i)
        for (std::size_t j = i + 1; j < orientations.size(); ++j)
            if (orientations[i] == orientations[j]) throw ConfigError("protocol.orientations repeats an entry");
    protocol(seed).validate();
    if (reference_enabled) {
        if (!(reference_noise_sigma >= 0.0)) throw ConfigError("reference.noise_sigma must be >= 0");
        for (const auto& ref : references()) {
            ref.slice.validate();
            fit_for(ref.name()).validate(ref.te_list.size());
        }
    }
    solver.validate();
    fit.validate(te_list().size());
    if (!(mask_fraction >= 0.0 && mask_fraction < 1.0)) throw ConfigError("fit.mask_fraction must be in [0, 1)");
    if (roi_margin < -1 || roi_margin > 1) throw ConfigError("analysis.roi_margin must be -1, 0 or 1");
    if (r_min < 1 || r_max < r_min) throw ConfigError("analysis needs 1 <= r_min <= r_max");
    if (n_expected < 1) throw ConfigError("analysis.n_expected must be >= 1");
    if (ba_reference != "truth" && ba_reference != "se" && ba_reference != "mese")
        throw ConfigError("analysis.reference must be truth, se or mese");
    if (ba_reference != "truth" && !reference_enabled)
        throw ConfigError("analysis.reference = " + ba_reference + " needs reference.enabled = true");
    if (repeats < 1) throw ConfigError("run.repeats must be >= 1");
    if (!seeds.empty() && seeds.size() != std::size_t(repeats))
        throw ConfigError("run.seeds lists " + std::to_string(seeds.size()) + " seeds but run.repeats is " +
                          std::to_string(repeats));
    const auto s = repeat_seeds();
    if (std::set<std::uint64_t>(s.begin(), s.end()).size() != s.size()) throw ConfigError("run.seeds must be distinct");
    if (threads < 1) throw ConfigError("run.threads must be >= 1");
}

Grid3D PipelineConfig::hr_grid() const {
    return Grid3D::centered(grid_dims, Eigen::Vector3d::Constant(grid_spacing));
}

std::vector<double> PipelineConfig::te_list() const { return te.empty() ? te_schedule(n_te, te_min, te_max) : te; }

std::vector<std::uint64_t> PipelineConfig::repeat_seeds() const {
    if (!seeds.empty()) return seeds;
    std::vector<std::uint64_t> out;
    for (int r = 0; r < repeats; ++r) out.push_back(seed + std::uint64_t(r));
    return out;
}

AcquisitionProtocol PipelineConfig::protocol(std::uint64_t run_seed) const {
    AcquisitionProtocol p;
    p.te_list = te_list();
    const Grid3D hr = hr_grid();
    for (const Orientation& o : orientations) {
        SeriesGeometry g = SeriesGeometry::covering(hr, o, in_plane_spacing, slice_thickness, gap_fraction);
        g.slice_fwhm_factor = slice_fwhm_factor;
        p.geometries.push_back(g);
    }
    p.noise_sigma = noise_sigma;
    p.kspace_truncation = kspace_truncation;
    p.first_echo_offset = first_echo_offset;
    p.first_echo_count = first_echo_count;
    p.seed = run_seed;
    return p;
}

std::vector<ReferenceProtocol> PipelineConfig::references() const {
    if (!reference_enabled) return {};
    const Grid3D hr = hr_grid();
    return {ReferenceProtocol::se(hr, reference_in_plane, reference_thickness),
            ReferenceProtocol::mese(hr, reference_in_plane, reference_thickness)};
}

FitConfig PipelineConfig::fit_for(const std::string& arm) const {
    FitConfig f = fit;
    if (arm == "se" || arm == "mese") f.skip_first_n = reference_skip_first_n;
    return f;
}

}  // namespace srt2
