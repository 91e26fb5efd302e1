// srt2: simulate, super-resolve and fit T2 maps of a digital relaxometry plate.
#include <CLI11.hpp>

#include <iostream>

#include "srt2/pipeline.hpp"

namespace {

using namespace srt2;

struct Globals {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> repeats;
    std::optional<int> threads;
};

// Explicit --config wins; otherwise downstream stages reuse the config saved next to the data.
PipelineConfig resolve(const Globals& g, const std::string& data_dir = "") {
    PipelineConfig cfg;
    if (!g.config.empty())
        cfg = PipelineConfig::load(g.config);
    else if (!data_dir.empty() && fs::exists(fs::path(data_dir) / "config.cfg"))
        cfg = PipelineConfig::load(fs::path(data_dir) / "config.cfg");
    if (g.seed) cfg.seed = *g.seed;
    if (g.repeats) {
        cfg.repeats = *g.repeats;
        if (!cfg.seeds.empty() && cfg.seeds.size() != std::size_t(cfg.repeats)) cfg.seeds.clear();
    }
    if (g.threads) cfg.threads = *g.threads;
    return cfg;
}

const std::string& require_out(const Globals& g) {
    if (g.out.empty()) throw ConfigError("--out is required");
    return g.out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Super-resolution T2 mapping on a simulated relaxometry plate"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "Key-value config file")->check(CLI::ExistingFile);
    app.add_option("--out", g.out, "Output (or run) directory");
    app.add_option("--seed", g.seed, "Base noise seed");
    app.add_option("--repeats", g.repeats, "Number of repeated experiments");
    app.add_option("--threads", g.threads, "Worker threads");

    std::string in_dir;
    auto* simulate = app.add_subcommand("simulate", "Simulate ground truth, LR series and reference scans");
    auto* reconstruct = app.add_subcommand("reconstruct", "SR-reconstruct one volume per TE");
    reconstruct->add_option("--in", in_dir, "Simulation directory (defaults to --out)");
    auto* fit = app.add_subcommand("fit", "Fit T2 maps for every arm, or for explicit volumes");
    fit->add_option("--in", in_dir, "Run directory (defaults to --out)");
    std::vector<std::string> volumes;
    std::vector<double> te;
    fit->add_option("--volumes", volumes, "Explicit NIfTI volumes")->delimiter(',');
    fit->add_option("--te", te, "Echo times of --volumes in ms")->delimiter(',');
    auto* analyze = app.add_subcommand("analyze", "Detect ROIs and write report CSVs");
    analyze->add_option("--in", in_dir, "Run directory (defaults to --out)");
    auto* sweep = app.add_subcommand("sweep-tes", "Run the pipeline for several TE counts");
    std::vector<int> n_list{4, 5, 6, 8, 10, 18};
    sweep->add_option("--n-list", n_list, "TE counts")->delimiter(',');
    auto* pipeline = app.add_subcommand("pipeline", "simulate, reconstruct, fit and analyze");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const std::string data = in_dir.empty() ? g.out : in_dir;
        if (simulate->parsed()) {
            cmd_simulate(resolve(g), require_out(g));
        } else if (reconstruct->parsed()) {
            if (data.empty()) throw ConfigError("--in or --out is required");
            cmd_reconstruct(resolve(g, data), data);
        } else if (fit->parsed()) {
            if (!volumes.empty() || !te.empty()) {
                const PipelineConfig cfg = resolve(g);
                std::vector<fs::path> paths(volumes.begin(), volumes.end());
                cmd_fit_files(paths, te, cfg.fit, cfg.mask_fraction, require_out(g), cfg.threads);
            } else {
                if (data.empty()) throw ConfigError("--in or --out is required");
                cmd_fit(resolve(g, data), data);
            }
        } else if (analyze->parsed()) {
            if (data.empty()) throw ConfigError("--in or --out is required");
            cmd_analyze(resolve(g, data), data);
        } else if (sweep->parsed()) {
            const SweepResult res = cmd_sweep_tes(resolve(g), require_out(g), n_list);
            for (const auto& d : res.diagnostics) std::cerr << "sweep: " << d << '\n';
        } else if (pipeline->parsed()) {
            cmd_pipeline(resolve(g), require_out(g));
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 4;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
