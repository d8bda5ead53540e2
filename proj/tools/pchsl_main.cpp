#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "pchsl/errors.hpp"
#include "pchsl/pipeline.hpp"
#include "pchsl/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitIrreversible = 3;

struct GlobalOpts {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    bool verbose = false;
};

void log_verbose(const GlobalOpts& g, const std::string& msg) {
    if (g.verbose) std::cerr << "[pchsl] " << msg << "\n";
}

pchsl::PipelineConfig load_config(const GlobalOpts& g) {
    if (g.config_path.empty())
        throw pchsl::Error(pchsl::error_codes::ConfigError, "--config is required");
    pchsl::PipelineConfig cfg = pchsl::load_pipeline_config(g.config_path);
    if (!g.out_dir.empty()) cfg.output_dir = g.out_dir;
    if (g.seed) cfg.seed = g.seed;
    return cfg;
}

int run_stage(const GlobalOpts& g, pchsl::PipelineStage stage) {
    const pchsl::PipelineConfig cfg = load_config(g);
    log_verbose(g, "running pipeline through stage " +
                       std::to_string(static_cast<int>(stage)) + " from " + g.config_path);
    const pchsl::PipelineResult result = pchsl::run_pipeline(cfg, stage);
    pchsl::write_pipeline_outputs(result, cfg.output_dir);
    log_verbose(g, "outputs written to " + cfg.output_dir);
    if (stage == pchsl::PipelineStage::compare) {
        std::cout << pchsl::pipeline_report_json(result) << "\n";
        return result.comparison.verdict == pchsl::Verdict::irreversible ? kExitIrreversible
                                                                         : kExitOk;
    }
    return kExitOk;
}

pchsl::SynthPairSpec synth_pair_from_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw pchsl::Error(pchsl::error_codes::IoError, "cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw pchsl::Error(pchsl::error_codes::ConfigError,
                           std::string("invalid JSON: ") + e.what());
    }
    if (doc.contains("input")) {
        const pchsl::PipelineConfig cfg = pchsl::pipeline_config_from_json(text);
        if (!cfg.synth)
            throw pchsl::Error(pchsl::error_codes::ConfigError,
                               "input.synth: config has no synthetic scenario pair");
        return *cfg.synth;
    }
    return pchsl::synth_pair_from_json(text);
}

int run_synth(const GlobalOpts& g) {
    if (g.config_path.empty())
        throw pchsl::Error(pchsl::error_codes::ConfigError, "--config is required");
    const pchsl::SynthPairSpec pair = synth_pair_from_config(g.config_path);
    const std::string out_dir = g.out_dir.empty() ? "out" : g.out_dir;
    fs::create_directories(out_dir);

    const pchsl::TimeSeriesMatrix data = pchsl::make_event_dataset(pair.before, pair.after);
    const fs::path csv_path = fs::path(out_dir) / "dataset.csv";
    pchsl::write_long_csv(csv_path.string(), data);
    log_verbose(g, "dataset written to " + csv_path.string());

    // ground truth over the bounding box of the true trajectories
    const pchsl::StateTrajectory zb = pchsl::integrate(pair.before);
    const pchsl::StateTrajectory za = pchsl::integrate(pair.after);
    const pchsl::Domain dom = pchsl::default_comparison_domain(zb, za);
    const pchsl::ComparisonReport truth =
        pchsl::sir(pair.before.h_true, pair.after.h_true, dom, pchsl::SirMode::paper_literal,
                   0.07, 0.1, /*force_frame=*/true);

    json doc;
    doc["h_before"] = json::parse(
        pchsl::hamiltonian_to_json(pchsl::gauge_fix(pair.before.h_true,
                                                    pchsl::Gauge::zero_mean_over_domain, dom)));
    doc["h_after"] = json::parse(
        pchsl::hamiltonian_to_json(pchsl::gauge_fix(pair.after.h_true,
                                                    pchsl::Gauge::zero_mean_over_domain, dom)));
    doc["true_sir"] = truth.sir;
    doc["true_distance_d"] = truth.distance_d;
    doc["event_time"] = *data.event_time;
    doc["domain"] = {{"z1_range", {dom.z1_range[0], dom.z1_range[1]}},
                     {"z2_range", {dom.z2_range[0], dom.z2_range[1]}},
                     {"grid_resolution", dom.grid_resolution}};
    const fs::path truth_path = fs::path(out_dir) / "ground_truth.json";
    std::ofstream out(truth_path);
    out << doc.dump(2) << "\n";
    log_verbose(g, "ground truth written to " + truth_path.string());

    const json pair_doc = {{"before", json::parse(pchsl::hamiltonian_to_json(pair.before.h_true))},
                           {"after", json::parse(pchsl::hamiltonian_to_json(pair.after.h_true))}};
    const json manifest = {{"config_hash", pchsl::config_hash_hex(pair_doc.dump())},
                           {"seed", pair.before.seed},
                           {"version", pchsl::kVersion}};
    std::ofstream mf(fs::path(out_dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
    return kExitOk;
}

struct CompareOpts {
    std::string before_path;
    std::string after_path;
    std::vector<double> z1_range;
    std::vector<double> z2_range;
    int grid = 0;
    std::string mode = "paper_literal";
    double threshold = 0.07;
    double tau = 0.1;
    bool force_frame = false;
};

int run_compare(const GlobalOpts& g, const CompareOpts& c) {
    const pchsl::PolyHamiltonian hb = pchsl::load_hamiltonian(c.before_path);
    const pchsl::PolyHamiltonian ha = pchsl::load_hamiltonian(c.after_path);

    pchsl::Domain dom = hb.domain;
    if (!c.z1_range.empty()) dom.z1_range = {c.z1_range[0], c.z1_range[1]};
    if (!c.z2_range.empty()) dom.z2_range = {c.z2_range[0], c.z2_range[1]};
    if (c.grid > 0) dom.grid_resolution = c.grid;

    const pchsl::ComparisonReport report =
        pchsl::sir(hb, ha, dom, pchsl::sir_mode_from_string(c.mode), c.threshold, c.tau,
                   c.force_frame);
    std::cout << pchsl::comparison_to_json(report) << "\n";
    if (!g.out_dir.empty()) {
        fs::create_directories(g.out_dir);
        pchsl::write_diff_grid_csv((fs::path(g.out_dir) / "diff_grid.csv").string(),
                                   report.diff_grid);
    }
    return report.verdict == pchsl::Verdict::irreversible ? kExitIrreversible : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"energy-landscape structure learning for event-split time series"};
    app.require_subcommand(1);
    app.set_version_flag("--version", pchsl::kVersion);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "JSON config file")->envname("PCHSL_CONFIG");
    app.add_option("--out-dir", g.out_dir, "output directory (overrides config)");
    app.add_option("--seed", g.seed, "seed override for embedding and sampling");
    app.add_flag("--verbose", g.verbose, "log stage progress to stderr");
    app.fallthrough();

    auto* cmd_pipeline =
        app.add_subcommand("pipeline", "full run: ingest, embed, fit, compare; exit 3 when "
                                       "the verdict is irreversible");
    auto* cmd_synth = app.add_subcommand("synth", "generate a ground-truthed synthetic dataset");
    auto* cmd_embed = app.add_subcommand("embed", "run through the embedding stage only");
    auto* cmd_fit = app.add_subcommand("fit", "run through the Hamiltonian fit stage");
    auto* cmd_sample = app.add_subcommand("sample", "run through posterior sampling");

    CompareOpts c;
    auto* cmd_compare =
        app.add_subcommand("compare", "compare two saved Hamiltonians and print the report");
    cmd_compare->add_option("before", c.before_path, "H_before JSON file")->required();
    cmd_compare->add_option("after", c.after_path, "H_after JSON file")->required();
    cmd_compare->add_option("--z1", c.z1_range, "domain z1 range: lo hi")->expected(2);
    cmd_compare->add_option("--z2", c.z2_range, "domain z2 range: lo hi")->expected(2);
    cmd_compare->add_option("--grid", c.grid, "grid resolution (odd)");
    cmd_compare->add_option("--mode", c.mode, "paper_literal | dimensionless");
    cmd_compare->add_option("--threshold", c.threshold, "irreversibility threshold");
    cmd_compare->add_option("--tau", c.tau, "false-recovery proxy threshold");
    cmd_compare->add_flag("--force-frame", c.force_frame,
                          "compare even if embedding frames differ");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_pipeline->parsed()) return run_stage(g, pchsl::PipelineStage::compare);
        if (cmd_embed->parsed()) return run_stage(g, pchsl::PipelineStage::embed);
        if (cmd_fit->parsed()) return run_stage(g, pchsl::PipelineStage::fit);
        if (cmd_sample->parsed()) return run_stage(g, pchsl::PipelineStage::sample);
        if (cmd_synth->parsed()) return run_synth(g);
        if (cmd_compare->parsed()) return run_compare(g, c);
    } catch (const pchsl::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}
