#include "pchsl/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pchsl/errors.hpp"
#include "pchsl/version.hpp"

namespace pchsl {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& path) {
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key))
            throw Error(error_codes::ConfigError,
                        (path.empty() ? key : path + "." + key) + ": unknown key");
    }
}

[[noreturn]] void bad_key(const std::string& path, const std::string& why) {
    throw Error(error_codes::ConfigError, path + ": " + why);
}

double get_number(const json& obj, const std::string& key, const std::string& path,
                  double fallback, bool required = false) {
    if (!obj.contains(key)) {
        if (required) bad_key(path + "." + key, "missing required value");
        return fallback;
    }
    if (!obj.at(key).is_number()) bad_key(path + "." + key, "expected a number");
    return obj.at(key).get<double>();
}

int get_int(const json& obj, const std::string& key, const std::string& path, int fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_number_integer()) bad_key(path + "." + key, "expected an integer");
    return obj.at(key).get<int>();
}

bool get_bool(const json& obj, const std::string& key, const std::string& path, bool fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_boolean()) bad_key(path + "." + key, "expected a boolean");
    return obj.at(key).get<bool>();
}

std::string get_string(const json& obj, const std::string& key, const std::string& path,
                       const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_string()) bad_key(path + "." + key, "expected a string");
    return obj.at(key).get<std::string>();
}

PolyHamiltonian parse_poly(const json& obj, const std::string& path) {
    if (!obj.is_object()) bad_key(path, "expected an object");
    check_keys(obj, {"max_degree", "coeffs"}, path);
    PolyHamiltonian h(get_int(obj, "max_degree", path, 2));
    if (h.max_degree < 1 || h.max_degree > 6) bad_key(path + ".max_degree", "must be in [1, 6]");
    if (!obj.contains("coeffs") || !obj.at("coeffs").is_array())
        bad_key(path + ".coeffs", "expected an array of {i, j, value}");
    for (const auto& c : obj.at("coeffs")) {
        check_keys(c, {"i", "j", "value"}, path + ".coeffs[]");
        const int i = get_int(c, "i", path + ".coeffs[]", -1);
        const int j = get_int(c, "j", path + ".coeffs[]", -1);
        if (i < 0 || j < 0 || i + j > h.max_degree)
            bad_key(path + ".coeffs", "index (" + std::to_string(i) + "," + std::to_string(j) +
                                          ") outside degree " + std::to_string(h.max_degree));
        h.set_coeff(i, j, get_number(c, "value", path + ".coeffs[]", 0.0, true));
    }
    return h;
}

SynthScenario parse_scenario(const json& obj, const std::string& path) {
    if (!obj.is_object()) bad_key(path, "expected an object");
    check_keys(obj,
               {"hamiltonian", "gamma", "dt", "steps", "z0", "obs_noise_sigma", "lift_dim",
                "seed"},
               path);
    SynthScenario s;
    if (!obj.contains("hamiltonian")) bad_key(path + ".hamiltonian", "missing required value");
    s.h_true = parse_poly(obj.at("hamiltonian"), path + ".hamiltonian");
    if (obj.contains("gamma")) {
        const auto& g = obj.at("gamma");
        if (!g.is_array() || g.size() != 2) bad_key(path + ".gamma", "expected [g1, g2]");
        s.gamma = {g.at(0).get<double>(), g.at(1).get<double>()};
    }
    s.dt = get_number(obj, "dt", path, s.dt);
    s.steps = get_int(obj, "steps", path, s.steps);
    if (obj.contains("z0")) {
        const auto& z = obj.at("z0");
        if (!z.is_array() || z.size() != 2) bad_key(path + ".z0", "expected [z1, z2]");
        s.z0 = {z.at(0).get<double>(), z.at(1).get<double>()};
    }
    s.obs_noise_sigma = get_number(obj, "obs_noise_sigma", path, 0.0);
    if (obj.contains("lift_dim") && !obj.at("lift_dim").is_null())
        s.lift_dim = get_int(obj, "lift_dim", path, 0);
    s.seed = static_cast<std::uint64_t>(get_number(obj, "seed", path, 0.0));
    return s;
}

Domain parse_domain(const json& obj, const std::string& path) {
    check_keys(obj, {"z1_range", "z2_range", "grid_resolution"}, path);
    Domain dom;
    for (const char* key : {"z1_range", "z2_range"}) {
        if (!obj.contains(key)) bad_key(path + "." + key, "missing required value");
        const auto& r = obj.at(key);
        if (!r.is_array() || r.size() != 2) bad_key(path + "." + key, "expected [lo, hi]");
        auto& target = std::string(key) == "z1_range" ? dom.z1_range : dom.z2_range;
        target = {r.at(0).get<double>(), r.at(1).get<double>()};
    }
    dom.grid_resolution = get_int(obj, "grid_resolution", path, 101);
    try {
        dom.validate();
    } catch (const Error& e) {
        bad_key(path, e.what());
    }
    return dom;
}

json domain_to_json(const Domain& dom) {
    return {{"z1_range", {dom.z1_range[0], dom.z1_range[1]}},
            {"z2_range", {dom.z2_range[0], dom.z2_range[1]}},
            {"grid_resolution", dom.grid_resolution}};
}

json poly_to_json(const PolyHamiltonian& h) {
    json coeffs = json::array();
    for (int i = 0; i <= h.max_degree; ++i)
        for (int j = 0; j <= h.max_degree - i; ++j)
            coeffs.push_back({{"i", i}, {"j", j}, {"value", h.coeff(i, j)}});
    return {{"max_degree", h.max_degree}, {"coeffs", coeffs}};
}

json scenario_to_json(const SynthScenario& s) {
    json doc;
    doc["hamiltonian"] = poly_to_json(s.h_true);
    doc["gamma"] = {s.gamma[0], s.gamma[1]};
    doc["dt"] = s.dt;
    doc["steps"] = s.steps;
    doc["z0"] = {s.z0[0], s.z0[1]};
    doc["obs_noise_sigma"] = s.obs_noise_sigma;
    if (s.lift_dim) doc["lift_dim"] = *s.lift_dim;
    doc["seed"] = s.seed;
    return doc;
}

std::string iso_utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

json config_to_json(const PipelineConfig& cfg) {
    json doc;
    json input;
    if (cfg.input_csv) {
        input["csv"] = *cfg.input_csv;
        input["format"] = cfg.csv_format;
        if (cfg.event_time) input["event_time"] = *cfg.event_time;
    }
    if (cfg.synth) {
        input["synth"] = {{"before", scenario_to_json(cfg.synth->before)},
                          {"after", scenario_to_json(cfg.synth->after)}};
    }
    doc["input"] = input;
    doc["normalization"] = to_string(cfg.normalization);
    const char* method = cfg.embedding.method == EmbeddingMethod::none ? "none"
                         : cfg.embedding.method == EmbeddingMethod::pca_only ? "pca_only"
                                                                             : "pca_tsne";
    doc["embedding"] = {{"method", method},
                        {"d_pca", cfg.embedding.d_pca},
                        {"perplexity", cfg.embedding.tsne.perplexity},
                        {"learning_rate", cfg.embedding.tsne.learning_rate},
                        {"iterations", cfg.embedding.tsne.iterations},
                        {"seed", cfg.embedding.tsne.seed}};
    doc["smoothing_window"] = cfg.smoothing_window;
    doc["fit"] = {{"lambda", cfg.fit.lambda},
                  {"solver", cfg.fit.solver == FitSolver::ridge_closed_form ? "ridge_closed_form"
                                                                            : "gradient_descent"},
                  {"gd_steps", cfg.fit.gd_steps},
                  {"gd_learning_rate", cfg.fit.gd_learning_rate},
                  {"include_dissipation", cfg.fit.include_dissipation},
                  {"max_degree", cfg.fit.max_degree},
                  {"gauge", to_string(cfg.fit.gauge)}};
    doc["hmc"] = {{"enabled", cfg.hmc.enabled},
                  {"prior_sigma", cfg.hmc.prior_sigma},
                  {"noise_sigma", cfg.hmc.noise_sigma},
                  {"leapfrog_steps", cfg.hmc.hmc.leapfrog_steps},
                  {"step_size", cfg.hmc.hmc.step_size},
                  {"warmup", cfg.hmc.hmc.warmup},
                  {"samples", cfg.hmc.hmc.samples},
                  {"seed", cfg.hmc.hmc.seed}};
    if (cfg.domain) doc["domain"] = domain_to_json(*cfg.domain);
    doc["comparison"] = {{"mode", to_string(cfg.comparison.mode)},
                         {"threshold", cfg.comparison.threshold},
                         {"tau", cfg.comparison.tau}};
    // output_dir is deliberately absent: it does not affect the computation,
    // so runs into different directories hash alike
    if (cfg.seed) doc["seed"] = *cfg.seed;
    return doc;
}

}  // namespace

std::string config_hash_hex(const std::string& canonical_json) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(canonical_json)));
    return buf;
}

SynthPairSpec synth_pair_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(error_codes::ConfigError, std::string("invalid JSON: ") + e.what());
    }
    check_keys(doc, {"before", "after"}, "");
    if (!doc.contains("before") || !doc.contains("after"))
        throw Error(error_codes::ConfigError, "synth pair needs 'before' and 'after' scenarios");
    SynthPairSpec pair;
    pair.before = parse_scenario(doc.at("before"), "before");
    pair.after = parse_scenario(doc.at("after"), "after");
    return pair;
}

PipelineConfig pipeline_config_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(error_codes::ConfigError, std::string("invalid config JSON: ") + e.what());
    }
    check_keys(doc,
               {"input", "normalization", "embedding", "smoothing_window", "fit", "hmc", "domain",
                "comparison", "output_dir", "seed"},
               "");
    PipelineConfig cfg;

    if (!doc.contains("input")) bad_key("input", "missing required value");
    const json& input = doc.at("input");
    check_keys(input, {"csv", "format", "event_time", "synth"}, "input");
    if (input.contains("csv")) {
        cfg.input_csv = get_string(input, "csv", "input", "");
        cfg.csv_format = get_string(input, "format", "input", "auto");
        if (cfg.csv_format != "auto" && cfg.csv_format != "long" && cfg.csv_format != "wide")
            bad_key("input.format", "expected auto|long|wide");
        if (input.contains("event_time")) {
            if (input.at("event_time").is_string())
                cfg.event_time = parse_instant(input.at("event_time").get<std::string>());
            else if (input.at("event_time").is_number())
                cfg.event_time = input.at("event_time").get<double>();
            else
                bad_key("input.event_time", "expected a number or ISO-8601 string");
        }
    }
    if (input.contains("synth")) {
        if (cfg.input_csv) bad_key("input", "give either csv or synth, not both");
        const json& synth = input.at("synth");
        check_keys(synth, {"before", "after"}, "input.synth");
        SynthPairSpec pair;
        pair.before = parse_scenario(synth.at("before"), "input.synth.before");
        pair.after = parse_scenario(synth.at("after"), "input.synth.after");
        cfg.synth = pair;
    }
    if (!cfg.input_csv && !cfg.synth) bad_key("input", "needs a csv path or a synth block");
    if (cfg.input_csv && !cfg.event_time)
        bad_key("input.event_time", "required for csv input");

    try {
        cfg.normalization = normalization_mode_from_string(
            get_string(doc, "normalization", "", "zscore_per_segment"));
    } catch (const Error&) {
        bad_key("normalization", "expected zscore_per_segment|global_zscore|none");
    }

    if (doc.contains("embedding")) {
        const json& emb = doc.at("embedding");
        check_keys(emb, {"method", "d_pca", "perplexity", "learning_rate", "iterations", "seed"},
                   "embedding");
        const std::string method = get_string(emb, "method", "embedding", "pca_tsne");
        if (method == "none") cfg.embedding.method = EmbeddingMethod::none;
        else if (method == "pca_only") cfg.embedding.method = EmbeddingMethod::pca_only;
        else if (method == "pca_tsne") cfg.embedding.method = EmbeddingMethod::pca_tsne;
        else bad_key("embedding.method", "expected none|pca_only|pca_tsne");
        cfg.embedding.d_pca = get_int(emb, "d_pca", "embedding", cfg.embedding.d_pca);
        if (cfg.embedding.d_pca < 1) bad_key("embedding.d_pca", "must be >= 1");
        cfg.embedding.tsne.perplexity =
            get_number(emb, "perplexity", "embedding", cfg.embedding.tsne.perplexity);
        if (cfg.embedding.tsne.perplexity <= 0.0) bad_key("embedding.perplexity", "must be > 0");
        cfg.embedding.tsne.learning_rate =
            get_number(emb, "learning_rate", "embedding", cfg.embedding.tsne.learning_rate);
        cfg.embedding.tsne.iterations =
            get_int(emb, "iterations", "embedding", cfg.embedding.tsne.iterations);
        if (cfg.embedding.tsne.iterations < 1) bad_key("embedding.iterations", "must be >= 1");
        cfg.embedding.tsne.seed =
            static_cast<std::uint64_t>(get_number(emb, "seed", "embedding", 42.0));
    }

    cfg.smoothing_window = get_int(doc, "smoothing_window", "", 1);
    if (cfg.smoothing_window < 1 || cfg.smoothing_window % 2 == 0)
        bad_key("smoothing_window", "must be odd and >= 1");

    if (doc.contains("fit")) {
        const json& fit = doc.at("fit");
        check_keys(fit,
                   {"lambda", "solver", "gd_steps", "gd_learning_rate", "include_dissipation",
                    "max_degree", "gauge"},
                   "fit");
        cfg.fit.lambda = get_number(fit, "lambda", "fit", cfg.fit.lambda);
        if (cfg.fit.lambda < 0.0) bad_key("fit.lambda", "must be >= 0");
        const std::string solver = get_string(fit, "solver", "fit", "ridge_closed_form");
        if (solver == "ridge_closed_form") cfg.fit.solver = FitSolver::ridge_closed_form;
        else if (solver == "gradient_descent") cfg.fit.solver = FitSolver::gradient_descent;
        else bad_key("fit.solver", "expected ridge_closed_form|gradient_descent");
        cfg.fit.gd_steps = get_int(fit, "gd_steps", "fit", cfg.fit.gd_steps);
        cfg.fit.gd_learning_rate =
            get_number(fit, "gd_learning_rate", "fit", cfg.fit.gd_learning_rate);
        if (cfg.fit.gd_steps < 1 || cfg.fit.gd_learning_rate <= 0.0)
            bad_key("fit", "gd_steps and gd_learning_rate must be positive");
        cfg.fit.include_dissipation =
            get_bool(fit, "include_dissipation", "fit", cfg.fit.include_dissipation);
        cfg.fit.max_degree = get_int(fit, "max_degree", "fit", cfg.fit.max_degree);
        if (cfg.fit.max_degree < 1 || cfg.fit.max_degree > 6)
            bad_key("fit.max_degree", "must be in [1, 6]");
        try {
            cfg.fit.gauge = gauge_from_string(get_string(fit, "gauge", "fit",
                                                         to_string(cfg.fit.gauge)));
        } catch (const Error&) {
            bad_key("fit.gauge", "expected zero_at_origin|zero_mean_over_domain");
        }
    }

    if (doc.contains("hmc")) {
        const json& hmc = doc.at("hmc");
        check_keys(hmc,
                   {"enabled", "prior_sigma", "noise_sigma", "leapfrog_steps", "step_size",
                    "warmup", "samples", "seed"},
                   "hmc");
        cfg.hmc.enabled = get_bool(hmc, "enabled", "hmc", cfg.hmc.enabled);
        cfg.hmc.prior_sigma = get_number(hmc, "prior_sigma", "hmc", cfg.hmc.prior_sigma);
        if (cfg.hmc.prior_sigma <= 0.0) bad_key("hmc.prior_sigma", "must be > 0");
        cfg.hmc.noise_sigma = get_number(hmc, "noise_sigma", "hmc", cfg.hmc.noise_sigma);
        if (cfg.hmc.noise_sigma < 0.0) bad_key("hmc.noise_sigma", "must be >= 0 (0 = auto)");
        cfg.hmc.hmc.leapfrog_steps =
            get_int(hmc, "leapfrog_steps", "hmc", cfg.hmc.hmc.leapfrog_steps);
        cfg.hmc.hmc.step_size = get_number(hmc, "step_size", "hmc", cfg.hmc.hmc.step_size);
        cfg.hmc.hmc.warmup = get_int(hmc, "warmup", "hmc", cfg.hmc.hmc.warmup);
        cfg.hmc.hmc.samples = get_int(hmc, "samples", "hmc", cfg.hmc.hmc.samples);
        if (cfg.hmc.hmc.leapfrog_steps < 1 || cfg.hmc.hmc.step_size <= 0.0 ||
            cfg.hmc.hmc.warmup < 0 || cfg.hmc.hmc.samples < 100)
            bad_key("hmc", "need leapfrog_steps >= 1, step_size > 0, warmup >= 0, samples >= 100");
        cfg.hmc.hmc.seed = static_cast<std::uint64_t>(get_number(hmc, "seed", "hmc", 0.0));
    }

    if (doc.contains("domain")) cfg.domain = parse_domain(doc.at("domain"), "domain");

    if (doc.contains("comparison")) {
        const json& cmp = doc.at("comparison");
        check_keys(cmp, {"mode", "threshold", "tau"}, "comparison");
        try {
            cfg.comparison.mode =
                sir_mode_from_string(get_string(cmp, "mode", "comparison", "paper_literal"));
        } catch (const Error&) {
            bad_key("comparison.mode", "expected paper_literal|dimensionless");
        }
        cfg.comparison.threshold =
            get_number(cmp, "threshold", "comparison", cfg.comparison.threshold);
        cfg.comparison.tau = get_number(cmp, "tau", "comparison", cfg.comparison.tau);
        if (cfg.comparison.threshold < 0.0) bad_key("comparison.threshold", "must be >= 0");
        if (cfg.comparison.tau <= 0.0) bad_key("comparison.tau", "must be > 0");
    }

    cfg.output_dir = get_string(doc, "output_dir", "", cfg.output_dir);
    if (doc.contains("seed"))
        cfg.seed = static_cast<std::uint64_t>(get_number(doc, "seed", "", 0.0));
    return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(error_codes::IoError, "cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return pipeline_config_from_json(ss.str());
}

Domain default_comparison_domain(const StateTrajectory& before, const StateTrajectory& after,
                                 int grid_resolution) {
    Domain dom;
    dom.grid_resolution = grid_resolution;
    for (int axis = 0; axis < 2; ++axis) {
        double lo = std::min(before.states.col(axis).minCoeff(), after.states.col(axis).minCoeff());
        double hi = std::max(before.states.col(axis).maxCoeff(), after.states.col(axis).maxCoeff());
        if (hi - lo < 1e-12) {  // flat coordinate; give the box some width
            lo -= 0.5;
            hi += 0.5;
        }
        const double pad = 0.1 * (hi - lo);
        auto& range = axis == 0 ? dom.z1_range : dom.z2_range;
        range = {lo - pad, hi + pad};
    }
    return dom;
}

namespace {

std::string frame_hash(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* tag) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, std::size_t len) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    };
    mix(a.data(), sizeof(double) * static_cast<std::size_t>(a.size()));
    mix(b.data(), sizeof(double) * static_cast<std::size_t>(b.size()));
    mix(tag, std::char_traits<char>::length(tag));
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

StateTrajectory raw_trajectory(const TimeSeriesMatrix& x, WindowLabel label) {
    StateTrajectory z;
    z.states = x.values.transpose();
    z.dt = x.n_steps() >= 2 ? x.dt() : 1.0;
    z.provenance = Provenance::raw;
    z.window_label = label;
    return z;
}

// rethrow with the failing stage named, keeping the code and key paths intact
template <typename Fn>
auto in_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.code(), std::string(stage) + " stage: " + e.message());
    }
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, PipelineStage stage) {
    PipelineResult result;
    const json canonical = config_to_json(cfg);
    result.config_hash = config_hash_hex(canonical.dump());

    TsneConfig tsne = cfg.embedding.tsne;
    HmcConfig hmc_cfg = cfg.hmc.hmc;
    if (cfg.seed) {
        tsne.seed = *cfg.seed;
        hmc_cfg.seed = *cfg.seed;
    }
    result.seed = cfg.seed.value_or(tsne.seed);

    // ingest + split
    const TimeSeriesMatrix data = in_stage("ingest", [&] {
        TimeSeriesMatrix x;
        if (cfg.synth) {
            x = make_event_dataset(cfg.synth->before, cfg.synth->after);
        } else {
            if (cfg.csv_format == "long") x = load_long_csv(*cfg.input_csv);
            else if (cfg.csv_format == "wide") x = load_wide_csv(*cfg.input_csv);
            else x = load_csv(*cfg.input_csv);
            x.event_time = cfg.event_time;
        }
        if (!x.event_time)
            throw Error(error_codes::ConfigError, "input.event_time: no event time available");
        return x;
    });
    result.split = in_stage("split", [&] { return split_at_event(data, *data.event_time); });

    // normalize: before-window statistics are applied to both windows
    auto [norm_before, stats] =
        in_stage("normalize", [&] { return normalize(result.split.before, cfg.normalization); });
    auto [norm_after, stats_after] = in_stage(
        "normalize", [&] { return normalize(result.split.after, cfg.normalization, stats); });

    // embed
    in_stage("embed", [&] {
    switch (cfg.embedding.method) {
        case EmbeddingMethod::none: {
            if (norm_before.n_segments() != 2)
                throw Error(error_codes::ConfigError,
                            "embedding.method: 'none' requires exactly 2 segments, got " +
                                std::to_string(norm_before.n_segments()));
            result.traj_before = raw_trajectory(norm_before, WindowLabel::before);
            result.traj_after = raw_trajectory(norm_after, WindowLabel::after);
            const std::string frame =
                frame_hash(norm_before.values, norm_after.values, "raw");
            result.traj_before.frame_id = frame;
            result.traj_after.frame_id = frame;
            break;
        }
        case EmbeddingMethod::pca_only:
        case EmbeddingMethod::pca_tsne: {
            const bool tsne_stage = cfg.embedding.method == EmbeddingMethod::pca_tsne;
            const int d_pca = tsne_stage ? cfg.embedding.d_pca : 2;
            // one PCA frame across both windows
            TimeSeriesMatrix joint;
            joint.values.resize(norm_before.n_segments(),
                                norm_before.n_steps() + norm_after.n_steps());
            joint.values << norm_before.values, norm_after.values;
            joint.segment_ids = norm_before.segment_ids;
            joint.timestamps = result.split.before.timestamps;
            for (double t : result.split.after.timestamps) joint.timestamps.push_back(t);
            if (d_pca > std::min(joint.values.rows(), joint.values.cols()))
                throw Error(error_codes::ConfigError,
                            "embedding.d_pca: " + std::to_string(d_pca) +
                                " exceeds min(N, T) = " +
                                std::to_string(std::min(joint.values.rows(), joint.values.cols())));
            const PcaModel pca = fit_pca(joint, d_pca);
            StateTrajectory pb = project(pca, norm_before, WindowLabel::before);
            StateTrajectory pa = project(pca, norm_after, WindowLabel::after);
            if (tsne_stage) {
                const auto n = static_cast<double>(pb.n_steps() + pa.n_steps());
                if (n < 4.0 || tsne.perplexity > (n - 1.0) / 3.0)
                    throw Error(error_codes::ConfigError,
                                "embedding.perplexity: " + std::to_string(tsne.perplexity) +
                                    " too large for " + std::to_string(pb.n_steps() + pa.n_steps()) +
                                    " joint samples (needs n >= 4 and perplexity <= (n-1)/3)");
                auto [eb, ea] = embed_joint(pb, pa, tsne);
                result.traj_before = std::move(eb);
                result.traj_after = std::move(ea);
            } else {
                const std::string frame = frame_hash(pca.components, pca.mean, "pca_only");
                pb.frame_id = frame;
                pa.frame_id = frame;
                result.traj_before = std::move(pb);
                result.traj_after = std::move(pa);
            }
            break;
        }
    }
    if (cfg.smoothing_window > 1) {
        result.traj_before = smooth(result.traj_before, cfg.smoothing_window);
        result.traj_after = smooth(result.traj_after, cfg.smoothing_window);
    }
    });
    if (stage == PipelineStage::embed) {
        result.completed_stage = PipelineStage::embed;
        return result;
    }

    // differentiate + fit
    in_stage("fit", [&] {
        result.vel_before = central_differences(result.traj_before);
        result.vel_after = central_differences(result.traj_after);
        result.domain = cfg.domain ? *cfg.domain
                                   : default_comparison_domain(result.traj_before,
                                                               result.traj_after);
        result.fit_before = fit(result.vel_before, cfg.fit, result.domain);
        result.fit_after = fit(result.vel_after, cfg.fit, result.domain);
    });
    if (stage == PipelineStage::fit) {
        result.completed_stage = PipelineStage::fit;
        return result;
    }

    // optional posterior sampling
    if (cfg.hmc.enabled || stage == PipelineStage::sample) {
        in_stage("sample", [&] {
            HmcConfig hb = hmc_cfg;
            hb.max_degree = cfg.fit.max_degree;
            HmcConfig ha = hb;
            ha.seed = hb.seed + 1;
            auto derive_noise = [](const FitReport& r) {
                const double rms = std::sqrt(0.5 * (r.residual_rms[0] * r.residual_rms[0] +
                                                    r.residual_rms[1] * r.residual_rms[1]));
                return std::max(rms, 1e-9);
            };
            const double noise_b =
                cfg.hmc.noise_sigma > 0.0 ? cfg.hmc.noise_sigma : derive_noise(result.fit_before);
            const double noise_a =
                cfg.hmc.noise_sigma > 0.0 ? cfg.hmc.noise_sigma : derive_noise(result.fit_after);
            result.posterior_before =
                hmc_sample(result.vel_before, cfg.hmc.prior_sigma, noise_b, hb);
            result.posterior_after =
                hmc_sample(result.vel_after, cfg.hmc.prior_sigma, noise_a, ha);
        });
    }
    if (stage == PipelineStage::sample) {
        result.completed_stage = PipelineStage::sample;
        return result;
    }

    in_stage("compare", [&] {
        result.comparison =
            sir(result.fit_before.hamiltonian, result.fit_after.hamiltonian, result.domain,
                cfg.comparison.mode, cfg.comparison.threshold, cfg.comparison.tau);
    });
    result.completed_stage = PipelineStage::compare;
    return result;
}

namespace {

json fit_report_to_json(const FitReport& r) {
    json doc;
    doc["initial_loss"] = r.initial_loss;
    doc["final_loss"] = r.final_loss;
    doc["convergence_improvement"] = r.convergence_improvement;
    doc["residual_rms"] = {r.residual_rms[0], r.residual_rms[1]};
    if (r.dissipation) doc["dissipation"] = {(*r.dissipation)[0], (*r.dissipation)[1]};
    return doc;
}

}  // namespace

std::string pipeline_report_json(const PipelineResult& result) {
    json doc;
    doc["sir"] = result.comparison.sir;
    doc["distance_d"] = result.comparison.distance_d;
    doc["norm_before"] = result.comparison.norm_before;
    doc["mode"] = to_string(result.comparison.mode);
    doc["threshold"] = result.comparison.threshold;
    doc["verdict"] = to_string(result.comparison.verdict);
    doc["false_recovery_fraction_proxy"] = result.comparison.false_recovery_fraction;
    doc["convergence_improvement_before"] = result.fit_before.convergence_improvement;
    doc["convergence_improvement_after"] = result.fit_after.convergence_improvement;
    doc["manifest"] = {{"config_hash", result.config_hash},
                       {"seed", result.seed},
                       {"version", kVersion},
                       {"timestamp", iso_utc_now()}};
    return doc.dump(2);
}

std::string write_pipeline_outputs(const PipelineResult& result, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    {
        // every run leaves a manifest, whatever stage it stopped at
        json manifest = {{"config_hash", result.config_hash},
                         {"seed", result.seed},
                         {"version", kVersion},
                         {"timestamp", iso_utc_now()}};
        std::ofstream out(dir / "manifest.json");
        out << manifest.dump(2) << '\n';
    }

    write_trajectory_csv((dir / "trajectory_before.csv").string(), result.traj_before);
    write_trajectory_csv((dir / "trajectory_after.csv").string(), result.traj_after);
    if (result.completed_stage == PipelineStage::embed) return {};

    write_velocity_csv((dir / "velocity_before.csv").string(), result.vel_before);
    write_velocity_csv((dir / "velocity_after.csv").string(), result.vel_after);
    save_hamiltonian((dir / "hamiltonian_before.json").string(), result.fit_before.hamiltonian);
    save_hamiltonian((dir / "hamiltonian_after.json").string(), result.fit_after.hamiltonian);
    {
        std::ofstream out(dir / "fit_reports.json");
        json doc = {{"before", fit_report_to_json(result.fit_before)},
                    {"after", fit_report_to_json(result.fit_after)}};
        out << doc.dump(2) << '\n';
    }
    if (result.posterior_before) {
        std::ofstream pb(dir / "posterior_before.json");
        pb << posterior_to_json(*result.posterior_before) << '\n';
        std::ofstream pa(dir / "posterior_after.json");
        pa << posterior_to_json(*result.posterior_after) << '\n';
    }
    if (result.completed_stage == PipelineStage::fit ||
        result.completed_stage == PipelineStage::sample)
        return {};

    write_diff_grid_csv((dir / "diff_grid.csv").string(), result.comparison.diff_grid);
    const fs::path report_path = dir / "report.json";
    std::ofstream report(report_path);
    report << pipeline_report_json(result) << '\n';
    return report_path.string();
}

}  // namespace pchsl
