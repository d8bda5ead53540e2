#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "../unit/helpers.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunResult run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path dir = fs::temp_directory_path() / ("pchsl_cli_io_" + std::to_string(counter++));
    fs::create_directories(dir);
    const fs::path out_file = dir / "stdout.txt";
    const fs::path err_file = dir / "stderr.txt";
    const std::string cmd = std::string(PCHSL_CLI_PATH) + " " + args + " > " +
                            out_file.string() + " 2> " + err_file.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

json scenario_json(double h20, double h02, double h11, int steps, std::array<double, 2> z0) {
    return {{"hamiltonian",
             {{"max_degree", 2},
              {"coeffs",
               json::array({{{"i", 2}, {"j", 0}, {"value", h20}},
                            {{"i", 0}, {"j", 2}, {"value", h02}},
                            {{"i", 1}, {"j", 1}, {"value", h11}}})}}},
            {"dt", 0.01},
            {"steps", steps},
            {"z0", {z0[0], z0[1]}}};
}

json null_config() {
    json cfg;
    cfg["input"]["synth"]["before"] = scenario_json(0.5, 0.5, 0.0, 400, {1.0, 0.0});
    cfg["input"]["synth"]["after"] = scenario_json(0.5, 0.5, 0.0, 400, {0.8, 0.2});
    cfg["normalization"] = "none";
    cfg["embedding"] = {{"method", "none"}};
    cfg["fit"] = {{"lambda", 1e-6}};
    return cfg;
}

json damage_config() {
    json cfg = null_config();
    cfg["input"]["synth"]["after"] = scenario_json(0.9, 0.25, 0.2, 400, {0.8, 0.2});
    return cfg;
}

// minimal JSON-schema subset validator: type, enum, required, properties,
// additionalProperties, minimum/maximum
bool validate_schema(const json& schema, const json& value, std::string& why,
                     const std::string& path = "$") {
    if (schema.contains("enum")) {
        for (const auto& option : schema.at("enum"))
            if (option == value) return true;
        why = path + ": not one of the enum values";
        return false;
    }
    if (schema.contains("type")) {
        const std::string type = schema.at("type").get<std::string>();
        const bool ok = (type == "object" && value.is_object()) ||
                        (type == "number" && value.is_number()) ||
                        (type == "integer" && value.is_number_integer()) ||
                        (type == "string" && value.is_string()) ||
                        (type == "boolean" && value.is_boolean()) ||
                        (type == "array" && value.is_array());
        if (!ok) {
            why = path + ": expected " + type;
            return false;
        }
    }
    if (schema.contains("minimum") && value.is_number() &&
        value.get<double>() < schema.at("minimum").get<double>()) {
        why = path + ": below minimum";
        return false;
    }
    if (schema.contains("maximum") && value.is_number() &&
        value.get<double>() > schema.at("maximum").get<double>()) {
        why = path + ": above maximum";
        return false;
    }
    if (value.is_object()) {
        if (schema.contains("required"))
            for (const auto& key : schema.at("required"))
                if (!value.contains(key.get<std::string>())) {
                    why = path + ": missing required key " + key.get<std::string>();
                    return false;
                }
        const json props = schema.value("properties", json::object());
        const bool closed =
            schema.contains("additionalProperties") && !schema.at("additionalProperties");
        for (const auto& [key, sub] : value.items()) {
            if (props.contains(key)) {
                if (!validate_schema(props.at(key), sub, why, path + "." + key)) return false;
            } else if (closed) {
                why = path + ": unexpected key " + key;
                return false;
            }
        }
    }
    return true;
}

void check_report_schema(const json& report) {
    const json schema = json::parse(slurp(PCHSL_SCHEMA_PATH));
    std::string why;
    const bool ok = validate_schema(schema, report, why);
    INFO(why);
    CHECK(ok);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("pipeline: null pair exits 0 with a tiny index and a schema-valid report") {
    const auto dir = testutil::temp_dir("cli_null");
    testutil::write_file(dir / "cfg.json", null_config().dump());
    const RunResult r = run_cli("pipeline --config " + (dir / "cfg.json").string() +
                                " --out-dir " + (dir / "out").string());
    CHECK(r.exit_code == 0);
    const json report = json::parse(slurp(dir / "out" / "report.json"));
    CHECK(report.at("sir").get<double>() <= 0.05);
    CHECK(report.at("verdict") == "reversible");
    check_report_schema(report);
    // stdout carries the same report
    CHECK(json::parse(r.out).at("verdict") == "reversible");
}

TEST_CASE("pipeline: planted damage exits 3 with an irreversible verdict") {
    const auto dir = testutil::temp_dir("cli_damage");
    testutil::write_file(dir / "cfg.json", damage_config().dump());
    const RunResult r = run_cli("pipeline --config " + (dir / "cfg.json").string() +
                                " --out-dir " + (dir / "out").string());
    CHECK(r.exit_code == 3);
    const json report = json::parse(slurp(dir / "out" / "report.json"));
    CHECK(report.at("verdict") == "irreversible");
    CHECK(report.at("sir").get<double>() > 0.07);
    check_report_schema(report);
}

TEST_CASE("pipeline: oversized perplexity fails with the config key in the message") {
    json cfg = null_config();
    cfg["input"]["synth"]["before"]["lift_dim"] = 6;
    cfg["input"]["synth"]["after"]["lift_dim"] = 6;
    cfg["input"]["synth"]["before"]["steps"] = 30;
    cfg["input"]["synth"]["after"]["steps"] = 30;
    cfg["embedding"] = {{"method", "pca_tsne"}, {"d_pca", 3}, {"perplexity", 30.0}};
    const auto dir = testutil::temp_dir("cli_perp");
    testutil::write_file(dir / "cfg.json", cfg.dump());
    const RunResult r = run_cli("pipeline --config " + (dir / "cfg.json").string() +
                                " --out-dir " + (dir / "out").string());
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("embedding.perplexity") != std::string::npos);
}

TEST_CASE("pipeline: unknown config keys are named with their path") {
    json cfg = null_config();
    cfg["comparison"]["thresold"] = 0.1;  // typo
    const auto dir = testutil::temp_dir("cli_unknown");
    testutil::write_file(dir / "cfg.json", cfg.dump());
    const RunResult r = run_cli("pipeline --config " + (dir / "cfg.json").string());
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("comparison.thresold") != std::string::npos);
}

TEST_CASE("synth: writes the dataset and a ground truth with zero index for identical pairs") {
    const auto dir = testutil::temp_dir("cli_synth");
    json cfg = null_config();
    cfg["input"]["synth"]["before"]["steps"] = 50;
    cfg["input"]["synth"]["after"]["steps"] = 50;
    testutil::write_file(dir / "cfg.json", cfg.dump());
    const RunResult r = run_cli("synth --config " + (dir / "cfg.json").string() + " --out-dir " +
                                (dir / "out").string());
    CHECK(r.exit_code == 0);

    std::ifstream csv(dir / "out" / "dataset.csv");
    int lines = 0;
    std::string line;
    while (std::getline(csv, line)) ++lines;
    CHECK(lines == 1 + 2 * 100);  // header + 2 segments x (50 + 50) steps

    const json truth = json::parse(slurp(dir / "out" / "ground_truth.json"));
    CHECK(truth.at("true_sir").get<double>() == 0.0);
    CHECK(truth.at("event_time").get<double>() == doctest::Approx(0.5));

    // the emitted dataset feeds straight back into the pipeline
    json pipe_cfg = null_config();
    pipe_cfg["input"] = {{"csv", (dir / "out" / "dataset.csv").string()},
                         {"event_time", truth.at("event_time").get<double>()}};
    testutil::write_file(dir / "pipe.json", pipe_cfg.dump());
    const RunResult rerun = run_cli("pipeline --config " + (dir / "pipe.json").string() +
                                    " --out-dir " + (dir / "rerun").string());
    CHECK(rerun.exit_code == 0);
    CHECK(json::parse(slurp(dir / "rerun" / "report.json")).at("sir").get<double>() <= 0.05);
}

TEST_CASE("synth: unstable scenarios exit 1") {
    json cfg = null_config();
    cfg["input"]["synth"]["after"]["hamiltonian"]["coeffs"] =
        json::array({{{"i", 1}, {"j", 1}, {"value", 60.0}}});
    cfg["input"]["synth"]["after"]["steps"] = 4000;
    cfg["input"]["synth"]["after"]["z0"] = {1.0, 1.0};
    const auto dir = testutil::temp_dir("cli_blowup");
    testutil::write_file(dir / "cfg.json", cfg.dump());
    const RunResult r =
        run_cli("synth --config " + (dir / "cfg.json").string() + " --out-dir " +
                (dir / "out").string());
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("Blowup") != std::string::npos);

    // negative drag injected via override is rejected up front
    json neg = null_config();
    neg["input"]["synth"]["after"]["gamma"] = {-0.1, 0.0};
    testutil::write_file(dir / "neg.json", neg.dump());
    const RunResult r2 = run_cli("synth --config " + (dir / "neg.json").string() +
                                 " --out-dir " + (dir / "out2").string());
    CHECK(r2.exit_code == 1);
}

TEST_CASE("compare: a file against itself is reversible with zero index") {
    const auto dir = testutil::temp_dir("cli_cmp_self");
    pchsl::PolyHamiltonian h = testutil::reference_before();
    pchsl::save_hamiltonian((dir / "h.json").string(), h);
    const RunResult r =
        run_cli("compare " + (dir / "h.json").string() + " " + (dir / "h.json").string());
    CHECK(r.exit_code == 0);
    const json report = json::parse(r.out);
    CHECK(report.at("sir").get<double>() == 0.0);
    CHECK(report.at("verdict") == "reversible");
}

TEST_CASE("compare: reference pair over [-1,1]^2 crosses the threshold, exit 3") {
    const auto dir = testutil::temp_dir("cli_cmp_pair");
    pchsl::save_hamiltonian((dir / "hb.json").string(), testutil::reference_before());
    pchsl::save_hamiltonian((dir / "ha.json").string(), testutil::reference_after());
    const RunResult r = run_cli("compare " + (dir / "hb.json").string() + " " +
                                (dir / "ha.json").string() +
                                " --z1 -1 1 --z2 -1 1 --grid 101 --mode paper_literal");
    CHECK(r.exit_code == 3);
    const json report = json::parse(r.out);
    CHECK(report.at("sir").get<double>() > 0.07);
    CHECK(report.at("mode") == "paper_literal");
}

TEST_CASE("compare: frame mismatch needs --force-frame") {
    const auto dir = testutil::temp_dir("cli_cmp_frame");
    pchsl::PolyHamiltonian a = testutil::reference_before();
    a.frame_id = "frame-one";
    pchsl::PolyHamiltonian b = testutil::reference_after();
    b.frame_id = "frame-two";
    pchsl::save_hamiltonian((dir / "a.json").string(), a);
    pchsl::save_hamiltonian((dir / "b.json").string(), b);

    const RunResult refused =
        run_cli("compare " + (dir / "a.json").string() + " " + (dir / "b.json").string());
    CHECK(refused.exit_code == 1);
    CHECK(refused.err.find("FrameMismatch") != std::string::npos);

    const RunResult forced = run_cli("compare " + (dir / "a.json").string() + " " +
                                     (dir / "b.json").string() + " --force-frame");
    CHECK((forced.exit_code == 0 || forced.exit_code == 3));
}

TEST_CASE("stagewise commands: embed, fit and sample write their artifacts") {
    const auto dir = testutil::temp_dir("cli_stages");
    json cfg = null_config();
    cfg["input"]["synth"]["before"]["steps"] = 60;
    cfg["input"]["synth"]["after"]["steps"] = 60;
    cfg["hmc"] = {{"samples", 120}, {"warmup", 60}};
    testutil::write_file(dir / "cfg.json", cfg.dump());
    const std::string base =
        " --config " + (dir / "cfg.json").string() + " --out-dir " + (dir / "out").string();

    CHECK(run_cli("embed" + base).exit_code == 0);
    CHECK(fs::exists(dir / "out" / "trajectory_before.csv"));
    CHECK_FALSE(fs::exists(dir / "out" / "hamiltonian_before.json"));

    CHECK(run_cli("fit" + base).exit_code == 0);
    CHECK(fs::exists(dir / "out" / "hamiltonian_before.json"));
    CHECK(fs::exists(dir / "out" / "fit_reports.json"));
    CHECK_FALSE(fs::exists(dir / "out" / "report.json"));

    CHECK(run_cli("sample" + base).exit_code == 0);
    CHECK(fs::exists(dir / "out" / "posterior_before.json"));
    CHECK(fs::exists(dir / "out" / "posterior_after.json"));
}

TEST_CASE("seed override: --seed changes the manifest seed") {
    const auto dir = testutil::temp_dir("cli_seed");
    testutil::write_file(dir / "cfg.json", null_config().dump());
    const std::string base = "pipeline --config " + (dir / "cfg.json").string();
    const RunResult a = run_cli(base + " --out-dir " + (dir / "a").string() + " --seed 123");
    CHECK(a.exit_code == 0);
    const json report = json::parse(slurp(dir / "a" / "report.json"));
    CHECK(report.at("manifest").at("seed").get<std::uint64_t>() == 123);
}

}  // TEST_SUITE
