#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "levysde/config.hpp"
#include "levysde/problems.hpp"
#include "levysde/report.hpp"

using namespace levysde;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(LEVYSDE_CLI_PATH) + " " + args + " 2>/dev/null";
    return std::system(cmd.c_str());
}

fs::path sandbox() {
    const fs::path dir = fs::temp_directory_path() / "levysde_cli_test";
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("config round trip and strictness") {
    ExperimentConfig c;
    c.problem = "PJ-DEGEN";
    c.scheme = "approximate";
    c.delta_list = {0.25, 0.125};
    c.sigma_list = {0.5, 0.25, 0.125};
    c.sigma = 0.25;
    c.g = "sin_shift";
    c.n_paths = 5000;
    c.reference_policy = "fine_grid";
    c.delta_ref = 0.001953125;
    c.n_paths_ref = 7000;
    c.sigma_ref = 1e-6;
    c.seed_root = 987654321;
    c.tag = "round-trip";
    c.threads = 2;
    c.x0_override = {0.3};

    ExperimentConfig back = parse_config(serialize_config(c));
    CHECK(back == c);

    // unknown fields are errors, not warnings
    ordered_json j = serialize_config(c);
    j["unknown_knob"] = 1;
    CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("unknown_knob"),
                         std::invalid_argument);
    ordered_json j2 = serialize_config(c);
    j2["reference"]["typo"] = 1;
    CHECK_THROWS_WITH_AS(parse_config(j2), doctest::Contains("typo"),
                         std::invalid_argument);

    // missing/invalid required fields name the problem
    ordered_json j3 = serialize_config(c);
    j3["tag"] = "";
    CHECK_THROWS_WITH_AS(parse_config(j3), doctest::Contains("tag"),
                         std::invalid_argument);
    ordered_json j4 = serialize_config(c);
    j4["scheme"] = "magic";
    CHECK_THROWS_AS(parse_config(j4), std::invalid_argument);
    ordered_json j5 = serialize_config(c);
    j5["n_paths"] = 0;
    CHECK_THROWS_AS(parse_config(j5), std::invalid_argument);

    CHECK_THROWS_WITH_AS(parse_config_text("{ not json"), doctest::Contains("parse"),
                         std::invalid_argument);
}

TEST_CASE("forced substitution rules are flagged against the case table") {
    ExperimentConfig c;
    c.problem = "PJ-DEGEN";
    c.tag = "rules";
    CatalogEntry e = catalog("PJ-DEGEN");
    std::string warning;

    c.rule = "auto";
    CHECK(!resolve_rule_choice(c, e.spec, warning).has_value());
    CHECK(warning.empty());

    c.rule = "zero"; // matches the table for (alpha, beta) = (0.5, 1)
    auto forced = resolve_rule_choice(c, e.spec, warning);
    REQUIRE(forced.has_value());
    CHECK(*forced == RCase::zero);
    CHECK(warning.empty());

    c.rule = "gaussian"; // contradicts the table
    forced = resolve_rule_choice(c, e.spec, warning);
    REQUIRE(forced.has_value());
    CHECK(*forced == RCase::gaussian);
    CHECK(!warning.empty());
}

TEST_CASE("cli: simulate is deterministic byte for byte") {
    const fs::path dir = sandbox();
    const fs::path cfg_path = dir / "sim.json";
    ExperimentConfig c;
    c.problem = "IDENT-CP";
    c.scheme = "simple";
    c.delta_list = {0.25};
    c.g = "x";
    c.n_paths = 400;
    c.seed_root = 31415;
    c.tag = "sim-test";
    write_text_file(cfg_path, serialize_config(c).dump(2) + "\n");

    const fs::path out1 = dir / "out1";
    REQUIRE(run_cli("--config " + cfg_path.string() + " --outdir " + out1.string() +
                    " simulate") == 0);
    const std::string csv1 = slurp(out1 / "sim-test" / "results.csv");
    const std::string json1 = slurp(out1 / "sim-test" / "summary.json");
    REQUIRE(run_cli("--config " + cfg_path.string() + " --outdir " + out1.string() +
                    " simulate") == 0);
    CHECK(slurp(out1 / "sim-test" / "results.csv") == csv1);
    CHECK(slurp(out1 / "sim-test" / "summary.json") == json1);
    CHECK(csv1.find("\r") == std::string::npos); // LF endings
    CHECK(csv1.rfind("path,terminal,n_steps,step_sum_sq", 0) == 0);
    CHECK(fs::exists(out1 / "sim-test" / "plot.script"));

    // a different seed changes the bytes
    const fs::path out3 = dir / "out3";
    REQUIRE(run_cli("--config " + cfg_path.string() + " --outdir " + out3.string() +
                    " --seed 999 simulate") == 0);
    CHECK(slurp(out3 / "sim-test" / "results.csv") != csv1);

    // zero-coefficient model: every terminal value is exactly x0
    ExperimentConfig z = c;
    z.problem = "ZERO";
    z.tag = "zero-sim";
    const fs::path zcfg = dir / "zero.json";
    write_text_file(zcfg, serialize_config(z).dump(2) + "\n");
    REQUIRE(run_cli("--config " + zcfg.string() + " --outdir " + out1.string() +
                    " simulate") == 0);
    std::istringstream zin(slurp(out1 / "zero-sim" / "results.csv"));
    std::string line;
    std::getline(zin, line); // header
    int rows = 0;
    while (std::getline(zin, line)) {
        CHECK(line.find(",0.69999999999999996,") != std::string::npos);
        ++rows;
    }
    CHECK(rows == 400);
}

TEST_CASE("cli: rate on the exact baseline and config echo") {
    const fs::path dir = sandbox();
    const fs::path cfg_path = dir / "rate.json";
    ExperimentConfig c;
    c.problem = "IDENT-CP";
    c.scheme = "simple";
    c.delta_list = {0.25, 0.125, 0.0625};
    c.g = "x";
    c.n_paths = 2000;
    c.reference_policy = "oracle";
    c.seed_root = 7;
    c.tag = "rate-test";
    write_text_file(cfg_path, serialize_config(c).dump(2) + "\n");

    const fs::path out = dir / "rate_out";
    REQUIRE(run_cli("--config " + cfg_path.string() + " --outdir " + out.string() +
                    " rate") == 0);
    const std::string summary = slurp(out / "rate-test" / "summary.json");
    ordered_json j = ordered_json::parse(summary);
    // report is self-describing: full config echo plus version
    CHECK(j["config"]["problem"] == "IDENT-CP");
    CHECK(j["config"]["seed_root"] == 7);
    CHECK(j.contains("version"));
    CHECK(j["flag"].get<std::string>().find("exact scheme") != std::string::npos);
    // exact scheme: every point excluded by the noise floor
    const std::string csv = slurp(out / "rate-test" / "results.csv");
    CHECK(csv.find(",1\n") == std::string::npos);
}

TEST_CASE("cli: adapted step statistics pass at desk scale") {
    const fs::path dir = sandbox();
    const fs::path cfg_path = dir / "adapted.json";
    ExperimentConfig c;
    c.problem = "PJ-DEGEN";
    c.scheme = "jump_adapted";
    c.delta_list = {0.5, 1.0};
    c.sigma = 0.25;
    c.n_paths = 1000;
    c.n_partitions = 5000;
    c.seed_root = 11;
    c.tag = "adapted-test";
    write_text_file(cfg_path, serialize_config(c).dump(2) + "\n");
    const fs::path out = dir / "adapted_out";
    REQUIRE(run_cli("--config " + cfg_path.string() + " --outdir " + out.string() +
                    " adapted") == 0);
    ordered_json j = ordered_json::parse(slurp(out / "adapted-test" / "summary.json"));
    CHECK(j["status"] == "ok");
    for (const auto& r : j["results"]) CHECK(r["pass"].get<bool>());
}

TEST_CASE("cli: rough test function records the reduced theory rate") {
    const fs::path dir = sandbox();
    const fs::path cfg_path = dir / "rough.json";
    ExperimentConfig c;
    c.problem = "ROUGH-G";
    c.scheme = "simple";
    c.delta_list = {0.25, 0.125, 0.0625};
    c.g = "default";
    c.n_paths = 500;
    c.n_paths_ref = 500;
    c.delta_ref = 0.0078125;
    c.seed_root = 12;
    c.tag = "rough-test";
    write_text_file(cfg_path, serialize_config(c).dump(2) + "\n");
    const fs::path out = dir / "rough_out";
    REQUIRE(run_cli("--config " + cfg_path.string() + " --outdir " + out.string() +
                    " rate") == 0);
    ordered_json j = ordered_json::parse(slurp(out / "rough-test" / "summary.json"));
    // nu (1/alpha - 1/beta) = 1 (1/2 - 1/4)
    CHECK(j["theory_kappa"].get<double>() == doctest::Approx(0.25));
}

TEST_CASE("cli: outputs do not depend on the worker count") {
    const fs::path dir = sandbox();
    const fs::path cfg_path = dir / "threads.json";
    ExperimentConfig c;
    c.problem = "PJ-DEGEN";
    c.scheme = "approximate";
    c.delta_list = {0.25};
    c.sigma = 0.25;
    c.n_paths = 300;
    c.seed_root = 77;
    c.tag = "threads-test";
    write_text_file(cfg_path, serialize_config(c).dump(2) + "\n");
    const fs::path out = dir / "thr_out";
    REQUIRE(run_cli("--config " + cfg_path.string() + " --outdir " + out.string() +
                    " --threads 1 simulate") == 0);
    const std::string csv1 = slurp(out / "threads-test" / "results.csv");
    REQUIRE(run_cli("--config " + cfg_path.string() + " --outdir " + out.string() +
                    " --threads 3 simulate") == 0);
    CHECK(slurp(out / "threads-test" / "results.csv") == csv1);
}

TEST_CASE("cli: invalid configs exit nonzero with diagnostics") {
    const fs::path dir = sandbox();
    const fs::path bad = dir / "bad.json";
    write_text_file(bad, "{\"problem\": \"IDENT-CP\", \"mystery\": 1}\n");
    CHECK(run_cli("--config " + bad.string() + " simulate") != 0);

    const fs::path missing = dir / "missing.json";
    CHECK(run_cli("--config " + missing.string() + " simulate") != 0);

    // decompose with a degenerate grid surfaces the precondition as an error
    const fs::path degenerate = dir / "degenerate.json";
    ExperimentConfig c;
    c.problem = "PJ-DEGEN-1S";
    c.scheme = "approximate";
    c.delta_list = {0.25};
    c.sigma_list = {0.25};
    c.n_paths = 500;
    c.seed_root = 3;
    c.tag = "degenerate";
    write_text_file(degenerate, serialize_config(c).dump(2) + "\n");
    CHECK(run_cli("--config " + degenerate.string() + " decompose") != 0);

    // empty delta list for a rate run
    const fs::path nodeltas = dir / "nodeltas.json";
    ExperimentConfig c2;
    c2.problem = "IDENT-CP";
    c2.scheme = "simple";
    c2.n_paths = 500;
    c2.seed_root = 3;
    c2.tag = "nodeltas";
    write_text_file(nodeltas, serialize_config(c2).dump(2) + "\n");
    CHECK(run_cli("--config " + nodeltas.string() + " rate") != 0);
}
