#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "levysde/drivers.hpp"
#include "levysde/harness.hpp"

namespace levysde {

using ordered_json = nlohmann::ordered_json;

// Experiment configuration file: one JSON object, strict field set (unknown
// keys are errors, not warnings). parse(serialize(c)) == c.
struct ExperimentConfig {
    std::string problem = "JD-SMOOTH";
    std::string scheme = "simple"; // simple | approximate | jump_adapted
    double T = 1.0;
    std::vector<double> delta_list;
    std::vector<double> sigma_list;
    double sigma = 0.0;       // truncation level for approximate/jump_adapted
    std::string rule = "auto"; // auto | drift | gaussian | zero
    std::string g = "default";
    long n_paths = 10000;
    std::string reference_policy = "fine_grid"; // fine_grid | oracle
    double delta_ref = 0.0;                      // 0: min delta / 64
    long n_paths_ref = 0;                        // 0: 4x n_paths
    double sigma_ref = 0.0;                      // 0: auto phi budget
    std::uint64_t seed_root = 1;
    std::string outdir = "out";
    std::string tag = "experiment";
    int threads = 0; // 0: machine parallelism
    long n_partitions = 100000;
    double delta_fine = 0.0009765625; // 2^-10, martingale checks
    double noise_floor = 0.0;
    std::vector<double> x0_override;

    bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline void expect_fields(const ordered_json& j, const std::set<std::string>& allowed,
                          const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!allowed.count(it.key()))
            throw std::invalid_argument("config: unknown field '" + it.key() +
                                        "' in " + where);
    }
}

template <class T>
void read_field(const ordered_json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace detail

inline ExperimentConfig parse_config(const ordered_json& j) {
    static const std::set<std::string> allowed = {
        "problem",   "scheme",     "T",          "delta_list",  "sigma_list",
        "sigma",     "rule",       "g",          "n_paths",     "reference",
        "sigma_ref", "seed_root",  "outdir",     "tag",         "threads",
        "n_partitions", "delta_fine", "noise_floor", "overrides"};
    detail::expect_fields(j, allowed, "top level");
    ExperimentConfig c;
    detail::read_field(j, "problem", c.problem);
    detail::read_field(j, "scheme", c.scheme);
    detail::read_field(j, "T", c.T);
    detail::read_field(j, "delta_list", c.delta_list);
    detail::read_field(j, "sigma_list", c.sigma_list);
    detail::read_field(j, "sigma", c.sigma);
    detail::read_field(j, "rule", c.rule);
    detail::read_field(j, "g", c.g);
    detail::read_field(j, "n_paths", c.n_paths);
    if (j.contains("reference")) {
        const auto& r = j.at("reference");
        detail::expect_fields(r, {"policy", "delta_ref", "n_paths_ref"}, "reference");
        detail::read_field(r, "policy", c.reference_policy);
        detail::read_field(r, "delta_ref", c.delta_ref);
        detail::read_field(r, "n_paths_ref", c.n_paths_ref);
    }
    detail::read_field(j, "sigma_ref", c.sigma_ref);
    detail::read_field(j, "seed_root", c.seed_root);
    detail::read_field(j, "outdir", c.outdir);
    detail::read_field(j, "tag", c.tag);
    detail::read_field(j, "threads", c.threads);
    detail::read_field(j, "n_partitions", c.n_partitions);
    detail::read_field(j, "delta_fine", c.delta_fine);
    detail::read_field(j, "noise_floor", c.noise_floor);
    if (j.contains("overrides")) {
        const auto& o = j.at("overrides");
        detail::expect_fields(o, {"x0"}, "overrides");
        detail::read_field(o, "x0", c.x0_override);
    }
    if (c.scheme != "simple" && c.scheme != "approximate" && c.scheme != "jump_adapted")
        throw std::invalid_argument("config: scheme must be simple, approximate or jump_adapted");
    if (c.rule != "auto" && c.rule != "drift" && c.rule != "gaussian" && c.rule != "zero")
        throw std::invalid_argument("config: rule must be auto, drift, gaussian or zero");
    if (c.reference_policy != "fine_grid" && c.reference_policy != "oracle")
        throw std::invalid_argument("config: reference.policy must be fine_grid or oracle");
    if (c.tag.empty()) throw std::invalid_argument("config: missing required field 'tag'");
    if (c.n_paths <= 0) throw std::invalid_argument("config: n_paths must be positive");
    if (!(c.T > 0.0)) throw std::invalid_argument("config: T must be positive");
    return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw std::invalid_argument(std::string("config: JSON parse error: ") + e.what());
    }
    return parse_config(j);
}

inline ordered_json serialize_config(const ExperimentConfig& c) {
    ordered_json j;
    j["problem"] = c.problem;
    j["scheme"] = c.scheme;
    j["T"] = c.T;
    j["delta_list"] = c.delta_list;
    j["sigma_list"] = c.sigma_list;
    j["sigma"] = c.sigma;
    j["rule"] = c.rule;
    j["g"] = c.g;
    j["n_paths"] = c.n_paths;
    j["reference"] = {{"policy", c.reference_policy},
                      {"delta_ref", c.delta_ref},
                      {"n_paths_ref", c.n_paths_ref}};
    j["sigma_ref"] = c.sigma_ref;
    j["seed_root"] = c.seed_root;
    j["outdir"] = c.outdir;
    j["tag"] = c.tag;
    j["threads"] = c.threads;
    j["n_partitions"] = c.n_partitions;
    j["delta_fine"] = c.delta_fine;
    j["noise_floor"] = c.noise_floor;
    j["overrides"] = {{"x0", c.x0_override}};
    return j;
}

// Resolve the substitution rule: "auto" follows the (alpha, beta) case table;
// a forced rule is honored but flagged when it contradicts the table.
inline std::optional<RCase> resolve_rule_choice(const ExperimentConfig& c,
                                                const DriverSpec& spec,
                                                std::string& warning) {
    warning.clear();
    if (c.rule == "auto") return std::nullopt;
    RCase forced;
    if (c.rule == "drift") forced = RCase::drift;
    else if (c.rule == "gaussian") forced = RCase::gaussian;
    else forced = RCase::zero;
    const RCase table = RSigmaRule::select(spec.alpha, spec.beta);
    if (table != forced)
        warning = "forced rule '" + std::string(to_string(forced)) +
                  "' contradicts the (alpha, beta) case table (expected '" +
                  to_string(table) + "')";
    return forced;
}

} // namespace levysde
