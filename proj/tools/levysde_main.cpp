// Command-line front end: parse experiment configs, dispatch the Monte Carlo
// harness, persist results under <outdir>/<tag>/.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "levysde/levysde.hpp"

namespace fs = std::filesystem;
using namespace levysde;

namespace {

struct CliOverrides {
    std::string config_path;
    std::string outdir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = -1;
    long paths = 0;
};

ExperimentConfig load_config(const CliOverrides& cli) {
    std::ifstream in(cli.config_path);
    if (!in) throw std::invalid_argument("cannot open config file " + cli.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    ExperimentConfig cfg = parse_config_text(ss.str());
    if (!cli.outdir.empty()) cfg.outdir = cli.outdir;
    if (cli.seed_set) cfg.seed_root = cli.seed;
    if (cli.threads >= 0) cfg.threads = cli.threads;
    if (cli.paths > 0) cfg.n_paths = cli.paths;
    return cfg;
}

CatalogEntry load_problem(const ExperimentConfig& cfg) {
    CatalogEntry entry = catalog(cfg.problem);
    if (!cfg.x0_override.empty()) {
        entry.model.x0 = cfg.x0_override;
        entry.model.validate();
    }
    return entry;
}

fs::path out_dir(const ExperimentConfig& cfg) {
    return fs::path(cfg.outdir) / cfg.tag;
}

ordered_json base_summary(const ExperimentConfig& cfg, const std::string& command) {
    ordered_json j;
    j["version"] = kVersion;
    j["command"] = command;
    j["config"] = serialize_config(cfg);
    return j;
}

void persist(const ExperimentConfig& cfg, const std::string& csv,
             const ordered_json& summary, const std::string& plot) {
    const fs::path dir = out_dir(cfg);
    write_text_file(dir / "results.csv", csv);
    write_text_file(dir / "summary.json", summary.dump(2) + "\n");
    write_text_file(dir / "plot.script", plot);
}

std::string plot_loglog(const std::string& title, const std::string& xlabel) {
    std::string s;
    s += "# gnuplot script\n";
    s += "set datafile separator ','\n";
    s += "set logscale xy\n";
    s += "set key top left\n";
    s += "set title '" + title + "'\n";
    s += "set xlabel '" + xlabel + "'\n";
    s += "set ylabel 'weak error'\n";
    s += "plot 'results.csv' every ::1 using 1:5 with linespoints title 'error'\n";
    return s;
}

ordered_json estimate_json(const WeakEstimate& e) {
    ordered_json j;
    j["value"] = e.value;
    j["se"] = e.se;
    j["n_paths"] = e.n_paths;
    j["scheme"] = e.scheme;
    if (std::isfinite(e.delta)) j["delta"] = e.delta;
    if (std::isfinite(e.sigma)) j["sigma"] = e.sigma;
    return j;
}

int cmd_simulate(const ExperimentConfig& cfg) {
    CatalogEntry entry = load_problem(cfg);
    if (cfg.delta_list.empty())
        throw std::invalid_argument("config: simulate requires a nonempty delta_list");
    const double delta = cfg.delta_list.front();
    std::string warning;
    const auto forced = resolve_rule_choice(cfg, entry.spec, warning);
    if (!warning.empty()) std::cerr << "warning: " << warning << "\n";

    SchemeConfig sc;
    sc.T = cfg.T;
    sc.delta = delta;
    sc.sigma = cfg.sigma;
    sc.forced_rule = forced;
    sc.kind = cfg.scheme == "simple"
                  ? SchemeKind::simple
                  : (cfg.scheme == "approximate" ? SchemeKind::approximate
                                                 : SchemeKind::jump_adapted);
    if (sc.kind != SchemeKind::simple && !(cfg.sigma > 0.0))
        throw std::invalid_argument("config: this scheme requires sigma > 0");
    double sigma_ref = cfg.sigma_ref;
    if (sc.kind == SchemeKind::simple && !entry.spec.exact_sampler) {
        if (sigma_ref <= 0.0)
            sigma_ref = sigma_for_phi_budget(entry.spec.measure, entry.spec.beta,
                                             1e-2 * delta, 0.5);
        sc.mode = DriverMode::make_surrogate(sigma_ref);
    }

    const long n = cfg.n_paths;
    std::vector<double> terminals(static_cast<std::size_t>(n));
    std::vector<long> steps(static_cast<std::size_t>(n));
    std::vector<double> sumsq(static_cast<std::size_t>(n));
    const Partition grid = sc.kind == SchemeKind::jump_adapted
                               ? Partition{}
                               : make_uniform_grid(cfg.T, delta);
    const RSigmaRule rule = sc.kind == SchemeKind::simple
                                ? RSigmaRule{}
                                : (forced ? RSigmaRule::forced(*forced, entry.spec.measure, cfg.sigma)
                                          : RSigmaRule::make(entry.spec.measure, entry.spec.alpha,
                                                             entry.spec.beta, cfg.sigma));
    parallel_for(static_cast<std::size_t>(n), cfg.threads,
                 [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            Stream rng = derive_stream(cfg.seed_root, cfg.tag, i);
            SchemeRun run;
            switch (sc.kind) {
                case SchemeKind::simple:
                    run = simple_euler(entry.model, grid, entry.spec, rng, sc.mode);
                    break;
                case SchemeKind::approximate:
                    run = approx_euler(entry.model, grid, entry.spec, cfg.sigma, rule, rng);
                    break;
                case SchemeKind::jump_adapted:
                    run = jump_adapted_euler(entry.model, entry.spec, cfg.sigma,
                                             rule, delta, cfg.T, rng);
                    break;
            }
            terminals[i] = run.terminal[0];
            steps[i] = run.n_steps;
            sumsq[i] = run.step_sum_sq;
        }
    });

    CsvWriter csv({"path", "terminal", "n_steps", "step_sum_sq"});
    for (long i = 0; i < n; ++i)
        csv.row({std::to_string(i), fmt17(terminals[static_cast<std::size_t>(i)]),
                 std::to_string(steps[static_cast<std::size_t>(i)]),
                 fmt17(sumsq[static_cast<std::size_t>(i)])});
    double mean = 0, se = 0;
    {
        double var = 0;
        for (double t : terminals) mean += t;
        mean /= static_cast<double>(n);
        for (double t : terminals) var += (t - mean) * (t - mean);
        var = n > 1 ? var / static_cast<double>(n - 1) : 0.0;
        se = std::sqrt(var / static_cast<double>(n));
    }
    ordered_json j = base_summary(cfg, "simulate");
    if (!warning.empty()) j["rule_warning"] = warning;
    j["terminal_mean"] = mean;
    j["terminal_se"] = se;
    j["delta"] = delta;
    if (sc.mode.kind == DriverMode::surrogate) j["sigma_ref"] = sc.mode.sigma_ref;
    j["status"] = "ok";
    std::string plot = "# gnuplot script\nset datafile separator ','\n"
                       "set title 'terminal value histogram'\n"
                       "binwidth=0.05\nbin(x,w)=w*floor(x/w)+w/2.0\n"
                       "plot 'results.csv' every ::1 using (bin($2,binwidth)):(1.0) "
                       "smooth freq with boxes notitle\n";
    persist(cfg, csv.str(), j, plot);
    return 0;
}

int cmd_rate(const ExperimentConfig& cfg) {
    CatalogEntry entry = load_problem(cfg);
    if (cfg.delta_list.empty())
        throw std::invalid_argument("config: rate requires a nonempty delta_list");
    std::string warning;
    const auto forced = resolve_rule_choice(cfg, entry.spec, warning);
    if (!warning.empty()) std::cerr << "warning: " << warning << "\n";

    RateConfig rc;
    rc.scheme = cfg.scheme == "simple"
                    ? SchemeKind::simple
                    : (cfg.scheme == "approximate" ? SchemeKind::approximate
                                                   : SchemeKind::jump_adapted);
    rc.deltas = cfg.delta_list;
    rc.sigma = cfg.sigma;
    rc.forced_rule = forced;
    rc.g = cfg.g;
    rc.n_paths = cfg.n_paths;
    rc.reference.kind = cfg.reference_policy == "oracle" ? ReferencePolicy::oracle
                                                         : ReferencePolicy::fine_grid;
    rc.reference.delta_ref = cfg.delta_ref;
    rc.reference.n_paths_ref = cfg.n_paths_ref;
    rc.sigma_ref = cfg.sigma_ref;
    rc.seed_root = cfg.seed_root;
    rc.tag = cfg.tag;
    rc.threads = cfg.threads;
    rc.T = cfg.T;
    rc.noise_floor = cfg.noise_floor;

    RateReport rep = rate_experiment(entry, rc);

    CsvWriter csv({"delta", "sigma", "estimate", "se", "error", "se_error", "used"});
    for (const auto& p : rep.points)
        csv.row({fmt17(p.delta), fmt17(p.sigma), fmt17(p.estimate), fmt17(p.se_est),
                 fmt17(p.error), fmt17(p.se_err), p.used ? "1" : "0"});
    ordered_json j = base_summary(cfg, "rate");
    if (!warning.empty()) j["rule_warning"] = warning;
    j["problem"] = rep.problem;
    j["g"] = rep.g_name;
    j["scheme"] = rep.scheme_name;
    j["theory_kappa"] = rep.theory_kappa;
    j["theory_form"] = rep.theory_form;
    j["reference"] = estimate_json(rep.reference);
    j["reference_desc"] = rep.reference_desc;
    if (std::isfinite(rep.sigma_ref)) {
        j["sigma_ref"] = rep.sigma_ref;
        j["phi_sigma_ref"] = rep.phi_sigma_ref;
    }
    if (rep.fit.ok) {
        j["kappa_hat"] = rep.fit.kappa;
        j["kappa_se"] = rep.fit.kappa_se;
        j["kappa_ci"] = {rep.fit.ci_lo, rep.fit.ci_hi};
        j["n_points_used"] = rep.fit.n_used;
    }
    if (!rep.flag.empty()) j["flag"] = rep.flag;
    j["status"] = "ok";
    persist(cfg, csv.str(), j, plot_loglog("weak error vs delta", "delta"));
    return 0;
}

int cmd_decompose(const ExperimentConfig& cfg) {
    CatalogEntry entry = load_problem(cfg);
    std::string warning;
    const auto forced = resolve_rule_choice(cfg, entry.spec, warning);
    if (!warning.empty()) std::cerr << "warning: " << warning << "\n";

    DecompositionConfig dc;
    dc.deltas = cfg.delta_list;
    dc.sigmas = cfg.sigma_list;
    dc.forced_rule = forced;
    dc.g = cfg.g;
    dc.n_paths = cfg.n_paths;
    dc.n_paths_ref = cfg.n_paths_ref;
    dc.delta_ref = cfg.delta_ref;
    dc.sigma_ref = cfg.sigma_ref;
    dc.seed_root = cfg.seed_root;
    dc.tag = cfg.tag;
    dc.threads = cfg.threads;
    dc.T = cfg.T;
    dc.noise_floor = cfg.noise_floor;

    DecompositionReport rep = decompose_error(entry, dc);

    CsvWriter csv({"delta", "sigma", "estimate", "se", "error", "se_error", "used"});
    for (const auto& c : rep.cells)
        csv.row({fmt17(c.delta), fmt17(c.sigma), fmt17(c.estimate), fmt17(c.se_est),
                 fmt17(c.error), fmt17(c.se_err), c.used ? "1" : "0"});
    ordered_json j = base_summary(cfg, "decompose");
    if (!warning.empty()) j["rule_warning"] = warning;
    j["problem"] = rep.problem;
    j["g"] = rep.g_name;
    j["delta_ref"] = rep.delta_ref;
    j["sigma_ref"] = rep.sigma_ref;
    j["phi_sigma_ref"] = rep.phi_sigma_ref;
    j["phi_values"] = rep.phi_values;
    j["reference"] = estimate_json(rep.reference);
    j["fit_ok"] = rep.fit_ok;
    if (rep.fit_ok) {
        j["c1"] = rep.c1;
        j["c2"] = rep.c2;
        j["kappa"] = rep.kappa;
        j["residual_norm"] = rep.residual_norm;
    } else {
        j["message"] = rep.message;
    }
    j["sigma_slope_logsigma"] = rep.sigma_slope_logsigma;
    j["sigma_slope_logphi"] = rep.sigma_slope_logphi;
    j["status"] = rep.fit_ok ? "ok" : "fit_failed";
    persist(cfg, csv.str(), j, plot_loglog("weak error vs sigma", "sigma"));
    return rep.fit_ok ? 0 : 1;
}

int cmd_adapted(const ExperimentConfig& cfg) {
    CatalogEntry entry = load_problem(cfg);
    if (cfg.delta_list.empty())
        throw std::invalid_argument("config: adapted requires a nonempty delta_list");
    if (!(cfg.sigma > 0.0))
        throw std::invalid_argument("config: adapted requires sigma > 0");

    CsvWriter csv({"delta", "lambda_sigma", "mean_first_step", "se", "closed_form",
                   "z_score", "mean_sum_sq", "sum_sq_bound", "pass"});
    ordered_json results = ordered_json::array();
    bool all_pass = true;
    for (double delta : cfg.delta_list) {
        StepStatsReport r = jump_adapted_step_stats(entry.spec, cfg.sigma, delta,
                                                    cfg.T, cfg.n_partitions,
                                                    cfg.seed_root, cfg.threads);
        all_pass = all_pass && r.pass;
        csv.row({fmt17(r.delta), fmt17(r.lambda_sigma), fmt17(r.mean_first_step),
                 fmt17(r.se_first_step), fmt17(r.closed_form_mean), fmt17(r.z_score),
                 fmt17(r.mean_sum_sq), fmt17(r.sum_sq_bound), r.pass ? "1" : "0"});
        ordered_json rj;
        rj["delta"] = r.delta;
        rj["lambda_sigma"] = r.lambda_sigma;
        rj["lambda_tilde"] = r.lambda_tilde;
        rj["mean_first_step"] = r.mean_first_step;
        rj["se_first_step"] = r.se_first_step;
        rj["closed_form_mean"] = r.closed_form_mean;
        rj["z_score"] = r.z_score;
        rj["sandwich"] = {{"lo", r.sandwich_lo}, {"hi", r.sandwich_hi}, {"ok", r.sandwich_ok}};
        rj["mean_sum_sq"] = r.mean_sum_sq;
        rj["sum_sq_bound"] = r.sum_sq_bound;
        rj["sum_sq_ok"] = r.sum_sq_ok;
        rj["mean_steps"] = r.mean_steps;
        rj["pass"] = r.pass;
        results.push_back(rj);
    }
    ordered_json j = base_summary(cfg, "adapted");
    j["results"] = results;
    j["status"] = all_pass ? "ok" : "failed";
    persist(cfg, csv.str(), j,
            plot_loglog("mean first step vs delta", "delta"));
    return all_pass ? 0 : 1;
}

int cmd_check(const ExperimentConfig& cfg) {
    CsvWriter csv({"check", "value", "target", "tolerance", "pass"});
    ordered_json checks = ordered_json::array();
    bool all_pass = true;
    auto record = [&](const std::string& name, double value, double target,
                      double tol) {
        const bool ok = std::abs(value - target) <=
                        tol * std::max({1.0, std::abs(value), std::abs(target)});
        all_pass = all_pass && ok;
        csv.row({name, fmt17(value), fmt17(target), fmt17(tol), ok ? "1" : "0"});
        ordered_json cj;
        cj["name"] = name;
        cj["value"] = value;
        cj["target"] = target;
        cj["tol"] = tol;
        cj["pass"] = ok;
        checks.push_back(cj);
    };

    // closed-form vs quadrature identities on the stable catalog
    for (double lam : {0.5, 1.0, 1.5}) {
        LevyMeasure m = LevyMeasure::truncated_stable(1, lam, 1.0, 1.0);
        const double p = std::min(lam + 0.75, 3.0);
        for (int k = 0; k <= 10; k += 2) {
            const double sigma = std::pow(2.0, -k);
            const std::string tagk =
                "stable_l" + std::to_string(lam) + "_s2e-" + std::to_string(k);
            record(tagk + "_tail", m.tail_mass_quad(sigma), m.tail_mass(sigma), 1e-8);
            record(tagk + "_phi", m.small_moment_quad(sigma, p),
                   m.small_moment(sigma, p), 1e-8);
            record(tagk + "_cov", m.small_cov_scalar_quad(sigma),
                   m.small_cov(sigma)(0, 0), 1e-8);
        }
    }
    // one-sided drift identity
    {
        LevyMeasure m = LevyMeasure::truncated_stable(1, 0.5, 1.0, 1.0, Side::positive);
        record("one_sided_gamma", m.compensator_drift_quad(0.25)[0],
               m.compensator_drift(0.25)[0], 1e-8);
    }
    // B^sigma factorization on an isotropic 2-d measure
    {
        LevyMeasure m = LevyMeasure::truncated_stable(2, 1.0, 0.5, 1.0);
        const Mat cov = m.small_cov(0.5);
        const Mat b = m.small_cov_sqrt(0.5);
        const Mat err = mat_sub(mat_mul(b, b), cov);
        record("bsigma_factorization", frobenius_norm(err) / frobenius_norm(cov),
               0.0, 1e-10);
    }
    // generator linearity on JD-SMOOTH
    {
        CatalogEntry e = catalog("JD-SMOOTH");
        const TestFunction& f1 = e.test_function("sin");
        const TestFunction& f2 = e.test_function("x2");
        TestFunction combo;
        combo.name = "combo";
        combo.nu = 2.0;
        combo.g = [&](const double* x) { return 2.0 * f1.g(x) - 0.5 * f2.g(x); };
        combo.grad = [&](const double* x, double* out) {
            double g1, g2;
            f1.grad(x, &g1);
            f2.grad(x, &g2);
            out[0] = 2.0 * g1 - 0.5 * g2;
        };
        combo.hess = [&](const double* x, double* out) {
            double h1, h2;
            f1.hess(x, &h1);
            f2.hess(x, &h2);
            out[0] = 2.0 * h1 - 0.5 * h2;
        };
        double max_err = 0.0;
        Stream rng = derive_stream(cfg.seed_root, "check_linearity", 0);
        for (int i = 0; i < 20; ++i) {
            const double x = 2.0 * rng.next_double() - 1.0;
            const double lhs = apply_generator(e.model, e.spec, combo, &x);
            const double rhs = 2.0 * apply_generator(e.model, e.spec, f1, &x) -
                               0.5 * apply_generator(e.model, e.spec, f2, &x);
            max_err = std::max(max_err, std::abs(lhs - rhs));
        }
        record("generator_linearity", max_err, 0.0, 1e-7);
    }
    // martingale defects on IDENT-CP
    {
        CatalogEntry e = catalog("IDENT-CP");
        auto res = martingale_defect(e.model, e.spec, e.test_function("x"),
                                     {0.25, 0.5, 1.0}, std::max(20000L, cfg.n_paths),
                                     cfg.delta_fine, cfg.seed_root, cfg.threads);
        for (const auto& r : res) {
            const bool ok = std::abs(r.defect) <= 3.0 * r.se + 1e-12;
            all_pass = all_pass && ok;
            csv.row({"martingale_identcp_t" + fmt17(r.t), fmt17(r.defect),
                     "0", fmt17(3.0 * r.se), ok ? "1" : "0"});
            ordered_json cj;
            cj["name"] = "martingale_identcp_t" + fmt17(r.t);
            cj["defect"] = r.defect;
            cj["se"] = r.se;
            cj["pass"] = ok;
            checks.push_back(cj);
        }
    }

    ordered_json j = base_summary(cfg, "check");
    j["checks"] = checks;
    j["status"] = all_pass ? "ok" : "failed";
    persist(cfg, csv.str(), j, "# gnuplot script\n# no plot for check\n");
    return all_pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"weak Euler schemes for Levy-driven SDEs: Monte Carlo rate harness"};
    app.require_subcommand(1);

    CliOverrides cli;
    app.add_option("--config", cli.config_path, "experiment config file (JSON)")
        ->required();
    app.add_option("--outdir", cli.outdir, "output directory (overrides config)");
    auto* seed_opt = app.add_option("--seed", cli.seed, "seed root (overrides config)");
    app.add_option("--threads", cli.threads, "worker threads (0 = machine parallelism)");
    app.add_option("--paths", cli.paths, "path count (overrides config)");

    auto* simulate = app.add_subcommand("simulate", "simulate paths, write terminal values");
    auto* rate = app.add_subcommand("rate", "weak-error rate experiment");
    auto* decompose = app.add_subcommand("decompose", "(delta, sigma) error decomposition");
    auto* adapted = app.add_subcommand("adapted", "jump-adapted step statistics");
    auto* check = app.add_subcommand("check", "closed-form, generator and martingale checks");

    CLI11_PARSE(app, argc, argv);
    cli.seed_set = seed_opt->count() > 0;

    try {
        const ExperimentConfig cfg = load_config(cli);
        if (simulate->parsed()) return cmd_simulate(cfg);
        if (rate->parsed()) return cmd_rate(cfg);
        if (decompose->parsed()) return cmd_decompose(cfg);
        if (adapted->parsed()) return cmd_adapted(cfg);
        if (check->parsed()) return cmd_check(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
