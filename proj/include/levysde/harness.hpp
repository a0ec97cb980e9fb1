#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "levysde/parallel.hpp"
#include "levysde/problems.hpp"
#include "levysde/schemes.hpp"

namespace levysde {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct WeakEstimate {
    double value = 0.0;
    double se = 0.0;
    long n_paths = 0;
    std::uint64_t seed_root = 0;
    std::string scheme;
    double delta = kNaN;
    double sigma = kNaN;
};

enum class SchemeKind { simple, approximate, jump_adapted };

inline const char* to_string(SchemeKind k) {
    switch (k) {
        case SchemeKind::simple: return "simple";
        case SchemeKind::approximate: return "approximate";
        case SchemeKind::jump_adapted: return "jump_adapted";
    }
    return "?";
}

struct SchemeConfig {
    SchemeKind kind = SchemeKind::simple;
    double T = 1.0;
    double delta = 0.1;
    double sigma = 0.0;                        // approximate / jump_adapted level
    std::optional<RCase> forced_rule;          // default: auto from (alpha, beta)
    DriverMode mode = DriverMode::make_exact(); // simple-scheme driver policy
};

namespace detail {

inline RSigmaRule resolve_rule(const DriverSpec& spec, double sigma,
                               const std::optional<RCase>& forced) {
    if (forced) return RSigmaRule::forced(*forced, spec.measure, sigma);
    return RSigmaRule::make(spec.measure, spec.alpha, spec.beta, sigma);
}

// Welford reduction: exact for constant inputs (a zero-coefficient model
// must report its terminal value bitwise with zero standard error).
inline void mean_se(const std::vector<double>& v, double& mean, double& se) {
    mean = 0.0;
    double m2 = 0.0;
    double k = 0.0;
    for (double x : v) {
        k += 1.0;
        const double d = x - mean;
        mean += d / k;
        m2 += d * (x - mean);
    }
    const double var = v.size() > 1 ? m2 / (k - 1.0) : 0.0;
    se = std::sqrt(var / k);
}

inline void check_finite(const std::vector<double>& v, const std::string& what) {
    std::string bad;
    int count = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            if (count < 8) bad += (bad.empty() ? "" : ", ") + std::to_string(i);
            ++count;
        }
    }
    if (count > 0)
        throw std::runtime_error(what + ": non-finite values on " +
                                 std::to_string(count) + " paths (indices " +
                                 bad + ")");
}

} // namespace detail

// ---------------------------------------------------------------------------
// Filtered view of a realized driver path: lets several truncation levels
// and reference runs reuse one set of jumps (common big-jump streams).
// ---------------------------------------------------------------------------

struct RunView {
    const DriverPath* path = nullptr;
    double jump_min = 0.0; // keep jumps with |J| > jump_min
    const Vec* comp_rate = nullptr;
    const Vec* extra_drift = nullptr;
    const std::vector<double>* z_fine = nullptr;
};

inline SchemeRun run_view_on_grid(const SdeModel& model, const Partition& grid,
                                  const RunView& view) {
    const DriverPath& src = *view.path;
    if (view.jump_min == 0.0 && !view.comp_rate && !view.extra_drift &&
        !view.z_fine)
        return run_on_grid(model, grid, src);
    DriverPath filtered;
    filtered.T = src.T;
    filtered.m = src.m;
    filtered.n = src.n;
    filtered.base_times = src.base_times;
    filtered.stream_key = src.stream_key;
    filtered.comp_rate = view.comp_rate ? *view.comp_rate : src.comp_rate;
    filtered.extra_drift = view.extra_drift ? *view.extra_drift : src.extra_drift;
    filtered.z_fine = view.z_fine ? *view.z_fine : src.z_fine;
    filtered.w_fine = src.w_fine;
    const int m = src.m;
    if (view.jump_min == 0.0) {
        filtered.jump_times = src.jump_times;
        filtered.jump_sizes = src.jump_sizes;
    } else {
        for (std::size_t k = 0; k < src.jump_times.size(); ++k) {
            double norm2 = 0.0;
            for (int i = 0; i < m; ++i) {
                const double s = src.jump_sizes[k * static_cast<std::size_t>(m) +
                                                static_cast<std::size_t>(i)];
                norm2 += s * s;
            }
            if (norm2 > view.jump_min * view.jump_min) {
                filtered.jump_times.push_back(src.jump_times[k]);
                for (int i = 0; i < m; ++i)
                    filtered.jump_sizes.push_back(
                        src.jump_sizes[k * static_cast<std::size_t>(m) +
                                       static_cast<std::size_t>(i)]);
            }
        }
    }
    return run_on_grid(model, grid, filtered);
}

// ---------------------------------------------------------------------------
// Weak value estimation
// ---------------------------------------------------------------------------

inline WeakEstimate estimate_weak_value(const SdeModel& model,
                                        const DriverSpec& spec,
                                        const SchemeConfig& cfg,
                                        const TestFunction& g, long n_paths,
                                        std::uint64_t seed_root,
                                        const std::string& tag = "mc",
                                        int threads = 0) {
    if (n_paths < 100)
        throw std::invalid_argument("estimate_weak_value: n_paths must be >= 100");
    model.validate();
    std::vector<double> vals(static_cast<std::size_t>(n_paths));
    const Partition grid = cfg.kind == SchemeKind::jump_adapted
                               ? Partition{}
                               : make_uniform_grid(cfg.T, cfg.delta);
    const RSigmaRule rule = (cfg.kind == SchemeKind::simple)
                                ? RSigmaRule{}
                                : detail::resolve_rule(spec, cfg.sigma, cfg.forced_rule);
    parallel_for(static_cast<std::size_t>(n_paths), threads,
                 [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            Stream rng = derive_stream(seed_root, tag, i);
            SchemeRun run;
            switch (cfg.kind) {
                case SchemeKind::simple:
                    run = simple_euler(model, grid, spec, rng, cfg.mode);
                    break;
                case SchemeKind::approximate:
                    run = approx_euler(model, grid, spec, cfg.sigma, rule, rng);
                    break;
                case SchemeKind::jump_adapted:
                    run = jump_adapted_euler(model, spec, cfg.sigma, rule,
                                             cfg.delta, cfg.T, rng);
                    break;
            }
            vals[i] = g.g(run.terminal.data());
        }
    });
    detail::check_finite(vals, "estimate_weak_value");
    WeakEstimate e;
    detail::mean_se(vals, e.value, e.se);
    e.n_paths = n_paths;
    e.seed_root = seed_root;
    e.scheme = to_string(cfg.kind);
    e.delta = cfg.delta;
    e.sigma = cfg.kind == SchemeKind::simple ? kNaN : cfg.sigma;
    return e;
}

struct ReferencePolicy {
    enum Kind { oracle, fine_grid } kind = fine_grid;
    double delta_ref = 0.0; // 0: min delta / 64
    long n_paths_ref = 0;   // 0: 4x n_paths
};

inline WeakEstimate reference_value(const CatalogEntry& entry,
                                    const TestFunction& g,
                                    const ReferencePolicy& policy, double T,
                                    long n_paths, std::uint64_t seed_root,
                                    DriverMode mode = DriverMode::make_exact(),
                                    int threads = 0) {
    if (policy.kind == ReferencePolicy::oracle) {
        const std::optional<double> v = entry.oracle(g.name, T);
        if (!v)
            throw std::invalid_argument("reference_value: no oracle registered for g=" +
                                        g.name + " on " + entry.name);
        WeakEstimate e;
        e.value = *v;
        e.se = 0.0;
        e.n_paths = 0;
        e.seed_root = seed_root;
        e.scheme = "oracle";
        return e;
    }
    SchemeConfig cfg;
    cfg.kind = SchemeKind::simple;
    cfg.T = T;
    cfg.delta = policy.delta_ref;
    cfg.mode = mode;
    const long n_ref = policy.n_paths_ref > 0 ? policy.n_paths_ref : 4 * n_paths;
    WeakEstimate e = estimate_weak_value(entry.model, entry.spec, cfg, g, n_ref,
                                         seed_root, "mc", threads);
    e.scheme = "fine_grid";
    return e;
}

// ---------------------------------------------------------------------------
// Log-log rate fitting
// ---------------------------------------------------------------------------

struct RatePoint {
    double delta = 0.0;
    double sigma = kNaN;
    double estimate = 0.0;
    double se_est = 0.0;
    double error = 0.0;
    double se_err = 0.0;
    bool used = false;
    std::string note;
};

struct RateFit {
    double kappa = kNaN;
    double kappa_se = kNaN;
    double ci_lo = kNaN, ci_hi = kNaN;
    double intercept = kNaN;
    int n_used = 0;
    bool ok = false;
    std::string message;
};

namespace detail {

inline double t_quantile_975(int df) {
    static const double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447,
                                   2.365,  2.306, 2.262, 2.228, 2.201, 2.179,
                                   2.160,  2.145, 2.131, 2.120, 2.110, 2.101,
                                   2.093,  2.086, 2.080, 2.074, 2.069, 2.064,
                                   2.060,  2.056, 2.052, 2.048, 2.045, 2.042};
    if (df <= 0) return std::numeric_limits<double>::infinity();
    if (df <= 30) return table[df - 1];
    return 1.96;
}

} // namespace detail

// Weighted least squares of log error on log delta. Points whose error sits
// below max(2 se, floor) are excluded (MC noise floor) and flagged.
inline RateFit fit_rate(std::vector<RatePoint>& points, double noise_floor = 0.0) {
    RateFit fit;
    std::vector<std::size_t> used;
    for (std::size_t i = 0; i < points.size(); ++i) {
        RatePoint& p = points[i];
        if (!(p.error > std::max(2.0 * p.se_err, noise_floor))) {
            p.used = false;
            p.note = "excluded: error below noise floor";
            continue;
        }
        p.used = true;
        used.push_back(i);
    }
    for (std::size_t a = 0; a < used.size(); ++a)
        for (std::size_t b = a + 1; b < used.size(); ++b)
            if (points[used[a]].delta == points[used[b]].delta)
                throw std::invalid_argument("fit_rate: delta values must be distinct");
    if (used.size() < 3) {
        fit.ok = false;
        fit.message = "fewer than 3 usable points after noise-floor exclusion";
        return fit;
    }
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::vector<double> xs, ys, ws;
    for (std::size_t i : used) {
        const RatePoint& p = points[i];
        const double x = std::log(p.delta);
        const double y = std::log(p.error);
        const double rel = p.error > 0.0 ? p.se_err / p.error : 0.0;
        const double w = 1.0 / std::max(rel * rel, 1e-16);
        xs.push_back(x);
        ys.push_back(y);
        ws.push_back(w);
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    const double det = sw * sxx - sx * sx;
    if (!(std::abs(det) > 1e-30)) {
        fit.ok = false;
        fit.message = "degenerate design (singular normal equations)";
        return fit;
    }
    fit.kappa = (sw * sxy - sx * sy) / det;
    fit.intercept = (sy - fit.kappa * sx) / sw;
    double ssr = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const double r = ys[k] - (fit.intercept + fit.kappa * xs[k]);
        ssr += ws[k] * r * r;
    }
    const int df = static_cast<int>(xs.size()) - 2;
    const double s2 = df > 0 ? ssr / df : 0.0;
    fit.kappa_se = std::sqrt(s2 * sw / det);
    const double t = detail::t_quantile_975(df);
    fit.ci_lo = fit.kappa - t * fit.kappa_se;
    fit.ci_hi = fit.kappa + t * fit.kappa_se;
    fit.n_used = static_cast<int>(xs.size());
    fit.ok = true;
    return fit;
}

// standalone operation per the module contract: throws when unusable
inline RateFit fit_rate_strict(std::vector<RatePoint> points,
                               double noise_floor = 0.0) {
    if (points.size() < 3)
        throw std::invalid_argument("fit_rate: need at least 3 points");
    RateFit fit = fit_rate(points, noise_floor);
    if (!fit.ok) throw std::runtime_error("fit_rate: " + fit.message);
    return fit;
}

// ---------------------------------------------------------------------------
// Rate experiment with paired (common random number) estimators
// ---------------------------------------------------------------------------

struct RateConfig {
    SchemeKind scheme = SchemeKind::simple;
    std::vector<double> deltas;
    double sigma = 0.0; // approximate / jump_adapted truncation level
    std::optional<RCase> forced_rule;
    std::string g = "default";
    long n_paths = 1000;
    ReferencePolicy reference;
    bool reference_oracle = false;
    double sigma_ref = 0.0; // surrogate level; 0 = auto when required
    std::uint64_t seed_root = 1;
    std::string tag = "rate";
    int threads = 0;
    double T = 1.0;
    double noise_floor = 0.0;
};

struct RateReport {
    std::string problem, g_name, scheme_name;
    std::vector<RatePoint> points;
    RateFit fit;
    double theory_kappa = kNaN;
    std::string theory_form;
    std::string reference_desc;
    WeakEstimate reference;
    double sigma_ref = kNaN; // surrogate level used, NaN if none
    double phi_sigma_ref = kNaN;
    double sigma = kNaN;
    long n_paths = 0;
    std::uint64_t seed_root = 0;
    std::string flag; // e.g. "exact scheme" when every point is noise-level
};

namespace detail {

// SE of (mean over n of a) - (mean over n_ref of b) when the first
// min(n, n_ref) indices share streams.
inline double paired_error_se(const std::vector<double>& a,
                              const std::vector<double>& b) {
    const std::size_t n = a.size(), nr = b.size();
    const std::size_t s = std::min(n, nr);
    double ma = 0, mb = 0;
    for (double x : a) ma += x;
    ma /= static_cast<double>(n);
    for (double x : b) mb += x;
    mb /= static_cast<double>(nr);
    double va = 0, vb = 0, cov = 0;
    for (std::size_t i = 0; i < n; ++i) va += (a[i] - ma) * (a[i] - ma);
    for (std::size_t i = 0; i < nr; ++i) vb += (b[i] - mb) * (b[i] - mb);
    for (std::size_t i = 0; i < s; ++i) cov += (a[i] - ma) * (b[i] - mb);
    va /= static_cast<double>(n - 1);
    vb /= static_cast<double>(nr - 1);
    cov /= static_cast<double>(s > 1 ? s - 1 : 1);
    const double var = va / static_cast<double>(n) + vb / static_cast<double>(nr) -
                       2.0 * cov * static_cast<double>(s) /
                           (static_cast<double>(n) * static_cast<double>(nr));
    return std::sqrt(std::max(var, 0.0));
}

inline double theory_kappa_for(const CatalogEntry& entry, const TestFunction& g,
                               SchemeKind scheme, std::string& form) {
    const double alpha = entry.spec.alpha, beta = entry.spec.beta;
    if (g.nu < beta) {
        form = "nu (1/alpha - 1/beta)";
        return g.nu * (1.0 / alpha - 1.0 / beta);
    }
    if (scheme == SchemeKind::jump_adapted) {
        form = "(delta ^ lambda_sigma^-1)^(beta/alpha - 1)";
        return beta / alpha - 1.0;
    }
    form = "beta/alpha - 1";
    return beta / alpha - 1.0;
}

} // namespace detail

// choose sigma_ref so that phi(sigma_ref) <= budget, by bisection on phi
inline double sigma_for_phi_budget(const LevyMeasure& m, double beta,
                                   double budget, double sigma_hi) {
    const double p = std::min(beta, 3.0);
    if (m.min_jump() > 0.0) {
        // finite-activity measures: anything below the smallest jump works
        const double s = 0.5 * m.min_jump();
        if (s > 0.0 && m.small_moment(s, p) <= budget) return std::min(s, sigma_hi);
    }
    double lo = 1e-300, hi = sigma_hi;
    if (m.small_moment(hi, p) <= budget) return hi;
    for (int it = 0; it < 200; ++it) {
        const double mid = std::sqrt(lo * hi); // geometric bisection
        if (m.small_moment(mid, p) <= budget)
            lo = mid;
        else
            hi = mid;
    }
    return lo;
}

// The composite experiment: per-path coupled evaluation of every delta level
// plus the fine-grid reference, errors measured with shared streams.
inline RateReport rate_experiment(const CatalogEntry& entry, RateConfig cfg) {
    if (cfg.deltas.empty())
        throw std::invalid_argument("rate_experiment: empty delta list");
    const TestFunction& g = entry.test_function(cfg.g);
    const SdeModel& model = entry.model;
    const DriverSpec& spec = entry.spec;
    RateReport rep;
    rep.problem = entry.name;
    rep.g_name = g.name;
    rep.scheme_name = to_string(cfg.scheme);
    rep.n_paths = cfg.n_paths;
    rep.seed_root = cfg.seed_root;
    rep.sigma = cfg.scheme == SchemeKind::simple ? kNaN : cfg.sigma;
    rep.theory_kappa = detail::theory_kappa_for(entry, g, cfg.scheme, rep.theory_form);

    std::vector<double> deltas = cfg.deltas;
    std::sort(deltas.begin(), deltas.end(), std::greater<double>());
    const double delta_min = deltas.back();

    // resolve the reference and the driver policy
    const bool need_surrogate = !spec.exact_sampler.has_value();
    double sigma_ref = cfg.sigma_ref;
    if (need_surrogate && sigma_ref <= 0.0) {
        // default budget: 1% of the theory-scale bias at the finest level
        const double budget = 1e-2 * std::pow(delta_min, rep.theory_kappa);
        sigma_ref = sigma_for_phi_budget(spec.measure, spec.beta, budget, 0.5);
    }
    if (need_surrogate) {
        rep.sigma_ref = sigma_ref;
        rep.phi_sigma_ref = spec.measure.small_moment(sigma_ref, std::min(spec.beta, 3.0));
    }

    if (cfg.reference.kind == ReferencePolicy::oracle || cfg.reference_oracle) {
        ReferencePolicy pol;
        pol.kind = ReferencePolicy::oracle;
        rep.reference = reference_value(entry, g, pol, cfg.T, cfg.n_paths,
                                        cfg.seed_root);
        rep.reference_desc = "oracle";
    }

    const double delta_ref = cfg.reference.delta_ref > 0.0
                                 ? cfg.reference.delta_ref
                                 : delta_min / 64.0;
    const long n_ref = rep.reference_desc == "oracle"
                           ? 0
                           : (cfg.reference.n_paths_ref > 0 ? cfg.reference.n_paths_ref
                                                            : 4 * cfg.n_paths);

    if (cfg.scheme == SchemeKind::jump_adapted) {
        // random partitions cannot share one realization across delta levels;
        // estimates use per-level streams, the reference pairs with level 0
        const RSigmaRule rule = detail::resolve_rule(spec, cfg.sigma, cfg.forced_rule);
        std::vector<std::vector<double>> vals(deltas.size());
        for (std::size_t k = 0; k < deltas.size(); ++k) {
            vals[k].resize(static_cast<std::size_t>(cfg.n_paths));
            parallel_for(static_cast<std::size_t>(cfg.n_paths), cfg.threads,
                         [&](std::size_t lo, std::size_t hi) {
                for (std::size_t i = lo; i < hi; ++i) {
                    Stream rng = derive_stream(cfg.seed_root,
                                               cfg.tag + "/adapted" + std::to_string(k), i);
                    SchemeRun run = jump_adapted_euler(model, spec, cfg.sigma, rule,
                                                       deltas[k], cfg.T, rng);
                    vals[k][i] = g.g(run.terminal.data());
                }
            });
            detail::check_finite(vals[k], "rate_experiment (jump_adapted)");
        }
        WeakEstimate ref = rep.reference;
        if (rep.reference_desc != "oracle") {
            SchemeConfig rc;
            rc.kind = SchemeKind::approximate;
            rc.T = cfg.T;
            rc.delta = delta_ref;
            rc.sigma = cfg.sigma;
            rc.forced_rule = cfg.forced_rule;
            ref = estimate_weak_value(model, spec, rc, g, n_ref, cfg.seed_root,
                                      cfg.tag + "/ref", cfg.threads);
            rep.reference = ref;
            rep.reference_desc = "fine_grid";
        }
        for (std::size_t k = 0; k < deltas.size(); ++k) {
            RatePoint p;
            p.delta = deltas[k];
            p.sigma = cfg.sigma;
            detail::mean_se(vals[k], p.estimate, p.se_est);
            p.error = std::abs(p.estimate - ref.value);
            p.se_err = std::sqrt(p.se_est * p.se_est + ref.se * ref.se);
            rep.points.push_back(p);
        }
    } else {
        // coupled path-major evaluation on nested uniform grids
        const Partition base = make_uniform_grid(cfg.T, delta_ref);
        std::vector<Partition> grids;
        for (double d : deltas) {
            Partition p = make_uniform_grid(cfg.T, d);
            if (base.cells() % p.cells() != 0)
                throw std::invalid_argument(
                    "rate_experiment: delta levels must nest inside delta_ref");
            grids.push_back(std::move(p));
        }
        const bool use_ref_paths = rep.reference_desc != "oracle";
        const long total_paths = std::max(cfg.n_paths, use_ref_paths ? n_ref : 0);
        std::vector<std::vector<double>> vals(deltas.size(),
            std::vector<double>(static_cast<std::size_t>(cfg.n_paths)));
        std::vector<double> ref_vals(
            use_ref_paths ? static_cast<std::size_t>(n_ref) : 0);

        const bool approx = cfg.scheme == SchemeKind::approximate;
        const RSigmaRule level_rule =
            approx ? detail::resolve_rule(spec, cfg.sigma, cfg.forced_rule)
                   : RSigmaRule{};
        const RSigmaRule surr_rule =
            need_surrogate ? detail::resolve_rule(spec, sigma_ref, cfg.forced_rule)
                           : RSigmaRule{};
        // For the approximate scheme the levels see Z~_sigma; the reference
        // sees the exact driver (or the sigma_ref surrogate). Jumps are shared
        // through one realization at the smaller truncation level; the R part
        // is overridden per level. The substitution case depends only on
        // (alpha, beta), so the level and surrogate rules always agree in kind.
        const double sigma_floor =
            approx ? (need_surrogate ? std::min(sigma_ref, cfg.sigma) : 0.0)
                   : (need_surrogate ? sigma_ref : 0.0);
        const bool level_filter = approx && cfg.sigma > sigma_floor;
        const Vec level_comp =
            (approx && spec.compensated() && cfg.sigma < 1.0)
                ? spec.measure.compensator_drift(cfg.sigma)
                : Vec(static_cast<std::size_t>(spec.jump_dim()), 0.0);
        const Vec level_extra = level_rule.kind == RCase::drift
                                    ? level_rule.drift_vector
                                    : Vec(static_cast<std::size_t>(spec.jump_dim()), 0.0);
        if (approx && level_rule.kind == RCase::gaussian && spec.jump_dim() != 1)
            throw std::invalid_argument(
                "rate_experiment: gaussian substitution coupling supports jump dim 1");

        parallel_for(static_cast<std::size_t>(total_paths), cfg.threads,
                     [&](std::size_t lo, std::size_t hi) {
            std::vector<double> level_z;
            for (std::size_t i = lo; i < hi; ++i) {
                Stream rng = derive_stream(cfg.seed_root, cfg.tag, i);
                DriverPath path;
                if (need_surrogate)
                    path = realize_truncated(model, spec, sigma_floor, surr_rule,
                                             base, rng);
                else if (approx && !use_ref_paths)
                    path = realize_truncated(model, spec, cfg.sigma, level_rule,
                                             base, rng);
                else
                    path = realize_exact(model, spec, base, rng);
                const bool override_levels =
                    approx && (need_surrogate || use_ref_paths);
                if (override_levels && level_rule.kind == RCase::gaussian) {
                    // per-level gaussian R: scale the shared raw array, or draw
                    // a fresh one when the realization carries none
                    const double bs = level_rule.b_sigma(0, 0);
                    if (!path.z_fine.empty() && need_surrogate) {
                        const double bref = surr_rule.b_sigma(0, 0);
                        level_z = path.z_fine;
                        const double f = bref > 0.0 ? bs / bref : 0.0;
                        for (double& z : level_z) z *= f;
                    } else {
                        level_z.assign(static_cast<std::size_t>(base.cells()), 0.0);
                        for (int k = 0; k < base.cells(); ++k) {
                            const double dt =
                                base.times[static_cast<std::size_t>(k) + 1] -
                                base.times[static_cast<std::size_t>(k)];
                            level_z[static_cast<std::size_t>(k)] =
                                bs * std::sqrt(dt) * rng.next_normal();
                        }
                    }
                }
                if (i < static_cast<std::size_t>(cfg.n_paths)) {
                    RunView view{&path, 0.0, nullptr, nullptr, nullptr};
                    if (override_levels) {
                        if (level_filter || !need_surrogate)
                            view.jump_min = cfg.sigma;
                        view.comp_rate = &level_comp;
                        view.extra_drift = &level_extra;
                        if (level_rule.kind == RCase::gaussian)
                            view.z_fine = &level_z;
                    }
                    for (std::size_t k = 0; k < grids.size(); ++k) {
                        SchemeRun run = run_view_on_grid(model, grids[k], view);
                        vals[k][i] = g.g(run.terminal.data());
                    }
                }
                if (use_ref_paths && i < static_cast<std::size_t>(n_ref)) {
                    SchemeRun run = run_on_grid(model, base, path);
                    ref_vals[i] = g.g(run.terminal.data());
                }
            }
        });
        for (std::size_t k = 0; k < deltas.size(); ++k)
            detail::check_finite(vals[k], "rate_experiment");
        if (use_ref_paths) {
            detail::check_finite(ref_vals, "rate_experiment (reference)");
            WeakEstimate ref;
            detail::mean_se(ref_vals, ref.value, ref.se);
            ref.n_paths = n_ref;
            ref.seed_root = cfg.seed_root;
            ref.scheme = "fine_grid";
            ref.delta = delta_ref;
            rep.reference = ref;
            rep.reference_desc = "fine_grid(delta_ref=" + std::to_string(delta_ref) + ")";
        }
        for (std::size_t k = 0; k < deltas.size(); ++k) {
            RatePoint p;
            p.delta = deltas[k];
            p.sigma = rep.sigma;
            detail::mean_se(vals[k], p.estimate, p.se_est);
            p.error = std::abs(p.estimate - rep.reference.value);
            p.se_err = use_ref_paths
                           ? detail::paired_error_se(vals[k], ref_vals)
                           : p.se_est;
            rep.points.push_back(p);
        }
    }

    rep.fit = fit_rate(rep.points, cfg.noise_floor);
    if (!rep.fit.ok) {
        int usable = 0;
        for (const auto& p : rep.points)
            if (p.used) ++usable;
        rep.flag = usable == 0 ? "exact scheme (all errors at MC noise level)"
                               : "fit unavailable: " + rep.fit.message;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Error decomposition over a (delta, sigma) grid
// ---------------------------------------------------------------------------

struct DecompCell {
    double delta = 0.0, sigma = 0.0;
    double estimate = 0.0, se_est = 0.0;
    double error = 0.0, se_err = 0.0;
    bool used = false;
};

struct DecompositionReport {
    std::string problem, g_name;
    std::vector<DecompCell> cells;
    double c1 = kNaN, c2 = kNaN, kappa = kNaN;
    double residual_norm = kNaN;
    bool fit_ok = false;
    std::string message;
    double sigma_slope_logsigma = kNaN; // at finest delta
    double sigma_slope_logphi = kNaN;
    double delta_ref = kNaN, sigma_ref = kNaN, phi_sigma_ref = kNaN;
    WeakEstimate reference;
    long n_paths = 0;
    std::uint64_t seed_root = 0;
    std::vector<double> phi_values; // phi(sigma) for each sigma in the grid
};

struct DecompositionConfig {
    std::vector<double> deltas, sigmas;
    std::optional<RCase> forced_rule;
    std::string g = "default";
    long n_paths = 1000;
    long n_paths_ref = 0;  // 0: 4x
    double delta_ref = 0.0; // 0: min delta / 64
    double sigma_ref = 0.0; // 0: phi budget = 1% of phi(min sigma)
    std::uint64_t seed_root = 1;
    std::string tag = "decompose";
    int threads = 0;
    double T = 1.0;
    double noise_floor = 0.0;
};

inline DecompositionReport decompose_error(const CatalogEntry& entry,
                                           DecompositionConfig cfg) {
    std::vector<double> deltas = cfg.deltas, sigmas = cfg.sigmas;
    std::sort(deltas.begin(), deltas.end(), std::greater<double>());
    std::sort(sigmas.begin(), sigmas.end(), std::greater<double>());
    deltas.erase(std::unique(deltas.begin(), deltas.end()), deltas.end());
    sigmas.erase(std::unique(sigmas.begin(), sigmas.end()), sigmas.end());
    if (deltas.size() < 3 || sigmas.size() < 3)
        throw std::invalid_argument(
            "decompose_error: need at least 3 distinct deltas and 3 distinct sigmas");
    const TestFunction& g = entry.test_function(cfg.g);
    const SdeModel& model = entry.model;
    const DriverSpec& spec = entry.spec;
    const double p_exp = std::min(spec.beta, 3.0);

    DecompositionReport rep;
    rep.problem = entry.name;
    rep.g_name = g.name;
    rep.n_paths = cfg.n_paths;
    rep.seed_root = cfg.seed_root;

    const double sigma_min = sigmas.back();
    const double delta_min = deltas.back();
    double sigma_ref = cfg.sigma_ref;
    if (sigma_ref <= 0.0)
        sigma_ref = sigma_for_phi_budget(spec.measure, spec.beta,
                                         1e-2 * spec.measure.small_moment(sigma_min, p_exp),
                                         0.5 * sigma_min);
    const double delta_ref =
        cfg.delta_ref > 0.0 ? cfg.delta_ref : delta_min / 64.0;
    rep.sigma_ref = sigma_ref;
    rep.delta_ref = delta_ref;
    rep.phi_sigma_ref = spec.measure.small_moment(sigma_ref, p_exp);
    for (double s : sigmas) rep.phi_values.push_back(spec.measure.small_moment(s, p_exp));

    const long n_ref = cfg.n_paths_ref > 0 ? cfg.n_paths_ref : 4 * cfg.n_paths;
    const long total_paths = std::max(cfg.n_paths, n_ref);

    const Partition base = make_uniform_grid(cfg.T, delta_ref);
    std::vector<Partition> grids;
    for (double d : deltas) {
        Partition p = make_uniform_grid(cfg.T, d);
        if (base.cells() % p.cells() != 0)
            throw std::invalid_argument(
                "decompose_error: delta levels must nest inside delta_ref");
        grids.push_back(std::move(p));
    }

    // per-sigma rules and compensators; the reference runs at sigma_ref
    const RSigmaRule ref_rule = detail::resolve_rule(spec, sigma_ref, cfg.forced_rule);
    std::vector<RSigmaRule> rules;
    std::vector<Vec> comps;
    std::vector<Vec> extra_drifts;
    for (double s : sigmas) {
        rules.push_back(detail::resolve_rule(spec, s, cfg.forced_rule));
        comps.push_back((spec.compensated() && s < 1.0)
                            ? spec.measure.compensator_drift(s)
                            : Vec(static_cast<std::size_t>(spec.jump_dim()), 0.0));
        extra_drifts.push_back(rules.back().kind == RCase::drift
                                   ? rules.back().drift_vector
                                   : Vec(static_cast<std::size_t>(spec.jump_dim()), 0.0));
    }
    const bool any_gaussian =
        ref_rule.kind == RCase::gaussian ||
        std::any_of(rules.begin(), rules.end(),
                    [](const RSigmaRule& r) { return r.kind == RCase::gaussian; });
    if (any_gaussian && spec.jump_dim() != 1)
        throw std::invalid_argument(
            "decompose_error: gaussian substitution coupling supports jump dim 1");

    const std::size_t ncells = deltas.size() * sigmas.size();
    std::vector<std::vector<double>> vals(ncells,
        std::vector<double>(static_cast<std::size_t>(cfg.n_paths)));
    std::vector<double> ref_vals(static_cast<std::size_t>(n_ref));

    parallel_for(static_cast<std::size_t>(total_paths), cfg.threads,
                 [&](std::size_t lo, std::size_t hi) {
        std::vector<double> scaled_z;
        for (std::size_t i = lo; i < hi; ++i) {
            Stream rng = derive_stream(cfg.seed_root, cfg.tag, i);
            // shared big jumps above sigma_ref plus, when needed, one shared
            // raw gaussian array scaled per sigma level
            DriverPath path = realize_truncated(model, spec, sigma_ref, ref_rule,
                                                base, rng);
            const double bref =
                ref_rule.kind == RCase::gaussian ? ref_rule.b_sigma(0, 0) : 0.0;
            if (i < static_cast<std::size_t>(cfg.n_paths)) {
                for (std::size_t ks = 0; ks < sigmas.size(); ++ks) {
                    RunView view{&path, sigmas[ks], &comps[ks], &extra_drifts[ks],
                                 nullptr};
                    if (rules[ks].kind == RCase::gaussian) {
                        const double bs = rules[ks].b_sigma(0, 0);
                        if (bref > 0.0) {
                            scaled_z = path.z_fine;
                            const double f = bs / bref;
                            for (double& z : scaled_z) z *= f;
                        } else {
                            // the reference has no mass below sigma_ref, so its
                            // realization carries no gaussian array to rescale
                            scaled_z.assign(static_cast<std::size_t>(base.cells()), 0.0);
                            for (int kc = 0; kc < base.cells(); ++kc) {
                                const double dt =
                                    base.times[static_cast<std::size_t>(kc) + 1] -
                                    base.times[static_cast<std::size_t>(kc)];
                                scaled_z[static_cast<std::size_t>(kc)] =
                                    bs * std::sqrt(dt) * rng.next_normal();
                            }
                        }
                        view.z_fine = &scaled_z;
                    }
                    for (std::size_t kd = 0; kd < deltas.size(); ++kd) {
                        SchemeRun run = run_view_on_grid(model, grids[kd], view);
                        vals[kd * sigmas.size() + ks][i] = g.g(run.terminal.data());
                    }
                }
            }
            if (i < static_cast<std::size_t>(n_ref)) {
                SchemeRun run = run_on_grid(model, base, path);
                ref_vals[i] = g.g(run.terminal.data());
            }
        }
    });

    detail::check_finite(ref_vals, "decompose_error (reference)");
    double ref_mean, ref_se;
    detail::mean_se(ref_vals, ref_mean, ref_se);
    rep.reference.value = ref_mean;
    rep.reference.se = ref_se;
    rep.reference.n_paths = n_ref;
    rep.reference.scheme = "fine_grid";
    rep.reference.delta = delta_ref;
    rep.reference.sigma = sigma_ref;

    for (std::size_t kd = 0; kd < deltas.size(); ++kd)
        for (std::size_t ks = 0; ks < sigmas.size(); ++ks) {
            auto& v = vals[kd * sigmas.size() + ks];
            detail::check_finite(v, "decompose_error");
            DecompCell c;
            c.delta = deltas[kd];
            c.sigma = sigmas[ks];
            detail::mean_se(v, c.estimate, c.se_est);
            c.error = std::abs(c.estimate - ref_mean);
            c.se_err = detail::paired_error_se(v, ref_vals);
            c.used = c.error > std::max(2.0 * c.se_err, cfg.noise_floor);
            rep.cells.push_back(c);
        }

    // fit error(delta, sigma) ~ C1 delta^kappa + C2 phi(sigma), kappa profiled
    auto sse_for_kappa = [&](double kappa, double& c1, double& c2) {
        double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
        for (std::size_t k = 0; k < rep.cells.size(); ++k) {
            const DecompCell& c = rep.cells[k];
            if (!c.used) continue;
            const double w = 1.0 / std::max(c.se_err * c.se_err, 1e-24);
            const double f1 = std::pow(c.delta, kappa);
            const double f2 = rep.phi_values[k % sigmas.size()];
            a11 += w * f1 * f1;
            a12 += w * f1 * f2;
            a22 += w * f2 * f2;
            b1 += w * f1 * c.error;
            b2 += w * f2 * c.error;
        }
        const double det = a11 * a22 - a12 * a12;
        if (!(std::abs(det) > 1e-300 * std::max(1.0, a11 * a22))) {
            c1 = c2 = kNaN;
            return std::numeric_limits<double>::infinity();
        }
        c1 = (a22 * b1 - a12 * b2) / det;
        c2 = (a11 * b2 - a12 * b1) / det;
        double sse = 0.0;
        for (std::size_t k = 0; k < rep.cells.size(); ++k) {
            const DecompCell& c = rep.cells[k];
            if (!c.used) continue;
            const double w = 1.0 / std::max(c.se_err * c.se_err, 1e-24);
            const double fitv = c1 * std::pow(c.delta, kappa) +
                                c2 * rep.phi_values[k % sigmas.size()];
            sse += w * (fitv - c.error) * (fitv - c.error);
        }
        return sse;
    };
    {
        int usable = 0;
        for (const auto& c : rep.cells)
            if (c.used) ++usable;
        if (usable >= 3) {
            double lo = 0.05, hi = 3.0;
            const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
            double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
            double c1a, c2a, c1b, c2b;
            double f1 = sse_for_kappa(x1, c1a, c2a);
            double f2 = sse_for_kappa(x2, c1b, c2b);
            for (int it = 0; it < 80; ++it) {
                if (f1 < f2) {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - gr * (hi - lo);
                    f1 = sse_for_kappa(x1, c1a, c2a);
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + gr * (hi - lo);
                    f2 = sse_for_kappa(x2, c1b, c2b);
                }
            }
            rep.kappa = 0.5 * (x1 + x2);
            double c1, c2;
            const double sse = sse_for_kappa(rep.kappa, c1, c2);
            if (std::isfinite(sse)) {
                rep.c1 = c1;
                rep.c2 = c2;
                rep.residual_norm = std::sqrt(sse);
                rep.fit_ok = true;
            } else {
                rep.message = "degenerate fit (singular normal equations)";
            }
        } else {
            rep.message = "fewer than 3 usable cells for the surface fit";
        }
    }

    // sigma-direction slope at the finest delta
    {
        std::vector<double> lx_sigma, lx_phi, ly;
        for (std::size_t ks = 0; ks < sigmas.size(); ++ks) {
            const DecompCell& c = rep.cells[(deltas.size() - 1) * sigmas.size() + ks];
            if (!c.used || !(c.error > 0.0)) continue;
            lx_sigma.push_back(std::log(c.sigma));
            lx_phi.push_back(std::log(rep.phi_values[ks]));
            ly.push_back(std::log(c.error));
        }
        auto ols = [](const std::vector<double>& x, const std::vector<double>& y) {
            const double n = static_cast<double>(x.size());
            double sx = 0, sy = 0, sxx = 0, sxy = 0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                sx += x[i];
                sy += y[i];
                sxx += x[i] * x[i];
                sxy += x[i] * y[i];
            }
            const double det = n * sxx - sx * sx;
            return std::abs(det) > 1e-30 ? (n * sxy - sx * sy) / det : kNaN;
        };
        if (ly.size() >= 2) {
            rep.sigma_slope_logsigma = ols(lx_sigma, ly);
            rep.sigma_slope_logphi = ols(lx_phi, ly);
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Jump-adapted partition statistics (step-size laws)
// ---------------------------------------------------------------------------

struct StepStatsReport {
    double lambda_sigma = 0.0;
    double lambda_tilde = 1.0; // 1 + 1_{alpha in (1,2)} |gamma(sigma)|
    double delta = 0.0, T = 0.0;
    long n_partitions = 0;
    double mean_first_step = 0.0, se_first_step = 0.0;
    double closed_form_mean = 0.0;
    double z_score = 0.0;
    double sandwich_lo = 0.0, sandwich_hi = 0.0;
    bool sandwich_ok = false;
    double mean_sum_sq = 0.0, se_sum_sq = 0.0;
    double sum_sq_bound = 0.0; // 2 T (delta ^ lambda^-1)
    bool sum_sq_ok = false;
    double mean_steps = 0.0;
    bool pass = false;
};

inline StepStatsReport jump_adapted_step_stats(const DriverSpec& spec,
                                               double sigma, double delta,
                                               double T, long n_partitions,
                                               std::uint64_t seed_root,
                                               int threads = 0) {
    if (n_partitions < 1000)
        throw std::invalid_argument("jump_adapted_step_stats: need >= 1000 partitions");
    StepStatsReport r;
    r.lambda_sigma = spec.measure.tail_mass(sigma);
    if (spec.alpha > 1.0 && spec.alpha < 2.0 && sigma < 1.0) {
        const Vec g = spec.measure.compensator_drift(sigma);
        double norm = 0.0;
        for (double x : g) norm += x * x;
        r.lambda_tilde = 1.0 + std::sqrt(norm);
    }
    r.delta = delta;
    r.T = T;
    r.n_partitions = n_partitions;
    std::vector<double> first(static_cast<std::size_t>(n_partitions));
    std::vector<double> sumsq(static_cast<std::size_t>(n_partitions));
    std::vector<double> steps(static_cast<std::size_t>(n_partitions));
    parallel_for(static_cast<std::size_t>(n_partitions), threads,
                 [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            Stream rng = derive_stream(seed_root, "steps", i);
            auto [part, seg] = jump_adapted_partition(spec, sigma, delta, T, rng);
            first[i] = part.times[1] - part.times[0];
            double ss = 0.0;
            for (std::size_t k = 0; k + 1 < part.times.size(); ++k) {
                const double dt = part.times[k + 1] - part.times[k];
                ss += dt * dt;
            }
            sumsq[i] = ss;
            steps[i] = static_cast<double>(part.cells());
        }
    });
    detail::mean_se(first, r.mean_first_step, r.se_first_step);
    detail::mean_se(sumsq, r.mean_sum_sq, r.se_sum_sq);
    double tmp_se;
    detail::mean_se(steps, r.mean_steps, tmp_se);

    const double dprime = std::min(delta, T);
    const double lam = r.lambda_sigma;
    r.closed_form_mean =
        lam > 0.0 ? (1.0 - std::exp(-lam * dprime)) / lam : dprime;
    r.z_score = r.se_first_step > 0.0
                    ? (r.mean_first_step - r.closed_form_mean) / r.se_first_step
                    : 0.0;
    const double cap = lam > 0.0 ? std::min(dprime, 1.0 / lam) : dprime;
    r.sandwich_lo = cap / 3.0;
    r.sandwich_hi = cap;
    r.sandwich_ok =
        (r.mean_first_step + 3.0 * r.se_first_step >= r.sandwich_lo) &&
        (r.mean_first_step - 3.0 * r.se_first_step <= r.sandwich_hi);
    const double dl = lam > 0.0 ? std::min(delta, 1.0 / lam) : delta;
    r.sum_sq_bound = 2.0 * T * dl;
    r.sum_sq_ok = r.mean_sum_sq - 3.0 * r.se_sum_sq <= r.sum_sq_bound;
    const bool z_ok = std::abs(r.z_score) <= 3.0;
    r.pass = z_ok && r.sandwich_ok && r.sum_sq_ok;
    return r;
}

} // namespace levysde
