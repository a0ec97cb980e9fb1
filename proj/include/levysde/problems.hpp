#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "levysde/models.hpp"
#include "levysde/parallel.hpp"
#include "levysde/schemes.hpp"

namespace levysde {

// A fully parameterized test problem: model, driver, test functions and any
// registered closed-form terminal moments.
struct CatalogEntry {
    std::string name;
    SdeModel model;
    DriverSpec spec;
    std::vector<TestFunction> test_functions; // [0] is the default g
    bool experimental = false;
    std::string notes;

    // closed-form E[g(X_T)] where registered
    std::function<std::optional<double>(const std::string&, double)> oracle =
        [](const std::string&, double) { return std::optional<double>{}; };

    const TestFunction& test_function(const std::string& gname) const {
        if (gname == "default" || gname.empty()) return test_functions.front();
        for (const auto& f : test_functions)
            if (f.name == gname) return f;
        throw std::invalid_argument("unknown test function '" + gname +
                                    "' for problem " + name);
    }
};

namespace detail {

inline TestFunction tf_x() {
    TestFunction f;
    f.name = "x";
    f.nu = 1.0;
    f.g = [](const double* x) { return x[0]; };
    f.grad = [](const double*, double* out) { out[0] = 1.0; };
    f.hess = [](const double*, double* out) { out[0] = 0.0; };
    return f;
}

inline TestFunction tf_x2() {
    TestFunction f;
    f.name = "x2";
    f.nu = 2.0;
    f.g = [](const double* x) { return x[0] * x[0]; };
    f.grad = [](const double* x, double* out) { out[0] = 2.0 * x[0]; };
    f.hess = [](const double*, double* out) { out[0] = 2.0; };
    return f;
}

inline TestFunction tf_sin(double shift, double freq, const std::string& name,
                           double nu) {
    TestFunction f;
    f.name = name;
    f.nu = nu;
    f.g = [shift, freq](const double* x) { return std::sin(freq * x[0] + shift); };
    f.grad = [shift, freq](const double* x, double* out) {
        out[0] = freq * std::cos(freq * x[0] + shift);
    };
    f.hess = [shift, freq](const double* x, double* out) {
        out[0] = -freq * freq * std::sin(freq * x[0] + shift);
    };
    return f;
}

inline TestFunction tf_rough() {
    TestFunction f;
    f.name = "rough";
    f.nu = 1.0; // Lipschitz kink at 0.3
    f.g = [](const double* x) { return std::min(std::abs(x[0] - 0.3), 1.0); };
    return f;
}

inline TestFunction tf_tanh(double shift) {
    // bounded, strictly monotone Lipschitz function: substitution drift
    // effects do not cancel against it
    TestFunction f;
    f.name = "tanh_shift";
    f.nu = 1.0;
    f.g = [shift](const double* x) { return std::tanh(x[0] - shift); };
    f.grad = [shift](const double* x, double* out) {
        const double t = std::tanh(x[0] - shift);
        out[0] = 1.0 - t * t;
    };
    f.hess = [shift](const double* x, double* out) {
        const double t = std::tanh(x[0] - shift);
        out[0] = -2.0 * t * (1.0 - t * t);
    };
    return f;
}

inline CoefFn const_coef(double v) {
    return [v](const double*, double* out) { out[0] = v; };
}

} // namespace detail

inline std::vector<std::string> catalog_names() {
    return {"IDENT-CP", "JD-SMOOTH", "JD-SMOOTH-NOB", "PJ-DEGEN", "PJ-DEGEN-1S",
            "ROUGH-G", "ONE-SIDED", "ZERO"};
}

inline CatalogEntry catalog(const std::string& name) {
    if (name == "IDENT-CP") {
        // identity scheme baseline: Y_T reproduces Z_T path by path
        SdeModel model;
        model.d = model.m = 1;
        model.n = 0;
        model.jump_coef = detail::const_coef(1.0);
        model.x0 = {0.0};
        model.alpha = 0.5;
        model.beta = 1.0;
        model.mu = 1.0;
        model.validate();
        LevyMeasure meas = LevyMeasure::compound_poisson(1.0, PointMassJump{{0.2}});
        DriverSpec spec(std::move(meas), 0.5, 1.0, 1.0, false, false,
                        ExactSampler::compound_poisson);
        CatalogEntry e{name, std::move(model), std::move(spec),
                       {detail::tf_x(), detail::tf_x2()}, false, ""};
        e.oracle = [](const std::string& g, double T) -> std::optional<double> {
            const double rate = 1.0, jump = 0.2;
            if (g == "x" || g == "default") return rate * T * jump;
            if (g == "x2") {
                const double mean = rate * T * jump;
                return rate * T * jump * jump + mean * mean;
            }
            return std::nullopt;
        };
        return e;
    }
    if (name == "JD-SMOOTH" || name == "JD-SMOOTH-NOB" || name == "ROUGH-G") {
        const bool with_b = (name != "JD-SMOOTH-NOB");
        SdeModel model;
        model.d = model.m = 1;
        model.n = with_b ? 1 : 0;
        model.drift = [](const double* x, double* out) { out[0] = 0.5 * std::sin(x[0]); };
        if (with_b)
            model.diffusion = [](const double* x, double* out) {
                out[0] = 1.0 + 0.5 * std::cos(x[0]);
            };
        model.jump_coef = [](const double* x, double* out) {
            out[0] = 1.0 + 0.5 * std::sin(x[0]);
        };
        model.x0 = {0.2};
        model.alpha = 2.0;
        model.beta = 4.0;
        model.mu = 4.0;
        model.validate();
        LevyMeasure meas = LevyMeasure::compound_poisson(
            1.0, UniformRadialJump{0.1, 0.5}, Side::symmetric);
        DriverSpec spec(std::move(meas), 2.0, 4.0, 4.0, with_b, true,
                        ExactSampler::compound_poisson);
        std::vector<TestFunction> fns;
        if (name == "ROUGH-G") {
            fns = {detail::tf_rough(), detail::tf_sin(0.0, 1.0, "sin", 4.0),
                   detail::tf_x()};
        } else {
            fns = {detail::tf_sin(0.3, 1.0, "sin_shift", 4.0),
                   detail::tf_sin(0.0, 1.0, "sin", 4.0), detail::tf_x(),
                   detail::tf_x2(), detail::tf_rough()};
        }
        return CatalogEntry{name, std::move(model), std::move(spec), std::move(fns), false, ""};
    }
    if (name == "PJ-DEGEN" || name == "PJ-DEGEN-1S") {
        // fully degenerate pure-jump problem at the beta = 2 alpha borderline;
        // the -1S twin drives it with the one-sided restriction of the same
        // measure, so cutting small jumps removes a nonzero mean and the
        // substitution error realizes the phi(sigma) order
        const bool one_sided = (name == "PJ-DEGEN-1S");
        SdeModel model;
        model.d = model.m = 1;
        model.n = 0;
        model.jump_coef = [](const double* x, double* out) {
            out[0] = 1.0 + 0.5 * std::cos(x[0]);
        };
        model.x0 = {0.2};
        model.alpha = 0.5;
        model.beta = 1.0;
        model.mu = 1.0;
        model.validate();
        LevyMeasure meas = LevyMeasure::truncated_stable(
            1, 0.5, 0.5, 1.0, one_sided ? Side::positive : Side::symmetric);
        DriverSpec spec(std::move(meas), 0.5, 1.0, 1.0, false, false, std::nullopt);
        return CatalogEntry{name, std::move(model), std::move(spec),
                            {detail::tf_sin(0.3, 2.0, "sin2_shift", 1.0),
                             detail::tf_sin(0.3, 1.0, "sin_shift", 1.0),
                             detail::tf_tanh(1.0), detail::tf_rough(),
                             detail::tf_x(), detail::tf_x2()},
                            false, ""};
    }
    if (name == "ONE-SIDED") {
        // discussion model: one-sided stable-like driver, nonnegative G
        SdeModel model;
        model.d = model.m = 1;
        model.n = 0;
        model.jump_coef = [](const double* x, double* out) {
            out[0] = 1.0 + 0.5 * std::sin(x[0]);
        };
        model.x0 = {0.2};
        model.alpha = 0.75;
        model.beta = 1.5;
        model.mu = 1.5;
        model.validate();
        LevyMeasure meas =
            LevyMeasure::truncated_stable(1, 0.5, 0.5, 1.0, Side::positive);
        DriverSpec spec(std::move(meas), 0.75, 1.5, 1.5, false, false, std::nullopt);
        CatalogEntry e{name, std::move(model), std::move(spec),
                       {detail::tf_sin(0.3, 1.0, "sin_shift", 1.5), detail::tf_x()}, false, ""};
        e.experimental = true;
        e.notes = "no convergence bound asserted; rate recorded only";
        return e;
    }
    if (name == "ZERO") {
        // zero-coefficient model: terminal value is x0 for every path
        SdeModel model;
        model.d = model.m = 1;
        model.n = 0;
        model.x0 = {0.7};
        model.alpha = 0.5;
        model.beta = 1.0;
        model.mu = 1.0;
        model.validate();
        LevyMeasure meas = LevyMeasure::compound_poisson(1.0, PointMassJump{{0.2}});
        DriverSpec spec(std::move(meas), 0.5, 1.0, 1.0, false, false,
                        ExactSampler::compound_poisson);
        CatalogEntry e{name, std::move(model), std::move(spec),
                       {detail::tf_x(), detail::tf_x2()}, false, ""};
        e.oracle = [](const std::string& g, double) -> std::optional<double> {
            if (g == "x" || g == "default") return 0.7;
            if (g == "x2") return 0.49;
            return std::nullopt;
        };
        return e;
    }
    throw std::invalid_argument("unknown catalog problem '" + name + "'");
}

// ---------------------------------------------------------------------------
// Martingale consistency: MC estimate of
//   E[v(X_t)] - v(x0) - int_0^t E[L v(X_s)] ds
// with X simulated by a fine-grid simple Euler surrogate and the time
// integral by the trapezoid rule on the fine grid.
// ---------------------------------------------------------------------------

struct MartingaleResult {
    double t = 0.0;
    double defect = 0.0;
    double se = 0.0;
    long n_paths = 0;
};

inline std::vector<MartingaleResult> martingale_defect(
    const SdeModel& model, const DriverSpec& spec, const TestFunction& v,
    const std::vector<double>& t_list, long n_paths, double delta_fine,
    std::uint64_t seed_root, int threads = 0,
    DriverMode mode = DriverMode::make_exact()) {
    model.validate();
    if (t_list.empty()) throw std::invalid_argument("martingale_defect: empty t list");
    const double t_max = *std::max_element(t_list.begin(), t_list.end());
    const Partition grid = make_uniform_grid(t_max, delta_fine);
    // each requested t must be a grid node
    std::vector<std::size_t> t_nodes;
    for (double t : t_list) {
        const double pos = t / (t_max / grid.cells());
        const auto node = static_cast<std::size_t>(std::llround(pos));
        if (node == 0 || node > static_cast<std::size_t>(grid.cells()) ||
            std::abs(grid.times[node] - t) > 1e-9 * t_max)
            throw std::invalid_argument(
                "martingale_defect: t must be a positive multiple of delta_fine");
        t_nodes.push_back(node);
    }
    const GeneratorEvaluator lv(model, spec, v);
    const double v0 = v.g(model.x0.data());

    std::vector<std::vector<double>> samples(
        t_list.size(), std::vector<double>(static_cast<std::size_t>(n_paths)));
    const std::optional<RSigmaRule> rule =
        mode.kind == DriverMode::surrogate
            ? std::optional<RSigmaRule>(RSigmaRule::make(
                  spec.measure, spec.alpha, spec.beta, mode.sigma_ref))
            : std::nullopt;

    parallel_for(static_cast<std::size_t>(n_paths), threads,
                 [&](std::size_t lo, std::size_t hi) {
        const int d = model.d, n = model.n, m = model.m;
        Vec y(static_cast<std::size_t>(d));
        Vec a(static_cast<std::size_t>(d)), b(static_cast<std::size_t>(d * std::max(n, 1)));
        Vec G(static_cast<std::size_t>(d * m));
        for (std::size_t i = lo; i < hi; ++i) {
            Stream rng = derive_stream(seed_root, "martingale", i);
            DriverPath path =
                mode.kind == DriverMode::exact
                    ? realize_exact(model, spec, grid, rng)
                    : realize_truncated(model, spec, mode.sigma_ref, *rule, grid, rng);
            y = model.x0;
            double trap = 0.0;
            double prev_lv = lv(y.data());
            std::size_t jcur = 0;
            for (int cell = 0; cell < grid.cells(); ++cell) {
                const double t0 = grid.times[static_cast<std::size_t>(cell)];
                const double t1 = grid.times[static_cast<std::size_t>(cell) + 1];
                const double dt = t1 - t0;
                model.eval_drift(y.data(), a.data());
                if (n > 0) model.eval_diffusion(y.data(), b.data());
                model.eval_jump_coef(y.data(), G.data());
                while (jcur < path.jump_times.size() && path.jump_times[jcur] <= t1) {
                    for (int r = 0; r < d; ++r) {
                        double gj = 0.0;
                        for (int c = 0; c < m; ++c)
                            gj += G[static_cast<std::size_t>(r * m + c)] *
                                  path.jump_sizes[jcur * static_cast<std::size_t>(m) +
                                                  static_cast<std::size_t>(c)];
                        y[static_cast<std::size_t>(r)] += gj;
                    }
                    ++jcur;
                }
                for (int r = 0; r < d; ++r) {
                    double incr = a[static_cast<std::size_t>(r)] * dt;
                    for (int k = 0; k < n; ++k)
                        incr += b[static_cast<std::size_t>(r * n + k)] *
                                path.w_fine[static_cast<std::size_t>(cell) * n +
                                            static_cast<std::size_t>(k)];
                    for (int c = 0; c < m; ++c) {
                        double z = (path.extra_drift[static_cast<std::size_t>(c)] -
                                    path.comp_rate[static_cast<std::size_t>(c)]) * dt;
                        if (!path.z_fine.empty())
                            z += path.z_fine[static_cast<std::size_t>(cell) * m +
                                             static_cast<std::size_t>(c)];
                        incr += G[static_cast<std::size_t>(r * m + c)] * z;
                    }
                    y[static_cast<std::size_t>(r)] += incr;
                }
                const double cur_lv = lv(y.data());
                trap += 0.5 * (prev_lv + cur_lv) * dt;
                prev_lv = cur_lv;
                for (std::size_t q = 0; q < t_nodes.size(); ++q)
                    if (t_nodes[q] == static_cast<std::size_t>(cell) + 1)
                        samples[q][i] = v.g(y.data()) - v0 - trap;
            }
        }
    });

    std::vector<MartingaleResult> out;
    for (std::size_t q = 0; q < t_list.size(); ++q) {
        double mean = 0.0;
        for (double s : samples[q]) mean += s;
        mean /= static_cast<double>(n_paths);
        double var = 0.0;
        for (double s : samples[q]) var += (s - mean) * (s - mean);
        var /= static_cast<double>(n_paths - 1);
        out.push_back({t_list[q], mean,
                       std::sqrt(var / static_cast<double>(n_paths)), n_paths});
    }
    return out;
}

} // namespace levysde
