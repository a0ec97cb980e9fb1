#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "levysde/drivers.hpp"
#include "levysde/models.hpp"

namespace levysde {

enum class GridKind { uniform, custom, jump_adapted };

struct Partition {
    std::vector<double> times; // tau_0 = 0 < ... < tau_N = T
    GridKind kind = GridKind::uniform;
    double delta = 0.0; // maximum-step bound

    int cells() const { return static_cast<int>(times.size()) - 1; }
    double horizon() const { return times.back(); }

    void validate() const {
        if (times.size() < 2) throw std::invalid_argument("Partition: need >= 2 points");
        if (times.front() != 0.0) throw std::invalid_argument("Partition: must start at 0");
        for (std::size_t i = 0; i + 1 < times.size(); ++i) {
            if (!(times[i] < times[i + 1]))
                throw std::invalid_argument("Partition: times must increase strictly");
            if (times[i + 1] - times[i] > delta * (1.0 + 1e-12))
                throw std::invalid_argument("Partition: step exceeds delta bound");
        }
    }
};

inline Partition make_uniform_grid(double T, double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("make_uniform_grid: delta must be > 0");
    if (!(T > 0.0)) throw std::invalid_argument("make_uniform_grid: T must be > 0");
    if (delta > T) delta = T;
    const int cells = static_cast<int>(std::ceil(T / delta - 1e-12));
    Partition p;
    p.kind = GridKind::uniform;
    p.delta = delta;
    p.times.resize(static_cast<std::size_t>(cells) + 1);
    for (int i = 0; i <= cells; ++i)
        p.times[static_cast<std::size_t>(i)] = T * static_cast<double>(i) / cells;
    p.times.back() = T;
    p.validate();
    return p;
}

inline Partition custom_grid(std::vector<double> times, double delta) {
    Partition p;
    p.kind = GridKind::custom;
    p.delta = delta;
    p.times = std::move(times);
    p.validate();
    return p;
}

struct SchemeRun {
    Vec terminal;
    long n_steps = 0;
    double step_sum_sq = 0.0;
    std::uint64_t stream_key = 0;
};

// ---------------------------------------------------------------------------
// Realized driver path over [0, T]. Jumps are stored explicitly; Gaussian
// components (model Wiener, Brownian or stable exact Z, gaussian-case R) are
// stored as per-cell increments of a base grid so that coarser grids coupled
// to the same path aggregate them exactly.
// ---------------------------------------------------------------------------

struct DriverPath {
    double T = 0.0;
    int m = 1, n = 0;
    std::vector<double> jump_times;
    std::vector<double> jump_sizes; // flat, stride m
    Vec comp_rate;                  // m, subtracted linearly in time
    Vec extra_drift;                // m, added linearly in time (drift-case R)
    std::vector<double> base_times; // base grid the arrays below live on
    std::vector<double> z_fine;     // m per base cell: additive Z components
    std::vector<double> w_fine;     // n per base cell: model Wiener increments
    std::uint64_t stream_key = 0;

    bool has_fine() const { return !z_fine.empty() || !w_fine.empty(); }
};

// How the per-cell Z increments of the simple scheme are produced.
struct DriverMode {
    enum Kind { exact, surrogate } kind = exact;
    double sigma_ref = 0.0; // surrogate truncation level
    static DriverMode make_exact() { return {exact, 0.0}; }
    static DriverMode make_surrogate(double sigma_ref) {
        return {surrogate, sigma_ref};
    }
};

namespace detail {

inline void append_jumps(const DriverSpec& spec, double sigma, double T,
                         Stream& rng, DriverPath& path) {
    const double rate = spec.measure.tail_mass(sigma);
    if (rate <= 0.0) return;
    const int m = spec.jump_dim();
    double t = 0.0;
    std::vector<double> buf(static_cast<std::size_t>(m));
    for (;;) {
        t += rng.next_exponential(rate);
        if (t > T) break;
        path.jump_times.push_back(t);
        spec.measure.sample_jump_above(sigma, rng, buf.data());
        path.jump_sizes.insert(path.jump_sizes.end(), buf.begin(), buf.end());
    }
}

} // namespace detail

// Realize the exact driver (requires an exact sampler) on the given base grid.
// Stream order: jumps, then Z gaussian/stable components, then model Wiener.
inline DriverPath realize_exact(const SdeModel& model, const DriverSpec& spec,
                                const Partition& base, Stream& rng) {
    DriverPath path;
    path.T = base.horizon();
    path.m = spec.jump_dim();
    path.n = model.n;
    path.base_times = base.times;
    path.comp_rate = Vec(static_cast<std::size_t>(path.m), 0.0);
    path.extra_drift = Vec(static_cast<std::size_t>(path.m), 0.0);
    path.stream_key = rng.key();
    if (!spec.exact_sampler)
        throw std::runtime_error(
            "realize_exact: driver has no exact sampler; use the surrogate "
            "policy (sigma_ref) instead");
    const int cells = base.cells();
    switch (*spec.exact_sampler) {
        case ExactSampler::compound_poisson: {
            const double rate = spec.measure.cp_rate();
            double t = 0.0;
            std::vector<double> buf(static_cast<std::size_t>(path.m));
            for (;;) {
                t += rng.next_exponential(rate);
                if (t > path.T) break;
                path.jump_times.push_back(t);
                spec.measure.sample_jump_above(0.0, rng, buf.data());
                path.jump_sizes.insert(path.jump_sizes.end(), buf.begin(), buf.end());
            }
            if (spec.compensated()) path.comp_rate = spec.measure.small_drift(1.0);
            break;
        }
        case ExactSampler::brownian: {
            path.z_fine.assign(static_cast<std::size_t>(path.m) * cells, 0.0);
            for (int k = 0; k < cells; ++k) {
                const double dt = base.times[static_cast<std::size_t>(k) + 1] -
                                  base.times[static_cast<std::size_t>(k)];
                const double s = std::sqrt(dt);
                for (int i = 0; i < path.m; ++i)
                    path.z_fine[static_cast<std::size_t>(k) * path.m + i] = s * rng.next_normal();
            }
            break;
        }
        case ExactSampler::stable_cms: {
            if (!spec.measure.symmetric())
                throw std::runtime_error("realize_exact: stable_cms is symmetric-only");
            const double lam = spec.measure.stable_index();
            path.z_fine.assign(static_cast<std::size_t>(path.m) * cells, 0.0);
            for (int k = 0; k < cells; ++k) {
                const double dt = base.times[static_cast<std::size_t>(k) + 1] -
                                  base.times[static_cast<std::size_t>(k)];
                const double s = std::pow(dt, 1.0 / lam);
                for (int i = 0; i < path.m; ++i)
                    path.z_fine[static_cast<std::size_t>(k) * path.m + i] = s * stable_cms(rng, lam);
            }
            break;
        }
    }
    if (model.n > 0) {
        path.w_fine.assign(static_cast<std::size_t>(model.n) * cells, 0.0);
        for (int k = 0; k < cells; ++k) {
            const double dt = base.times[static_cast<std::size_t>(k) + 1] -
                              base.times[static_cast<std::size_t>(k)];
            const double s = std::sqrt(dt);
            for (int i = 0; i < model.n; ++i)
                path.w_fine[static_cast<std::size_t>(k) * model.n + i] = s * rng.next_normal();
        }
    }
    return path;
}

// Realize the substituted driver Z~ = Z^sigma + R^sigma on the base grid.
inline DriverPath realize_truncated(const SdeModel& model, const DriverSpec& spec,
                                    double sigma, const RSigmaRule& rule,
                                    const Partition& base, Stream& rng) {
    DriverPath path;
    path.T = base.horizon();
    path.m = spec.jump_dim();
    path.n = model.n;
    path.base_times = base.times;
    path.stream_key = rng.key();
    path.comp_rate = (spec.compensated() && sigma < 1.0)
                         ? spec.measure.compensator_drift(sigma)
                         : Vec(static_cast<std::size_t>(path.m), 0.0);
    path.extra_drift = Vec(static_cast<std::size_t>(path.m), 0.0);
    detail::append_jumps(spec, sigma, path.T, rng, path);
    const int cells = base.cells();
    if (rule.kind == RCase::drift) {
        path.extra_drift = rule.drift_vector;
    } else if (rule.kind == RCase::gaussian) {
        path.z_fine.assign(static_cast<std::size_t>(path.m) * cells, 0.0);
        Vec z(static_cast<std::size_t>(path.m));
        for (int k = 0; k < cells; ++k) {
            const double dt = base.times[static_cast<std::size_t>(k) + 1] -
                              base.times[static_cast<std::size_t>(k)];
            const double s = std::sqrt(dt);
            for (int i = 0; i < path.m; ++i) z[static_cast<std::size_t>(i)] = s * rng.next_normal();
            for (int i = 0; i < path.m; ++i) {
                double acc = 0.0;
                for (int j = 0; j < path.m; ++j)
                    acc += rule.b_sigma(i, j) * z[static_cast<std::size_t>(j)];
                path.z_fine[static_cast<std::size_t>(k) * path.m + i] = acc;
            }
        }
    }
    if (model.n > 0) {
        path.w_fine.assign(static_cast<std::size_t>(model.n) * cells, 0.0);
        for (int k = 0; k < cells; ++k) {
            const double dt = base.times[static_cast<std::size_t>(k) + 1] -
                              base.times[static_cast<std::size_t>(k)];
            const double s = std::sqrt(dt);
            for (int i = 0; i < model.n; ++i)
                path.w_fine[static_cast<std::size_t>(k) * model.n + i] = s * rng.next_normal();
        }
    }
    return path;
}

// ---------------------------------------------------------------------------
// Euler evaluation of a realized path on a grid. Coefficients are frozen at
// the left endpoint of each cell; the jump that closes a jump-adapted cell
// belongs to that cell. Grid points must appear among the base-grid points
// whenever fine-grid components are present.
// ---------------------------------------------------------------------------

inline SchemeRun run_on_grid(const SdeModel& model, const Partition& grid,
                             const DriverPath& path) {
    const int d = model.d, n = model.n, m = model.m;
    SchemeRun run;
    run.stream_key = path.stream_key;
    run.n_steps = grid.cells();
    Vec y = model.x0;

    // fast path: scalar pure-jump dynamics with no linear-in-time terms
    if (d == 1 && m == 1 && !model.drift && n == 0 && !path.has_fine() &&
        path.comp_rate[0] == 0.0 && path.extra_drift[0] == 0.0 &&
        model.jump_coef) {
        double yy = y[0];
        std::size_t cell = 0;
        const std::vector<double>& times = grid.times;
        double cell_end = times[1];
        double gfrozen;
        model.eval_jump_coef(&yy, &gfrozen);
        for (std::size_t k = 0; k < path.jump_times.size(); ++k) {
            const double tj = path.jump_times[k];
            if (tj > cell_end) {
                while (tj > times[cell + 1]) ++cell;
                cell_end = times[cell + 1];
                model.eval_jump_coef(&yy, &gfrozen);
            }
            yy += gfrozen * path.jump_sizes[k];
        }
        for (std::size_t i = 0; i + 1 < times.size(); ++i) {
            const double dt = times[i + 1] - times[i];
            run.step_sum_sq += dt * dt;
        }
        run.terminal = {yy};
        return run;
    }

    Vec a(static_cast<std::size_t>(d)), b(static_cast<std::size_t>(d * std::max(n, 1)));
    Vec G(static_cast<std::size_t>(d * m));
    Vec dz(static_cast<std::size_t>(m)), dw(static_cast<std::size_t>(std::max(n, 1)));

    std::size_t jcur = 0;   // next jump index
    std::size_t fcur = 0;   // base-grid cursor
    const bool fine = path.has_fine();
    const std::vector<double>& bt = path.base_times;

    for (int cell = 0; cell < grid.cells(); ++cell) {
        const double t0 = grid.times[static_cast<std::size_t>(cell)];
        const double t1 = grid.times[static_cast<std::size_t>(cell) + 1];
        const double dt = t1 - t0;
        run.step_sum_sq += dt * dt;

        model.eval_drift(y.data(), a.data());
        if (n > 0) model.eval_diffusion(y.data(), b.data());
        model.eval_jump_coef(y.data(), G.data());

        // aggregate fine-grid components over this cell
        for (int i = 0; i < m; ++i) dz[static_cast<std::size_t>(i)] = 0.0;
        for (int i = 0; i < n; ++i) dw[static_cast<std::size_t>(i)] = 0.0;
        if (fine) {
            while (fcur + 1 < bt.size() && bt[fcur + 1] <= t1 + 1e-12 * path.T) {
                if (!path.z_fine.empty())
                    for (int i = 0; i < m; ++i)
                        dz[static_cast<std::size_t>(i)] += path.z_fine[fcur * m + static_cast<std::size_t>(i)];
                if (!path.w_fine.empty())
                    for (int i = 0; i < n; ++i)
                        dw[static_cast<std::size_t>(i)] += path.w_fine[fcur * n + static_cast<std::size_t>(i)];
                ++fcur;
            }
            if (std::abs(bt[fcur] - t1) > 1e-9 * std::max(1.0, path.T))
                throw std::invalid_argument(
                    "run_on_grid: grid point does not lie on the base grid");
        }
        for (int i = 0; i < m; ++i)
            dz[static_cast<std::size_t>(i)] +=
                (path.extra_drift[static_cast<std::size_t>(i)] -
                 path.comp_rate[static_cast<std::size_t>(i)]) * dt;

        // jumps inside (t0, t1], applied in time order with G frozen
        while (jcur < path.jump_times.size() && path.jump_times[jcur] <= t1) {
            for (int i = 0; i < d; ++i) {
                double gj = 0.0;
                for (int j = 0; j < m; ++j)
                    gj += G[static_cast<std::size_t>(i * m + j)] *
                          path.jump_sizes[jcur * static_cast<std::size_t>(m) + static_cast<std::size_t>(j)];
                y[static_cast<std::size_t>(i)] += gj;
            }
            ++jcur;
        }

        // lumped drift + diffusion + continuous Z components
        for (int i = 0; i < d; ++i) {
            double incr = a[static_cast<std::size_t>(i)] * dt;
            for (int k = 0; k < n; ++k)
                incr += b[static_cast<std::size_t>(i * n + k)] * dw[static_cast<std::size_t>(k)];
            for (int j = 0; j < m; ++j)
                incr += G[static_cast<std::size_t>(i * m + j)] * dz[static_cast<std::size_t>(j)];
            y[static_cast<std::size_t>(i)] += incr;
        }
    }
    run.terminal = std::move(y);
    return run;
}

// ---------------------------------------------------------------------------
// The three schemes, drawing everything from the caller's stream.
// ---------------------------------------------------------------------------

// Simple weak Euler on a deterministic grid with exact (or surrogate-exact)
// driver increments.
inline SchemeRun simple_euler(const SdeModel& model, const Partition& grid,
                              const DriverSpec& spec, Stream& rng,
                              DriverMode mode = DriverMode::make_exact()) {
    model.validate();
    grid.validate();
    DriverPath path;
    if (mode.kind == DriverMode::exact) {
        path = realize_exact(model, spec, grid, rng);
    } else {
        const RSigmaRule rule =
            RSigmaRule::make(spec.measure, spec.alpha, spec.beta, mode.sigma_ref);
        path = realize_truncated(model, spec, mode.sigma_ref, rule, grid, rng);
    }
    return run_on_grid(model, grid, path);
}

// Approximate Euler: driver increments replaced by Z~ = Z^sigma + R^sigma.
inline SchemeRun approx_euler(const SdeModel& model, const Partition& grid,
                              const DriverSpec& spec, double sigma,
                              const RSigmaRule& rule, Stream& rng) {
    model.validate();
    grid.validate();
    DriverPath path = realize_truncated(model, spec, sigma, rule, grid, rng);
    return run_on_grid(model, grid, path);
}

// Jump-adapted random partition: cells end at the next Z^sigma jump, at
// tau_i + delta, or at T, whichever comes first. Returns the jump stream so
// the integrator can reuse the same jumps.
inline std::pair<Partition, JumpSegment> jump_adapted_partition(
    const DriverSpec& spec, double sigma, double delta, double T, Stream& rng) {
    if (!(delta > 0.0)) throw std::invalid_argument("jump_adapted_partition: delta > 0");
    if (!(T > 0.0)) throw std::invalid_argument("jump_adapted_partition: T > 0");
    JumpSegment seg;
    seg.s = 0.0;
    seg.t = T;
    seg.dim = spec.jump_dim();
    seg.compensator_rate = (spec.compensated() && sigma < 1.0)
                               ? spec.measure.compensator_drift(sigma)
                               : Vec(static_cast<std::size_t>(seg.dim), 0.0);
    const double rate = spec.measure.tail_mass(sigma);
    Partition p;
    p.kind = GridKind::jump_adapted;
    p.delta = delta;
    p.times.push_back(0.0);
    double tau = 0.0;
    double next_jump = rate > 0.0 ? rng.next_exponential(rate) : 2.0 * T + delta;
    std::vector<double> buf(static_cast<std::size_t>(seg.dim));
    while (tau < T) {
        double next = std::min(tau + delta, T);
        if (next_jump <= next) {
            next = next_jump;
            seg.times.push_back(next_jump);
            spec.measure.sample_jump_above(sigma, rng, buf.data());
            seg.sizes.insert(seg.sizes.end(), buf.begin(), buf.end());
            next_jump += rng.next_exponential(rate);
        }
        p.times.push_back(next);
        tau = next;
    }
    p.times.back() = T;
    p.validate();
    return {std::move(p), std::move(seg)};
}

// Jump-adapted Euler: the recursion runs on the random partition, driven by
// Z~ increments built from the same jump stream that defined the partition.
inline SchemeRun jump_adapted_euler(const SdeModel& model, const DriverSpec& spec,
                                    double sigma, const RSigmaRule& rule,
                                    double delta, double T, Stream& rng) {
    model.validate();
    auto [grid, seg] = jump_adapted_partition(spec, sigma, delta, T, rng);
    const int d = model.d, n = model.n, m = model.m;
    SchemeRun run;
    run.stream_key = rng.key();
    run.n_steps = grid.cells();
    Vec y = model.x0;
    Vec a(static_cast<std::size_t>(d)), b(static_cast<std::size_t>(d * std::max(n, 1)));
    Vec G(static_cast<std::size_t>(d * m));
    Vec dz(static_cast<std::size_t>(m)), dw(static_cast<std::size_t>(std::max(n, 1)));
    Vec r(static_cast<std::size_t>(m));
    std::size_t jcur = 0;
    for (int cell = 0; cell < grid.cells(); ++cell) {
        const double t0 = grid.times[static_cast<std::size_t>(cell)];
        const double t1 = grid.times[static_cast<std::size_t>(cell) + 1];
        const double dt = t1 - t0;
        run.step_sum_sq += dt * dt;
        model.eval_drift(y.data(), a.data());
        if (n > 0) model.eval_diffusion(y.data(), b.data());
        model.eval_jump_coef(y.data(), G.data());
        if (n > 0) wiener_increment(rng, dt, n, dw.data());
        r_sigma_increment(rule, dt, rng, r.data(), m);
        for (int i = 0; i < m; ++i)
            dz[static_cast<std::size_t>(i)] =
                r[static_cast<std::size_t>(i)] -
                seg.compensator_rate[static_cast<std::size_t>(i)] * dt;
        while (jcur < seg.times.size() && seg.times[jcur] <= t1) {
            for (int i = 0; i < m; ++i)
                dz[static_cast<std::size_t>(i)] +=
                    seg.sizes[jcur * static_cast<std::size_t>(m) + static_cast<std::size_t>(i)];
            ++jcur;
        }
        for (int i = 0; i < d; ++i) {
            double incr = a[static_cast<std::size_t>(i)] * dt;
            for (int k = 0; k < n; ++k)
                incr += b[static_cast<std::size_t>(i * n + k)] * dw[static_cast<std::size_t>(k)];
            for (int j = 0; j < m; ++j)
                incr += G[static_cast<std::size_t>(i * m + j)] * dz[static_cast<std::size_t>(j)];
            y[static_cast<std::size_t>(i)] += incr;
        }
    }
    run.terminal = std::move(y);
    return run;
}

} // namespace levysde
