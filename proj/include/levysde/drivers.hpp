#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "levysde/levy_measure.hpp"
#include "levysde/matrix.hpp"
#include "levysde/rng.hpp"

namespace levysde {

enum class ExactSampler { brownian, compound_poisson, stable_cms };

// Driving-noise specification: the jump measure plus the declared regularity
// parameters the rate theory is phrased in.
struct DriverSpec {
    LevyMeasure measure;
    double alpha; // order of the driver, in (0, 2]
    double beta;  // coefficient/test-function regularity
    double mu;    // tail moment order
    bool has_wiener = false;
    bool has_drift = false;
    std::optional<ExactSampler> exact_sampler;

    DriverSpec(LevyMeasure m, double a, double b, double mu_in,
               bool wiener = false, bool drift = false,
               std::optional<ExactSampler> exact = std::nullopt)
        : measure(std::move(m)), alpha(a), beta(b), mu(mu_in),
          has_wiener(wiener), has_drift(drift), exact_sampler(exact) {
        if (!(alpha > 0.0 && alpha <= 2.0))
            throw std::invalid_argument("DriverSpec: alpha must be in (0, 2]");
        if (alpha < 1.0 && has_drift)
            throw std::invalid_argument("DriverSpec: drift requires alpha >= 1");
        if (alpha < 2.0 && has_wiener)
            throw std::invalid_argument("DriverSpec: Wiener part requires alpha = 2");
        if (!(alpha < beta && beta <= mu && mu <= 2.0 * alpha))
            throw std::invalid_argument(
                "DriverSpec: need alpha < beta <= mu <= 2 alpha");
        measure.check_order(alpha);
        measure.check_tail_moment(mu);
    }

    // moderate jumps are compensated exactly when alpha in (1, 2]
    bool compensated() const { return alpha > 1.0; }

    int jump_dim() const { return measure.dim(); }
};

// One realized segment of the truncated driver Z^sigma on [s, t]: jump times,
// matching sizes (all above sigma) and the compensator rate subtracted
// linearly in time.
struct JumpSegment {
    double s = 0.0, t = 0.0;
    int dim = 1;
    std::vector<double> times;
    std::vector<double> sizes; // flat, stride dim
    Vec compensator_rate;      // length dim

    std::size_t count() const { return times.size(); }

    // increment of Z^sigma over (u, v] within [s, t]
    Vec increment(double u, double v) const {
        Vec inc(static_cast<std::size_t>(dim), 0.0);
        for (std::size_t k = 0; k < times.size(); ++k) {
            if (times[k] > u && times[k] <= v)
                for (int i = 0; i < dim; ++i)
                    inc[static_cast<std::size_t>(i)] +=
                        sizes[k * static_cast<std::size_t>(dim) + static_cast<std::size_t>(i)];
        }
        for (int i = 0; i < dim; ++i)
            inc[static_cast<std::size_t>(i)] -=
                compensator_rate[static_cast<std::size_t>(i)] * (v - u);
        return inc;
    }
};

// Substitution rule for the removed small jumps, per the (alpha, beta) case
// table: replaced by a drift, by a Brownian motion with matched covariance,
// or by nothing.
enum class RCase { drift, gaussian, zero };

inline const char* to_string(RCase c) {
    switch (c) {
        case RCase::drift: return "drift";
        case RCase::gaussian: return "gaussian";
        case RCase::zero: return "zero";
    }
    return "?";
}

struct RSigmaRule {
    RCase kind = RCase::zero;
    Vec drift_vector; // drift case
    Mat b_sigma;      // gaussian case

    static RCase select(double alpha, double beta) {
        if (alpha < beta && beta > 1.0 && beta <= 2.0 && alpha > 0.0 && alpha <= 1.0)
            return RCase::drift;
        if (alpha < beta && beta > 2.0 && beta <= 4.0 && alpha > 1.0 && alpha <= 2.0)
            return RCase::gaussian;
        return RCase::zero;
    }

    static RSigmaRule make(const LevyMeasure& m, double alpha, double beta,
                           double sigma) {
        RSigmaRule r;
        r.kind = select(alpha, beta);
        switch (r.kind) {
            case RCase::drift:
                r.drift_vector = m.small_drift(sigma);
                break;
            case RCase::gaussian:
                r.b_sigma = m.small_cov_sqrt(sigma);
                break;
            case RCase::zero:
                break;
        }
        return r;
    }

    static RSigmaRule forced(RCase kind, const LevyMeasure& m, double sigma) {
        RSigmaRule r;
        r.kind = kind;
        if (kind == RCase::drift) r.drift_vector = m.small_drift(sigma);
        if (kind == RCase::gaussian) r.b_sigma = m.small_cov_sqrt(sigma);
        return r;
    }
};

// ---------------------------------------------------------------------------
// Increment generators. All take the caller's stream; dt = 0 yields exact
// zeros so partition edge cells cost nothing.
// ---------------------------------------------------------------------------

inline void wiener_increment(Stream& rng, double dt, int n, double* out) {
    if (dt == 0.0) {
        for (int i = 0; i < n; ++i) out[i] = 0.0;
        return;
    }
    const double s = std::sqrt(dt);
    for (int i = 0; i < n; ++i) out[i] = s * rng.next_normal();
}

inline Vec wiener_increment(Stream& rng, double dt, int n) {
    Vec v(static_cast<std::size_t>(n));
    wiener_increment(rng, dt, n, v.data());
    return v;
}

// Jumps of Z^sigma on (s, t]: homogeneous Poisson times at rate lambda_sigma
// realized through exponential spacings, sizes i.i.d. from the normalized
// restriction of pi to {|v| > sigma}.
inline JumpSegment z_sigma_segment(const DriverSpec& spec, double sigma,
                                   double s, double t, Stream& rng) {
    if (!(t > s)) throw std::invalid_argument("z_sigma_segment: need t > s");
    JumpSegment seg;
    seg.s = s;
    seg.t = t;
    seg.dim = spec.jump_dim();
    seg.compensator_rate =
        (spec.compensated() && sigma < 1.0)
            ? spec.measure.compensator_drift(sigma)
            : Vec(static_cast<std::size_t>(seg.dim), 0.0);
    const double rate = spec.measure.tail_mass(sigma);
    if (rate <= 0.0) return seg;
    double time = s;
    std::vector<double> buf(static_cast<std::size_t>(seg.dim));
    for (;;) {
        time += rng.next_exponential(rate);
        if (time > t) break;
        seg.times.push_back(time);
        spec.measure.sample_jump_above(sigma, rng, buf.data());
        seg.sizes.insert(seg.sizes.end(), buf.begin(), buf.end());
    }
    return seg;
}

inline void r_sigma_increment(const RSigmaRule& rule, double dt, Stream& rng,
                              double* out, int dim) {
    for (int i = 0; i < dim; ++i) out[i] = 0.0;
    if (dt == 0.0) return;
    switch (rule.kind) {
        case RCase::zero:
            return;
        case RCase::drift:
            for (int i = 0; i < dim; ++i)
                out[i] = rule.drift_vector[static_cast<std::size_t>(i)] * dt;
            return;
        case RCase::gaussian: {
            const double s = std::sqrt(dt);
            Vec z(static_cast<std::size_t>(dim));
            for (int i = 0; i < dim; ++i) z[static_cast<std::size_t>(i)] = s * rng.next_normal();
            for (int i = 0; i < dim; ++i) {
                double acc = 0.0;
                for (int j = 0; j < dim; ++j)
                    acc += rule.b_sigma(i, j) * z[static_cast<std::size_t>(j)];
                out[i] = acc;
            }
            return;
        }
    }
}

inline Vec r_sigma_increment(const RSigmaRule& rule, double dt, Stream& rng,
                             int dim) {
    Vec v(static_cast<std::size_t>(dim));
    r_sigma_increment(rule, dt, rng, v.data(), dim);
    return v;
}

// symmetric lambda-stable standard variate (Chambers-Mallows-Stuck)
inline double stable_cms(Stream& rng, double lambda) {
    const double theta =
        std::numbers::pi * (rng.next_double() - 0.5); // uniform (-pi/2, pi/2)
    if (lambda == 1.0) return std::tan(theta);
    const double w = -std::log(rng.next_double_pos()); // Exp(1)
    const double s = std::sin(lambda * theta) /
                     std::pow(std::cos(theta), 1.0 / lambda);
    const double tail =
        std::pow(std::cos((1.0 - lambda) * theta) / w, (1.0 - lambda) / lambda);
    return s * tail;
}

// Exact increment of Z over a cell of width dt, where the law is samplable.
inline void z_exact_increment(const DriverSpec& spec, double dt, Stream& rng,
                              double* out) {
    const int m = spec.jump_dim();
    for (int i = 0; i < m; ++i) out[i] = 0.0;
    if (!spec.exact_sampler)
        throw std::runtime_error(
            "z_exact_increment: no exact sampler for this driver; simulate "
            "with the surrogate policy Z^sigma_ref + R^sigma_ref instead");
    if (dt == 0.0) return;
    switch (*spec.exact_sampler) {
        case ExactSampler::brownian: {
            const double s = std::sqrt(dt);
            for (int i = 0; i < m; ++i) out[i] = s * rng.next_normal();
            return;
        }
        case ExactSampler::compound_poisson: {
            const double rate = spec.measure.cp_rate();
            std::vector<double> buf(static_cast<std::size_t>(m));
            double time = 0.0;
            for (;;) {
                time += rng.next_exponential(rate);
                if (time > dt) break;
                spec.measure.sample_jump_above(0.0, rng, buf.data());
                for (int i = 0; i < m; ++i) out[i] += buf[static_cast<std::size_t>(i)];
            }
            if (spec.compensated()) {
                const Vec comp = spec.measure.small_drift(1.0);
                for (int i = 0; i < m; ++i) out[i] -= dt * comp[static_cast<std::size_t>(i)];
            }
            return;
        }
        case ExactSampler::stable_cms: {
            if (!spec.measure.symmetric())
                throw std::runtime_error(
                    "z_exact_increment: stable_cms supports the symmetric case only");
            const double lam = spec.measure.stable_index();
            const double scale = std::pow(dt, 1.0 / lam);
            for (int i = 0; i < m; ++i) out[i] = scale * stable_cms(rng, lam);
            return;
        }
    }
}

inline Vec z_exact_increment(const DriverSpec& spec, double dt, Stream& rng) {
    Vec v(static_cast<std::size_t>(spec.jump_dim()));
    z_exact_increment(spec, dt, rng, v.data());
    return v;
}

// Increment of Z~ = Z^sigma + R^sigma over [s, t]: the truncated-jump part
// first, then an independent R part, from the same stream in that order.
inline Vec z_tilde_increment(const DriverSpec& spec, double sigma,
                             const RSigmaRule& rule, double s, double t,
                             Stream& rng) {
    const int m = spec.jump_dim();
    JumpSegment seg = z_sigma_segment(spec, sigma, s, t, rng);
    Vec inc = seg.increment(s, t);
    Vec r = r_sigma_increment(rule, t - s, rng, m);
    for (int i = 0; i < m; ++i) inc[static_cast<std::size_t>(i)] += r[static_cast<std::size_t>(i)];
    return inc;
}

} // namespace levysde
