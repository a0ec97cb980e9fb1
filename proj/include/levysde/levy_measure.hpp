#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "levysde/matrix.hpp"
#include "levysde/quadrature.hpp"
#include "levysde/rng.hpp"

namespace levysde {

enum class MeasureKind {
    compound_poisson,
    truncated_stable,
    tempered_stable_1d,
    tabulated_density,
};

enum class Side { symmetric, positive };

inline const char* to_string(MeasureKind k) {
    switch (k) {
        case MeasureKind::compound_poisson: return "compound_poisson";
        case MeasureKind::truncated_stable: return "truncated_stable";
        case MeasureKind::tempered_stable_1d: return "tempered_stable_1d";
        case MeasureKind::tabulated_density: return "tabulated_density";
    }
    return "?";
}

// surface area of the unit sphere in R^m
inline double sphere_area(int m) {
    return 2.0 * std::pow(std::numbers::pi, 0.5 * m) / std::tgamma(0.5 * m);
}

// ---------------------------------------------------------------------------
// Jump-size distributions for the compound Poisson kind. Each carries exact
// first/second moments and an exact sampler.
// ---------------------------------------------------------------------------

struct PointMassJump {
    Vec value; // the single jump vector
};

// |v| uniform on [lo, hi]; direction uniform on the sphere (symmetric) or the
// positive axis (positive, dim 1 only).
struct UniformRadialJump {
    double lo = 0.0;
    double hi = 1.0;
};

using JumpDist = std::variant<PointMassJump, UniformRadialJump>;

// Small-radius replacement of a direction-averaged generator integrand:
// below r_switch the exact difference quotient is pure cancellation noise
// that a singular density amplifies, so callers supply the Taylor
// coefficients of the averaged integrand, c1 r + c2 r^2.
struct SmallJumpExpansion {
    double r_switch = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
};

// ---------------------------------------------------------------------------
// LevyMeasure: a closed catalog of jump measures for which every functional
// needed by the schemes reduces to a closed form or a 1-d radial quadrature.
// Immutable after construction; samplers mutate only the caller's stream.
// ---------------------------------------------------------------------------

class LevyMeasure {
public:
    static constexpr double kInf = std::numeric_limits<double>::infinity();

    static LevyMeasure compound_poisson(double rate, JumpDist jumps,
                                        Side side = Side::positive) {
        LevyMeasure m;
        m.kind_ = MeasureKind::compound_poisson;
        m.rate_ = rate;
        m.jumps_ = std::move(jumps);
        m.side_ = side;
        if (rate <= 0.0) throw std::invalid_argument("compound_poisson: rate must be > 0");
        if (const auto* pm = std::get_if<PointMassJump>(&m.jumps_)) {
            if (pm->value.empty()) throw std::invalid_argument("point mass jump needs a value");
            if (side == Side::symmetric)
                throw std::invalid_argument("point-mass jumps cannot be symmetric");
            m.dim_ = static_cast<int>(pm->value.size());
            double s = 0.0;
            for (double x : pm->value) s += x * x;
            m.point_norm_ = std::sqrt(s);
            if (m.point_norm_ <= 0.0)
                throw std::invalid_argument("point mass jump must be nonzero");
        } else {
            const auto& u = std::get<UniformRadialJump>(m.jumps_);
            if (!(u.lo >= 0.0 && u.hi > u.lo))
                throw std::invalid_argument("uniform radial jump needs 0 <= lo < hi");
            m.dim_ = 1;
        }
        m.symmetric_ = (side == Side::symmetric);
        return m;
    }

    // isotropic density c |v|^{-m-lambda} on 0 < |v| <= r0 (dim >= 2), or the
    // one-dimensional two-sided/one-sided analogue
    static LevyMeasure truncated_stable(int dim, double lambda, double c,
                                        double r0, Side side = Side::symmetric) {
        LevyMeasure m;
        m.kind_ = MeasureKind::truncated_stable;
        m.dim_ = dim;
        m.lambda_ = lambda;
        m.c_ = c;
        m.r0_ = r0;
        m.side_ = side;
        if (dim < 1) throw std::invalid_argument("truncated_stable: dim must be >= 1");
        if (!(lambda > 0.0 && lambda < 2.0))
            throw std::invalid_argument("truncated_stable: stability index must be in (0,2)");
        if (c <= 0.0 || r0 <= 0.0)
            throw std::invalid_argument("truncated_stable: c and r0 must be > 0");
        if (side == Side::positive && dim != 1)
            throw std::invalid_argument("one-sided truncated_stable requires dim 1");
        m.symmetric_ = (side == Side::symmetric);
        return m;
    }

    static LevyMeasure tempered_stable_1d(double lambda, double c, double theta,
                                          Side side = Side::symmetric) {
        LevyMeasure m;
        m.kind_ = MeasureKind::tempered_stable_1d;
        m.dim_ = 1;
        m.lambda_ = lambda;
        m.c_ = c;
        m.theta_ = theta;
        m.side_ = side;
        if (!(lambda > 0.0 && lambda < 2.0))
            throw std::invalid_argument("tempered_stable_1d: stability index must be in (0,2)");
        if (c <= 0.0 || theta <= 0.0)
            throw std::invalid_argument("tempered_stable_1d: c and theta must be > 0");
        m.symmetric_ = (side == Side::symmetric);
        return m;
    }

    // piecewise-linear one-sided radial density on [r.front(), r.back()],
    // mirrored to the negative axis when symmetric
    static LevyMeasure tabulated_density(Vec r, Vec f, Side side = Side::symmetric) {
        LevyMeasure m;
        m.kind_ = MeasureKind::tabulated_density;
        m.dim_ = 1;
        m.side_ = side;
        if (r.size() < 2 || r.size() != f.size())
            throw std::invalid_argument("tabulated_density: need matching grids, >= 2 nodes");
        for (std::size_t i = 0; i + 1 < r.size(); ++i)
            if (!(r[i] < r[i + 1]))
                throw std::invalid_argument("tabulated_density: grid must increase strictly");
        if (r.front() <= 0.0)
            throw std::invalid_argument("tabulated_density: grid must start above 0");
        for (double v : f)
            if (v < 0.0) throw std::invalid_argument("tabulated_density: negative density");
        m.tab_r_ = std::move(r);
        m.tab_f_ = std::move(f);
        m.symmetric_ = (side == Side::symmetric);
        return m;
    }

    MeasureKind kind() const { return kind_; }
    int dim() const { return dim_; }
    bool symmetric() const { return symmetric_; }
    double stable_index() const { return lambda_; }
    double cp_rate() const { return rate_; }

    // the jump vector of a point-mass compound Poisson measure
    Vec point_jump() const {
        if (const auto* pm = std::get_if<PointMassJump>(&jumps_)) return pm->value;
        throw std::logic_error("point_jump: measure is not a point-mass compound Poisson");
    }

    // infimum of |v| over the support
    double min_jump() const {
        switch (kind_) {
            case MeasureKind::compound_poisson:
                if (std::holds_alternative<PointMassJump>(jumps_)) return point_norm_;
                return std::get<UniformRadialJump>(jumps_).lo;
            case MeasureKind::truncated_stable: return 0.0;
            case MeasureKind::tempered_stable_1d: return 0.0;
            case MeasureKind::tabulated_density: return tab_r_.front();
        }
        return 0.0;
    }

    double support_radius() const {
        switch (kind_) {
            case MeasureKind::compound_poisson:
                if (std::holds_alternative<PointMassJump>(jumps_)) return point_norm_;
                return std::get<UniformRadialJump>(jumps_).hi;
            case MeasureKind::truncated_stable: return r0_;
            case MeasureKind::tempered_stable_1d: return kInf;
            case MeasureKind::tabulated_density: return tab_r_.back();
        }
        return kInf;
    }

    // ---- closed-form functionals -----------------------------------------

    // pi({|v| > sigma})
    double tail_mass(double sigma) const {
        if (!(sigma > 0.0)) throw std::invalid_argument("tail_mass: sigma must be > 0");
        switch (kind_) {
            case MeasureKind::compound_poisson: {
                if (std::holds_alternative<PointMassJump>(jumps_))
                    return point_norm_ > sigma ? rate_ : 0.0;
                const auto& u = std::get<UniformRadialJump>(jumps_);
                if (sigma >= u.hi) return 0.0;
                const double lo = std::max(sigma, u.lo);
                return rate_ * (u.hi - lo) / (u.hi - u.lo);
            }
            case MeasureKind::truncated_stable: {
                if (sigma >= r0_) return 0.0;
                return radial_coeff() / lambda_ *
                       (std::pow(sigma, -lambda_) - std::pow(r0_, -lambda_));
            }
            case MeasureKind::tempered_stable_1d:
                return quad_tail_mass(sigma);
            case MeasureKind::tabulated_density:
                return tab_moment(sigma, tab_r_.back(), 0.0);
        }
        return 0.0;
    }

    // int_{|v| <= sigma} |v|^p dpi
    double small_moment(double sigma, double p) const {
        if (!(sigma > 0.0)) throw std::invalid_argument("small_moment: sigma must be > 0");
        switch (kind_) {
            case MeasureKind::compound_poisson: {
                if (std::holds_alternative<PointMassJump>(jumps_))
                    return point_norm_ <= sigma ? rate_ * std::pow(point_norm_, p) : 0.0;
                const auto& u = std::get<UniformRadialJump>(jumps_);
                if (sigma <= u.lo) return 0.0;
                const double hi = std::min(sigma, u.hi);
                return rate_ / (u.hi - u.lo) *
                       (std::pow(hi, p + 1.0) - std::pow(u.lo, p + 1.0)) / (p + 1.0);
            }
            case MeasureKind::truncated_stable: {
                if (p <= lambda_)
                    throw std::invalid_argument(
                        "small_moment: exponent p = " + std::to_string(p) +
                        " must exceed the stability index " + std::to_string(lambda_) +
                        " for the integral near 0 to converge");
                const double s = std::min(sigma, r0_);
                return radial_coeff() / (p - lambda_) * std::pow(s, p - lambda_);
            }
            case MeasureKind::tempered_stable_1d: {
                if (p <= lambda_)
                    throw std::invalid_argument(
                        "small_moment: exponent p = " + std::to_string(p) +
                        " must exceed the stability index " + std::to_string(lambda_) +
                        " for the integral near 0 to converge");
                return quad_small_moment(sigma, p);
            }
            case MeasureKind::tabulated_density:
                return tab_moment(0.0, std::min(sigma, tab_r_.back()), p);
        }
        return 0.0;
    }

    // int_{sigma < |v| <= 1} v dpi (vector)
    Vec compensator_drift(double sigma) const {
        if (!(sigma > 0.0 && sigma <= 1.0))
            throw std::invalid_argument("compensator_drift: sigma must be in (0, 1]");
        Vec g(static_cast<std::size_t>(dim_), 0.0);
        if (symmetric_ || dim_ > 1) return g; // isotropic kinds have zero mean
        g[0] = signed_first_moment(sigma, 1.0);
        return g;
    }

    // int_{|v| <= sigma} v dpi (vector)
    Vec small_drift(double sigma) const {
        if (!(sigma > 0.0)) throw std::invalid_argument("small_drift: sigma must be > 0");
        Vec g(static_cast<std::size_t>(dim_), 0.0);
        if (symmetric_ || dim_ > 1) return g;
        if (kind_ == MeasureKind::truncated_stable && lambda_ >= 1.0)
            throw std::invalid_argument(
                "small_drift: one-sided stable index >= 1 has no finite first "
                "small-jump moment");
        if (kind_ == MeasureKind::tempered_stable_1d && lambda_ >= 1.0)
            throw std::invalid_argument(
                "small_drift: one-sided tempered index >= 1 has no finite first "
                "small-jump moment");
        g[0] = signed_first_moment(0.0, sigma);
        return g;
    }

    // int_{|v| <= sigma} v v^T dpi
    Mat small_cov(double sigma) const {
        if (!(sigma > 0.0)) throw std::invalid_argument("small_cov: sigma must be > 0");
        Mat cov(dim_);
        const double m2 = small_moment(sigma, 2.0);
        if (dim_ == 1) {
            cov(0, 0) = m2;
            return cov;
        }
        // isotropic kinds: E[v v^T] = (|v|^2 / m) I
        for (int i = 0; i < dim_; ++i) cov(i, i) = m2 / dim_;
        return cov;
    }

    Mat small_cov_sqrt(double sigma, double* max_clamp = nullptr) const {
        return sym_psd_sqrt(small_cov(sigma), 1e-12, max_clamp);
    }

    // ---- quadrature route (independent of the closed forms above) --------

    bool has_density() const {
        return !(kind_ == MeasureKind::compound_poisson &&
                 std::holds_alternative<PointMassJump>(jumps_));
    }

    double tail_mass_quad(double sigma, QuadOptions opt = {}) const {
        return quad_range_moment(sigma, support_radius(), 0.0, opt);
    }

    double small_moment_quad(double sigma, double p, QuadOptions opt = {}) const {
        auto f = [this, p](double r) { return std::pow(r, p) * radial_mass_density(r); };
        const double hi = std::min(sigma, support_radius());
        return require_converged(integrate_radial_singular(f, hi, opt),
                                 "small_moment_quad");
    }

    Vec compensator_drift_quad(double sigma, QuadOptions opt = {}) const {
        Vec g(static_cast<std::size_t>(dim_), 0.0);
        if (dim_ > 1 || symmetric_) return g; // positive and negative parts cancel
        auto f = [this](double r) { return r * radial_mass_density(r); };
        const double hi = std::min(1.0, support_radius());
        if (sigma < hi)
            g[0] = require_converged(integrate(f, sigma, hi, opt),
                                     "compensator_drift_quad");
        return g;
    }

    double small_cov_scalar_quad(double sigma, QuadOptions opt = {}) const {
        return small_moment_quad(sigma, 2.0, opt);
    }

    // ---- sampling ---------------------------------------------------------

    // one draw from the normalized restriction of pi to {|v| > sigma};
    // writes dim() components to out
    void sample_jump_above(double sigma, Stream& rng, double* out) const {
        switch (kind_) {
            case MeasureKind::compound_poisson: {
                if (const auto* pm = std::get_if<PointMassJump>(&jumps_)) {
                    if (point_norm_ <= sigma)
                        throw std::runtime_error(
                            "sample_jump_above: no mass above sigma (point mass)");
                    for (int i = 0; i < dim_; ++i) out[i] = pm->value[static_cast<std::size_t>(i)];
                    return;
                }
                const auto& u = std::get<UniformRadialJump>(jumps_);
                if (sigma >= u.hi)
                    throw std::runtime_error("sample_jump_above: no mass above sigma");
                const double lo = std::max(sigma, u.lo);
                const double r = lo + (u.hi - lo) * rng.next_double();
                out[0] = (side_ == Side::symmetric) ? r * rng.next_sign() : r;
                return;
            }
            case MeasureKind::truncated_stable: {
                if (sigma >= r0_)
                    throw std::runtime_error("sample_jump_above: no mass above sigma");
                const double s = std::max(sigma, 0.0);
                const double a = std::pow(s, -lambda_);
                const double b = std::pow(r0_, -lambda_);
                const double x = a - rng.next_double() * (a - b);
                double r;
                if (lambda_ == 0.5)
                    r = 1.0 / (x * x);
                else if (lambda_ == 1.0)
                    r = 1.0 / x;
                else
                    r = std::pow(x, -1.0 / lambda_);
                emit_direction(r, rng, out);
                return;
            }
            case MeasureKind::tempered_stable_1d: {
                // rejection from the pure-stable envelope on (sigma, inf)
                const int cap = 100000;
                int attempts = 0;
                for (; attempts < cap; ++attempts) {
                    const double r = sigma * std::pow(rng.next_double_pos(), -1.0 / lambda_);
                    if (rng.next_double() <= std::exp(-theta_ * (r - sigma))) {
                        out[0] = (side_ == Side::symmetric) ? r * rng.next_sign() : r;
                        return;
                    }
                }
                throw std::runtime_error(
                    "sample_jump_above: tempered-stable rejection cap hit after " +
                    std::to_string(cap) + " attempts (acceptance rate < " +
                    std::to_string(1.0 / cap) + ")");
            }
            case MeasureKind::tabulated_density: {
                tab_sample_above(sigma, rng, out);
                return;
            }
        }
    }

    Vec sample_jump_above(double sigma, Stream& rng) const {
        Vec v(static_cast<std::size_t>(dim_));
        sample_jump_above(sigma, rng, v.data());
        return v;
    }

    // ---- generator support: int h(v) dpi over the whole measure -----------

    // h maps a jump vector (length dim) to a scalar. dim <= 2 supported.
    double integrate_jump(const std::function<double(const double*)>& h,
                          QuadOptions opt = {},
                          SmallJumpExpansion small = {}) const {
        if (kind_ == MeasureKind::compound_poisson) {
            if (const auto* pm = std::get_if<PointMassJump>(&jumps_))
                return rate_ * h(pm->value.data());
        }
        if (dim_ > 2)
            throw std::invalid_argument("integrate_jump: dim > 2 not supported");
        auto avg_dir = [this, &h](double r) {
            if (dim_ == 1) {
                double v = r;
                if (side_ == Side::positive) return h(&v);
                double vn = -r;
                return 0.5 * (h(&v) + h(&vn));
            }
            // dim == 2: periodic trapezoid over the circle
            constexpr int K = 64;
            double s = 0.0;
            for (int k = 0; k < K; ++k) {
                const double th = 2.0 * std::numbers::pi * k / K;
                const double v[2] = {r * std::cos(th), r * std::sin(th)};
                s += h(v);
            }
            return s / K;
        };
        auto f = [this, &avg_dir, &small](double r) {
            const double val = r < small.r_switch
                                   ? small.c1 * r + small.c2 * r * r
                                   : avg_dir(r);
            return radial_mass_density(r) * val;
        };
        const double rmax = support_radius();
        double total = 0.0;
        const double split = std::min(1.0, rmax);
        total += require_converged(integrate_radial_singular(f, split, opt),
                                   "integrate_jump (inner)");
        if (rmax > split) {
            if (std::isinf(rmax))
                total += require_converged(integrate_tail(f, split, opt),
                                           "integrate_jump (tail)");
            else
                total += require_converged(integrate(f, split, rmax, opt),
                                           "integrate_jump (outer)");
        }
        return total;
    }

    // ---- hypothesis checks (mechanical, per the quadrature design) --------

    // int (|v|^alpha ^ 1) dpi finite: the adaptive routine must converge on the
    // log-substituted small-ball integral and stay below a sanity cap.
    void check_order(double alpha) const {
        if (!(alpha > 0.0 && alpha <= 2.0))
            throw std::invalid_argument("order alpha must be in (0, 2]");
        auto f = [this, alpha](double r) {
            return std::pow(r, alpha) * radial_mass_density(r);
        };
        const double split = std::min(1.0, support_radius());
        QuadResult q = has_density()
                           ? integrate_radial_singular(f, split)
                           : QuadResult{small_moment(split, alpha), 0.0, 0, true};
        constexpr double cap = 1e6;
        if (!q.converged || !(q.value <= cap))
            throw std::invalid_argument(
                "order check failed: int_{|v|<=1} |v|^alpha dpi did not "
                "converge for alpha = " + std::to_string(alpha));
    }

    // int_{|v| > 1} |v|^mu dpi finite
    void check_tail_moment(double mu) const {
        const double rmax = support_radius();
        if (rmax <= 1.0) return; // no mass above 1
        if (!has_density()) {
            (void)small_moment(rmax, mu); // point mass: always finite
            return;
        }
        auto f = [this, mu](double r) {
            return std::pow(r, mu) * radial_mass_density(r);
        };
        QuadResult q = std::isinf(rmax) ? integrate_tail(f, 1.0)
                                        : integrate(f, 1.0, rmax);
        constexpr double cap = 1e9;
        if (!q.converged || !(q.value <= cap))
            throw std::invalid_argument(
                "tail moment check failed: int_{|v|>1} |v|^mu dpi is not finite "
                "for mu = " + std::to_string(mu));
    }

    // total mass density over the radius r (angular part integrated out)
    double radial_mass_density(double r) const {
        switch (kind_) {
            case MeasureKind::compound_poisson: {
                if (std::holds_alternative<PointMassJump>(jumps_)) return 0.0;
                const auto& u = std::get<UniformRadialJump>(jumps_);
                return (r >= u.lo && r <= u.hi) ? rate_ / (u.hi - u.lo) : 0.0;
            }
            case MeasureKind::truncated_stable:
                return (r > 0.0 && r <= r0_)
                           ? radial_coeff() * std::pow(r, -1.0 - lambda_)
                           : 0.0;
            case MeasureKind::tempered_stable_1d:
                return r > 0.0 ? side_factor() * c_ * std::exp(-theta_ * r) *
                                     std::pow(r, -1.0 - lambda_)
                               : 0.0;
            case MeasureKind::tabulated_density:
                return side_factor() * tab_interp(r);
        }
        return 0.0;
    }

private:
    LevyMeasure() = default;

    double side_factor() const { return side_ == Side::symmetric ? 2.0 : 1.0; }

    // angular factor times c for the stable radial mass density
    double radial_coeff() const {
        if (dim_ == 1) return side_factor() * c_;
        return sphere_area(dim_) * c_;
    }

    // int_lo^hi r * (one-sided density) dr for the signed (one-sided) mean
    double signed_first_moment(double lo, double hi) const {
        switch (kind_) {
            case MeasureKind::compound_poisson: {
                if (const auto* pm = std::get_if<PointMassJump>(&jumps_)) {
                    const double r = point_norm_;
                    return (r > lo && r <= hi) ? rate_ * pm->value[0] : 0.0;
                }
                const auto& u = std::get<UniformRadialJump>(jumps_);
                const double a = std::max(lo, u.lo), b = std::min(hi, u.hi);
                if (a >= b) return 0.0;
                return rate_ / (u.hi - u.lo) * 0.5 * (b * b - a * a);
            }
            case MeasureKind::truncated_stable: {
                const double a = std::max(lo, 0.0), b = std::min(hi, r0_);
                if (a >= b) return 0.0;
                if (lambda_ == 1.0) return c_ * std::log(b / std::max(a, 1e-300));
                const double e = 1.0 - lambda_;
                return c_ / e * (std::pow(b, e) - (a > 0.0 ? std::pow(a, e) : 0.0));
            }
            case MeasureKind::tempered_stable_1d: {
                auto f = [this](double r) {
                    return c_ * std::exp(-theta_ * r) * std::pow(r, -lambda_);
                };
                if (lo == 0.0)
                    return require_converged(integrate_radial_singular(f, hi),
                                             "one-sided first moment");
                return require_converged(integrate(f, lo, hi),
                                         "one-sided first moment");
            }
            case MeasureKind::tabulated_density: {
                const double coeff = side_factor();
                return tab_moment(lo, hi, 1.0) / coeff; // tab_moment counts both sides
            }
        }
        return 0.0;
    }

    double quad_tail_mass(double sigma) const {
        return quad_range_moment(sigma, support_radius(), 0.0, {});
    }

    double quad_small_moment(double sigma, double p) const {
        auto f = [this, p](double r) { return std::pow(r, p) * radial_mass_density(r); };
        return require_converged(
            integrate_radial_singular(f, std::min(sigma, support_radius())),
            "small moment");
    }

    double quad_range_moment(double lo, double hi, double p, QuadOptions opt) const {
        auto f = [this, p](double r) {
            return (p == 0.0 ? 1.0 : std::pow(r, p)) * radial_mass_density(r);
        };
        if (lo >= hi) return 0.0;
        if (std::isinf(hi))
            return require_converged(integrate_tail(f, lo, opt), "tail moment");
        return require_converged(integrate(f, lo, hi, opt), "range moment");
    }

    void emit_direction(double r, Stream& rng, double* out) const {
        if (dim_ == 1) {
            out[0] = (side_ == Side::symmetric) ? r * rng.next_sign() : r;
            return;
        }
        double norm2 = 0.0;
        do {
            norm2 = 0.0;
            for (int i = 0; i < dim_; ++i) {
                out[i] = rng.next_normal();
                norm2 += out[i] * out[i];
            }
        } while (norm2 < 1e-300);
        const double inv = r / std::sqrt(norm2);
        for (int i = 0; i < dim_; ++i) out[i] *= inv;
    }

    // ---- tabulated-density helpers: exact integrals of the interpolant ----

    double tab_interp(double r) const {
        if (r < tab_r_.front() || r > tab_r_.back()) return 0.0;
        std::size_t i = 1;
        while (i + 1 < tab_r_.size() && tab_r_[i] < r) ++i;
        const double r0 = tab_r_[i - 1], r1 = tab_r_[i];
        const double f0 = tab_f_[i - 1], f1 = tab_f_[i];
        return f0 + (f1 - f0) * (r - r0) / (r1 - r0);
    }

    // int_lo^hi r^p rho(r) dr with rho the full (both-sides) density
    double tab_moment(double lo, double hi, double p) const {
        const double coeff = side_factor();
        double total = 0.0;
        for (std::size_t i = 0; i + 1 < tab_r_.size(); ++i) {
            const double a = std::max(lo, tab_r_[i]);
            const double b = std::min(hi, tab_r_[i + 1]);
            if (a >= b) continue;
            const double slope = (tab_f_[i + 1] - tab_f_[i]) / (tab_r_[i + 1] - tab_r_[i]);
            const double inter = tab_f_[i] - slope * tab_r_[i];
            // integral of r^p (inter + slope r)
            total += inter * (std::pow(b, p + 1.0) - std::pow(a, p + 1.0)) / (p + 1.0);
            total += slope * (std::pow(b, p + 2.0) - std::pow(a, p + 2.0)) / (p + 2.0);
        }
        return coeff * total;
    }

    void tab_sample_above(double sigma, Stream& rng, double* out) const {
        const double total = tab_moment(sigma, tab_r_.back(), 0.0);
        if (total <= 0.0)
            throw std::runtime_error("sample_jump_above: no tabulated mass above sigma");
        double target = rng.next_double() * total;
        for (std::size_t i = 0; i + 1 < tab_r_.size(); ++i) {
            const double a = std::max(sigma, tab_r_[i]);
            const double b = tab_r_[i + 1];
            if (a >= b) continue;
            const double cell = tab_moment(a, b, 0.0);
            if (target > cell) {
                target -= cell;
                continue;
            }
            // solve for r in [a, b]: integral of the linear density = target
            const double coeff = side_factor();
            const double slope = (tab_f_[i + 1] - tab_f_[i]) / (tab_r_[i + 1] - tab_r_[i]);
            const double inter = tab_f_[i] - slope * tab_r_[i];
            // coeff * [inter (r - a) + slope/2 (r^2 - a^2)] = target
            double r;
            if (std::abs(slope) < 1e-300) {
                r = a + target / (coeff * inter);
            } else {
                const double A = 0.5 * slope, B = inter;
                const double C = -(target / coeff + A * a * a + B * a);
                const double disc = std::max(0.0, B * B - 4.0 * A * C);
                r = (-B + std::sqrt(disc)) / (2.0 * A);
                if (!(r >= a && r <= b)) r = std::min(std::max(r, a), b);
            }
            out[0] = (side_ == Side::symmetric) ? r * rng.next_sign() : r;
            return;
        }
        out[0] = (side_ == Side::symmetric) ? tab_r_.back() * rng.next_sign()
                                            : tab_r_.back();
    }

    MeasureKind kind_ = MeasureKind::compound_poisson;
    int dim_ = 1;
    bool symmetric_ = false;
    Side side_ = Side::symmetric;

    // compound poisson
    double rate_ = 0.0;
    JumpDist jumps_;
    double point_norm_ = 0.0;

    // stable family
    double lambda_ = 0.0;
    double c_ = 0.0;
    double r0_ = 0.0;
    double theta_ = 0.0;

    // tabulated
    Vec tab_r_, tab_f_;
};

// ---------------------------------------------------------------------------
// Truncation functionals bundled for one (measure, sigma, beta) triple.
// ---------------------------------------------------------------------------

struct TruncationFunctionals {
    double sigma = 0.0;
    double lambda_sigma = 0.0; // tail mass above sigma
    double phi = 0.0;          // int_{|v|<=sigma} |v|^{beta ^ 3} dpi
    Vec gamma;                 // compensator drift over (sigma, 1]
    Vec mu_small;              // mean of jumps below sigma
    Mat cov_small;             // second moment matrix below sigma
    Mat b_sigma;               // symmetric PSD square root of cov_small
    double clamp_applied = 0.0;

    static TruncationFunctionals compute(const LevyMeasure& m, double sigma,
                                         double beta) {
        TruncationFunctionals t;
        t.sigma = sigma;
        t.lambda_sigma = m.tail_mass(sigma);
        t.phi = m.small_moment(sigma, std::min(beta, 3.0));
        t.gamma = sigma <= 1.0 ? m.compensator_drift(sigma)
                               : Vec(static_cast<std::size_t>(m.dim()), 0.0);
        if (m.symmetric() || m.dim() > 1) {
            t.mu_small = Vec(static_cast<std::size_t>(m.dim()), 0.0);
        } else {
            t.mu_small = m.small_drift(sigma);
        }
        t.cov_small = m.small_cov(sigma);
        t.b_sigma = sym_psd_sqrt(t.cov_small, 1e-12, &t.clamp_applied);
        return t;
    }
};

} // namespace levysde
