#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace levysde {

struct QuadResult {
    double value = 0.0;
    double abs_error = 0.0;
    int evaluations = 0;
    bool converged = false;
};

struct QuadOptions {
    double rel_tol = 1e-10;
    double abs_tol = 1e-14;
    int max_intervals = 4000;
};

// Upper limit of the log-substituted radial domain: r = exp(-u), u <= kLogCutoff.
// Radii below exp(-60) ~ 9e-27 carry no representable contribution for the
// integrands handled here.
inline constexpr double kLogCutoff = 60.0;

namespace detail {

// 15-point Kronrod / 7-point Gauss pair (QUADPACK QK15 nodes and weights).
inline constexpr double kXgk[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144838258730, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr double kWgk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double kWg[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class F>
inline void gk15(F&& f, double a, double b, double& value, double& err) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    double resk = 0.0, resg = 0.0;
    const double fc = f(c);
    resk += kWgk[7] * fc;
    resg += kWg[3] * fc;
    for (int j = 0; j < 7; ++j) {
        const double x = h * kXgk[j];
        const double f1 = f(c - x);
        const double f2 = f(c + x);
        resk += kWgk[j] * (f1 + f2);
        if (j % 2 == 1) resg += kWg[j / 2] * (f1 + f2);
    }
    value = resk * h;
    err = std::abs((resk - resg) * h);
}

} // namespace detail

// Globally adaptive Gauss-Kronrod on [a, b]: bisect the interval with the
// largest error estimate until the error sum meets the tolerance.
template <class F>
QuadResult integrate(F&& f, double a, double b, QuadOptions opt = {}) {
    QuadResult out;
    if (a == b) {
        out.converged = true;
        return out;
    }
    struct Piece {
        double a, b, value, err;
    };
    std::vector<Piece> pieces;
    double v, e;
    detail::gk15(f, a, b, v, e);
    out.evaluations = 15;
    pieces.push_back({a, b, v, e});
    for (;;) {
        double total = 0.0, err_sum = 0.0;
        std::size_t worst = 0;
        for (std::size_t i = 0; i < pieces.size(); ++i) {
            total += pieces[i].value;
            err_sum += pieces[i].err;
            if (pieces[i].err > pieces[worst].err) worst = i;
        }
        const double target =
            std::max(opt.abs_tol, opt.rel_tol * std::abs(total));
        if (err_sum <= target) {
            out.value = total;
            out.abs_error = err_sum;
            out.converged = true;
            return out;
        }
        if (static_cast<int>(pieces.size()) >= opt.max_intervals) {
            out.value = total;
            out.abs_error = err_sum;
            out.converged = false;
            return out;
        }
        const Piece p = pieces[worst];
        const double mid = 0.5 * (p.a + p.b);
        double v1, e1, v2, e2;
        detail::gk15(f, p.a, mid, v1, e1);
        detail::gk15(f, mid, p.b, v2, e2);
        out.evaluations += 30;
        pieces[worst] = {p.a, mid, v1, e1};
        pieces.push_back({mid, p.b, v2, e2});
    }
}

// Radial integral over (0, b] of an integrand that may blow up at 0, via the
// substitution r = exp(-u). The domain is cut at r = exp(-kLogCutoff), so a
// divergence stronger than logarithmic shows up as a value above the cap and
// is reported as non-convergence.
template <class F>
QuadResult integrate_radial_singular(F&& f, double b, QuadOptions opt = {},
                                     double value_cap = 1e12) {
    if (b <= 0.0) return {0.0, 0.0, 0, true};
    const double u0 = -std::log(b);
    if (u0 >= kLogCutoff) return {0.0, 0.0, 0, true};
    auto g = [&f](double u) {
        const double r = std::exp(-u);
        return f(r) * r;
    };
    QuadResult q = integrate(g, u0, kLogCutoff, opt);
    if (!(std::abs(q.value) <= value_cap)) q.converged = false;
    return q;
}

// Tail integral over [a, infinity): sum octave pieces [a 2^k, a 2^{k+1}] until
// the increment is negligible. Diverging sums trip the cap and report failure.
template <class F>
QuadResult integrate_tail(F&& f, double a, QuadOptions opt = {},
                          double value_cap = 1e12) {
    QuadResult out;
    double lo = a;
    for (int k = 0; k < 220; ++k) {
        const double hi = lo * 2.0;
        QuadResult piece = integrate(f, lo, hi, opt);
        out.value += piece.value;
        out.abs_error += piece.abs_error;
        out.evaluations += piece.evaluations;
        if (!piece.converged) return out;
        if (std::abs(out.value) > value_cap) return out;
        if (std::abs(piece.value) <=
            std::max(opt.abs_tol, 0.25 * opt.rel_tol * std::abs(out.value))) {
            out.converged = true;
            return out;
        }
        lo = hi;
    }
    return out;
}

inline double require_converged(const QuadResult& q, const std::string& what) {
    if (!q.converged) {
        throw std::runtime_error("quadrature failed to converge for " + what +
                                 " (achieved abs error " +
                                 std::to_string(q.abs_error) + ")");
    }
    return q.value;
}

} // namespace levysde
