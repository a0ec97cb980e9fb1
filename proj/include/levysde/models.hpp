#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "levysde/drivers.hpp"
#include "levysde/levy_measure.hpp"
#include "levysde/matrix.hpp"

namespace levysde {

using CoefFn = std::function<void(const double* x, double* out)>;

// Coefficient set of the SDE
//   dX = a(X) dt + b(X) dW + G(X-) dZ
// with the declared regularity labels the rate theory is phrased in.
// Coefficient callables must be pure; models are immutable and shareable.
struct SdeModel {
    int d = 1; // state dimension
    int n = 0; // Wiener dimension (0 when b is absent)
    int m = 1; // jump dimension
    CoefFn drift;     // a: R^d -> R^d, empty means identically 0
    CoefFn diffusion; // b: R^d -> R^{d x n} row-major, empty means 0
    CoefFn jump_coef; // G: R^d -> R^{d x m} row-major, empty means 0
    Vec x0;
    double alpha = 2.0, beta = 4.0, mu = 4.0;
    bool bounded = true;

    void validate() const {
        if (d < 1 || m < 1 || n < 0)
            throw std::invalid_argument("SdeModel: bad dimensions");
        if (static_cast<int>(x0.size()) != d)
            throw std::invalid_argument("SdeModel: x0 size != d");
        if (!(alpha > 0.0 && alpha <= 2.0))
            throw std::invalid_argument("SdeModel: alpha must be in (0, 2]");
        if (alpha < 1.0 && drift)
            throw std::invalid_argument("SdeModel: a must vanish for alpha < 1");
        if (alpha < 2.0 && (diffusion || n > 0))
            throw std::invalid_argument("SdeModel: b must vanish for alpha < 2");
        if (!(alpha < beta && beta <= mu && mu <= 2.0 * alpha))
            throw std::invalid_argument("SdeModel: need alpha < beta <= mu <= 2 alpha");
    }

    void eval_drift(const double* x, double* out) const {
        if (drift) drift(x, out);
        else for (int i = 0; i < d; ++i) out[i] = 0.0;
    }
    void eval_diffusion(const double* x, double* out) const {
        if (diffusion) diffusion(x, out);
        else for (int i = 0; i < d * n; ++i) out[i] = 0.0;
    }
    void eval_jump_coef(const double* x, double* out) const {
        if (jump_coef) jump_coef(x, out);
        else for (int i = 0; i < d * m; ++i) out[i] = 0.0;
    }
};

// Scalar test function with declared Holder exponent. Derivatives may be
// supplied analytically; central finite differences are the fallback.
struct TestFunction {
    std::string name;
    std::function<double(const double*)> g;
    double nu = 1.0;
    std::function<void(const double*, double*)> grad; // optional, length d
    std::function<void(const double*, double*)> hess; // optional, d*d row-major

    void gradient(const double* x, double* out, int d) const {
        if (grad) {
            grad(x, out);
            return;
        }
        Vec xp(x, x + d);
        for (int i = 0; i < d; ++i) {
            const double h = 1e-5 * (std::abs(x[i]) + 1.0);
            xp[static_cast<std::size_t>(i)] = x[i] + h;
            const double fp = g(xp.data());
            xp[static_cast<std::size_t>(i)] = x[i] - h;
            const double fm = g(xp.data());
            xp[static_cast<std::size_t>(i)] = x[i];
            out[i] = (fp - fm) / (2.0 * h);
        }
    }

    void hessian(const double* x, double* out, int d) const {
        if (hess) {
            hess(x, out);
            return;
        }
        Vec xp(x, x + d);
        const double f0 = g(x);
        for (int i = 0; i < d; ++i) {
            const double hi = 1e-5 * (std::abs(x[i]) + 1.0);
            for (int j = i; j < d; ++j) {
                double v;
                if (i == j) {
                    xp[static_cast<std::size_t>(i)] = x[i] + hi;
                    const double fp = g(xp.data());
                    xp[static_cast<std::size_t>(i)] = x[i] - hi;
                    const double fm = g(xp.data());
                    xp[static_cast<std::size_t>(i)] = x[i];
                    v = (fp - 2.0 * f0 + fm) / (hi * hi);
                } else {
                    const double hj = 1e-5 * (std::abs(x[j]) + 1.0);
                    double s = 0.0;
                    for (int si = -1; si <= 1; si += 2)
                        for (int sj = -1; sj <= 1; sj += 2) {
                            xp[static_cast<std::size_t>(i)] = x[i] + si * hi;
                            xp[static_cast<std::size_t>(j)] = x[j] + sj * hj;
                            s += si * sj * g(xp.data());
                        }
                    xp[static_cast<std::size_t>(i)] = x[i];
                    xp[static_cast<std::size_t>(j)] = x[j];
                    v = s / (4.0 * hi * hj);
                }
                out[i * d + j] = v;
                out[j * d + i] = v;
            }
        }
    }
};

// L v(x) = (a, grad v) + 1/2 sum (b^i, b^j) d2_ij v
//          + int [ v(x + G(x) u) - v(x) - chi_alpha(u) (grad v, G(x) u) ] dpi
inline double apply_generator(const SdeModel& model, const DriverSpec& spec,
                              const TestFunction& v, const double* x,
                              QuadOptions opt = {}) {
    const int d = model.d, n = model.n, m = model.m;
    Vec gradv(static_cast<std::size_t>(d));
    v.gradient(x, gradv.data(), d);

    double lv = 0.0;
    if (model.drift) {
        Vec a(static_cast<std::size_t>(d));
        model.eval_drift(x, a.data());
        for (int i = 0; i < d; ++i) lv += a[static_cast<std::size_t>(i)] * gradv[static_cast<std::size_t>(i)];
    }
    if (model.diffusion && n > 0) {
        Vec b(static_cast<std::size_t>(d * n));
        model.eval_diffusion(x, b.data());
        Vec h(static_cast<std::size_t>(d * d));
        v.hessian(x, h.data(), d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                double bb = 0.0;
                for (int k = 0; k < n; ++k) bb += b[static_cast<std::size_t>(i * n + k)] * b[static_cast<std::size_t>(j * n + k)];
                lv += 0.5 * bb * h[static_cast<std::size_t>(i * d + j)];
            }
    }
    if (model.jump_coef) {
        Vec G(static_cast<std::size_t>(d * m));
        model.eval_jump_coef(x, G.data());
        const bool comp = spec.compensated();
        const double v0 = v.g(x);
        Vec y(static_cast<std::size_t>(d));
        auto h = [&](const double* u) {
            double norm2 = 0.0;
            for (int j = 0; j < m; ++j) norm2 += u[j] * u[j];
            for (int i = 0; i < d; ++i) {
                double s = x[i];
                for (int j = 0; j < m; ++j) s += G[static_cast<std::size_t>(i * m + j)] * u[j];
                y[static_cast<std::size_t>(i)] = s;
            }
            double val = v.g(y.data()) - v0;
            if (comp && norm2 <= 1.0) {
                for (int i = 0; i < d; ++i) {
                    double gu = 0.0;
                    for (int j = 0; j < m; ++j) gu += G[static_cast<std::size_t>(i * m + j)] * u[j];
                    val -= gradv[static_cast<std::size_t>(i)] * gu;
                }
            }
            return val;
        };
        SmallJumpExpansion small;
        if (spec.measure.has_density()) {
            // direction-averaged Taylor coefficients of the integrand near 0
            Vec hv(static_cast<std::size_t>(d * d));
            v.hessian(x, hv.data(), d);
            double trace = 0.0; // tr(G^T Hv G)
            for (int j = 0; j < m; ++j)
                for (int i = 0; i < d; ++i)
                    for (int k = 0; k < d; ++k)
                        trace += G[static_cast<std::size_t>(i * m + j)] *
                                 hv[static_cast<std::size_t>(i * d + k)] *
                                 G[static_cast<std::size_t>(k * m + j)];
            small.c2 = 0.5 * trace / m;
            if (!comp && !spec.measure.symmetric() && m == 1) {
                for (int i = 0; i < d; ++i)
                    small.c1 += gradv[static_cast<std::size_t>(i)] *
                                G[static_cast<std::size_t>(i)];
            }
            double gnorm = 0.0;
            for (double gi : G) gnorm += gi * gi;
            small.r_switch = 1e-5 / std::max(1.0, std::sqrt(gnorm));
        }
        lv += spec.measure.integrate_jump(h, opt, small);
    }
    return lv;
}

// Fixed-node generator evaluator for hot loops (one quadrature rule frozen
// at construction, validated against the adaptive route at probe points).
// Only meaningful for dim-1 jump measures with a density; point masses are
// evaluated exactly.
class GeneratorEvaluator {
public:
    GeneratorEvaluator(const SdeModel& model, const DriverSpec& spec,
                       const TestFunction& v)
        : model_(&model), spec_(&spec), v_(&v) {
        const LevyMeasure& meas = spec.measure;
        if (model.m != 1 || meas.dim() != 1)
            throw std::invalid_argument("GeneratorEvaluator: jump dim 1 only");
        if (model.d > 4 || model.n > 4)
            throw std::invalid_argument("GeneratorEvaluator: d, n <= 4 only");
        if (meas.has_density()) build_nodes(meas);
        validate();
    }

    double operator()(const double* x) const {
        const SdeModel& model = *model_;
        const int d = model.d, n = model.n;
        double gradv[8];
        v_->gradient(x, gradv, d);
        double lv = 0.0;
        if (model.drift) {
            double a[8];
            model.eval_drift(x, a);
            for (int i = 0; i < d; ++i) lv += a[i] * gradv[i];
        }
        if (model.diffusion && n > 0) {
            double b[16], h[16];
            model.eval_diffusion(x, b);
            v_->hessian(x, h, d);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) {
                    double bb = 0.0;
                    for (int k = 0; k < n; ++k) bb += b[i * n + k] * b[j * n + k];
                    lv += 0.5 * bb * h[i * d + j];
                }
        }
        if (model.jump_coef) {
            double G[8];
            model.eval_jump_coef(x, G);
            lv += jump_term(x, gradv, G);
        }
        return lv;
    }

private:
    double jump_term(const double* x, const double* gradv, const double* G) const {
        const SdeModel& model = *model_;
        const LevyMeasure& meas = spec_->measure;
        const int d = model.d;
        const bool comp = spec_->compensated();
        const double v0 = v_->g(x);
        double y[8];
        auto h1 = [&](double u) {
            for (int i = 0; i < d; ++i) y[i] = x[i] + G[i] * u;
            double val = v_->g(y) - v0;
            if (comp && std::abs(u) <= 1.0)
                for (int i = 0; i < d; ++i) val -= gradv[i] * G[i] * u;
            return val;
        };
        if (!meas.has_density()) {
            // compound Poisson point mass
            const Vec j = meas.point_jump();
            return meas.cp_rate() * h1(j[0]);
        }
        // Taylor replacement below r_switch, as in apply_generator
        double c1 = 0.0, c2 = 0.0, r_switch = 0.0;
        if (min_node_ < 1e-4) {
            double hv[16];
            v_->hessian(x, hv, d);
            double trace = 0.0;
            for (int i = 0; i < d; ++i)
                for (int k = 0; k < d; ++k) trace += G[i] * hv[i * d + k] * G[k];
            c2 = 0.5 * trace;
            if (!comp && !meas.symmetric())
                for (int i = 0; i < d; ++i) c1 += gradv[i] * G[i];
            double gnorm = 0.0;
            for (int i = 0; i < d; ++i) gnorm += G[i] * G[i];
            r_switch = 1e-5 / std::max(1.0, std::sqrt(gnorm));
        }
        double acc = 0.0;
        const bool sym = meas.symmetric();
        for (std::size_t k = 0; k < nodes_.size(); ++k) {
            const double r = nodes_[k];
            const double contrib =
                r < r_switch ? c1 * r + c2 * r * r
                             : (sym ? 0.5 * (h1(r) + h1(-r)) : h1(r));
            acc += weights_[k] * contrib;
        }
        return acc;
    }

    void build_nodes(const LevyMeasure& meas) {
        struct Piece { double a, b; };
        std::vector<Piece> pieces;
        const double rmax = std::isinf(meas.support_radius())
                                ? 64.0
                                : meas.support_radius();
        const double rmin = std::max(meas.min_jump(), rmax * 1e-14);
        if (meas.min_jump() > 0.0) {
            // no singularity: the integrand is analytic on the support
            pieces.push_back({rmin, rmax});
        } else {
            // geometric panels toward the origin handle the density singularity
            double hi = rmax;
            while (hi > 4.0 * rmin) {
                const double lo = std::max(rmin, hi * 0.25);
                pieces.push_back({lo, hi});
                hi = lo;
            }
            if (hi > rmin) pieces.push_back({rmin, hi});
        }
        for (const Piece& p : pieces) {
            const double c = 0.5 * (p.a + p.b), half = 0.5 * (p.b - p.a);
            for (int j = 0; j < 7; ++j) {
                push_node(c - half * detail::kXgk[j], half * detail::kWgk[j], meas);
                push_node(c + half * detail::kXgk[j], half * detail::kWgk[j], meas);
            }
            push_node(c, half * detail::kWgk[7], meas);
        }
    }

    void push_node(double r, double w, const LevyMeasure& meas) {
        nodes_.push_back(r);
        weights_.push_back(w * meas.radial_mass_density(r));
        min_node_ = std::min(min_node_, r);
    }

    void validate() const {
        // probe the frozen rule against the adaptive integral near x0
        Vec x = model_->x0;
        for (double shift : {0.0, 0.37}) {
            Vec p = x;
            p[0] += shift;
            const double fixed = (*this)(p.data());
            const double adaptive = apply_generator(*model_, *spec_, *v_, p.data());
            const double scale = std::max({1.0, std::abs(fixed), std::abs(adaptive)});
            if (std::abs(fixed - adaptive) > 1e-6 * scale)
                throw std::runtime_error(
                    "GeneratorEvaluator: frozen quadrature disagrees with the "
                    "adaptive generator (" + std::to_string(fixed) + " vs " +
                    std::to_string(adaptive) + ")");
        }
    }

    const SdeModel* model_;
    const DriverSpec* spec_;
    const TestFunction* v_;
    std::vector<double> nodes_, weights_;
    double min_node_ = std::numeric_limits<double>::infinity();
};

} // namespace levysde
