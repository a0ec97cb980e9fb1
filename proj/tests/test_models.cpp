#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "levysde/problems.hpp"
#include "oracles.hpp"

using namespace levysde;

namespace {

TestFunction constant_fn(double c) {
    TestFunction f;
    f.name = "const";
    f.nu = 4.0;
    f.g = [c](const double*) { return c; };
    return f;
}

} // namespace

TEST_CASE("model invariants") {
    SdeModel m;
    m.d = m.m = 1;
    m.x0 = {0.0};
    m.alpha = 0.5;
    m.beta = 1.0;
    m.mu = 1.0;
    CHECK_NOTHROW(m.validate());

    SdeModel bad_drift = m;
    bad_drift.drift = [](const double*, double* out) { out[0] = 1.0; };
    CHECK_THROWS_AS(bad_drift.validate(), std::invalid_argument); // alpha < 1

    SdeModel bad_diff = m;
    bad_diff.n = 1;
    bad_diff.diffusion = [](const double*, double* out) { out[0] = 1.0; };
    CHECK_THROWS_AS(bad_diff.validate(), std::invalid_argument); // alpha < 2

    SdeModel bad_chain = m;
    bad_chain.beta = 1.2; // 2 alpha = 1 < beta
    CHECK_THROWS_AS(bad_chain.validate(), std::invalid_argument);
}

TEST_CASE("generator: constant functions map to zero") {
    for (const char* name : {"IDENT-CP", "JD-SMOOTH"}) {
        CatalogEntry e = catalog(name);
        const TestFunction f = constant_fn(3.7);
        const double lv = apply_generator(e.model, e.spec, f, e.model.x0.data());
        CHECK(std::abs(lv) < 1e-9);
    }
}

TEST_CASE("generator: symmetric compensated measure cancels the jump term for v = x") {
    // d = m = 1, G constant, symmetric pi on |v| <= 1, alpha = 2: the jump
    // integrand vanishes pointwise after compensation, so L v = a
    SdeModel model;
    model.d = model.m = 1;
    model.n = 0;
    model.drift = [](const double*, double* out) { out[0] = 0.3; };
    model.jump_coef = [](const double*, double* out) { out[0] = 0.8; };
    model.x0 = {0.1};
    model.alpha = 2.0;
    model.beta = 3.0;
    model.mu = 3.0;
    model.validate();
    DriverSpec spec(LevyMeasure::truncated_stable(1, 1.0, 1.0, 1.0), 2.0, 3.0, 3.0,
                    false, true);
    TestFunction vx;
    vx.name = "x";
    vx.nu = 1.0;
    vx.g = [](const double* x) { return x[0]; };
    vx.grad = [](const double*, double* out) { out[0] = 1.0; };
    vx.hess = [](const double*, double* out) { out[0] = 0.0; };
    const double lv = apply_generator(model, spec, vx, model.x0.data());
    CHECK(lv == doctest::Approx(0.3).epsilon(1e-9));
}

TEST_CASE("generator: quadratic test function against the moment oracle") {
    // constants a0, b0, g0 with symmetric pi of second moment m2:
    // L v(x) = 2 a0 x + b0^2 + g0^2 m2 for v = x^2
    const double a0 = 0.3, b0 = 0.7, g0 = 0.8;
    SdeModel model;
    model.d = model.m = 1;
    model.n = 1;
    model.drift = [=](const double*, double* out) { out[0] = a0; };
    model.diffusion = [=](const double*, double* out) { out[0] = b0; };
    model.jump_coef = [=](const double*, double* out) { out[0] = g0; };
    model.x0 = {0.4};
    model.alpha = 2.0;
    model.beta = 3.0;
    model.mu = 3.0;
    model.validate();
    DriverSpec spec(LevyMeasure::truncated_stable(1, 1.0, 1.0, 1.0), 2.0, 3.0, 3.0,
                    true, true);
    TestFunction vx2;
    vx2.name = "x2";
    vx2.nu = 2.0;
    vx2.g = [](const double* x) { return x[0] * x[0]; };
    vx2.grad = [](const double* x, double* out) { out[0] = 2.0 * x[0]; };
    vx2.hess = [](const double*, double* out) { out[0] = 2.0; };
    const double m2 = oracle::integrate_radial(
        [](double r) { return r * r * 2.0 * std::pow(r, -2.0); }, 1.0);
    const double x = 0.4;
    const double expect = 2.0 * a0 * x + b0 * b0 + g0 * g0 * m2;
    const double lv = apply_generator(model, spec, vx2, &x);
    CHECK(lv == doctest::Approx(expect).epsilon(1e-7));
}

TEST_CASE("generator linearity at random points") {
    CatalogEntry e = catalog("JD-SMOOTH");
    const TestFunction& f1 = e.test_function("sin");
    const TestFunction& f2 = e.test_function("x2");
    TestFunction combo;
    combo.name = "combo";
    combo.nu = 2.0;
    combo.g = [&](const double* x) { return 1.7 * f1.g(x) - 0.4 * f2.g(x); };
    combo.grad = [&](const double* x, double* out) {
        double g1, g2;
        f1.grad(x, &g1);
        f2.grad(x, &g2);
        out[0] = 1.7 * g1 - 0.4 * g2;
    };
    combo.hess = [&](const double* x, double* out) {
        double h1, h2;
        f1.hess(x, &h1);
        f2.hess(x, &h2);
        out[0] = 1.7 * h1 - 0.4 * h2;
    };
    Stream rng(21);
    for (int i = 0; i < 100; ++i) {
        const double x = 4.0 * rng.next_double() - 2.0;
        const double lhs = apply_generator(e.model, e.spec, combo, &x);
        const double rhs = 1.7 * apply_generator(e.model, e.spec, f1, &x) -
                           0.4 * apply_generator(e.model, e.spec, f2, &x);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-7));
    }
}

TEST_CASE("finite-difference derivatives match analytic ones for x^2") {
    TestFunction fd;
    fd.name = "x2fd";
    fd.nu = 2.0;
    fd.g = [](const double* x) { return x[0] * x[0]; };
    double grad = 0.0, hess = 0.0;
    const double x = 0.7;
    fd.gradient(&x, &grad, 1);
    fd.hessian(&x, &hess, 1);
    CHECK(grad == doctest::Approx(1.4).epsilon(1e-8));
    CHECK(hess == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("fixed-node generator evaluator agrees with the adaptive route") {
    CatalogEntry e = catalog("JD-SMOOTH");
    const TestFunction& v = e.test_function("sin");
    GeneratorEvaluator lv(e.model, e.spec, v);
    for (double x : {-1.4, -0.3, 0.2, 0.9, 2.2}) {
        CHECK(lv(&x) == doctest::Approx(apply_generator(e.model, e.spec, v, &x))
                            .epsilon(1e-7));
    }
    // stable-driver problems get geometric panels toward the origin
    CatalogEntry pj = catalog("PJ-DEGEN");
    GeneratorEvaluator lvpj(pj.model, pj.spec, pj.test_function("sin_shift"));
    for (double x : {-0.5, 0.2, 1.1}) {
        CHECK(lvpj(&x) ==
              doctest::Approx(apply_generator(pj.model, pj.spec,
                                              pj.test_function("sin_shift"), &x))
                  .epsilon(1e-6));
    }
}

TEST_CASE("martingale defect: exact zeros and the identity baseline") {
    CatalogEntry e = catalog("IDENT-CP");

    // constant v: defect is identically zero
    auto rc = martingale_defect(e.model, e.spec, constant_fn(2.0), {0.5, 1.0}, 500,
                                1.0 / 64.0, 42);
    for (const auto& r : rc) {
        CHECK(r.defect == 0.0);
        CHECK(r.se == 0.0);
    }

    // zero-coefficient model: defect is identically zero
    CatalogEntry z = catalog("ZERO");
    auto rz = martingale_defect(z.model, z.spec, z.test_function("x"), {1.0}, 500,
                                1.0 / 64.0, 42);
    CHECK(rz[0].defect == 0.0);

    // IDENT-CP with v(x) = x at several horizons: zero within 3 SE
    auto rx = martingale_defect(e.model, e.spec, e.test_function("x"),
                                {0.25, 0.5, 1.0}, 20000, 1.0 / 256.0, 42);
    for (const auto& r : rx) {
        CHECK(std::abs(r.defect) <= 3.0 * r.se + 1e-12);
    }
}

TEST_CASE("catalog entries satisfy the declared constraint chains") {
    for (const std::string& name : catalog_names()) {
        CatalogEntry e = catalog(name);
        CHECK_NOTHROW(e.model.validate());
        CHECK(e.model.alpha == e.spec.alpha);
        CHECK(e.model.beta == e.spec.beta);
        CHECK(e.model.alpha < e.model.beta);
        CHECK(e.model.beta <= e.model.mu);
        CHECK(e.model.mu <= 2.0 * e.model.alpha);
        CHECK(e.model.bounded);
        CHECK(!e.test_functions.empty());
    }

    CatalogEntry jd = catalog("JD-SMOOTH");
    CHECK(jd.model.alpha == 2.0);
    CHECK(jd.model.beta == 4.0);
    CHECK(jd.model.mu == 4.0);
    CHECK(jd.model.diffusion != nullptr);

    CatalogEntry pj = catalog("PJ-DEGEN");
    CHECK(pj.model.alpha == 0.5);
    CHECK(pj.model.beta == 1.0);
    CHECK(!pj.model.drift);     // forced a = 0
    CHECK(!pj.model.diffusion); // forced b = 0
    CHECK(pj.spec.beta / pj.spec.alpha - 1.0 == doctest::Approx(1.0));

    CatalogEntry rg = catalog("ROUGH-G");
    CHECK(rg.test_functions.front().name == "rough");
    CHECK(rg.test_functions.front().nu == 1.0);

    CatalogEntry os = catalog("ONE-SIDED");
    CHECK(os.experimental);
    CHECK(!os.spec.measure.symmetric());

    CHECK_THROWS_AS(catalog("NOT-A-PROBLEM"), std::invalid_argument);
    CHECK_THROWS_AS(catalog("JD-SMOOTH").test_function("nope"), std::invalid_argument);
}
