#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "levysde/harness.hpp"

using namespace levysde;

TEST_CASE("weak value estimation: baseline, determinism, exact-zero model") {
    CatalogEntry e = catalog("IDENT-CP");
    SchemeConfig cfg;
    cfg.kind = SchemeKind::simple;
    cfg.delta = 0.25;
    WeakEstimate est = estimate_weak_value(e.model, e.spec, cfg, e.test_function("x"),
                                           20000, 42);
    CHECK(std::abs(est.value - 0.2) < 3.0 * est.se);
    CHECK(est.se > 0.0);

    // determinism: same config and seed root give the bitwise-same estimate
    WeakEstimate est2 = estimate_weak_value(e.model, e.spec, cfg, e.test_function("x"),
                                            20000, 42);
    CHECK(est.value == est2.value);
    CHECK(est.se == est2.se);
    WeakEstimate est3 = estimate_weak_value(e.model, e.spec, cfg, e.test_function("x"),
                                            20000, 43);
    CHECK(est.value != est3.value);

    // zero-coefficient model: exact value, zero standard error
    CatalogEntry z = catalog("ZERO");
    WeakEstimate ez = estimate_weak_value(z.model, z.spec, cfg, z.test_function("x"),
                                          500, 1);
    CHECK(ez.value == 0.7);
    CHECK(ez.se == 0.0);

    CHECK_THROWS_AS(estimate_weak_value(e.model, e.spec, cfg, e.test_function("x"),
                                        50, 1),
                    std::invalid_argument);
}

TEST_CASE("reference values: oracle and self-referencing fine grid") {
    CatalogEntry e = catalog("IDENT-CP");
    ReferencePolicy oracle_pol;
    oracle_pol.kind = ReferencePolicy::oracle;
    WeakEstimate ref = reference_value(e, e.test_function("x2"), oracle_pol, 1.0,
                                       1000, 7);
    CHECK(ref.value == doctest::Approx(0.08).epsilon(1e-15));
    CHECK(ref.se == 0.0);

    TestFunction weird;
    weird.name = "weird";
    weird.nu = 1.0;
    weird.g = [](const double* x) { return std::tanh(x[0]); };
    CHECK_THROWS_AS(reference_value(e, weird, oracle_pol, 1.0, 1000, 7),
                    std::invalid_argument);

    // fine-grid reference with delta_ref equal to the estimate's delta and the
    // same stream family: the error estimate is exactly zero
    SchemeConfig cfg;
    cfg.kind = SchemeKind::simple;
    cfg.delta = 0.125;
    WeakEstimate est = estimate_weak_value(e.model, e.spec, cfg, e.test_function("x"),
                                           2000, 11);
    ReferencePolicy fine;
    fine.kind = ReferencePolicy::fine_grid;
    fine.delta_ref = 0.125;
    fine.n_paths_ref = 2000;
    WeakEstimate ref2 = reference_value(e, e.test_function("x"), fine, 1.0, 2000, 11);
    CHECK(est.value == ref2.value);
}

TEST_CASE("rate fitting: exact power laws and synthetic noise") {
    // slope 1 through three exact points
    std::vector<RatePoint> pts;
    for (double d : {0.1, 0.01, 0.001}) {
        RatePoint p;
        p.delta = d;
        p.error = d;
        p.se_err = 0.0;
        pts.push_back(p);
    }
    RateFit f1 = fit_rate_strict(pts);
    CHECK(f1.kappa == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f1.kappa_se <= 1e-12);

    // slope 1/2 through three exact points of 0.5 sqrt(delta)
    pts.clear();
    for (double d : {0.25, 0.0625, 0.015625}) {
        RatePoint p;
        p.delta = d;
        p.error = 0.5 * std::sqrt(d);
        p.se_err = 0.0;
        pts.push_back(p);
    }
    RateFit f2 = fit_rate_strict(pts);
    CHECK(f2.kappa == doctest::Approx(0.5).epsilon(1e-12));

    // synthetic noisy law: err = delta (1 + 0.01 eta), kappa_hat in [0.9, 1.1]
    // on at least 99% of replications
    Stream rng(2025);
    int inside = 0;
    const int reps = 10000;
    for (int r = 0; r < reps; ++r) {
        std::vector<RatePoint> noisy;
        for (int k = 1; k <= 6; ++k) {
            RatePoint p;
            p.delta = std::pow(2.0, -k);
            p.error = p.delta * (1.0 + 0.01 * rng.next_normal());
            p.se_err = 0.01 * p.delta;
            noisy.push_back(p);
        }
        RateFit f = fit_rate(noisy);
        if (f.ok && f.kappa >= 0.9 && f.kappa <= 1.1) ++inside;
    }
    CHECK(static_cast<double>(inside) / reps >= 0.99);

    // preconditions: too few points, duplicate deltas, noise-floor exclusion
    pts.resize(2);
    CHECK_THROWS_AS(fit_rate_strict(pts), std::invalid_argument);
    std::vector<RatePoint> dup(3);
    dup[0].delta = dup[1].delta = 0.1;
    dup[2].delta = 0.05;
    for (auto& p : dup) {
        p.error = 0.1;
        p.se_err = 0.001;
    }
    CHECK_THROWS_AS(fit_rate_strict(dup), std::invalid_argument);

    std::vector<RatePoint> noisy_floor;
    for (double d : {0.1, 0.05, 0.025, 0.0125}) {
        RatePoint p;
        p.delta = d;
        p.error = d;
        p.se_err = (d < 0.03) ? d : 1e-6; // two points drown in noise
        noisy_floor.push_back(p);
    }
    RateFit f3 = fit_rate(noisy_floor);
    CHECK_FALSE(f3.ok); // only 2 usable points survive
    CHECK(noisy_floor[2].note.find("noise floor") != std::string::npos);
}

TEST_CASE("rate experiment on the exact baseline flags the noise regime") {
    CatalogEntry e = catalog("IDENT-CP");
    RateConfig rc;
    rc.scheme = SchemeKind::simple;
    rc.deltas = {0.25, 0.125, 0.0625};
    rc.g = "x";
    rc.n_paths = 5000;
    rc.reference.kind = ReferencePolicy::oracle;
    rc.seed_root = 3;
    RateReport rep = rate_experiment(e, rc);
    CHECK(rep.reference_desc == "oracle");
    for (const auto& p : rep.points) {
        CHECK(p.error <= 3.0 * std::max(p.se_est, 1e-12));
        CHECK_FALSE(p.used);
    }
    CHECK_FALSE(rep.fit.ok);
    CHECK(rep.flag.find("exact scheme") != std::string::npos);
}

TEST_CASE("rate experiment recovers kappa = 1 on the jump diffusion (desk scale)") {
    CatalogEntry e = catalog("JD-SMOOTH");
    RateConfig rc;
    rc.scheme = SchemeKind::simple;
    rc.deltas = {0.25, 0.125, 0.0625, 0.03125};
    rc.g = "default";
    rc.n_paths = 20000;
    rc.reference.delta_ref = 1.0 / 512.0;
    rc.reference.n_paths_ref = 20000;
    rc.seed_root = 17;
    RateReport rep = rate_experiment(e, rc);
    CHECK(rep.theory_kappa == doctest::Approx(1.0));
    REQUIRE(rep.fit.ok);
    CHECK(rep.fit.kappa > 0.6);
    CHECK(rep.fit.kappa < 1.4);
    // paired estimators beat the independent-variance bound
    for (const auto& p : rep.points) {
        const double indep = std::sqrt(p.se_est * p.se_est +
                                       rep.reference.se * rep.reference.se);
        CHECK(p.se_err < indep);
    }
}

TEST_CASE("decomposition: noise-only sigma column collapses to zero C2") {
    // every sigma below the minimum jump: no substitution error exists
    CatalogEntry e = catalog("IDENT-CP");
    DecompositionConfig dc;
    dc.deltas = {0.25, 0.125, 0.0625};
    dc.sigmas = {0.05, 0.025, 0.0125}; // min jump is 0.2
    dc.g = "x";
    dc.n_paths = 2000;
    dc.n_paths_ref = 2000;
    dc.seed_root = 5;
    DecompositionReport rep = decompose_error(e, dc);
    for (double phi : rep.phi_values) CHECK(phi == 0.0);
    if (rep.fit_ok) {
        double max_phi = 0.0;
        for (double phi : rep.phi_values) max_phi = std::max(max_phi, phi);
        CHECK(std::abs(rep.c2) * max_phi <= 1e-6);
    }

    // degenerate grids violate the preconditions
    DecompositionConfig bad = dc;
    bad.sigmas = {0.05};
    CHECK_THROWS_AS(decompose_error(e, bad), std::invalid_argument);
    bad = dc;
    bad.deltas = {0.25, 0.125};
    CHECK_THROWS_AS(decompose_error(e, bad), std::invalid_argument);
}

TEST_CASE("decomposition on the degenerate pure-jump problem (desk scale)") {
    // Cutting small jumps of a one-sided measure removes a drift of size
    // phi(sigma); against a monotone bounded test function the measured
    // error realizes that order. (The symmetric twin cancels the first-order
    // term for every fixed g and decays like the second small-jump moment.)
    CatalogEntry e = catalog("PJ-DEGEN-1S");
    DecompositionConfig dc;
    dc.deltas = {1.0 / 16, 1.0 / 32, 1.0 / 64};
    dc.sigmas = {0.25, 0.125, 0.0625, 0.03125, 0.015625};
    dc.g = "tanh_shift";
    dc.n_paths = 10000;
    dc.n_paths_ref = 10000;
    dc.seed_root = 29;
    DecompositionReport rep = decompose_error(e, dc);
    CHECK(rep.phi_sigma_ref <= 1e-2 * e.spec.measure.small_moment(0.015625, 1.0));
    // substitution-dominated regime: slope of log error vs log sigma near 1/2
    CHECK(rep.sigma_slope_logsigma > 0.2);
    CHECK(rep.sigma_slope_logsigma < 0.8);
    // and the fitted surface sees a positive substitution coefficient
    REQUIRE(rep.fit_ok);
    CHECK(rep.c2 > 0.0);
}

TEST_CASE("jump-adapted step statistics against the closed-form law") {
    DriverSpec spec(LevyMeasure::truncated_stable(1, 0.5, 1.0, 1.0), 0.75, 1.5, 1.5);
    // lambda_sigma = 4 at sigma = 0.25
    StepStatsReport r1 = jump_adapted_step_stats(spec, 0.25, 0.5, 1.0, 20000, 7);
    CHECK(r1.lambda_sigma == doctest::Approx(4.0));
    CHECK(r1.closed_form_mean == doctest::Approx((1.0 - std::exp(-2.0)) / 4.0));
    CHECK(std::abs(r1.z_score) < 3.0);
    CHECK(r1.sandwich_ok);
    CHECK(r1.sum_sq_ok);
    CHECK(r1.pass);

    StepStatsReport r2 = jump_adapted_step_stats(spec, 0.25, 1.0, 1.0, 20000, 7);
    CHECK(r2.closed_form_mean == doctest::Approx((1.0 - std::exp(-4.0)) / 4.0));
    CHECK(r2.pass);

    // no jumps above sigma: every step is exactly delta
    StepStatsReport r0 = jump_adapted_step_stats(spec, 1.0, 0.25, 1.0, 2000, 7);
    CHECK(r0.lambda_sigma == 0.0);
    CHECK(r0.mean_first_step == 0.25);
    CHECK(r0.se_first_step == 0.0);
    CHECK(r0.z_score == 0.0);
    CHECK(r0.pass);

    CHECK_THROWS_AS(jump_adapted_step_stats(spec, 0.25, 0.5, 1.0, 100, 7),
                    std::invalid_argument);
}

TEST_CASE("one-sided experimental problem runs through the drift rule") {
    CatalogEntry e = catalog("ONE-SIDED");
    CHECK(RSigmaRule::select(e.spec.alpha, e.spec.beta) == RCase::drift);
    SchemeConfig sc;
    sc.kind = SchemeKind::approximate;
    sc.delta = 0.125;
    sc.sigma = 0.25;
    WeakEstimate est = estimate_weak_value(e.model, e.spec, sc,
                                           e.test_function("x"), 2000, 13);
    CHECK(std::isfinite(est.value));
    CHECK(est.se > 0.0);
    // the drift substitution pushes the one-sided terminal upward on average
    SchemeConfig zc = sc;
    zc.forced_rule = RCase::zero;
    WeakEstimate zero = estimate_weak_value(e.model, e.spec, zc,
                                            e.test_function("x"), 2000, 13);
    CHECK(est.value > zero.value);
}

TEST_CASE("non-finite test values name the offending paths") {
    CatalogEntry z = catalog("ZERO");
    TestFunction pole;
    pole.name = "pole";
    pole.nu = 1.0;
    pole.g = [](const double* x) { return 1.0 / (x[0] - 0.7); }; // x0 = 0.7
    SchemeConfig sc;
    sc.kind = SchemeKind::simple;
    sc.delta = 0.25;
    CHECK_THROWS_WITH_AS(
        estimate_weak_value(z.model, z.spec, sc, pole, 200, 1),
        doctest::Contains("non-finite"), std::runtime_error);
}

TEST_CASE("surrogate sigma_ref selection meets the phi budget") {
    LevyMeasure m = LevyMeasure::truncated_stable(1, 0.5, 0.5, 1.0);
    const double budget = 1e-4;
    const double s = sigma_for_phi_budget(m, 1.0, budget, 0.5);
    CHECK(m.small_moment(s, 1.0) <= budget);
    CHECK(m.small_moment(std::min(4.0 * s, 0.5), 1.0) > budget * 0.9);

    // finite-activity measures: anything below the smallest jump is enough
    LevyMeasure cp = LevyMeasure::compound_poisson(1.0, PointMassJump{{0.2}});
    const double scp = sigma_for_phi_budget(cp, 1.0, 1e-12, 0.5);
    CHECK(cp.small_moment(scp, 1.0) == 0.0);
}
