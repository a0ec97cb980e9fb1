#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "levysde/quadrature.hpp"

using namespace levysde;

TEST_CASE("smooth integrands to full precision") {
    auto q = integrate([](double x) { return std::sin(x); }, 0.0, 1.0);
    CHECK(q.converged);
    CHECK(q.value == doctest::Approx(1.0 - std::cos(1.0)).epsilon(1e-13));

    auto p = integrate([](double x) { return std::exp(-x * x); }, -3.0, 3.0);
    CHECK(p.converged);
    CHECK(p.value == doctest::Approx(1.77241469651762).epsilon(1e-10));
}

TEST_CASE("power singularity at zero via log substitution") {
    // int_0^1 r^{-1/2} dr = 2
    auto q = integrate_radial_singular([](double r) { return 1.0 / std::sqrt(r); }, 1.0);
    CHECK(q.converged);
    CHECK(q.value == doctest::Approx(2.0).epsilon(1e-10));

    // int_0^{0.5} r^{0.5} dr = (2/3) 0.5^{1.5}
    auto p = integrate_radial_singular([](double r) { return std::sqrt(r); }, 0.5);
    CHECK(p.converged);
    CHECK(p.value == doctest::Approx(2.0 / 3.0 * std::pow(0.5, 1.5)).epsilon(1e-10));
}

TEST_CASE("divergent integrands are reported, not returned as garbage") {
    // int_0^1 r^{-1.5} dr diverges: the worklist cap must trip
    auto q = integrate_radial_singular([](double r) { return std::pow(r, -1.5); }, 1.0);
    CHECK_FALSE(q.converged);
    CHECK_THROWS_AS(require_converged(q, "divergent test"), std::runtime_error);
}

TEST_CASE("tail integration converges for decaying tails") {
    // int_1^inf r^{-3} dr = 1/2
    auto q = integrate_tail([](double r) { return std::pow(r, -3.0); }, 1.0);
    CHECK(q.converged);
    CHECK(q.value == doctest::Approx(0.5).epsilon(1e-9));

    // int_1^inf r^{-1} dr diverges
    auto p = integrate_tail([](double r) { return 1.0 / r; }, 1.0);
    CHECK_FALSE(p.converged);
}
