#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <random>

#include "grushin/grid.hpp"

using namespace grushin;

namespace {

TensorGrid unit_box(int nodes) {
    ProblemSpec spec = ProblemSpec::benchmark_subcritical();
    return TensorGrid::make(spec, {nodes, nodes});
}

}  // namespace

TEST_CASE("gauge norm values and homogeneity") {
    double za[] = {1.0, 0.0};
    CHECK(gauge_norm(za, 1, 1.0) == doctest::Approx(1.0));
    double zb[] = {0.0, 1.0};
    CHECK(gauge_norm(zb, 1, 1.0) == doctest::Approx(std::sqrt(2.0)));

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-2.0, 2.0), tp(0.1, 5.0);
    for (int it = 0; it < 50; ++it) {
        std::vector<double> z = {u(rng), u(rng)};
        double t = tp(rng), lam = 0.5 + 0.5 * tp(rng);
        std::vector<double> zt = dilate(z, t, 1, lam);
        double lhs = gauge_norm(zt, 1, lam);
        double rhs = t * gauge_norm(z, 1, lam);
        CHECK(std::abs(lhs - rhs) <= 10.0 * 1e-16 * std::max(1.0, rhs));
    }
}

TEST_CASE("dilation group law") {
    std::vector<double> z = {0.3, -0.7};
    auto same = dilate(z, 1.0, 1, 1.0);
    CHECK(same[0] == doctest::Approx(0.3));
    CHECK(same[1] == doctest::Approx(-0.7));

    std::vector<double> z2 = {1.0, 1.0};
    auto d2 = dilate(z2, 2.0, 1, 1.0);
    CHECK(d2[0] == doctest::Approx(2.0));
    CHECK(d2[1] == doctest::Approx(4.0));

    std::vector<double> z3 = {0.5, 0.5};
    auto back = dilate(dilate(z3, 0.25, 1, 2.0), 4.0, 1, 2.0);
    CHECK(back[0] == doctest::Approx(0.5));
    CHECK(back[1] == doctest::Approx(0.5));

    CHECK_THROWS_AS(dilate(z3, 0.0, 1, 1.0), std::domain_error);
}

TEST_CASE("trapezoid quadrature oracle values") {
    TensorGrid g = unit_box(129);
    auto one = [](std::span<const double>) { return 1.0; };
    CHECK(g.integrate(one) == doctest::Approx(4.0).epsilon(1e-14));

    // Exact integrals on (-1,1)^2: x^2 -> 4/3, x^2+y^2 -> 8/3,
    // (1-x^2)(1-y^2) -> 16/9.
    auto xsq = [](std::span<const double> z) { return z[0] * z[0]; };
    CHECK(std::abs(g.integrate(xsq) - 4.0 / 3.0) <= 1e-3);
    auto rsq = [](std::span<const double> z) { return z[0] * z[0] + z[1] * z[1]; };
    CHECK(std::abs(g.integrate(rsq) - 8.0 / 3.0) <= 1e-3);
    auto bump = [](std::span<const double> z) {
        return (1.0 - z[0] * z[0]) * (1.0 - z[1] * z[1]);
    };
    CHECK(std::abs(g.integrate(bump) - 16.0 / 9.0) <= 1e-3);
}

TEST_CASE("quadrature is linear and positive") {
    TensorGrid g = unit_box(33);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Field a(g.interior_count()), b(g.interior_count());
    for (long i = 0; i < a.size(); ++i) {
        a[i] = u(rng);
        b[i] = u(rng) - 0.3;
    }
    double lin = g.integrate(Field(2.0 * a + 3.0 * b));
    CHECK(lin == doctest::Approx(2.0 * g.integrate(a) + 3.0 * g.integrate(b)));
    CHECK(g.integrate(a) >= 0.0);
}

TEST_CASE("grid structure") {
    TensorGrid g = unit_box(33);
    CHECK(g.interior_count() == 31 * 31);
    // x = 0 is a node when the box straddles zero.
    bool has_zero = false;
    for (double c : g.coords[0]) has_zero = has_zero || c == 0.0;
    CHECK(has_zero);
    ProblemSpec spec = ProblemSpec::benchmark_subcritical();
    CHECK_THROWS_AS(TensorGrid::make(spec, {30, 33}), std::invalid_argument);
}

TEST_CASE("cutoff profile and nodal field") {
    TensorGrid g = unit_box(129);
    std::vector<double> center = {0.5, 0.0};
    double R = 0.1;
    Cutoff c = build_cutoff(g, center, R);

    CHECK(Cutoff::profile(0.0, R) == doctest::Approx(1.0));
    CHECK(Cutoff::profile(3.0 * R, R) == doctest::Approx(0.0));
    CHECK(Cutoff::profile(1.2 * R, R) >= Cutoff::profile(1.8 * R, R));

    double lo = 0.0, hi = 0.0;
    for (long i = 0; i < c.values.size(); ++i) {
        lo = std::min(lo, c.values[i]);
        hi = std::max(hi, c.values[i]);
        std::vector<double> z = g.interior_point(i);
        std::vector<double> d = {z[0] - center[0], z[1] - center[1]};
        double rho = gauge_norm(d, 1, g.lambda);
        if (rho <= R) CHECK(c.values[i] == doctest::Approx(1.0));
        if (rho >= 2.0 * R) CHECK(c.values[i] == doctest::Approx(0.0));
    }
    CHECK(lo >= 0.0);
    CHECK(hi <= 1.0);
}

TEST_CASE("cutoff precondition errors") {
    TensorGrid g = unit_box(65);
    std::vector<double> on_sigma = {0.05, 0.0};
    CHECK_THROWS_AS(build_cutoff(g, on_sigma, 0.1), std::domain_error);
    // Same center is fine when the off-Sigma requirement is lifted.
    CHECK_NOTHROW(build_cutoff(g, on_sigma, 0.1, false));
    std::vector<double> near_edge = {0.9, 0.0};
    CHECK_THROWS_AS(build_cutoff(g, near_edge, 0.1), std::domain_error);
}
