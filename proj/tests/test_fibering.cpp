#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <random>

#include "grushin/fibering.hpp"

using namespace grushin;

namespace {

RayData make_ray(double A, double B, double C, double r, double s, double mu) {
    return RayData{A, B, C, r, s, mu};
}

// Dense sampling plus golden-section refinement; independent argmax oracle.
double argmax_g(const RayData& ray, double hi) {
    const int N = 100000;
    double best_t = 0.0, best = -1e300;
    for (int i = 1; i <= N; ++i) {
        double t = hi * i / N;
        double v = g_function(ray, t);
        if (v > best) {
            best = v;
            best_t = t;
        }
    }
    double a = std::max(best_t - hi / N, 1e-14), b = best_t + hi / N;
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - phi * (b - a), d = a + phi * (b - a);
    for (int it = 0; it < 200 && b - a > 1e-13 * std::max(1.0, b); ++it) {
        if (g_function(ray, c) > g_function(ray, d)) {
            b = d;
            d = c;
            c = b - phi * (b - a);
        } else {
            a = c;
            c = d;
            d = a + phi * (b - a);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace

TEST_CASE("G values") {
    CHECK(g_function(make_ray(1, 0, 1, 0, 3, 1), 0.0) == 0.0);
    CHECK(g_function(make_ray(1, 0, 1, 0, 3, 1), 1.0) == doctest::Approx(0.0));
    RayData ray = make_ray(2, 0, 1, 0, 3, 1);
    double t0 = t_zero(ray);
    CHECK(t0 == doctest::Approx(std::sqrt(2.0 / 3.0)));
    CHECK(g_function(ray, t0) == doctest::Approx(1.0886621079036347).epsilon(1e-10));
}

TEST_CASE("t0 formula and sampling oracle") {
    CHECK(t_zero(make_ray(1, 0, 1, 0, 2, 1)) == doctest::Approx(0.5));
    CHECK_THROWS_AS(t_zero(make_ray(1, 0, -1, 0, 3, 1)), std::domain_error);

    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> uA(0.5, 5.0), uC(0.2, 3.0), ur(0.0, 0.9);
    for (int it = 0; it < 10; ++it) {
        double r = ur(rng);
        double s = 1.2 + r + 2.5 * uA(rng) / 5.0;
        RayData ray = make_ray(uA(rng), 0.0, uC(rng), r, s, 1.0);
        double t0 = t_zero(ray);
        CHECK(std::abs(argmax_g(ray, 10.0) - t0) <= 1e-6 * std::max(1.0, t0));
    }
}

TEST_CASE("sup G substitution equals the corrected closed form") {
    std::mt19937_64 rng(33);
    std::uniform_real_distribution<double> uA(0.5, 5.0), uC(0.2, 3.0), ur(0.0, 0.9), us(0.2, 2.0);
    for (int it = 0; it < 10; ++it) {
        double r = ur(rng), s = 1.1 + r + us(rng);
        RayData ray = make_ray(uA(rng), 0.0, uC(rng), r, s, 1.0);
        double sub = sup_g(ray);
        double k = (1.0 - r) / (s - r);
        double closed = std::pow(k, (1.0 - r) / (s - 1.0)) * (s - 1.0) / (s - r) *
                        std::pow(ray.A, (s - r) / (s - 1.0)) /
                        std::pow(ray.C, (1.0 - r) / (s - 1.0));
        CHECK(std::abs(sub - closed) <= 1e-10 * std::abs(closed));
    }
}

TEST_CASE("ray scaling identity for G") {
    RayData ray = make_ray(1.7, 0.0, 0.9, 0.3, 2.6, 1.0);
    const double c = 2.0;
    RayData scaled = make_ray(c * c * ray.A, 0.0, std::pow(c, 1.0 + ray.s) * ray.C, ray.r, ray.s, 1.0);
    for (double t : {0.3, 0.8, 1.7}) {
        double lhs = g_function(scaled, t);
        double rhs = std::pow(c, 1.0 + ray.r) * g_function(ray, c * t);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
    CHECK(sup_g(scaled) == doctest::Approx(std::pow(c, 1.0 + ray.r) * sup_g(ray)).epsilon(1e-10));
}

TEST_CASE("roots of the cubic benchmark ray") {
    // G(t) = t - t^3, target 0.1: roots of t^3 - t + 0.1.
    RayData ray = make_ray(1, 1, 1, 0, 3, 0.1);
    FiberingReport rep = find_roots(ray);
    REQUIRE(rep.t_plus.has_value());
    REQUIRE(rep.t_minus.has_value());
    CHECK(rep.t0 == doctest::Approx(1.0 / std::sqrt(3.0)));

    // Independent bisection oracle on t^3 - t + 0.1.
    auto cubic = [](double t) { return t * t * t - t + 0.1; };
    auto bisect = [&](double lo, double hi) {
        for (int i = 0; i < 200; ++i) {
            double mid = 0.5 * (lo + hi);
            if ((cubic(mid) > 0.0) == (cubic(lo) > 0.0))
                lo = mid;
            else
                hi = mid;
        }
        return 0.5 * (lo + hi);
    };
    double tp = bisect(0.0, rep.t0), tm = bisect(rep.t0, 4.0);
    CHECK(*rep.t_plus == doctest::Approx(tp).epsilon(1e-10));
    CHECK(*rep.t_minus == doctest::Approx(tm).epsilon(1e-10));
    CHECK(std::abs(*rep.t_plus - 0.1010) <= 5e-4);
    CHECK(std::abs(*rep.t_minus - 0.9455) <= 5e-4);
    CHECK(rep.Fpp_at_t_plus > 0.0);
    CHECK(rep.Fpp_at_t_minus < 0.0);
}

TEST_CASE("single-root case for nonpositive concave mass") {
    RayData ray = make_ray(1.3, -1.0, 0.8, 0.4, 2.4, 0.7);
    FiberingReport rep = find_roots(ray);
    CHECK(rep.ray_case == FiberingCase::single_root);
    CHECK_FALSE(rep.t_plus.has_value());
    REQUIRE(rep.t_minus.has_value());
    CHECK(*rep.t_minus > rep.t0);
    CHECK(g_function(ray, *rep.t_minus) == doctest::Approx(ray.mu * ray.B).epsilon(1e-9));
    // Positivity with the explicit lower bound from the convex-only envelope.
    double nm2 = (ray.s - 1.0) / (2.0 * (ray.s + 1.0)) *
                 std::pow(std::pow(ray.A, ray.s + 1.0) / (ray.C * ray.C), 1.0 / (ray.s - 1.0));
    CHECK(rep.F_at_t_minus > 0.0);
    CHECK(rep.F_at_t_minus >= nm2 - 1e-12);
}

TEST_CASE("threshold tangency is rejected") {
    RayData ray = make_ray(2, 1, 1, 0, 3, 1.0);
    ray.mu = sup_g(ray) / ray.B;  // mu B exactly at the fibering maximum
    CHECK_THROWS_AS(find_roots(ray), std::domain_error);
    FiberingReport rep;
    CHECK(try_find_roots(ray, rep) == FiberingStatus::above_threshold);
}

TEST_CASE("root accuracy and sign structure over random rays") {
    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> uA(0.5, 5.0), uB(0.05, 2.0), uC(0.2, 3.0),
        ur(0.0, 0.9), us(0.2, 2.0), uf(0.05, 0.95);
    for (int it = 0; it < 100; ++it) {
        double r = ur(rng), s = 1.1 + r + us(rng);
        RayData ray = make_ray(uA(rng), uB(rng), uC(rng), r, s, 1.0);
        ray.mu = uf(rng) * sup_g(ray) / ray.B;  // keep mu B below the maximum
        FiberingReport rep = find_roots(ray);
        REQUIRE(rep.t_plus.has_value());
        double target = ray.mu * ray.B;
        CHECK(std::abs(g_function(ray, *rep.t_plus) - target) <= 1e-10 * std::abs(target));
        CHECK(std::abs(g_function(ray, *rep.t_minus) - target) <= 1e-10 * std::abs(target));
        CHECK(*rep.t_plus < rep.t0);
        CHECK(rep.t0 < *rep.t_minus);
        CHECK(rep.Fpp_at_t_plus > 0.0);
        CHECK(rep.Fpp_at_t_minus < 0.0);
        // F' sign pattern -, +, - across (0, t+), (t+, t-), (t-, inf).
        CHECK(f_prime(ray, 0.5 * *rep.t_plus) < 0.0);
        CHECK(f_prime(ray, 0.5 * (*rep.t_plus + *rep.t_minus)) > 0.0);
        CHECK(f_prime(ray, 2.0 * *rep.t_minus) < 0.0);
    }
}

TEST_CASE("mu_zero formula") {
    double Sq = 0.7, Sp = 0.45, ng = 2.3, nh = 1.3;
    double v = mu_zero(0.0, 3.0, Sq, Sp, ng, nh);
    double expect = (2.0 / 3.0) * std::pow(1.0 / 3.0, 0.5) /
                    (std::sqrt(std::pow(Sp, 4.0) * nh) * Sq * ng);
    CHECK(v == doctest::Approx(expect).epsilon(1e-12));
    CHECK(mu_zero(0.0, 3.0, Sq, Sp, 2.0 * ng, nh) == doctest::Approx(0.5 * v).epsilon(1e-12));
    CHECK_THROWS_AS(mu_zero(0.0, 3.0, Sq, Sp, -1.0, nh), std::domain_error);
}
