#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "grushin/model.hpp"

using namespace grushin;

TEST_CASE("derived exponents") {
    ProblemSpec spec = ProblemSpec::benchmark_subcritical();
    Exponents e = derived_exponents(spec);
    CHECK(e.Q == doctest::Approx(3.0));
    CHECK(e.crit == doctest::Approx(6.0));

    spec.n = 2;
    spec.m = 1;
    spec.lambda = 0.5;
    spec.box = {{-1, 1}, {-1, 1}, {-1, 1}};
    e = derived_exponents(spec);
    CHECK(e.Q == doctest::Approx(3.5));
    CHECK(e.crit == doctest::Approx(14.0 / 3.0));

    spec = ProblemSpec::benchmark_subcritical();
    spec.lambda = 0.0;  // Q = 2
    CHECK_THROWS_AS(derived_exponents(spec), std::domain_error);
}

TEST_CASE("exponent monotonicity in lambda") {
    ProblemSpec spec = ProblemSpec::benchmark_subcritical();
    double prev_Q = 0.0, prev_crit = 1e300;
    for (double lam : {0.5, 1.0, 1.5, 2.0, 3.0}) {
        spec.lambda = lam;
        Exponents e = derived_exponents(spec);
        CHECK(e.Q > prev_Q);
        CHECK(e.crit < prev_crit);
        prev_Q = e.Q;
        prev_crit = e.crit;
    }
}

TEST_CASE("Hoelder conjugacy identities") {
    ProblemSpec spec = ProblemSpec::benchmark_subcritical();
    for (double r : {0.0, 0.25, 0.5, 0.9}) {
        spec.r = r;
        double q = spec.q_exponent(), a = spec.a_exponent();
        CHECK(std::abs((r + 1.0) / q + 1.0 / a - 1.0) <= 8e-16);
    }
    double p = spec.p_exponent(), b = spec.b_exponent();
    CHECK(std::abs((spec.s + 1.0) / p + 1.0 / b - 1.0) <= 8e-16);
}

TEST_CASE("validate flags exponent range violations") {
    ProblemSpec spec = ProblemSpec::benchmark_subcritical();
    spec.s = 7.0;  // 2*_lambda - 1 = 5 for Q = 3
    ValidationReport rep = validate(spec);
    CHECK_FALSE(rep.ok());
    CHECK(rep.first_failure().find("s < 2*_lambda - 1") != std::string::npos);
}

TEST_CASE("validate enforces g sign condition at r = 0") {
    ProblemSpec spec = ProblemSpec::benchmark_subcritical();
    spec.r = 0.0;
    spec.g_weight.kind = WeightKind::piecewise_sign;
    spec.g_weight.pos_value = 1.0;
    spec.g_weight.neg_value = -0.5;
    spec.g_weight.center = {0.5, 0.0};
    spec.g_weight.radius = 0.2;
    ValidationReport rep = validate(spec);
    CHECK_FALSE(rep.ok());
    bool found = false;
    for (const auto& item : rep.items)
        if (item.hypothesis == "(g1) r=0 sign" && !item.pass) found = true;
    CHECK(found);
}

TEST_CASE("validate passes the critical benchmark") {
    ProblemSpec spec = ProblemSpec::benchmark_critical();
    ValidationReport rep = validate(spec);
    CHECK(rep.ok());
}

TEST_CASE("validate rejects a critical ball touching the degeneracy set") {
    ProblemSpec spec = ProblemSpec::benchmark_critical();
    spec.g2_ball = GaugeBall{{0.1, 0.0}, 0.1};  // |x0| = 0.1 < 2R
    ValidationReport rep = validate(spec);
    CHECK_FALSE(rep.ok());
    CHECK(rep.first_failure().find("degeneracy") != std::string::npos);
}

TEST_CASE("weight kinds evaluate pointwise") {
    WeightSpec w;
    w.kind = WeightKind::polynomial;
    w.terms = {{1.0, {0, 0}}, {-0.5, {2, 0}}};  // 1 - x^2/2
    double z0[] = {0.5, 0.3};
    CHECK(w.eval(z0, 1, 1.0) == doctest::Approx(1.0 - 0.5 * 0.25));

    WeightSpec t;
    t.kind = WeightKind::tabulated;
    t.table_points = {{0.0, 0.0}, {1.0, 1.0}};
    t.table_values = {2.0, -3.0};
    double z1[] = {0.9, 0.8};
    CHECK(t.eval(z1, 1, 1.0) == doctest::Approx(-3.0));
}
