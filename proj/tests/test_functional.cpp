#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <random>

#include "grushin/fibering.hpp"
#include "grushin/functional.hpp"

using namespace grushin;

namespace {

Problem benchmark(int nodes, double mu = 0.1) {
    ProblemSpec spec = ProblemSpec::benchmark_subcritical();
    spec.mu = mu;
    return Problem::build(spec, {nodes, nodes});
}

Field bump_field(const Problem& pb) {
    return pb.grid->sample([](std::span<const double> z) {
        return (1.0 - z[0] * z[0]) * (1.0 - z[1] * z[1]);
    });
}

Field random_field(const Problem& pb, unsigned seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Field u(pb.grid->interior_count());
    for (long i = 0; i < u.size(); ++i) u[i] = scale * g(rng);
    return u;
}

// Independent fine-grid trapezoid of an analytic integrand on (-1,1)^2.
double fine_quadrature(double (*f)(double, double), int nodes = 1025) {
    double h = 2.0 / (nodes - 1);
    double acc = 0.0;
    for (int i = 0; i < nodes; ++i) {
        double wx = (i == 0 || i == nodes - 1) ? 0.5 : 1.0;
        for (int j = 0; j < nodes; ++j) {
            double wy = (j == 0 || j == nodes - 1) ? 0.5 : 1.0;
            acc += wx * wy * f(-1.0 + i * h, -1.0 + j * h);
        }
    }
    return acc * h * h;
}

double bump_pow_15(double x, double y) {
    return std::pow((1.0 - x * x) * (1.0 - y * y), 1.5);
}

}  // namespace

TEST_CASE("energy breakdown components against a fine-quadrature oracle") {
    Problem pb = benchmark(129, 0.1);
    Field u = bump_field(pb);
    EnergyBreakdown e = energy(pb, u);

    CHECK(e.total == doctest::Approx(e.dirichlet - e.concave - e.convex));

    double i15 = fine_quadrature(bump_pow_15);
    double i4 = fine_quadrature(+[](double x, double y) {
        double b = (1.0 - x * x) * (1.0 - y * y);
        return b * b * b * b;
    });
    double dirichlet = 0.5 * 1024.0 / 315.0;
    CHECK(std::abs(e.dirichlet - dirichlet) <= 1e-2 * dirichlet);
    CHECK(std::abs(e.concave - 0.1 / 1.5 * i15) <= 1e-3);
    CHECK(std::abs(e.convex - 0.25 * i4) <= 1e-3);
}

TEST_CASE("zero field has zero energy and tau") {
    Problem pb = benchmark(33);
    Field z = Field::Zero(pb.grid->interior_count());
    EnergyBreakdown e = energy(pb, z);
    CHECK(e.total == 0.0);
    CHECK(e.tau == 0.0);
}

TEST_CASE("critical functional ignores the negative part") {
    ProblemSpec spec = ProblemSpec::benchmark_critical();
    Problem pb = Problem::build(spec, {33, 33});
    Field u = -bump_field(pb);
    EnergyBreakdown e = energy(pb, u);
    CHECK(e.concave == 0.0);
    CHECK(e.convex == 0.0);
    CHECK(e.total == doctest::Approx(0.5 * pb.op.energy(u)));
    CHECK(e.total > 0.0);
}

TEST_CASE("gradient vanishes identically at zero and in the linear case") {
    Problem pb = benchmark(33);
    Field z = Field::Zero(pb.grid->interior_count());
    CHECK(gradient(pb, z).norm() == 0.0);
    CHECK(residual_norm(pb, z) == 0.0);

    // mu = 0 and h = 0 degenerate to the pure quadratic: gradient(u) = u.
    ProblemSpec lin = ProblemSpec::benchmark_subcritical();
    lin.mu = 0.0;
    lin.h_weight.value = 0.0;
    Problem pl = Problem::build(lin, {33, 33});
    Field u = random_field(pl, 17);
    CHECK((gradient(pl, u) - u).lpNorm<Eigen::Infinity>() <= 1e-12 * u.lpNorm<Eigen::Infinity>());
}

TEST_CASE("gradient matches central differences of the energy") {
    Problem pb = benchmark(33, 0.2);
    const double eps = 1e-4;
    for (unsigned seed = 1; seed <= 20; ++seed) {
        Field u = random_field(pb, seed);
        Field phi = random_field(pb, seed + 1000);
        phi /= std::sqrt(pb.op.energy(phi));
        Field grad = gradient(pb, u);
        double pred = pb.op.inner(grad, phi);
        double ip = energy(pb, Field(u + eps * phi)).total;
        double im = energy(pb, Field(u - eps * phi)).total;
        double fd = (ip - im) / (2.0 * eps);
        CHECK(std::abs(pred - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("random fields are generically non-critical") {
    Problem pb = benchmark(33);
    Field u = random_field(pb, 99);
    u /= std::sqrt(pb.op.energy(u));
    CHECK(residual_norm(pb, u) > 0.0);
}

TEST_CASE("classification of scaled and unscaled fields") {
    Problem pb = benchmark(65, 0.01);
    Field u = bump_field(pb);

    CHECK(classify(pb, u).side == NehariSide::off_manifold);

    Field up = scale_to_nehari(pb, u, Branch::plus);
    CHECK(classify(pb, up).side == NehariSide::plus);
    Field um = scale_to_nehari(pb, u, Branch::minus);
    CHECK(classify(pb, um).side == NehariSide::minus);

    Field z = Field::Zero(pb.grid->interior_count());
    CHECK_THROWS_AS(classify(pb, z), std::domain_error);
}

TEST_CASE("manifold identities TT9 and TT6") {
    Problem pb = benchmark(65, 0.01);
    for (unsigned seed : {4u, 9u, 23u}) {
        Field base = bump_field(pb) + 0.1 * random_field(pb, seed);
        for (Branch b : {Branch::plus, Branch::minus}) {
            Field u = scale_to_nehari(pb, base, b);
            RayData ray = ray_of(pb, u);
            EnergyBreakdown e = energy(pb, u);
            double lhs = e.tau_prime_pairing;
            double tt9 = (1.0 - ray.s) * ray.A + ray.mu * (ray.s - ray.r) * ray.B;
            double tt6 = (1.0 - ray.r) * ray.A - (ray.s - ray.r) * ray.C;
            double scale = std::max(1.0, std::abs(lhs));
            CHECK(std::abs(lhs - tt9) <= 1e-9 * scale);
            CHECK(std::abs(lhs - tt6) <= 1e-9 * scale);
            // Membership consequences of the identities.
            if (b == Branch::plus) CHECK(ray.B > 0.0);
            if (b == Branch::minus) CHECK(ray.C > 0.0);
        }
    }
}
