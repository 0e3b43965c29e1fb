#include "grushin/functional.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace grushin {

Coefficients Coefficients::build(const ProblemSpec& spec, const TensorGrid& grid) {
    Coefficients c;
    c.q = spec.q_exponent();
    c.p = spec.p_exponent();
    c.a = spec.a_exponent();
    c.b = spec.b_exponent();

    auto eval_g = [&](std::span<const double> z) { return spec.g_weight.eval(z, spec.n, spec.lambda); };
    auto eval_h = [&](std::span<const double> z) { return spec.h_weight.eval(z, spec.n, spec.lambda); };
    c.g = grid.sample(eval_g);
    if (spec.regime == Regime::critical)
        c.h = Field::Ones(grid.interior_count());
    else
        c.h = grid.sample(eval_h);

    c.norm_g_a = std::pow(
        grid.integrate([&](std::span<const double> z) { return std::pow(std::abs(eval_g(z)), c.a); }),
        1.0 / c.a);
    if (std::isinf(c.b)) {
        c.norm_h_b = 1.0;  // critical regime, h == 1
    } else {
        c.norm_h_b = std::pow(
            grid.integrate([&](std::span<const double> z) { return std::pow(std::abs(eval_h(z)), c.b); }),
            1.0 / c.b);
    }
    return c;
}

Problem Problem::build(const ProblemSpec& spec, const std::vector<int>& nodes_per_axis) {
    auto grid = std::make_shared<const TensorGrid>(TensorGrid::make(spec, nodes_per_axis));
    GrushinOperator op = GrushinOperator::assemble(grid, spec.lambda);
    Coefficients coef = Coefficients::build(spec, *grid);
    return Problem{spec, grid, std::move(op), std::move(coef)};
}

EnergyBreakdown energy(const Problem& pb, const Field& u) {
    const double r = pb.spec.r, s = pb.s_eff(), mu = pb.spec.mu;
    EnergyBreakdown e;
    double norm_sq = pb.op.energy(u);
    double gi = weighted_power_integral(*pb.grid, pb.coef.g, u, r + 1.0, pb.mode());
    double hi = weighted_power_integral(*pb.grid, pb.coef.h, u, s + 1.0, pb.mode());
    e.dirichlet = 0.5 * norm_sq;
    e.concave = mu / (r + 1.0) * gi;
    e.convex = hi / (s + 1.0);
    e.total = e.dirichlet - e.concave - e.convex;
    e.tau = norm_sq - mu * gi - hi;
    e.tau_prime_pairing = 2.0 * norm_sq - mu * (r + 1.0) * gi - (s + 1.0) * hi;
    return e;
}

namespace {

// Nodal nonlinear load f(u) with mu g |u|^{r-1} u + h |u|^{s-1} u in the
// subcritical regime and mu g (u+)^r + (u+)^{s} in the critical one.
Field nonlinear_load(const Problem& pb, const Field& u) {
    const double r = pb.spec.r, s = pb.s_eff(), mu = pb.spec.mu;
    Field f(u.size());
    if (pb.critical()) {
        for (long i = 0; i < u.size(); ++i) {
            double up = std::max(u[i], 0.0);
            f[i] = up > 0.0 ? mu * pb.coef.g[i] * std::pow(up, r) + pb.coef.h[i] * std::pow(up, s)
                            : 0.0;
        }
    } else {
        for (long i = 0; i < u.size(); ++i) {
            double au = std::abs(u[i]);
            f[i] = au > 0.0 ? (mu * pb.coef.g[i] * std::pow(au, r) + pb.coef.h[i] * std::pow(au, s)) *
                                  (u[i] > 0.0 ? 1.0 : -1.0)
                            : 0.0;
        }
    }
    return f;
}

}  // namespace

Field gradient(const Problem& pb, const Field& u) {
    // A grad = A u - load  with A = vol L, so grad = u - L^{-1} f(u).
    return u - pb.op.solve(nonlinear_load(pb, u));
}

double residual_norm(const Problem& pb, const Field& u) {
    Field g = gradient(pb, u);
    return std::sqrt(std::max(0.0, pb.op.energy(g)));
}

double nehari_tolerance(double norm_sq) { return 1e-8 * std::max(1.0, norm_sq); }

std::string to_string(NehariSide side) {
    switch (side) {
        case NehariSide::plus: return "plus";
        case NehariSide::minus: return "minus";
        case NehariSide::zero: return "zero";
        case NehariSide::off_manifold: return "off_manifold";
    }
    return "?";
}

NehariClass classify(const Problem& pb, const Field& u, double tol) {
    if (u.size() == 0 || u.lpNorm<Eigen::Infinity>() == 0.0)
        throw std::domain_error("Nehari manifold excludes 0");
    EnergyBreakdown e = energy(pb, u);
    double norm_sq = 2.0 * e.dirichlet;
    if (tol < 0.0) tol = nehari_tolerance(norm_sq);
    NehariClass c;
    c.tau = e.tau;
    c.tau_prime = e.tau_prime_pairing;
    c.tolerance = tol;
    // Membership uses the absolute tolerance; the side of the manifold is a
    // sign question, so its dead band scales with ||u||^2.
    double side_tol = 1e-8 * norm_sq;
    if (std::abs(e.tau) > tol)
        c.side = NehariSide::off_manifold;
    else if (e.tau_prime_pairing > side_tol)
        c.side = NehariSide::plus;
    else if (e.tau_prime_pairing < -side_tol)
        c.side = NehariSide::minus;
    else
        c.side = NehariSide::zero;
    return c;
}

}  // namespace grushin
