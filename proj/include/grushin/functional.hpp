#pragma once

// Energy functional I_mu, its Sobolev gradient in the lambda-inner product,
// the Nehari pairing tau and the M+/M0/M- classification.

#include <memory>
#include <string>

#include "grushin/operator.hpp"

namespace grushin {

// Nodal weight data and resolved integrability exponents for one problem.
struct Coefficients {
    Field g;  // interior nodal g values
    Field h;  // interior nodal h values (all ones in the critical regime)
    double q = 0.0, p = 0.0, a = 0.0, b = 0.0;
    double norm_g_a = 0.0;  // ||g||_a over the whole box
    double norm_h_b = 0.0;  // ||h||_b (sup norm when b = inf)

    static Coefficients build(const ProblemSpec& spec, const TensorGrid& grid);
};

// Assembled problem: spec + grid + operator + weights, shared by all solvers.
struct Problem {
    ProblemSpec spec;
    std::shared_ptr<const TensorGrid> grid;
    GrushinOperator op;
    Coefficients coef;

    static Problem build(const ProblemSpec& spec, const std::vector<int>& nodes_per_axis);

    bool critical() const { return spec.regime == Regime::critical; }
    // Convex exponent in play: s (subcritical) or 2*_lambda - 1 (critical).
    double s_eff() const { return spec.s_effective(); }
    SignedMode mode() const {
        return critical() ? SignedMode::positive_part : SignedMode::abs;
    }
};

struct EnergyBreakdown {
    double dirichlet = 0.0;          // 1/2 ||u||_lambda^2
    double concave = 0.0;            // mu/(r+1) * g-integral
    double convex = 0.0;             // 1/(s+1) * h-integral
    double total = 0.0;              // dirichlet - concave - convex
    double tau = 0.0;                // <I'(u), u>
    double tau_prime_pairing = 0.0;  // <tau'(u), u>
};

enum class NehariSide { plus, minus, zero, off_manifold };

struct NehariClass {
    NehariSide side = NehariSide::off_manifold;
    double tau = 0.0;
    double tau_prime = 0.0;
    double tolerance = 0.0;
};

std::string to_string(NehariSide side);

EnergyBreakdown energy(const Problem& pb, const Field& u);

// Sobolev gradient: the field grad with <grad, phi>_lambda equal to the
// weak-form residual for every test field; zero exactly at discrete weak
// solutions. One operator solve per evaluation.
Field gradient(const Problem& pb, const Field& u);

double residual_norm(const Problem& pb, const Field& u);

// Scale-invariant default manifold tolerance: 1e-8 * max(1, ||u||^2).
double nehari_tolerance(double norm_sq);

// Classifies a nonzero field by the signs of tau and <tau'(u), u>.
NehariClass classify(const Problem& pb, const Field& u, double tol = -1.0);

}  // namespace grushin
