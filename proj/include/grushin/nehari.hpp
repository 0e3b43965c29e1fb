#pragma once

// Subcritical two-solution machinery: projected Sobolev-gradient descent on
// the Nehari branches. The minus branch carries the positive-energy solution,
// the plus branch the negative-energy one.

#include <cstdint>
#include <optional>
#include <vector>

#include "grushin/fibering.hpp"

namespace grushin {

struct SolveOptions {
    double tol = 1e-6;            // residual_norm stopping tolerance
    int max_iterations = 5000;
    std::uint64_t seed = 1;
    int multistarts = 3;
    double distinct_tol = 1e-2;   // L2 separation of the two solutions
    int polish_iterations = 10;   // post |.| re-projection budget
};

struct TraceRow {
    double energy = 0.0;
    double residual = 0.0;
    double tau = 0.0;
};

struct SolveResult {
    Field field;
    double energy = 0.0;
    double residual = 0.0;
    NehariClass nehari_class;
    int iterations = 0;
    std::vector<TraceRow> trace;
    std::uint64_t seed = 0;
    bool converged = false;
    std::string message;
    double reproject_t = 0.0;     // t of the branch re-projection at the end
    bool mu_tilde_warning = false;
};

// mu_0, the coercivity minorant coefficients of the restricted functional,
// and the minus-branch norm floor, all from estimated embedding constants.
struct Thresholds {
    double mu0 = 0.0;
    double coercive_c1 = 0.0;   // 1/2 - 1/(s+1)
    double coercive_c2 = 0.0;   // (s-r)/((r+1)(s+1)) S_q^{1+r} ||g||_a
    double t41_lower_bound = 0.0;
    double S_q = 0.0;
    double S_p = 0.0;

    double minorant(double norm, double mu, double r) const {
        return coercive_c1 * norm * norm - mu * coercive_c2 * std::pow(norm, r + 1.0);
    }
};

Thresholds thresholds(const Problem& pb, double Sq, double Sp);

// Deterministic branch initializations: the principal mode of the operator
// restricted to supp h+ (minus) and a bump supported where g > 0 (plus).
Field branch_init(const Problem& pb, Branch branch, std::uint64_t seed);

// Projected descent u <- scale_to_nehari(u - a grad I(u)) with Armijo
// backtracking; finishes with the |.| step, re-projection and polish.
// Throws Error(threshold) when gates say mu is too large and
// Error(nonconvergence) only for structural failures ("branch empty along
// ray"); an iteration-capped run returns with converged = false.
SolveResult minimize_on_branch(const Problem& pb, Branch branch,
                               const std::optional<Field>& init, const SolveOptions& opts,
                               const Thresholds* gates = nullptr);

struct TwoSolutions {
    SolveResult first;   // minus branch, positive energy
    SolveResult second;  // plus branch, negative energy
    double distinctness = 0.0;  // L2 distance
};

TwoSolutions two_solutions(const Problem& pb, const Thresholds& gates, const SolveOptions& opts);

}  // namespace grushin
