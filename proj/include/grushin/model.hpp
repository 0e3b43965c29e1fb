#pragma once

// Continuous problem description: dimensions, exponents, weight functions,
// and the hypothesis checks that must pass before any numerics run.

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace grushin {

enum class Regime { subcritical, critical };

enum class WeightKind { constant, polynomial, piecewise_sign, tabulated };

// One monomial c * prod_k z_k^powers[k] of a polynomial weight.
struct PolyTerm {
    double coeff = 0.0;
    std::vector<int> powers;  // one entry per axis, missing entries = 0
};

struct GaugeBall {
    std::vector<double> center;  // n+m coordinates
    double radius = 0.0;         // gauge-metric radius
};

// Weight function g or h together with its integrability bookkeeping.
// q (resp. p) is the auxiliary embedding exponent; exponent <= 0 means
// "use the midpoint of the admissible interval".
struct WeightSpec {
    WeightKind kind = WeightKind::constant;

    double value = 1.0;  // constant kind

    std::vector<PolyTerm> terms;  // polynomial kind

    // piecewise_sign kind: pos_value inside the gauge ball, neg_value outside
    double pos_value = 1.0;
    double neg_value = -1.0;
    std::vector<double> center;
    double radius = 0.0;

    // tabulated kind: nearest-node lookup in (coords..., value) rows
    std::vector<std::vector<double>> table_points;
    std::vector<double> table_values;

    double exponent = 0.0;  // q for g, p for h

    double eval(std::span<const double> z, int n, double lambda) const;
};

struct Interval {
    double lo = -1.0;
    double hi = 1.0;
};

// Full description of the continuous problem.
struct ProblemSpec {
    int n = 1;  // x-axes
    int m = 1;  // y-axes
    double lambda = 1.0;
    double r = 0.5;  // concave exponent, 0 <= r < 1
    double s = 3.0;  // convex exponent (ignored in the critical regime where
                     // it is pinned to crit-1)
    double mu = 0.1;
    std::vector<Interval> box;  // n+m axis intervals
    WeightSpec g_weight;
    WeightSpec h_weight;
    Regime regime = Regime::subcritical;
    std::optional<GaugeBall> g2_ball;  // ball on which g must be bounded

    int dim() const { return n + m; }
    // Convex exponent actually used: s in subcritical, crit-1 in critical.
    double s_effective() const;

    // Resolved embedding exponents and their Hoelder conjugates.
    double q_exponent() const;
    double p_exponent() const;
    double a_exponent() const;  // a = q/(q-(r+1))
    double b_exponent() const;  // b = p/(p-(s+1)), +inf in the critical regime

    static ProblemSpec benchmark_subcritical();
    static ProblemSpec benchmark_critical();
};

struct Exponents {
    double Q = 0.0;
    double crit = 0.0;
};

// Q = n + (1+lambda) m and 2Q/(Q-2); throws std::domain_error when Q <= 2.
Exponents derived_exponents(const ProblemSpec& spec);

struct ValidationItem {
    std::string hypothesis;
    bool pass = false;
    std::string detail;
};

struct ValidationReport {
    std::vector<ValidationItem> items;
    bool ok() const;
    std::string first_failure() const;
};

// Checks every hypothesis (exponent ranges, g/h sign conditions, domain
// geometry) and reports each with the offending value on failure.
ValidationReport validate(const ProblemSpec& spec);

}  // namespace grushin
