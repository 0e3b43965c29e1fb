#pragma once

// One-dimensional fibering analysis along rays t -> t u: the unimodal ray
// function G, its maximizer t0, the Nehari roots t+/t-, and the mu_0
// threshold below which both roots exist for every admissible ray.

#include <optional>
#include <string>

#include "grushin/functional.hpp"

namespace grushin {

// Ray invariants of a fixed direction u.
struct RayData {
    double A = 0.0;  // ||u||_lambda^2
    double B = 0.0;  // integral of g |u|^{r+1}
    double C = 0.0;  // integral of h |u|^{s+1}
    double r = 0.0;
    double s = 0.0;
    double mu = 0.0;
};

RayData ray_of(const Problem& pb, const Field& u);

enum class FiberingCase { single_root, two_roots };

struct FiberingReport {
    double t0 = 0.0;
    double G_at_t0 = 0.0;
    std::optional<double> t_plus;
    std::optional<double> t_minus;
    double F_at_t_plus = 0.0;
    double F_at_t_minus = 0.0;
    double Fpp_at_t_plus = 0.0;   // F''(t+), positive on the plus branch
    double Fpp_at_t_minus = 0.0;  // F''(t-), negative on the minus branch
    FiberingCase ray_case = FiberingCase::single_root;
};

enum class FiberingStatus { ok, no_interior_maximum, above_threshold };

// G(t) = t^{1-r} A - t^{s-r} C.
double g_function(const RayData& ray, double t);

// Fibering energy F(t) = I(t u) and its derivatives along the ray.
double f_value(const RayData& ray, double t);
double f_prime(const RayData& ray, double t);
double f_second(const RayData& ray, double t);

// Maximizer of G; requires C > 0.
double t_zero(const RayData& ray);

// sup_{t >= 0} G(t), evaluated by substituting t0 into G.
double sup_g(const RayData& ray);

// Solves G(t) = mu B. Case B <= 0 gives the single root t- > t0; case
// 0 < mu B < G(t0) gives t+ < t0 < t-. Throws on threshold violation; the
// try_ variant reports the status instead.
FiberingReport find_roots(const RayData& ray);
FiberingStatus try_find_roots(const RayData& ray, FiberingReport& out);

// mu_0 threshold of the two-root regime from embedding constants and norms.
double mu_zero(double r, double s, double Sq, double Sp, double norm_g_a, double norm_h_b);

enum class Branch { plus, minus };

std::string to_string(Branch b);

// Returns t^{branch} * u; the result classifies into the requested class.
Field scale_to_nehari(const Problem& pb, const Field& u, Branch branch);

}  // namespace grushin
