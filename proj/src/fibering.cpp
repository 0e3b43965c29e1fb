#include "grushin/fibering.hpp"

#include <cmath>
#include <stdexcept>

namespace grushin {

RayData ray_of(const Problem& pb, const Field& u) {
    RayData ray;
    ray.A = pb.op.energy(u);
    ray.B = weighted_power_integral(*pb.grid, pb.coef.g, u, pb.spec.r + 1.0, pb.mode());
    ray.C = weighted_power_integral(*pb.grid, pb.coef.h, u, pb.s_eff() + 1.0, pb.mode());
    ray.r = pb.spec.r;
    ray.s = pb.s_eff();
    ray.mu = pb.spec.mu;
    return ray;
}

double g_function(const RayData& ray, double t) {
    if (t == 0.0) return 0.0;
    return std::pow(t, 1.0 - ray.r) * ray.A - std::pow(t, ray.s - ray.r) * ray.C;
}

double f_value(const RayData& ray, double t) {
    return 0.5 * t * t * ray.A - ray.mu * std::pow(t, 1.0 + ray.r) / (1.0 + ray.r) * ray.B -
           std::pow(t, 1.0 + ray.s) / (1.0 + ray.s) * ray.C;
}

double f_prime(const RayData& ray, double t) {
    return t * ray.A - ray.mu * std::pow(t, ray.r) * ray.B - std::pow(t, ray.s) * ray.C;
}

double f_second(const RayData& ray, double t) {
    double concave = ray.r == 0.0 ? 0.0 : ray.mu * ray.r * std::pow(t, ray.r - 1.0) * ray.B;
    return ray.A - concave - ray.s * std::pow(t, ray.s - 1.0) * ray.C;
}

double t_zero(const RayData& ray) {
    if (ray.C <= 0.0) throw std::domain_error("no interior maximum: G monotone");
    return std::pow((1.0 - ray.r) * ray.A / ((ray.s - ray.r) * ray.C), 1.0 / (ray.s - 1.0));
}

double sup_g(const RayData& ray) { return g_function(ray, t_zero(ray)); }

namespace {

// Bisection on G(t) - target over a sign-changing bracket, then a few secant
// polish steps; relative tolerance 1e-12 on t.
double solve_g(const RayData& ray, double target, double lo, double hi) {
    double flo = g_function(ray, lo) - target;
    double fhi = g_function(ray, hi) - target;
    for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, hi); ++it) {
        double mid = 0.5 * (lo + hi);
        double fm = g_function(ray, mid) - target;
        if ((fm > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    double x0 = lo, x1 = hi, f0 = flo, f1 = fhi;
    for (int it = 0; it < 4 && f1 != f0; ++it) {
        double x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        if (!(x2 > 0.0) || !std::isfinite(x2)) break;
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = g_function(ray, x1) - target;
    }
    return std::abs(f1) <= std::abs(f0) ? x1 : x0;
}

}  // namespace

FiberingStatus try_find_roots(const RayData& ray, FiberingReport& out) {
    out = FiberingReport{};
    if (ray.C <= 0.0) return FiberingStatus::no_interior_maximum;
    out.t0 = t_zero(ray);
    out.G_at_t0 = g_function(ray, out.t0);
    const double target = ray.mu * ray.B;

    if (ray.B > 0.0) {
        if (target >= out.G_at_t0) return FiberingStatus::above_threshold;
        out.ray_case = FiberingCase::two_roots;
        out.t_plus = solve_g(ray, target, 0.0, out.t0);
        out.Fpp_at_t_plus = f_second(ray, *out.t_plus);
        out.F_at_t_plus = f_value(ray, *out.t_plus);
    } else {
        out.ray_case = FiberingCase::single_root;
    }

    double hi = 2.0 * out.t0;
    while (g_function(ray, hi) > target) hi *= 2.0;
    out.t_minus = solve_g(ray, target, out.t0, hi);
    out.Fpp_at_t_minus = f_second(ray, *out.t_minus);
    out.F_at_t_minus = f_value(ray, *out.t_minus);
    return FiberingStatus::ok;
}

FiberingReport find_roots(const RayData& ray) {
    FiberingReport rep;
    switch (try_find_roots(ray, rep)) {
        case FiberingStatus::ok:
            return rep;
        case FiberingStatus::no_interior_maximum:
            throw std::domain_error("no interior maximum: G monotone");
        case FiberingStatus::above_threshold:
            throw std::domain_error("mu above fibering threshold for this ray");
    }
    return rep;
}

double mu_zero(double r, double s, double Sq, double Sp, double norm_g_a, double norm_h_b) {
    if (Sq <= 0.0 || Sp <= 0.0 || norm_g_a <= 0.0 || norm_h_b <= 0.0)
        throw std::domain_error("mu_zero requires positive constants and norms");
    double k = (1.0 - r) / (s - r);
    return (s - 1.0) / (s - r) * std::pow(k, (1.0 - r) / (s - 1.0)) *
           std::pow(std::pow(Sp, 1.0 + s) * norm_h_b, -(1.0 - r) / (s - 1.0)) /
           (std::pow(Sq, 1.0 + r) * norm_g_a);
}

std::string to_string(Branch b) { return b == Branch::plus ? "plus" : "minus"; }

Field scale_to_nehari(const Problem& pb, const Field& u, Branch branch) {
    FiberingReport rep = find_roots(ray_of(pb, u));
    if (branch == Branch::plus) {
        if (!rep.t_plus) throw std::domain_error("no t+ root on this ray (single-root case)");
        return *rep.t_plus * u;
    }
    if (!rep.t_minus) throw std::domain_error("no t- root on this ray");
    return *rep.t_minus * u;
}

}  // namespace grushin
