#include "grushin/nehari.hpp"

#include <Eigen/SparseCholesky>
#include <cmath>
#include <limits>
#include <random>

#include "grushin/critical.hpp"
#include "grushin/errors.hpp"

namespace grushin {

Thresholds thresholds(const Problem& pb, double Sq, double Sp) {
    const double r = pb.spec.r, s = pb.s_eff();
    Thresholds th;
    th.S_q = Sq;
    th.S_p = Sp;
    th.mu0 = mu_zero(r, s, Sq, Sp, pb.coef.norm_g_a, pb.coef.norm_h_b);
    th.coercive_c1 = 0.5 - 1.0 / (s + 1.0);
    th.coercive_c2 = (s - r) / ((r + 1.0) * (s + 1.0)) * std::pow(Sq, 1.0 + r) * pb.coef.norm_g_a;
    th.t41_lower_bound =
        std::pow((1.0 - r) / (std::pow(Sp, s + 1.0) * (s - r) * pb.coef.norm_h_b), 1.0 / (s - 1.0));
    return th;
}

namespace {

// Principal mode of the operator restricted to a node set, by inverse
// iteration on the principal submatrix.
Field restricted_principal_mode(const Problem& pb, const std::vector<long>& support) {
    const long N = pb.grid->interior_count();
    Field out = Field::Zero(N);
    if (support.empty()) return out;

    std::vector<long> into(N, -1);
    for (std::size_t k = 0; k < support.size(); ++k) into[support[k]] = static_cast<long>(k);

    const auto& L = pb.op.matrix();
    std::vector<Eigen::Triplet<double>> trips;
    for (std::size_t k = 0; k < support.size(); ++k) {
        long col = support[k];
        for (Eigen::SparseMatrix<double>::InnerIterator it(L, col); it; ++it) {
            long ri = into[it.row()];
            if (ri >= 0) trips.emplace_back(ri, static_cast<long>(k), it.value());
        }
    }
    Eigen::SparseMatrix<double> Ls(support.size(), support.size());
    Ls.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol(Ls);
    if (chol.info() != Eigen::Success)
        throw Error(ErrorCode::internal, "restricted operator factorization failed");

    Field v = Field::Ones(static_cast<long>(support.size()));
    v /= v.norm();
    for (int it = 0; it < 60; ++it) {
        Field w = chol.solve(v);
        double nw = w.norm();
        if (nw == 0.0) break;
        w /= nw;
        if ((w - v).norm() < 1e-12) {
            v = std::move(w);
            break;
        }
        v = std::move(w);
    }
    for (std::size_t k = 0; k < support.size(); ++k) out[support[k]] = std::abs(v[static_cast<long>(k)]);
    return out;
}

// Smooth low-frequency modulation; rough nodal noise would only slow the
// descent without exploring new basins.
Field with_noise(const Problem& pb, Field u, std::uint64_t seed) {
    if (seed == 0) return u;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * 3.14159265358979);
    std::uniform_int_distribution<int> freq(1, 3);
    const int d = pb.grid->dim();
    std::vector<double> ph(d);
    std::vector<int> kf(d);
    for (int k = 0; k < d; ++k) {
        ph[k] = phase(rng);
        kf[k] = freq(rng);
    }
    for (long i = 0; i < u.size(); ++i) {
        std::vector<double> z = pb.grid->interior_point(i);
        double mod = 1.0;
        for (int k = 0; k < d; ++k) {
            double t = (z[k] - pb.grid->box[k].lo) / (pb.grid->box[k].hi - pb.grid->box[k].lo);
            mod *= 1.0 + 0.3 * std::sin(kf[k] * 3.14159265358979 * t + ph[k]);
        }
        u[i] *= std::max(mod, 0.05);
    }
    return u;
}

struct Projection {
    bool ok = false;
    FiberingStatus status = FiberingStatus::ok;
    double t = 0.0;
    double value = 0.0;  // I(t u)
    Field field;
};

Projection project_branch(const Problem& pb, const Field& w, Branch branch) {
    Projection out;
    RayData ray = ray_of(pb, w);
    if (ray.A <= 0.0) {
        out.status = FiberingStatus::no_interior_maximum;
        return out;
    }
    FiberingReport rep;
    out.status = try_find_roots(ray, rep);
    if (out.status != FiberingStatus::ok) return out;
    double t;
    if (branch == Branch::plus) {
        if (!rep.t_plus) {
            out.status = FiberingStatus::no_interior_maximum;  // case (a): no t+
            return out;
        }
        t = *rep.t_plus;
        out.value = rep.F_at_t_plus;
    } else {
        t = *rep.t_minus;
        out.value = rep.F_at_t_minus;
    }
    out.ok = true;
    out.t = t;
    out.field = t * w;
    return out;
}

const char* failure_message(FiberingStatus st) {
    return st == FiberingStatus::above_threshold ? "mu above fibering threshold for this ray"
                                                 : "branch empty along ray";
}

// One run of projected Armijo descent from a given initialization.
SolveResult descend(const Problem& pb, Branch branch, Field init, const SolveOptions& opts,
                    std::uint64_t seed) {
    SolveResult res;
    res.seed = seed;

    Projection pr = project_branch(pb, init, branch);
    if (!pr.ok) throw Error(ErrorCode::nonconvergence, failure_message(pr.status));
    Field u = pr.field;
    double value = pr.value;

    double alpha = 1.0;
    const double armijo = 1e-4;
    double last_newton_res = std::numeric_limits<double>::infinity();
    int newton_attempts = 0;
    int k = 0;
    for (; k < opts.max_iterations; ++k) {
        Field grad = gradient(pb, u);
        double res_sq = std::max(0.0, pb.op.energy(grad));
        double rnorm = std::sqrt(res_sq);
        EnergyBreakdown eb = energy(pb, u);
        double unorm = std::sqrt(2.0 * eb.dirichlet);
        res.trace.push_back({value, rnorm, eb.tau});
        if (rnorm < opts.tol) {
            res.converged = true;
            break;
        }
        // Newton endgame: the descent has located the basin, the critical
        // point itself is polished quadratically. Guarded so a failed or
        // runaway polish falls back to plain descent; attempts re-arm as the
        // residual keeps shrinking.
        if (rnorm < 5e-2 * std::max(1.0, unorm) && rnorm < 0.25 * last_newton_res &&
            newton_attempts < 4) {
            last_newton_res = rnorm;
            ++newton_attempts;
            Field cand = u;
            if (newton_polish(pb, cand, opts.tol, 12)) {
                double cn = std::sqrt(std::max(0.0, pb.op.energy(cand)));
                double un = std::sqrt(std::max(0.0, pb.op.energy(u)));
                if (cn > 0.2 * un && cn < 5.0 * un) {
                    NehariSide want = branch == Branch::plus ? NehariSide::plus : NehariSide::minus;
                    if (classify(pb, cand).side == want) {
                        u = std::move(cand);
                        value = energy(pb, u).total;
                        res.converged = true;
                        break;
                    }
                }
            }
        }
        bool accepted = false;
        double a = std::min(alpha * 2.0, 1e6);
        for (; a >= 1e-16; a *= 0.5) {
            Field trial = u - a * grad;
            Projection p = project_branch(pb, trial, branch);
            if (!p.ok) continue;
            if (p.value <= value - armijo * a * res_sq) {
                u = std::move(p.field);
                value = p.value;
                alpha = a;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            res.message = "line search stagnation";
            break;
        }
    }
    if (k == opts.max_iterations) res.message = "iteration cap";

    // Nonnegative representative: |u|, re-project, polish briefly, and end
    // on an |u| + projection so the reported field is nonnegative nodewise.
    for (int round = 0; round < 3; ++round) {
        Field au = u.cwiseAbs();
        Projection p = project_branch(pb, au, branch);
        if (!p.ok) break;
        u = std::move(p.field);
        value = p.value;
        double rnorm = residual_norm(pb, u);
        if (rnorm < opts.tol) break;
        for (int j = 0; j < opts.polish_iterations; ++j) {
            Field grad = gradient(pb, u);
            double res_sq = std::max(0.0, pb.op.energy(grad));
            if (std::sqrt(res_sq) < opts.tol) break;
            double a = std::min(alpha * 2.0, 1e6);
            bool accepted = false;
            for (; a >= 1e-16; a *= 0.5) {
                Field trial = u - a * grad;
                Projection q = project_branch(pb, trial, branch);
                if (!q.ok) continue;
                if (q.value <= value - armijo * a * res_sq) {
                    u = std::move(q.field);
                    value = q.value;
                    alpha = a;
                    accepted = true;
                    break;
                }
            }
            if (!accepted) break;
        }
    }
    {
        Field au = u.cwiseAbs();
        Projection p = project_branch(pb, au, branch);
        if (p.ok) {
            u = std::move(p.field);
            value = p.value;
        }
    }

    res.field = u;
    res.energy = value;
    res.residual = residual_norm(pb, u);
    res.converged = res.residual < opts.tol;
    if (res.converged) res.message.clear();
    res.iterations = k;
    res.nehari_class = classify(pb, u);

    // Remark-style consistency: re-projecting the converged field along its
    // own ray must return t ~= 1.
    Projection rp = project_branch(pb, u, branch);
    res.reproject_t = rp.ok ? rp.t : 0.0;
    return res;
}

}  // namespace

Field branch_init(const Problem& pb, Branch branch, std::uint64_t seed) {
    const long N = pb.grid->interior_count();
    Field base;
    if (branch == Branch::minus) {
        std::vector<long> support;
        for (long i = 0; i < N; ++i)
            if (pb.coef.h[i] > 0.0) support.push_back(i);
        base = restricted_principal_mode(pb, support);
        if (base.lpNorm<Eigen::Infinity>() > 0.0) {
            double bump = 0.01 * base.lpNorm<Eigen::Infinity>();
            for (long i : support) base[i] += bump;
        }
    } else {
        base = Field(N);
        for (long i = 0; i < N; ++i) base[i] = std::max(pb.coef.g[i], 0.0);
    }
    base = with_noise(pb, std::move(base), seed);
    double norm = std::sqrt(std::max(0.0, pb.op.energy(base)));
    if (norm > 0.0) base /= norm;
    return base;
}

SolveResult minimize_on_branch(const Problem& pb, Branch branch, const std::optional<Field>& init,
                               const SolveOptions& opts, const Thresholds* gates) {
    if (gates && pb.spec.mu >= gates->mu0)
        throw Error(ErrorCode::threshold, "mu above threshold (mu >= mu0)");

    if (init) return descend(pb, branch, *init, opts, opts.seed);

    SolveResult best;
    bool have = false;
    std::string first_error;
    for (int j = 0; j < std::max(1, opts.multistarts); ++j) {
        std::uint64_t seed = j == 0 ? 0 : opts.seed + static_cast<std::uint64_t>(j);
        SolveOptions run_opts = opts;
        // Exploratory perturbed starts get a reduced budget; the designed
        // initialization carries the full one.
        if (j > 0) run_opts.max_iterations = std::min(200, opts.max_iterations);
        try {
            SolveResult r = descend(pb, branch, branch_init(pb, branch, seed), run_opts, seed);
            bool better = !have || (r.converged && !best.converged) ||
                          (r.converged == best.converged && r.energy < best.energy);
            if (better) {
                best = std::move(r);
                have = true;
            }
        } catch (const Error& e) {
            if (first_error.empty()) first_error = e.what();
        }
    }
    if (!have) throw Error(ErrorCode::nonconvergence,
                           first_error.empty() ? "all starts failed" : first_error);
    return best;
}

TwoSolutions two_solutions(const Problem& pb, const Thresholds& gates, const SolveOptions& opts) {
    if (pb.spec.mu >= gates.mu0) throw Error(ErrorCode::threshold, "mu above threshold (mu >= mu0)");
    TwoSolutions out;
    out.first = minimize_on_branch(pb, Branch::minus, std::nullopt, opts, &gates);
    out.second = minimize_on_branch(pb, Branch::plus, std::nullopt, opts, &gates);

    double norm_first = std::sqrt(std::max(0.0, pb.op.energy(out.first.field)));
    if (norm_first < gates.t41_lower_bound * (1.0 - 1e-9)) out.first.mu_tilde_warning = true;

    out.distinctness = lp_norm(*pb.grid, Field(out.first.field - out.second.field), 2.0);
    if (out.distinctness < opts.distinct_tol)
        throw Error(ErrorCode::nonconvergence, "solutions coincide");
    return out;
}

}  // namespace grushin
