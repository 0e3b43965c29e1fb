#include "grushin/critical.hpp"

#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include "grushin/errors.hpp"

namespace grushin {

namespace {

// ---------------------------------------------------------------- utilities

double simpson(const std::function<double(double)>& f, double a, double b, int n) {
    if (b <= a) return 0.0;
    if (n % 2) ++n;
    double h = (b - a) / n;
    double acc = f(a) + f(b);
    for (int i = 1; i < n; ++i) acc += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

// Radial integral on [a, b] with a log substitution; robust for power laws.
double radial_integral(const std::function<double(double)>& f, double a, double b) {
    if (b <= a) return 0.0;
    double la = std::log(a), lb = std::log(b);
    return simpson([&](double u) { double r = std::exp(u); return f(r) * r; }, la, lb, 2000);
}

double sphere_surface(int k) {  // surface measure of S^{k-1} in R^k
    return 2.0 * std::pow(std::numbers::pi, 0.5 * k) / std::tgamma(0.5 * k);
}

double least_squares_slope(std::span<const double> x, std::span<const double> y) {
    double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double cutoff_profile_derivative(double rho, double R) {
    if (rho <= R || rho >= 2.0 * R) return 0.0;
    double t = (rho - R) / R;
    return -(30.0 * t * t * (1.0 + t * (-2.0 + t))) / R;  // -d/dt smoothstep5 / R
}

}  // namespace

// ------------------------------------------------------------- Rayleigh min

namespace {

Field rayleigh_start(const TensorGrid& grid) {
    return grid.sample([&](std::span<const double> z) {
        double v = 1.0;
        for (int k = 0; k < grid.dim(); ++k) {
            double t = (2.0 * z[k] - grid.box[k].lo - grid.box[k].hi) /
                       (grid.box[k].hi - grid.box[k].lo);
            v *= 1.0 - t * t;
        }
        return v;
    });
}

SobolevEstimate rayleigh_minimize_field(const GrushinOperator& op, double p,
                                        const RayleighOptions& opts, Field* minimizer) {
    const TensorGrid& grid = op.grid();
    Field u = rayleigh_start(grid);
    u /= lp_norm(grid, u, p);
    double R = op.energy(u);

    SobolevEstimate est;
    int stagnant = 0;
    int it = 0;
    for (; it < opts.max_iterations; ++it) {
        Field w(u.size());
        for (long i = 0; i < u.size(); ++i) {
            double a = std::abs(u[i]);
            w[i] = a > 0.0 ? std::pow(a, p - 2.0) * u[i] : 0.0;
        }
        Field y = op.solve(w);
        double prev = R;

        // Inverse-iteration step toward the Euler-Lagrange fixed point; the
        // quotient is non-increasing along it in practice, with a gradient
        // backtracking fallback for the rare uphill step.
        Field trial = y.cwiseAbs();
        double nrm = lp_norm(grid, trial, p);
        if (nrm <= 0.0) break;
        trial /= nrm;
        double Rt = op.energy(trial);
        if (Rt <= R) {
            u = std::move(trial);
            R = Rt;
        } else {
            Field d = R * y - u;
            double dn2 = std::max(0.0, op.energy(d));
            if (std::sqrt(dn2) <= 1e-13 * std::sqrt(R)) {
                est.converged = true;
                break;
            }
            bool accepted = false;
            for (double a = 1.0; a >= 1e-14; a *= 0.5) {
                Field cand = (u + a * d).cwiseAbs();
                double cn = lp_norm(grid, cand, p);
                if (cn <= 0.0) continue;
                cand /= cn;
                double Rc = op.energy(cand);
                if (Rc <= R - 1e-4 * a * dn2) {
                    u = std::move(cand);
                    R = Rc;
                    accepted = true;
                    break;
                }
            }
            if (!accepted) {
                est.converged = true;
                break;
            }
        }
        stagnant = (prev - R <= opts.rel_tol * std::abs(R)) ? stagnant + 1 : 0;
        if (stagnant >= 4) {
            est.converged = true;
            break;
        }
    }
    est.iterations = it;
    est.rayleigh = R;
    est.value = 1.0 / std::sqrt(R);
    if (minimizer) *minimizer = std::move(u);
    return est;
}

}  // namespace

SobolevEstimate rayleigh_minimize(const GrushinOperator& op, double p,
                                  const RayleighOptions& opts) {
    return rayleigh_minimize_field(op, p, opts, nullptr);
}

std::map<double, SobolevEstimate> estimate_sobolev_constants(const GrushinOperator& op,
                                                             const std::vector<double>& exponents,
                                                             const RayleighOptions& opts) {
    std::map<double, SobolevEstimate> out;
    for (double p : exponents)
        if (!out.count(p)) out[p] = rayleigh_minimize(op, p, opts);
    return out;
}

// ---------------------------------------------------------- extremal profile

namespace {

// Minimization core shared by the reference and the dilation-aligned
// profiles: best-constant minimizer on the given grid, rescaled to solve the
// entire-space critical equation, plus the half-height radius measurement.
void profile_core(ExtremalProfile& prof, const RayleighOptions& opts) {
    GrushinOperator op = GrushinOperator::assemble(prof.vgrid, prof.lambda);
    Field w;
    SobolevEstimate est = rayleigh_minimize_field(op, prof.crit, opts, &w);
    prof.S_box = est.rayleigh;
    prof.values = std::pow(est.rayleigh, (prof.Q - 2.0) / 4.0) * w;
}

void measure_unit_radius(ExtremalProfile& prof) {
    const TensorGrid& g = *prof.vgrid;
    std::vector<int> mid(g.dim());
    for (int k = 0; k < g.dim(); ++k) mid[k] = g.interior_nodes(k) / 2;
    prof.center_value = prof.values[g.interior_index(mid)];
    double half = 0.5 * prof.center_value;
    double prev_x = 0.0, prev_v = prof.center_value;
    prof.unit_radius = 0.0;
    for (int i = mid[0] + 1; i < g.interior_nodes(0); ++i) {
        auto mi = mid;
        mi[0] = i;
        double x = g.coords[0][i + 1];
        double v = prof.values[g.interior_index(mi)];
        if (v <= half) {
            prof.unit_radius = prev_x + (prev_v - half) / std::max(prev_v - v, 1e-300) * (x - prev_x);
            break;
        }
        prev_x = x;
        prev_v = v;
    }
    if (prof.unit_radius <= 0.0)
        throw Error(ErrorCode::internal, "extremal profile has no half-height crossing");
}

}  // namespace

ExtremalProfile ExtremalProfile::compute(int n, int m, double lambda, double box_radius,
                                         int nodes_per_axis, const RayleighOptions& opts) {
    ExtremalProfile prof;
    prof.n = n;
    prof.m = m;
    prof.lambda = lambda;
    prof.Q = n + (1.0 + lambda) * m;
    prof.crit = 2.0 * prof.Q / (prof.Q - 2.0);

    ProblemSpec spec;
    spec.n = n;
    spec.m = m;
    spec.lambda = lambda;
    spec.box.clear();
    double yext = std::pow(box_radius, 1.0 + lambda) / (1.0 + lambda);
    for (int k = 0; k < n; ++k) spec.box.push_back({-box_radius, box_radius});
    for (int k = 0; k < m; ++k) spec.box.push_back({-yext, yext});
    std::vector<int> nodes(n + m, nodes_per_axis);
    prof.vgrid = std::make_shared<const TensorGrid>(TensorGrid::make(spec, nodes));

    profile_core(prof, opts);

    // Divide out the Dirichlet-wall image factor 1 - (rho/rho_wall)^{Q-2} so
    // the stored profile approximates the free-space extremal rather than
    // the box-truncated one; the far field then carries a single power law.
    for (long i = 0; i < prof.values.size(); ++i) {
        std::vector<double> z = prof.vgrid->interior_point(i);
        double rho = gauge_norm(z, n, lambda);
        double depress = 1.0 - std::pow(std::min(rho / box_radius, 0.95), prof.Q - 2.0);
        prof.values[i] /= depress;
    }

    measure_unit_radius(prof);
    prof.match_radius = 0.5 * box_radius;

    // Tail coefficient from an annulus well inside the trusted region.
    double acc = 0.0;
    long count = 0;
    for (long i = 0; i < g.interior_count(); ++i) {
        std::vector<double> z = g.interior_point(i);
        double rho = gauge_norm(z, n, lambda);
        if (rho >= 0.85 * prof.match_radius && rho <= prof.match_radius) {
            acc += prof.values[i] * std::pow(rho, prof.Q - 2.0);
            ++count;
        }
    }
    prof.tail_coeff = count > 0 ? acc / count : 0.0;

    // Gauge-ball constants: volume of the unit ball and the |D rho|^2 weight.
    double op1 = 1.0 + lambda;
    auto reduced = [&](const std::function<double(double, double)>& f) {
        return simpson(
            [&](double a) {
                double bmax = std::sqrt(std::max(0.0, 1.0 - std::pow(a, 2.0 * op1))) / op1;
                if (bmax <= 0.0) return 0.0;
                return simpson([&](double b) { return f(a, b); }, 0.0, bmax, 200);
            },
            0.0, 1.0, 400);
    };
    double sn = sphere_surface(n), sm = sphere_surface(m);
    auto radial_measure = [&](double a, double b) {
        double v = 1.0;
        for (int k = 0; k < n - 1; ++k) v *= a;
        for (int k = 0; k < m - 1; ++k) v *= b;
        return v;
    };
    prof.ball_volume = sn * sm * reduced(radial_measure);
    prof.ball_psi2 = sn * sm * reduced([&](double a, double b) {
        double rho = std::pow(std::pow(a, 2.0 * op1) + op1 * op1 * b * b, 0.5 / op1);
        double psi = rho > 0.0 ? std::pow(a / rho, lambda) : 0.0;
        return radial_measure(a, b) * psi * psi;
    });
    return prof;
}

ExtremalProfile ExtremalProfile::compute_on_grid(int n, int m, double lambda,
                                                 const std::vector<double>& spacings,
                                                 const std::vector<int>& nodes,
                                                 const RayleighOptions& opts) {
    ExtremalProfile prof;
    prof.n = n;
    prof.m = m;
    prof.lambda = lambda;
    prof.Q = n + (1.0 + lambda) * m;
    prof.crit = 2.0 * prof.Q / (prof.Q - 2.0);

    ProblemSpec spec;
    spec.n = n;
    spec.m = m;
    spec.lambda = lambda;
    spec.box.clear();
    for (int k = 0; k < n + m; ++k) {
        double half = 0.5 * spacings[k] * (nodes[k] - 1);
        spec.box.push_back({-half, half});
    }
    prof.vgrid = std::make_shared<const TensorGrid>(TensorGrid::make(spec, nodes));

    // Raw box minimizer, kept uncorrected: its nodal values transplant onto
    // the problem grid with exactly invariant discrete energy and norms.
    profile_core(prof, opts);
    measure_unit_radius(prof);
    prof.match_radius = 0.0;
    prof.tail_coeff = 0.0;
    return prof;
}

double ExtremalProfile::tail(double rho) const {
    return tail_coeff * std::pow(rho, 2.0 - Q);
}

double ExtremalProfile::eval(std::span<const double> xi) const {
    const TensorGrid& g = *vgrid;
    double rho = gauge_norm(xi, n, lambda);
    if (rho > match_radius) return tail(rho);

    // Multilinear interpolation over the cell containing xi.
    int d = g.dim();
    std::vector<int> cell(d);
    std::vector<double> frac(d);
    for (int k = 0; k < d; ++k) {
        double t = (xi[k] - g.box[k].lo) / g.h[k];
        int i = static_cast<int>(std::floor(t));
        i = std::clamp(i, 0, g.nodes[k] - 2);
        cell[k] = i;
        frac[k] = std::clamp(t - i, 0.0, 1.0);
    }
    double out = 0.0;
    for (int corner = 0; corner < (1 << d); ++corner) {
        double wgt = 1.0;
        bool interior = true;
        std::vector<int> mi(d);
        for (int k = 0; k < d; ++k) {
            int off = (corner >> k) & 1;
            wgt *= off ? frac[k] : 1.0 - frac[k];
            int node = cell[k] + off;
            if (node == 0 || node == g.nodes[k] - 1) interior = false;
            mi[k] = node - 1;
        }
        if (wgt == 0.0 || !interior) continue;  // boundary nodes carry zero
        out += wgt * values[g.interior_index(mi)];
    }
    return out;
}

namespace {

std::string profile_key(int n, int m, double lambda, double box_radius, int nodes) {
    std::ostringstream os;
    os.precision(10);
    os << "extremal_n" << n << "_m" << m << "_lam" << lambda << "_R" << box_radius << "_N" << nodes;
    return os.str();
}

std::mutex profile_mutex;
std::unordered_map<std::string, std::shared_ptr<const ExtremalProfile>> profile_memory;

}  // namespace

std::shared_ptr<const ExtremalProfile> ExtremalProfile::fetch(int n, int m, double lambda,
                                                              double box_radius, int nodes_per_axis,
                                                              const std::string& cache_dir) {
    std::string key = profile_key(n, m, lambda, box_radius, nodes_per_axis);
    {
        std::lock_guard<std::mutex> lk(profile_mutex);
        auto it = profile_memory.find(key);
        if (it != profile_memory.end()) return it->second;
    }

    std::filesystem::path file;
    if (!cache_dir.empty()) {
        file = std::filesystem::path(cache_dir) / (key + ".dat");
        std::ifstream in(file);
        if (in) {
            auto prof = std::make_shared<ExtremalProfile>();
            prof->n = n;
            prof->m = m;
            prof->lambda = lambda;
            prof->Q = n + (1.0 + lambda) * m;
            prof->crit = 2.0 * prof->Q / (prof->Q - 2.0);
            long count = 0;
            in >> prof->S_box >> prof->unit_radius >> prof->match_radius >> prof->tail_coeff >>
                prof->center_value >> prof->ball_volume >> prof->ball_psi2 >> count;
            ProblemSpec spec;
            spec.n = n;
            spec.m = m;
            spec.lambda = lambda;
            spec.box.clear();
            double yext = std::pow(box_radius, 1.0 + lambda) / (1.0 + lambda);
            for (int k = 0; k < n; ++k) spec.box.push_back({-box_radius, box_radius});
            for (int k = 0; k < m; ++k) spec.box.push_back({-yext, yext});
            prof->vgrid = std::make_shared<const TensorGrid>(
                TensorGrid::make(spec, std::vector<int>(n + m, nodes_per_axis)));
            if (count == prof->vgrid->interior_count()) {
                prof->values = Field(count);
                bool ok = true;
                for (long i = 0; i < count && ok; ++i) ok = static_cast<bool>(in >> prof->values[i]);
                if (ok) {
                    std::lock_guard<std::mutex> lk(profile_mutex);
                    profile_memory[key] = prof;
                    return prof;
                }
            }
        }
    }

    auto prof = std::make_shared<ExtremalProfile>(
        ExtremalProfile::compute(n, m, lambda, box_radius, nodes_per_axis));
    if (!cache_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(cache_dir, ec);
        std::ofstream out(file);
        if (out) {
            out.precision(17);
            out << prof->S_box << ' ' << prof->unit_radius << ' ' << prof->match_radius << ' '
                << prof->tail_coeff << ' ' << prof->center_value << ' ' << prof->ball_volume << ' '
                << prof->ball_psi2 << ' ' << prof->values.size() << '\n';
            for (long i = 0; i < prof->values.size(); ++i) out << prof->values[i] << '\n';
        }
    }
    std::lock_guard<std::mutex> lk(profile_mutex);
    profile_memory[key] = prof;
    return prof;
}

// ------------------------------------------------------------ bubble family

const BubbleEntry* BubbleFamily::smallest_resolved() const {
    const BubbleEntry* best = nullptr;
    for (const auto& e : entries)
        if (e.resolved && (!best || e.eps < best->eps)) best = &e;
    return best;
}

namespace {

// Aligned extremal for one dilation parameter: the profile grid is the
// pullback of the problem grid under delta_{1/eps_hat}, so problem nodes map
// onto profile nodes with matching integer offsets from the center.
std::shared_ptr<const ExtremalProfile> aligned_profile(const Problem& pb, double R,
                                                       double eps_hat,
                                                       const BubbleOptions& opts);

Field sample_aligned(const Problem& pb, const Cutoff& cutoff, std::span<const double> center,
                     const ExtremalProfile& prof, double eps_hat) {
    const TensorGrid& grid = *pb.grid;
    const TensorGrid& pg = *prof.vgrid;
    double amp = std::pow(eps_hat, (2.0 - prof.Q) / 2.0);
    Field u = Field::Zero(grid.interior_count());
    std::vector<int> pmi(pg.dim());
    for (long i = 0; i < grid.interior_count(); ++i) {
        if (cutoff.values[i] == 0.0) continue;
        std::vector<double> z = grid.interior_point(i);
        bool inside = true;
        for (int k = 0; k < grid.dim() && inside; ++k) {
            long off = std::lround((z[k] - center[k]) / grid.h[k]);
            int node = static_cast<int>(off) + (pg.nodes[k] - 1) / 2;
            if (node <= 0 || node >= pg.nodes[k] - 1) inside = false;
            pmi[k] = node - 1;
        }
        if (inside) u[i] = cutoff.values[i] * amp * prof.values[pg.interior_index(pmi)];
    }
    return u;
}

}  // namespace

BubbleFamily build_bubble_family(const Problem& pb, std::span<const double> center, double R,
                                 std::span<const double> eps_list, const BubbleOptions& opts) {
    BubbleFamily fam;
    fam.center.assign(center.begin(), center.end());
    fam.R = R;
    // The concentration machinery needs the exact dilation structure, which
    // lives on the degeneracy set; the cutoff ball may therefore sit on it.
    fam.cutoff = build_cutoff(*pb.grid, center, R, /*require_off_sigma=*/false);
    fam.profile = ExtremalProfile::fetch(pb.spec.n, pb.spec.m, pb.spec.lambda,
                                         opts.vbox_scale * 2.0 * R, opts.vbox_nodes, opts.cache_dir);

    const ExtremalProfile& prof = *fam.profile;
    const TensorGrid& grid = *pb.grid;
    // Snap the center onto the grid so aligned transplants stay index-exact.
    for (int k = 0; k < grid.dim(); ++k)
        fam.center[k] = grid.box[k].lo +
                        std::lround((fam.center[k] - grid.box[k].lo) / grid.h[k]) * grid.h[k];
    double hx = grid.h[0];
    for (int k = 1; k < pb.spec.n; ++k) hx = std::min(hx, grid.h[k]);

    int resolved_count = 0;
    for (double eps : eps_list) {
        BubbleEntry e;
        e.eps = eps;
        e.resolved = 2.0 * eps >= opts.min_nodes_across * hx;
        if (e.resolved) {
            double eps_hat = eps / prof.unit_radius;
            Field u;
            if (opts.aligned) {
                auto ap = aligned_profile(pb, R, eps_hat, opts);
                e.profile_rayleigh = ap->S_box;
                u = sample_aligned(pb, fam.cutoff, fam.center, *ap, eps_hat);
            } else {
                double amp = std::pow(eps_hat, (2.0 - prof.Q) / 2.0);
                u = Field(grid.interior_count());
                std::vector<double> xi(grid.dim());
                for (long i = 0; i < grid.interior_count(); ++i) {
                    if (fam.cutoff.values[i] == 0.0) {
                        u[i] = 0.0;
                        continue;
                    }
                    std::vector<double> z = grid.interior_point(i);
                    for (int k = 0; k < grid.dim(); ++k) {
                        double s = k < pb.spec.n ? eps_hat
                                                 : std::pow(eps_hat, 1.0 + pb.spec.lambda);
                        xi[k] = (z[k] - fam.center[k]) / s;
                    }
                    u[i] = fam.cutoff.values[i] * amp * prof.eval(xi);
                }
            }
            e.u_norm_crit = lp_norm(grid, u, prof.crit);
            if (e.u_norm_crit <= 0.0) throw Error(ErrorCode::internal, "bubble sampled to zero");
            e.u = u;
            e.w = u / e.u_norm_crit;
            e.u_energy = pb.op.energy(u);
            ++resolved_count;
        }
        fam.entries.push_back(std::move(e));
    }
    if (resolved_count == 0) throw Error(ErrorCode::invalid_argument, "epsilon under-resolved");
    return fam;
}

namespace {

std::shared_ptr<const ExtremalProfile> aligned_profile(const Problem& pb, double R,
                                                       double eps_hat,
                                                       const BubbleOptions& opts) {
    const TensorGrid& grid = *pb.grid;
    const int d = grid.dim();
    std::vector<double> spacings(d);
    std::vector<int> nodes(d);
    for (int k = 0; k < d; ++k) {
        double pow_k = k < pb.spec.n ? 1.0 : 1.0 + pb.spec.lambda;
        spacings[k] = grid.h[k] / std::pow(eps_hat, pow_k);
        // Cover twice the 2R-extent of the cutoff ball, counted in problem
        // grid spacings (the pullback preserves node counts).
        double extent = k < pb.spec.n
                            ? 2.0 * R
                            : std::pow(2.0 * R, 1.0 + pb.spec.lambda) / (1.0 + pb.spec.lambda);
        int side = static_cast<int>(std::ceil(2.0 * extent / grid.h[k]));
        int total = 4;
        while (total < 2 * side && total < 1024) total *= 2;
        nodes[k] = total + 1;
    }

    std::ostringstream key;
    key.precision(10);
    key << "aligned_n" << pb.spec.n << "_m" << pb.spec.m << "_lam" << pb.spec.lambda;
    for (int k = 0; k < d; ++k) key << "_" << spacings[k] << "x" << nodes[k];
    {
        std::lock_guard<std::mutex> lk(profile_mutex);
        auto it = profile_memory.find(key.str());
        if (it != profile_memory.end()) return it->second;
    }
    auto prof = std::make_shared<ExtremalProfile>(ExtremalProfile::compute_on_grid(
        pb.spec.n, pb.spec.m, pb.spec.lambda, spacings, nodes));
    std::lock_guard<std::mutex> lk(profile_mutex);
    profile_memory[key.str()] = prof;
    return prof;
}

}  // namespace

// --------------------------------------------------- scale-space asymptotics

namespace {

// Integrals of the cutoff bubble in profile coordinates: trusted grid data
// inside the match radius, matched power-law tail outside, cutoff applied at
// physical radius eps_hat * rho.
class ScaleSpace {
  public:
    ScaleSpace(const ExtremalProfile& prof, double R) : prof_(prof), R_(R) {
        const TensorGrid& g = *prof_.vgrid;
        rho_.resize(g.interior_count());
        for (long i = 0; i < g.interior_count(); ++i) {
            std::vector<double> z = g.interior_point(i);
            rho_[i] = gauge_norm(z, prof_.n, prof_.lambda);
        }
    }

    double mass(double gamma, double eps_hat) const {
        const TensorGrid& g = *prof_.vgrid;
        double acc = 0.0;
        for (long i = 0; i < g.interior_count(); ++i) {
            if (rho_[i] > prof_.match_radius) continue;
            double v = phi(eps_hat, rho_[i]) * prof_.values[i];
            if (v > 0.0) acc += std::pow(v, gamma);
        }
        double inner = acc * g.cell_volume();
        double hi = eps_hat > 0.0 ? 2.0 * R_ / eps_hat : 0.0;
        double tail = 0.0;
        if (eps_hat == 0.0) {
            double expo = gamma * (prof_.Q - 2.0) - prof_.Q;  // > 0 when integrable
            if (expo <= 0.0) throw Error(ErrorCode::internal, "divergent tail mass");
            tail = std::pow(prof_.tail_coeff, gamma) * prof_.Q * prof_.ball_volume *
                   std::pow(prof_.match_radius, -expo) / expo;
        } else if (hi > prof_.match_radius) {
            tail = prof_.Q * prof_.ball_volume *
                   radial_integral(
                       [&](double rho) {
                           double v = phi(eps_hat, rho) * prof_.tail(rho);
                           return v > 0.0 ? std::pow(v, gamma) * std::pow(rho, prof_.Q - 1.0) : 0.0;
                       },
                       prof_.match_radius, hi);
        }
        return inner + tail;
    }

    double energy(double eps_hat) const {
        const TensorGrid& g = *prof_.vgrid;
        // Nodal cutoff-bubble values over all nodes (boundary included).
        long total = 1;
        for (int k = 0; k < g.dim(); ++k) total *= g.nodes[k];
        std::vector<double> vals(total);
        std::vector<int> idx(g.dim(), 0);
        std::vector<double> z(g.dim());
        for (long flat = 0; flat < total; ++flat) {
            bool interior = true;
            for (int k = 0; k < g.dim(); ++k) {
                z[k] = g.coords[k][idx[k]];
                interior = interior && idx[k] > 0 && idx[k] < g.nodes[k] - 1;
            }
            double rho = gauge_norm(z, prof_.n, prof_.lambda);
            double base;
            if (rho <= prof_.match_radius && interior) {
                std::vector<int> mi(g.dim());
                for (int k = 0; k < g.dim(); ++k) mi[k] = idx[k] - 1;
                base = prof_.values[g.interior_index(mi)];
            } else {
                base = prof_.tail(rho);
            }
            vals[flat] = phi(eps_hat, rho) * base;
            int k = g.dim() - 1;
            while (k >= 0 && ++idx[k] == g.nodes[k]) idx[k--] = 0;
        }
        auto flat_index = [&](const std::vector<int>& mi) {
            long f = 0;
            for (int k = 0; k < g.dim(); ++k) f = f * g.nodes[k] + mi[k];
            return f;
        };

        // Face-difference energy over faces whose midpoint is inside the
        // trusted ball; the analytic tail covers the rest.
        double acc = 0.0;
        std::vector<int> mi(g.dim(), 0);
        for (long flat = 0; flat < total; ++flat) {
            std::vector<double> zz(g.dim());
            for (int k = 0; k < g.dim(); ++k) zz[k] = g.coords[k][mi[k]];
            for (int k = 0; k < g.dim(); ++k) {
                if (mi[k] + 1 >= g.nodes[k]) continue;
                std::vector<double> zmid = zz;
                zmid[k] += 0.5 * g.h[k];
                if (gauge_norm(zmid, prof_.n, prof_.lambda) > prof_.match_radius) continue;
                auto nb = mi;
                nb[k] += 1;
                double diff = (vals[flat_index(nb)] - vals[flat]) / g.h[k];
                double wgt = 1.0;
                if (k >= prof_.n) {
                    double x2 = 0.0;
                    for (int j = 0; j < prof_.n; ++j) x2 += zz[j] * zz[j];
                    wgt = std::pow(x2, prof_.lambda);
                }
                acc += wgt * diff * diff;
            }
            int k = g.dim() - 1;
            while (k >= 0 && ++mi[k] == g.nodes[k]) mi[k--] = 0;
        }
        double inner = acc * g.cell_volume();

        double hi = eps_hat > 0.0 ? 2.0 * R_ / eps_hat : 0.0;
        double tail;
        if (eps_hat == 0.0) {
            double C = prof_.tail_coeff;
            tail = prof_.Q * prof_.ball_psi2 * C * C * (prof_.Q - 2.0) *
                   std::pow(prof_.match_radius, 2.0 - prof_.Q);
        } else {
            tail = prof_.Q * prof_.ball_psi2 *
                   radial_integral(
                       [&](double rho) {
                           double df = dphi(eps_hat, rho) * prof_.tail(rho) +
                                       phi(eps_hat, rho) * prof_.tail_coeff * (2.0 - prof_.Q) *
                                           std::pow(rho, 1.0 - prof_.Q);
                           return df * df * std::pow(rho, prof_.Q - 1.0);
                       },
                       prof_.match_radius, std::max(hi, prof_.match_radius * (1.0 + 1e-12)));
        }
        return inner + tail;
    }

  private:
    double phi(double eps_hat, double rho) const {
        return eps_hat == 0.0 ? 1.0 : Cutoff::profile(eps_hat * rho, R_);
    }
    double dphi(double eps_hat, double rho) const {
        return eps_hat == 0.0 ? 0.0 : eps_hat * cutoff_profile_derivative(eps_hat * rho, R_);
    }

    const ExtremalProfile& prof_;
    double R_;
    std::vector<double> rho_;
};

}  // namespace

AsymptoticsTable asymptotics_experiment(const BubbleFamily& family,
                                        std::span<const double> gammas) {
    const ExtremalProfile& prof = *family.profile;
    const double Q = prof.Q, crit = prof.crit;
    ScaleSpace ss(prof, family.R);

    AsymptoticsTable table;
    table.gammas.assign(gammas.begin(), gammas.end());

    for (const auto& e : family.entries) {
        AsymptoticsRow row;
        row.eps = e.eps;
        double eps_hat = e.eps / prof.unit_radius;
        row.energy = ss.energy(eps_hat);
        row.mass_crit = ss.mass(crit, eps_hat);  // physical exponent is zero
        row.mass_two = std::pow(eps_hat, Q - (Q - 2.0)) * ss.mass(2.0, eps_hat);
        for (double gamma : gammas)
            row.mass_gamma.push_back(std::pow(eps_hat, Q - gamma * (Q - 2.0) / 2.0) *
                                     ss.mass(gamma, eps_hat));
        table.rows.push_back(std::move(row));
    }
    table.energy_limit = ss.energy(0.0);
    table.mass_crit_limit = ss.mass(crit, 0.0);

    std::vector<double> logeps;
    for (const auto& r : table.rows) logeps.push_back(std::log(r.eps));
    auto fit = [&](const std::string& name, const std::vector<double>& vals, double predicted) {
        std::vector<double> logv;
        for (double v : vals) logv.push_back(std::log(std::max(v, 1e-300)));
        SlopeFit f;
        f.quantity = name;
        f.observed = least_squares_slope(logeps, logv);
        f.predicted = predicted;
        f.rel_error = std::abs(f.observed - f.predicted) / std::max(std::abs(f.predicted), 1e-12);
        table.fits.push_back(f);
    };

    for (std::size_t k = 0; k < table.gammas.size(); ++k) {
        std::vector<double> vals;
        for (const auto& r : table.rows) vals.push_back(r.mass_gamma[k]);
        std::ostringstream name;
        name << "mass_gamma_" << table.gammas[k];
        fit(name.str(), vals, Q - table.gammas[k] * (Q - 2.0) / 2.0);
    }
    {
        std::vector<double> dev;
        for (const auto& r : table.rows) dev.push_back(std::abs(r.mass_crit - table.mass_crit_limit));
        fit("mass_crit_deviation", dev, Q);
    }
    {
        std::vector<double> dev;
        for (const auto& r : table.rows) dev.push_back(std::abs(r.energy - table.energy_limit));
        fit("energy_deviation", dev, Q - 2.0);
    }
    {
        std::vector<double> vals;
        for (const auto& r : table.rows) vals.push_back(r.mass_two);
        fit("mass_two", vals, Q > 4.0 ? 2.0 : Q - 2.0);
    }
    return table;
}

// ----------------------------------------------------------------thresholds

CriticalThresholds compute_thresholds(const Problem& pb, double Sq_value, double Scrit_value) {
    if (Sq_value <= 0.0 || Scrit_value <= 0.0 || pb.coef.norm_g_a <= 0.0)
        throw Error(ErrorCode::invalid_argument, "thresholds need positive constants and norms");
    const double r = pb.spec.r;
    const double crit = derived_exponents(pb.spec).crit;
    CriticalThresholds th;
    th.S_q = Sq_value;
    th.S_crit = Scrit_value;
    th.S_lambda_hat = 1.0 / (Scrit_value * Scrit_value);
    // Largest delta with delta^2/4 > ||h||_inf S^{2*} delta^{2*}/2*, halved.
    double rhs = std::pow(Scrit_value, crit) * pb.coef.norm_h_b / crit;
    double delta_root = std::pow(1.0 / (4.0 * rhs), 1.0 / (crit - 2.0));
    th.delta = 0.5 * delta_root;
    th.mu_star = (1.0 + r) * std::pow(th.delta, 1.0 - r) /
                 (8.0 * pb.coef.norm_g_a * std::pow(Sq_value, 1.0 + r));
    th.alpha_delta = pb.spec.mu * std::pow(Sq_value, 1.0 + r) * pb.coef.norm_g_a *
                         std::pow(th.delta, 1.0 + r) / (1.0 + r) +
                     rhs * std::pow(th.delta, crit);
    th.c_tilde_hat = std::numeric_limits<double>::quiet_NaN();
    return th;
}

// --------------------------------------------------------------- ball stage

bool newton_polish(const Problem& pb, Field& u, double tol, int max_steps) {
    const double r = pb.spec.r, s = pb.s_eff(), mu = pb.spec.mu;
    const auto& L = pb.op.matrix();
    auto load = [&](const Field& v) {
        Field f(v.size()), fp(v.size());
        for (long i = 0; i < v.size(); ++i) {
            if (pb.critical()) {
                double up = std::max(v[i], 0.0);
                if (up > 0.0) {
                    f[i] = mu * pb.coef.g[i] * std::pow(up, r) + pb.coef.h[i] * std::pow(up, s);
                    fp[i] = (r > 0.0 ? mu * pb.coef.g[i] * r * std::pow(up, r - 1.0) : 0.0) +
                            pb.coef.h[i] * s * std::pow(up, s - 1.0);
                } else {
                    f[i] = fp[i] = 0.0;
                }
            } else {
                double a = std::abs(v[i]);
                if (a > 0.0) {
                    double sgn = v[i] > 0.0 ? 1.0 : -1.0;
                    f[i] = sgn * (mu * pb.coef.g[i] * std::pow(a, r) + pb.coef.h[i] * std::pow(a, s));
                    fp[i] = (r > 0.0 ? mu * pb.coef.g[i] * r * std::pow(a, r - 1.0) : 0.0) +
                            pb.coef.h[i] * s * std::pow(a, s - 1.0);
                } else {
                    f[i] = fp[i] = 0.0;
                }
            }
        }
        return std::make_pair(f, fp);
    };

    auto nodal_residual = [&](const Field& v, const Field& f) { return Field(L * v - f); };

    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    bool analyzed = false;
    double diag_scale = 0.0;
    for (long k = 0; k < L.outerSize(); ++k) diag_scale += L.coeff(k, k);
    diag_scale /= static_cast<double>(L.rows());

    double sob0 = residual_norm(pb, u);
    if (sob0 < tol) return true;
    for (int step = 0; step < max_steps; ++step) {
        auto [f, fp] = load(u);
        Field res = nodal_residual(u, f);
        double rnorm = res.norm();
        double sob = residual_norm(pb, u);
        if (sob < tol) return true;
        if (sob > 2.0 * sob0 || (step >= 3 && sob > 0.5 * sob0)) return false;

        // Light Levenberg escalation; a genuinely flat valley is not worth
        // polishing, so bail out instead of walking it.
        bool accepted = false;
        for (double eta : {0.0, 1e-6}) {
            Eigen::SparseMatrix<double> J = L;
            for (long i = 0; i < u.size(); ++i) J.coeffRef(i, i) += eta * diag_scale - fp[i];
            if (!analyzed) {
                lu.analyzePattern(J);
                analyzed = true;
            }
            lu.factorize(J);
            if (lu.info() != Eigen::Success) continue;
            Field d = lu.solve(Field(-res));
            for (double beta : {1.0, 0.5, 0.25, 0.1, 0.02}) {
                Field trial = u + beta * d;
                auto [ft, fpt] = load(trial);
                if (nodal_residual(trial, ft).norm() < rnorm * (1.0 - 0.1 * beta)) {
                    u = std::move(trial);
                    accepted = true;
                    break;
                }
            }
            if (accepted) break;
        }
        if (!accepted) return residual_norm(pb, u) < tol;
    }
    return residual_norm(pb, u) < tol;
}

SolveResult local_minimize_in_ball(const Problem& pb, const CriticalThresholds& th,
                                   const SolveOptions& opts) {
    if (pb.spec.mu >= th.mu_star)
        throw Error(ErrorCode::threshold, "mu above threshold (mu >= mu_star)");
    const double delta = th.delta;

    Field dir = branch_init(pb, Branch::plus, 0);  // positive bump where g > 0
    double t = delta / 4.0;
    while (t > 1e-12 * delta && energy(pb, Field(t * dir)).total >= 0.0) t *= 0.5;
    Field u = t * dir;
    double value = energy(pb, u).total;

    SolveResult res;
    res.seed = opts.seed;
    double alpha = 1.0;
    const double armijo = 1e-4;
    int k = 0;
    for (; k < opts.max_iterations; ++k) {
        Field grad = gradient(pb, u);
        double res_sq = std::max(0.0, pb.op.energy(grad));
        double rnorm = std::sqrt(res_sq);
        res.trace.push_back({value, rnorm, energy(pb, u).tau});
        if (rnorm < opts.tol) {
            res.converged = true;
            break;
        }
        if (rnorm < 1e-3 && newton_polish(pb, u, opts.tol, 12)) {
            double nn = std::sqrt(std::max(0.0, pb.op.energy(u)));
            if (nn < delta) {
                value = energy(pb, u).total;
                res.converged = true;
                break;
            }
        }
        bool accepted = false;
        for (double a = std::min(2.0 * alpha, 1e6); a >= 1e-16; a *= 0.5) {
            Field trial = u - a * grad;
            double nn = std::sqrt(std::max(0.0, pb.op.energy(trial)));
            if (nn > delta) trial *= delta / nn;
            double vt = energy(pb, trial).total;
            if (vt <= value - armijo * a * res_sq) {
                u = std::move(trial);
                value = vt;
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

    res.field = u;
    res.energy = energy(pb, u).total;
    res.residual = residual_norm(pb, u);
    res.converged = res.residual < opts.tol;
    res.iterations = k;
    if (res.energy >= 0.0)
        throw Error(ErrorCode::nonconvergence, "no negative-energy minimizer found");
    double nn = std::sqrt(std::max(0.0, pb.op.energy(u)));
    if (nn >= delta) res.message = "minimizer on the ball boundary";
    res.nehari_class = classify(pb, u);
    res.reproject_t = 1.0;
    return res;
}

// ----------------------------------------------------------- gap + min-max

namespace {

// Fused evaluation of I(u + t w) along a fixed segment.
class SegmentEnergy {
  public:
    SegmentEnergy(const Problem& pb, const Field& u, const Field& w)
        : pb_(pb), u_(u), w_(w) {
        auu_ = pb.op.energy(u);
        aww_ = pb.op.energy(w);
        auw_ = pb.op.inner(u, w);
    }

    double operator()(double t) const {
        const double r = pb_.spec.r, s = pb_.s_eff(), mu = pb_.spec.mu;
        double quad = 0.5 * (auu_ + 2.0 * t * auw_ + t * t * aww_);
        double gi = 0.0, hi = 0.0;
        const bool crit = pb_.critical();
        for (long i = 0; i < u_.size(); ++i) {
            double v = u_[i] + t * w_[i];
            double base = crit ? std::max(v, 0.0) : std::abs(v);
            if (base > 0.0) {
                gi += pb_.coef.g[i] * std::pow(base, r + 1.0);
                hi += pb_.coef.h[i] * std::pow(base, s + 1.0);
            }
        }
        double vol = pb_.grid->cell_volume();
        return quad - mu / (r + 1.0) * gi * vol - hi * vol / (s + 1.0);
    }

  private:
    const Problem& pb_;
    const Field& u_;
    const Field& w_;
    double auu_ = 0.0, aww_ = 0.0, auw_ = 0.0;
};

double golden_max(const std::function<double(double)>& f, double a, double b, double rel_tol) {
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - phi * (b - a), d = a + phi * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < 300 && b - a > rel_tol * std::max(1.0, std::abs(b)); ++it) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace

double golden_section_peak(double S, double s, double* argmax) {
    double t_star = std::pow(S, 1.0 / (s - 1.0));
    auto f = [&](double t) { return 0.5 * S * t * t - std::pow(t, 1.0 + s) / (1.0 + s); };
    double t = golden_max(f, 0.0, 2.0 * t_star, 1e-13);
    if (argmax) *argmax = t;
    return f(t);
}

std::vector<GapRow> verify_mpl_gap(const Problem& pb, const Field& u_mu,
                                   const BubbleFamily& family, double S_lambda_hat) {
    const double Q = derived_exponents(pb.spec).Q;
    double base = energy(pb, u_mu).total;
    double bound = base + std::pow(S_lambda_hat, Q / 2.0) / Q;

    std::vector<GapRow> rows;
    for (const auto& e : family.entries) {
        GapRow row;
        row.eps = e.eps;
        row.resolved = e.resolved;
        row.bound = bound;
        if (e.resolved) {
            SegmentEnergy seg(pb, u_mu, e.w);
            double hi = 1.0;
            while (seg(hi) > base - 1.0 && hi < 1e12) hi *= 2.0;
            int N = 160;
            int best = 1;
            double best_v = -1e300;
            for (int i = 1; i <= N; ++i) {
                double v = seg(hi * i / N);
                if (v > best_v) {
                    best_v = v;
                    best = i;
                }
            }
            double lo_t = hi * std::max(best - 1, 0) / N, hi_t = hi * std::min(best + 1, N) / N;
            double t_max = golden_max([&](double t) { return seg(t); }, lo_t, hi_t, 1e-10);
            row.t_at_max = t_max;
            row.max_value = seg(t_max);
            row.margin = bound - row.max_value;
            row.satisfied = row.max_value < bound;
        }
        rows.push_back(row);
    }
    return rows;
}

MountainPassResult mountain_pass(const Problem& pb, const Field& u_mu, const BubbleFamily& family,
                                 const CriticalThresholds& th, const MountainPassOptions& opts) {
    const double Q = derived_exponents(pb.spec).Q;
    double base = energy(pb, u_mu).total;
    double bound = base + std::pow(th.S_lambda_hat, Q / 2.0) / Q;

    // Prefer the smallest resolved epsilon whose gap certificate holds.
    std::vector<GapRow> gaps = verify_mpl_gap(pb, u_mu, family, th.S_lambda_hat);
    const BubbleEntry* pick = nullptr;
    bool pick_satisfied = false;
    double pick_t = 1.0;
    for (std::size_t i = 0; i < family.entries.size(); ++i) {
        const auto& e = family.entries[i];
        if (!e.resolved) continue;
        bool better;
        if (!pick)
            better = true;
        else if (gaps[i].satisfied != pick_satisfied)
            better = gaps[i].satisfied;
        else
            better = e.eps < pick->eps;
        if (better) {
            pick = &e;
            pick_satisfied = gaps[i].satisfied;
            pick_t = gaps[i].t_at_max;
        }
    }
    if (!pick) throw Error(ErrorCode::invalid_argument, "no resolved bubble for the pass");

    MountainPassResult out;
    out.eps_used = pick->eps;
    const Field& w = pick->w;

    // Far endpoint: below the base level and outside the delta ball.
    SegmentEnergy seg(pb, u_mu, w);
    double T = std::max(2.0 * pick_t, 1.0);
    while ((seg(T) >= base || std::sqrt(pb.op.energy(Field(u_mu + T * w))) <= th.delta) && T < 1e9)
        T *= 2.0;
    out.T = T;

    const int P = std::max(16, opts.path_points);
    std::vector<Field> path(P);
    std::vector<double> val(P);
    for (int i = 0; i < P; ++i) {
        double th_i = static_cast<double>(i) / (P - 1);
        path[i] = u_mu + th_i * T * w;
        val[i] = energy(pb, path[i]).total;
    }

    auto rediscretize = [&]() {
        std::vector<double> cum(P, 0.0);
        for (int i = 1; i < P; ++i)
            cum[i] = cum[i - 1] +
                     std::sqrt(std::max(0.0, pb.op.energy(Field(path[i] - path[i - 1]))));
        if (cum[P - 1] <= 0.0) return;
        std::vector<Field> fresh(P);
        fresh[0] = path[0];
        fresh[P - 1] = path[P - 1];
        int seg_i = 1;
        for (int i = 1; i < P - 1; ++i) {
            double target = cum[P - 1] * i / (P - 1);
            while (seg_i < P - 1 && cum[seg_i] < target) ++seg_i;
            double lo = cum[seg_i - 1], hi = cum[seg_i];
            double t = hi > lo ? (target - lo) / (hi - lo) : 0.0;
            fresh[i] = (1.0 - t) * path[seg_i - 1] + t * path[seg_i];
        }
        path = std::move(fresh);
        for (int i = 1; i < P - 1; ++i) val[i] = energy(pb, path[i]).total;
    };

    std::vector<double> alpha(P, 0.25);
    const double armijo = 1e-4;
    auto descend_point = [&](int i) {
        Field grad = gradient(pb, path[i]);
        double res_sq = std::max(0.0, pb.op.energy(grad));
        if (res_sq == 0.0) return;
        for (double a = std::min(2.0 * alpha[i], 4.0); a >= 1e-14; a *= 0.5) {
            Field trial = path[i] - a * grad;
            double vt = energy(pb, trial).total;
            if (vt <= val[i] - armijo * a * res_sq) {
                path[i] = std::move(trial);
                val[i] = vt;
                alpha[i] = a;
                return;
            }
        }
    };

    SolveResult sol;
    sol.seed = 0;
    int sweep = 0;
    bool done = false;
    const int full_sweeps = 40;
    for (; sweep < opts.max_sweeps && !done; ++sweep) {
        int kmax = 1;
        for (int i = 1; i < P - 1; ++i)
            if (val[i] > val[kmax]) kmax = i;

        if (val[kmax] <= std::max(val[0], val[P - 1]) + 1e-12)
            throw Error(ErrorCode::nonconvergence, "no pass detected (path collapse)");

        double res_at_max = residual_norm(pb, path[kmax]);
        sol.trace.push_back({val[kmax], res_at_max, 0.0});
        if (res_at_max < opts.tol) {
            sol.field = path[kmax];
            done = true;
            break;
        }
        if (res_at_max < 5e-2) {
            Field cand = path[kmax];
            if (newton_polish(pb, cand, opts.tol, 15)) {
                double dist = lp_norm(*pb.grid, Field(cand - u_mu), 2.0);
                double level = energy(pb, cand).total;
                if (dist > opts.distinct_tol && level > base && level < bound + 0.25 * (bound - base)) {
                    sol.field = std::move(cand);
                    done = true;
                    break;
                }
            }
        }

        if (sweep < full_sweeps) {
            for (int i = 1; i < P - 1; ++i) descend_point(i);
            rediscretize();
        } else {
            int lo = std::max(1, kmax - 6), hi = std::min(P - 2, kmax + 6);
            for (int i = lo; i <= hi; ++i) descend_point(i);
        }
    }
    out.sweeps = sweep;

    if (!done) {
        int kmax = 1;
        for (int i = 1; i < P - 1; ++i)
            if (val[i] > val[kmax]) kmax = i;
        Field cand = path[kmax];
        if (newton_polish(pb, cand, opts.tol, 25)) {
            double dist = lp_norm(*pb.grid, Field(cand - u_mu), 2.0);
            double level = energy(pb, cand).total;
            if (dist > opts.distinct_tol && level > base) {
                sol.field = std::move(cand);
                done = true;
            }
        }
        if (!done) {
            sol.field = path[kmax];
            sol.message = "residual stagnation at path maximum";
        }
    }

    sol.energy = energy(pb, sol.field).total;
    sol.residual = residual_norm(pb, sol.field);
    sol.converged = done && sol.residual < opts.tol;
    sol.iterations = sweep;
    sol.nehari_class = classify(pb, sol.field);
    sol.reproject_t = 1.0;
    out.c_mu = sol.energy;
    out.sol = std::move(sol);

    for (int i = 0; i < P; ++i)
        out.path_profile.emplace_back(static_cast<double>(i) / (P - 1), val[i]);
    return out;
}

}  // namespace grushin
