#pragma once

// Critical-regime pipeline: best-constant estimation by Rayleigh-quotient
// descent, the concentrating bubble family built from the numerical extremal
// of the entire-space critical equation, the delta/mu* thresholds, the local
// minimizer in the delta-ball, the energy-gap certificate and the numerical
// mountain pass.

#include <map>
#include <memory>

#include "grushin/nehari.hpp"

namespace grushin {

struct SobolevEstimate {
    double value = 0.0;     // S_p with ||u||_p <= S_p ||u||_lambda
    double rayleigh = 0.0;  // minimized quotient ||u||_lambda^2 / ||u||_p^2
    bool converged = false;
    int iterations = 0;
};

struct RayleighOptions {
    int max_iterations = 4000;
    double rel_tol = 1e-12;  // stop on relative stagnation of the quotient
};

// Minimizes ||u||_lambda^2 / ||u||_p^2 over the grid by normalized
// Sobolev-gradient descent from a positive product bump.
SobolevEstimate rayleigh_minimize(const GrushinOperator& op, double p,
                                  const RayleighOptions& opts = {});

std::map<double, SobolevEstimate> estimate_sobolev_constants(
    const GrushinOperator& op, const std::vector<double>& exponents,
    const RayleighOptions& opts = {});

// Numerical extremal of the entire-space critical equation on a large
// truncated box, with a matched power-law far field. All evaluator
// coordinates are "raw" profile coordinates; unit_radius converts a
// physical concentration scale eps into the raw dilation parameter
// eps_hat = eps / unit_radius.
class ExtremalProfile {
  public:
    static ExtremalProfile compute(int n, int m, double lambda, double box_radius,
                                   int nodes_per_axis, const RayleighOptions& opts = {});
    // Extremal on an explicit tensor grid (used for dilation-aligned grids
    // whose spacings are the pullback of the problem grid).
    static ExtremalProfile compute_on_grid(int n, int m, double lambda,
                                           const std::vector<double>& spacings,
                                           const std::vector<int>& nodes,
                                           const RayleighOptions& opts = {});
    // Disk cache wrapper around compute(); cache_dir may be empty.
    static std::shared_ptr<const ExtremalProfile> fetch(int n, int m, double lambda,
                                                        double box_radius, int nodes_per_axis,
                                                        const std::string& cache_dir);

    double eval(std::span<const double> xi) const;  // interp inside, tail outside
    double tail(double rho) const;                  // C rho^{2-Q}

    int n = 0, m = 0;
    double lambda = 0.0;
    double Q = 0.0;
    double crit = 0.0;
    double S_box = 0.0;         // Rayleigh minimum on the truncated box
    double unit_radius = 0.0;   // half-height gauge radius of the raw profile
    double match_radius = 0.0;  // grid data trusted up to here, tail beyond
    double tail_coeff = 0.0;
    double center_value = 0.0;

    std::shared_ptr<const TensorGrid> vgrid;
    Field values;  // interior nodal values on vgrid

    // Gauge-geometry constants of this (n, m, lambda): the measure of the
    // unit gauge ball and the same integral weighted by |D_lambda rho|^2.
    double ball_volume = 0.0;
    double ball_psi2 = 0.0;
};

struct BubbleEntry {
    double eps = 0.0;
    bool resolved = false;  // enough x-nodes across the half-height width
    Field u;                // phi * v_eps sampled on the problem grid
    Field w;                // u / ||u||_{2*}
    double u_norm_crit = 0.0;
    double u_energy = 0.0;          // discrete ||u_eps||_lambda^2
    double profile_rayleigh = 0.0;  // quotient of the aligned box extremal
};

struct BubbleFamily {
    std::shared_ptr<const ExtremalProfile> profile;
    std::vector<double> center;
    double R = 0.0;
    Cutoff cutoff;
    std::vector<BubbleEntry> entries;

    const BubbleEntry* smallest_resolved() const;
};

struct BubbleOptions {
    double vbox_scale = 8.0;  // profile box radius = scale * (2R)
    int vbox_nodes = 257;
    int min_nodes_across = 8;
    // Nodal fields come from per-epsilon extremals on the dilation pullback
    // of the problem grid (index-exact transplant, no resampling error).
    bool aligned = true;
    std::string cache_dir;
};

// Builds the family at the requested epsilons. Nodal fields are produced for
// the resolved epsilons; throws "epsilon under-resolved" when none qualify.
BubbleFamily build_bubble_family(const Problem& pb, std::span<const double> center, double R,
                                 std::span<const double> eps_list, const BubbleOptions& opts = {});

struct AsymptoticsRow {
    double eps = 0.0;
    double energy = 0.0;     // integral of |D_lambda u_eps|^2 (scale space)
    double mass_crit = 0.0;  // integral of |u_eps|^{2*}
    double mass_two = 0.0;   // integral of |u_eps|^2
    std::vector<double> mass_gamma;
};

struct SlopeFit {
    std::string quantity;
    double observed = 0.0;
    double predicted = 0.0;
    double rel_error = 0.0;
};

struct AsymptoticsTable {
    std::vector<double> gammas;
    std::vector<AsymptoticsRow> rows;
    double energy_limit = 0.0;
    double mass_crit_limit = 0.0;
    std::vector<SlopeFit> fits;
};

// Scale-space integrals of the bubble family (profile-grid quadrature plus
// analytic radial tail) and log-log slope fits against the predictions.
AsymptoticsTable asymptotics_experiment(const BubbleFamily& family,
                                        std::span<const double> gammas);

struct CriticalThresholds {
    double delta = 0.0;
    double mu_star = 0.0;
    double S_lambda_hat = 0.0;  // estimated best critical Rayleigh quotient
    double c_tilde_hat = 0.0;   // beta_hat + S^{Q/2}/Q, set once u_mu is known
    double alpha_delta = 0.0;
    double S_q = 0.0;
    double S_crit = 0.0;  // embedding constant at p = 2*_lambda
};

CriticalThresholds compute_thresholds(const Problem& pb, double Sq_value, double Scrit_value);

// Minimizes the critical functional over the ball ||u|| <= delta; the
// minimizer sits strictly inside with negative energy.
SolveResult local_minimize_in_ball(const Problem& pb, const CriticalThresholds& th,
                                   const SolveOptions& opts);

struct GapRow {
    double eps = 0.0;
    bool resolved = false;
    double t_at_max = 0.0;
    double max_value = 0.0;
    double bound = 0.0;
    double margin = 0.0;  // bound - max_value, positive when the gap holds
    bool satisfied = false;
};

std::vector<GapRow> verify_mpl_gap(const Problem& pb, const Field& u_mu,
                                   const BubbleFamily& family, double S_lambda_hat);

struct MountainPassResult {
    SolveResult sol;
    double c_mu = 0.0;
    double T = 0.0;
    double eps_used = 0.0;
    int sweeps = 0;
    std::vector<std::pair<double, double>> path_profile;  // (theta, I)
};

struct MountainPassOptions {
    int path_points = 96;
    int max_sweeps = 600;
    double tol = 1e-5;
    double distinct_tol = 1e-2;
};

MountainPassResult mountain_pass(const Problem& pb, const Field& u_mu, const BubbleFamily& family,
                                 const CriticalThresholds& th, const MountainPassOptions& opts);

// max over t > 0 of (S t^2 / 2 - t^{1+s}/(1+s)) by golden section; equals
// S^{Q/2}/Q when s = 2*_lambda - 1.
double golden_section_peak(double S, double s, double* argmax = nullptr);

// Newton polish of the critical-equation residual from a near-solution.
bool newton_polish(const Problem& pb, Field& u, double tol, int max_steps);

}  // namespace grushin
