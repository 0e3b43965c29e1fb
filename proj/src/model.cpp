#include "grushin/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "grushin/grid.hpp"

namespace grushin {

double WeightSpec::eval(std::span<const double> z, int n, double lambda) const {
    switch (kind) {
        case WeightKind::constant:
            return value;
        case WeightKind::polynomial: {
            double acc = 0.0;
            for (const auto& t : terms) {
                double mono = t.coeff;
                for (std::size_t k = 0; k < z.size(); ++k) {
                    int pw = k < t.powers.size() ? t.powers[k] : 0;
                    for (int i = 0; i < pw; ++i) mono *= z[k];
                }
                acc += mono;
            }
            return acc;
        }
        case WeightKind::piecewise_sign: {
            std::vector<double> d(z.size(), 0.0);
            for (std::size_t k = 0; k < z.size(); ++k)
                d[k] = z[k] - (k < center.size() ? center[k] : 0.0);
            return gauge_norm(d, n, lambda) <= radius ? pos_value : neg_value;
        }
        case WeightKind::tabulated: {
            if (table_points.empty()) return 0.0;
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < table_points.size(); ++i) {
                double d2 = 0.0;
                for (std::size_t k = 0; k < z.size() && k < table_points[i].size(); ++k) {
                    double d = z[k] - table_points[i][k];
                    d2 += d * d;
                }
                if (d2 < best_d) {
                    best_d = d2;
                    best = i;
                }
            }
            return table_values[best];
        }
    }
    return 0.0;
}

double ProblemSpec::s_effective() const {
    if (regime == Regime::critical) return derived_exponents(*this).crit - 1.0;
    return s;
}

double ProblemSpec::q_exponent() const {
    if (g_weight.exponent > 0.0) return g_weight.exponent;
    double crit = derived_exponents(*this).crit;
    return 0.5 * ((r + 1.0) + crit);
}

double ProblemSpec::p_exponent() const {
    double crit = derived_exponents(*this).crit;
    if (regime == Regime::critical) return crit;
    if (h_weight.exponent > 0.0) return h_weight.exponent;
    return 0.5 * ((s + 1.0) + crit);
}

double ProblemSpec::a_exponent() const {
    double q = q_exponent();
    return q / (q - (r + 1.0));
}

double ProblemSpec::b_exponent() const {
    if (regime == Regime::critical) return std::numeric_limits<double>::infinity();
    double p = p_exponent();
    return p / (p - (s + 1.0));
}

ProblemSpec ProblemSpec::benchmark_subcritical() {
    ProblemSpec spec;
    spec.n = 1;
    spec.m = 1;
    spec.lambda = 1.0;
    spec.r = 0.5;
    spec.s = 3.0;
    spec.mu = 0.1;
    spec.box = {{-1.0, 1.0}, {-1.0, 1.0}};
    spec.g_weight = WeightSpec{};
    spec.h_weight = WeightSpec{};
    spec.regime = Regime::subcritical;
    return spec;
}

ProblemSpec ProblemSpec::benchmark_critical() {
    ProblemSpec spec = benchmark_subcritical();
    spec.regime = Regime::critical;
    spec.s = 5.0;  // 2*_lambda - 1 for Q = 3
    spec.mu = 0.05;
    spec.g2_ball = GaugeBall{{0.5, 0.0}, 0.1};
    return spec;
}

Exponents derived_exponents(const ProblemSpec& spec) {
    double Q = spec.n + (1.0 + spec.lambda) * spec.m;
    if (Q <= 2.0) throw std::domain_error("critical exponent undefined (Q <= 2)");
    return Exponents{Q, 2.0 * Q / (Q - 2.0)};
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

// Samples a weight on a fixed lattice of the box; enough to decide the sign
// hypotheses for the analytic weight kinds.
struct WeightSamples {
    double min_v = std::numeric_limits<double>::infinity();
    double max_v = -std::numeric_limits<double>::infinity();
};

WeightSamples sample_weight(const ProblemSpec& spec, const WeightSpec& w, int per_axis = 33) {
    WeightSamples out;
    if (w.kind == WeightKind::tabulated) {
        for (double v : w.table_values) {
            out.min_v = std::min(out.min_v, v);
            out.max_v = std::max(out.max_v, v);
        }
        return out;
    }
    int d = spec.dim();
    std::vector<int> idx(d, 0);
    std::vector<double> z(d, 0.0);
    while (true) {
        for (int k = 0; k < d; ++k) {
            double t = static_cast<double>(idx[k]) / (per_axis - 1);
            z[k] = spec.box[k].lo + t * (spec.box[k].hi - spec.box[k].lo);
        }
        double v = w.eval(z, spec.n, spec.lambda);
        out.min_v = std::min(out.min_v, v);
        out.max_v = std::max(out.max_v, v);
        int k = 0;
        while (k < d && ++idx[k] == per_axis) idx[k++] = 0;
        if (k == d) break;
    }
    return out;
}

}  // namespace

bool ValidationReport::ok() const {
    return std::all_of(items.begin(), items.end(), [](const ValidationItem& i) { return i.pass; });
}

std::string ValidationReport::first_failure() const {
    for (const auto& i : items)
        if (!i.pass) return i.hypothesis + ": " + i.detail;
    return {};
}

ValidationReport validate(const ProblemSpec& spec) {
    ValidationReport rep;
    auto add = [&rep](std::string hyp, bool pass, std::string detail) {
        rep.items.push_back({std::move(hyp), pass, std::move(detail)});
    };

    add("dimensions", spec.n >= 1 && spec.m >= 1 && static_cast<int>(spec.box.size()) == spec.dim(),
        "n, m >= 1 and one box interval per axis");
    if (static_cast<int>(spec.box.size()) != spec.dim()) return rep;

    bool box_ok = true;
    for (const auto& iv : spec.box) box_ok = box_ok && iv.lo < iv.hi;
    add("box", box_ok, "every interval nonempty");

    add("lambda", spec.lambda > 0.0, "lambda > 0 required, got " + fmt(spec.lambda));

    double Q = spec.n + (1.0 + spec.lambda) * spec.m;
    add("homogeneous dimension", Q > 2.0, "Q = " + fmt(Q) + " must exceed 2");
    if (Q <= 2.0) return rep;
    double crit = 2.0 * Q / (Q - 2.0);

    add("concave range", spec.r >= 0.0 && spec.r < 1.0, "0 <= r < 1 required, got r = " + fmt(spec.r));

    if (spec.regime == Regime::subcritical) {
        bool ok = spec.s > 1.0 && spec.s < crit - 1.0;
        std::string det = ok ? "1 < s < 2*_lambda - 1"
                             : "s < 2*_lambda - 1 violated (" + fmt(spec.s) + " vs " + fmt(crit - 1.0) + ")";
        if (spec.s <= 1.0) det = "s > 1 violated (s = " + fmt(spec.s) + ")";
        add("convex range", ok, det);
    } else {
        add("convex range", true, "critical regime pins s = 2*_lambda - 1 = " + fmt(crit - 1.0));
    }

    // Domain must meet the degeneracy plane {x = 0}.
    bool meets_sigma = true;
    for (int k = 0; k < spec.n; ++k)
        meets_sigma = meets_sigma && spec.box[k].lo <= 0.0 && spec.box[k].hi >= 0.0;
    add("domain meets {x=0}", meets_sigma, "box must straddle x = 0 in every x-axis");

    double q = spec.q_exponent();
    add("(g1) q range", q > spec.r + 1.0 && q < crit,
        "q in (r+1, 2*_lambda) required, got q = " + fmt(q));

    WeightSamples gs = sample_weight(spec, spec.g_weight);
    add("(g1) g+ nonzero", gs.max_v > 0.0, "positive part of g is identically zero");
    if (spec.r == 0.0)
        add("(g1) r=0 sign", gs.min_v >= 0.0,
            "r = 0 requires g >= 0, found min g = " + fmt(gs.min_v));

    if (spec.regime == Regime::subcritical) {
        double p = spec.p_exponent();
        add("(h1) p range", p > spec.s + 1.0 && p < crit,
            "p in (s+1, 2*_lambda) required, got p = " + fmt(p));
        WeightSamples hs = sample_weight(spec, spec.h_weight);
        add("(h1) h+ nonzero", hs.max_v > 0.0, "positive part of h is identically zero");
    } else {
        // Critical regime: g >= 0 everywhere, h == 1, and a gauge ball away
        // from the degeneracy set on which g is bounded.
        add("(g2) g nonnegative", gs.min_v >= 0.0,
            "critical regime requires g >= 0, found min g = " + fmt(gs.min_v));
        WeightSamples hs = sample_weight(spec, spec.h_weight);
        bool h_one = spec.h_weight.kind == WeightKind::constant && spec.h_weight.value == 1.0;
        add("critical h == 1", h_one,
            h_one ? "" : "critical equation uses unit convex weight, got h in [" + fmt(hs.min_v) +
                             ", " + fmt(hs.max_v) + "]");
        if (!spec.g2_ball.has_value()) {
            add("(g2) ball", false, "no gauge ball supplied");
        } else {
            const GaugeBall& ball = *spec.g2_ball;
            bool size_ok = static_cast<int>(ball.center.size()) == spec.dim() && ball.radius > 0.0;
            bool inside = size_ok, off_sigma = size_ok;
            if (size_ok) {
                double d2 = 2.0 * ball.radius;
                // Gauge ball of radius d: |x - x0| <= d, |y - y0| <= d^{1+l}/(1+l).
                double yext = std::pow(d2, 1.0 + spec.lambda) / (1.0 + spec.lambda);
                for (int k = 0; k < spec.n; ++k)
                    inside = inside && ball.center[k] - d2 >= spec.box[k].lo &&
                             ball.center[k] + d2 <= spec.box[k].hi;
                for (int k = spec.n; k < spec.dim(); ++k)
                    inside = inside && ball.center[k] - yext >= spec.box[k].lo &&
                             ball.center[k] + yext <= spec.box[k].hi;
                double x2 = 0.0;
                for (int k = 0; k < spec.n; ++k) x2 += ball.center[k] * ball.center[k];
                off_sigma = std::sqrt(x2) > d2;
            }
            add("(g2) ball", size_ok && inside && off_sigma,
                !size_ok    ? "ball center/radius malformed"
                : !inside   ? "B_{2R}(z0) leaves the domain"
                : !off_sigma ? "B_{2R}(z0) touches the degeneracy set {x=0}"
                             : "");
        }
    }

    add("mu", spec.mu > 0.0, "mu > 0 required, got " + fmt(spec.mu));
    return rep;
}

}  // namespace grushin
