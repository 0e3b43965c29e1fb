#include "grushin/grid.hpp"

#include <cmath>
#include <stdexcept>

namespace grushin {

double gauge_norm(std::span<const double> z, int n, double lambda) {
    double x2 = 0.0, y2 = 0.0;
    for (int k = 0; k < n; ++k) x2 += z[k] * z[k];
    for (std::size_t k = n; k < z.size(); ++k) y2 += z[k] * z[k];
    double op = 1.0 + lambda;
    double w = std::pow(x2, op) + op * op * y2;  // |x|^{2(1+l)} + (1+l)^2 |y|^2
    return std::pow(w, 0.5 / op);
}

std::vector<double> dilate(std::span<const double> z, double t, int n, double lambda) {
    if (t <= 0.0) throw std::domain_error("dilation parameter must be positive");
    std::vector<double> out(z.begin(), z.end());
    double ty = std::pow(t, 1.0 + lambda);
    for (int k = 0; k < n; ++k) out[k] *= t;
    for (std::size_t k = n; k < out.size(); ++k) out[k] *= ty;
    return out;
}

namespace {

bool power_of_two_plus_one(int v) {
    int k = v - 1;
    return k >= 4 && (k & (k - 1)) == 0;
}

}  // namespace

TensorGrid TensorGrid::make(const ProblemSpec& spec, const std::vector<int>& nodes_per_axis) {
    if (static_cast<int>(nodes_per_axis.size()) != spec.dim())
        throw std::invalid_argument("one node count per axis required");
    TensorGrid g;
    g.n = spec.n;
    g.m = spec.m;
    g.lambda = spec.lambda;
    g.box = spec.box;
    g.nodes = nodes_per_axis;
    g.vol_ = 1.0;
    g.interior_count_ = 1;
    for (int k = 0; k < g.dim(); ++k) {
        int N = nodes_per_axis[k];
        if (!power_of_two_plus_one(N))
            throw std::invalid_argument("node count per axis must be 2^k + 1 with k >= 2");
        double hk = (spec.box[k].hi - spec.box[k].lo) / (N - 1);
        g.h.push_back(hk);
        std::vector<double> c(N);
        for (int i = 0; i < N; ++i) c[i] = spec.box[k].lo + i * hk;
        // Snap the node nearest zero exactly onto the degeneracy plane.
        if (k < spec.n && spec.box[k].lo < 0.0 && spec.box[k].hi > 0.0) {
            int i0 = static_cast<int>(std::lround(-spec.box[k].lo / hk));
            if (i0 > 0 && i0 < N - 1 && std::abs(c[i0]) < 0.5 * hk) c[i0] = 0.0;
        }
        g.coords.push_back(std::move(c));
        g.vol_ *= hk;
        g.interior_count_ *= (N - 2);
    }
    return g;
}

double TensorGrid::domain_measure() const {
    double v = 1.0;
    for (const auto& iv : box) v *= iv.hi - iv.lo;
    return v;
}

long TensorGrid::interior_index(std::span<const int> mi) const {
    long idx = 0;
    for (int k = 0; k < dim(); ++k) idx = idx * interior_nodes(k) + mi[k];
    return idx;
}

std::vector<int> TensorGrid::interior_multi(long idx) const {
    std::vector<int> mi(dim());
    for (int k = dim() - 1; k >= 0; --k) {
        mi[k] = static_cast<int>(idx % interior_nodes(k));
        idx /= interior_nodes(k);
    }
    return mi;
}

std::vector<double> TensorGrid::interior_point(long idx) const {
    std::vector<int> mi = interior_multi(idx);
    std::vector<double> z(dim());
    for (int k = 0; k < dim(); ++k) z[k] = coords[k][mi[k] + 1];
    return z;
}

double TensorGrid::integrate(const std::function<double(std::span<const double>)>& f) const {
    // Tensor-product composite trapezoid over all nodes.
    std::vector<int> idx(dim(), 0);
    std::vector<double> z(dim(), 0.0);
    double acc = 0.0;
    while (true) {
        double w = vol_;
        for (int k = 0; k < dim(); ++k) {
            z[k] = coords[k][idx[k]];
            if (idx[k] == 0 || idx[k] == nodes[k] - 1) w *= 0.5;
        }
        acc += w * f(z);
        int k = 0;
        while (k < dim() && ++idx[k] == nodes[k]) idx[k++] = 0;
        if (k == dim()) break;
    }
    return acc;
}

double TensorGrid::integrate(const Field& u) const { return vol_ * u.sum(); }

Field TensorGrid::sample(const std::function<double(std::span<const double>)>& f) const {
    Field u(interior_count_);
    for (long i = 0; i < interior_count_; ++i) {
        std::vector<double> z = interior_point(i);
        u[i] = f(z);
    }
    return u;
}

double Cutoff::profile(double rho, double R) {
    if (rho <= R) return 1.0;
    if (rho >= 2.0 * R) return 0.0;
    double t = (rho - R) / R;
    // Quintic smoothstep: zero first and second derivatives at both ends.
    double st = t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
    return 1.0 - st;
}

Cutoff build_cutoff(const TensorGrid& grid, std::span<const double> center, double R,
                    bool require_off_sigma) {
    if (static_cast<int>(center.size()) != grid.dim() || R <= 0.0)
        throw std::invalid_argument("cutoff center/radius malformed");
    double d2 = 2.0 * R;
    double op = 1.0 + grid.lambda;
    double yext = std::pow(d2, op) / op;
    for (int k = 0; k < grid.n; ++k)
        if (center[k] - d2 < grid.box[k].lo || center[k] + d2 > grid.box[k].hi)
            throw std::domain_error("cutoff ball B_{2R} leaves the domain");
    for (int k = grid.n; k < grid.dim(); ++k)
        if (center[k] - yext < grid.box[k].lo || center[k] + yext > grid.box[k].hi)
            throw std::domain_error("cutoff ball B_{2R} leaves the domain");
    if (require_off_sigma) {
        double x2 = 0.0;
        for (int k = 0; k < grid.n; ++k) x2 += center[k] * center[k];
        if (std::sqrt(x2) <= d2)
            throw std::domain_error("cutoff ball B_{2R} touches the degeneracy set {x=0}");
    }

    Cutoff c;
    c.center.assign(center.begin(), center.end());
    c.inner_radius = R;
    c.values = Field(grid.interior_count());
    std::vector<double> d(grid.dim());
    for (long i = 0; i < grid.interior_count(); ++i) {
        std::vector<double> z = grid.interior_point(i);
        for (int k = 0; k < grid.dim(); ++k) d[k] = z[k] - center[k];
        c.values[i] = Cutoff::profile(gauge_norm(d, grid.n, grid.lambda), R);
    }
    return c;
}

}  // namespace grushin
