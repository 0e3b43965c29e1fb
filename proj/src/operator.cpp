#include "grushin/operator.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace grushin {

GrushinOperator GrushinOperator::assemble(std::shared_ptr<const TensorGrid> grid, double lambda) {
    GrushinOperator op;
    op.grid_ = std::move(grid);
    op.lambda_ = lambda;
    const TensorGrid& g = *op.grid_;
    const long N = g.interior_count();
    const int d = g.dim();

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(N) * (2 * d + 1));

    std::vector<int> mi(d, 0);
    for (long i = 0; i < N; ++i) {
        std::vector<int> multi = g.interior_multi(i);
        std::vector<double> z(d);
        for (int k = 0; k < d; ++k) z[k] = g.coords[k][multi[k] + 1];

        double x2 = 0.0;
        for (int k = 0; k < g.n; ++k) x2 += z[k] * z[k];
        double ywt = std::pow(x2, lambda);  // |x|^{2 lambda}, exactly 0 on Sigma

        double diag = 0.0;
        for (int k = 0; k < d; ++k) {
            double coef = (k < g.n ? 1.0 : ywt) / (g.h[k] * g.h[k]);
            diag += 2.0 * coef;
            for (int dir : {-1, 1}) {
                int nb = multi[k] + dir;
                if (nb < 0 || nb >= g.interior_nodes(k)) continue;  // Dirichlet
                std::vector<int> nbm = multi;
                nbm[k] = nb;
                trips.emplace_back(i, g.interior_index(nbm), -coef);
            }
        }
        trips.emplace_back(i, i, diag);
    }

    op.L_.resize(N, N);
    op.L_.setFromTriplets(trips.begin(), trips.end());
    op.L_.makeCompressed();
    op.chol_ = std::make_unique<Factorization>();
    op.chol_->compute(op.L_);
    if (op.chol_->info() != Eigen::Success)
        throw std::runtime_error("operator factorization failed");

    // Discrete Poincare constant by inverse iteration on L.
    Field v = Field::Ones(N);
    v /= v.norm();
    double lam = 0.0;
    for (int it = 0; it < 80; ++it) {
        Field w = op.chol_->solve(v);
        double nw = w.norm();
        if (nw == 0.0) break;
        w /= nw;
        double next = w.dot(op.L_ * w);
        if (it > 4 && std::abs(next - lam) <= 1e-10 * std::abs(next)) {
            lam = next;
            break;
        }
        lam = next;
        v = std::move(w);
    }
    op.poincare_ = lam;
    return op;
}

Field GrushinOperator::apply(const Field& u) const { return L_ * u; }

double GrushinOperator::energy(const Field& u) const {
    return grid_->cell_volume() * u.dot(L_ * u);
}

double GrushinOperator::inner(const Field& u, const Field& v) const {
    return grid_->cell_volume() * u.dot(L_ * v);
}

Field GrushinOperator::solve(const Field& rhs) const {
    Field w = chol_->solve(rhs);
    if (chol_->info() != Eigen::Success) throw std::runtime_error("operator solve failed");
    return w;
}

void GrushinOperator::dump_coo(std::ostream& os) const {
    for (int k = 0; k < L_.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(L_, k); it; ++it)
            os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

double weighted_power_integral(const TensorGrid& grid, const Field& w, const Field& u,
                               double exponent, SignedMode mode) {
    if (exponent <= 0.0) throw std::domain_error("integrand exponent must be positive");
    double acc = 0.0;
    for (long i = 0; i < u.size(); ++i) {
        double base = mode == SignedMode::abs ? std::abs(u[i]) : std::max(u[i], 0.0);
        if (base > 0.0) acc += w[i] * std::pow(base, exponent);
    }
    return grid.cell_volume() * acc;
}

double lp_norm(const TensorGrid& grid, const Field& u, double p) {
    if (p < 1.0) throw std::domain_error("lp_norm requires p >= 1");
    double acc = 0.0;
    for (long i = 0; i < u.size(); ++i) {
        double a = std::abs(u[i]);
        if (a > 0.0) acc += std::pow(a, p);
    }
    return std::pow(grid.cell_volume() * acc, 1.0 / p);
}

}  // namespace grushin
