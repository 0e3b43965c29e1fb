#pragma once

// Discrete Grushin operator -Delta_lambda = -Delta_x - |x|^{2 lambda} Delta_y
// with homogeneous Dirichlet conditions, plus the quadrature helpers for the
// integrals of the variational framework.

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <iosfwd>
#include <memory>

#include "grushin/grid.hpp"

namespace grushin {

enum class SignedMode { abs, positive_part };

class GrushinOperator {
  public:
    // Flux-form stencil: the y-direction second difference at a node is
    // weighted by |x|^{2 lambda} at that node's x (faces share the x value,
    // so the weight vanishes exactly on the degeneracy set).
    static GrushinOperator assemble(std::shared_ptr<const TensorGrid> grid, double lambda);

    const TensorGrid& grid() const { return *grid_; }
    std::shared_ptr<const TensorGrid> grid_ptr() const { return grid_; }
    double lambda() const { return lambda_; }

    // Nodal operator value (-Delta_lambda u at interior nodes).
    Field apply(const Field& u) const;

    // Discrete ||u||_lambda^2: the Dirichlet form vol * u' L u, which is the
    // face-difference quadrature of the integral of |D_lambda u|^2.
    double energy(const Field& u) const;
    // lambda-inner product vol * u' L v.
    double inner(const Field& u, const Field& v) const;

    // Solves L w = rhs with the cached sparse factorization.
    Field solve(const Field& rhs) const;

    // Smallest Rayleigh quotient of energy vs squared L2 norm (discrete
    // Poincare constant), estimated at assembly by inverse iteration.
    double poincare_constant() const { return poincare_; }

    const Eigen::SparseMatrix<double>& matrix() const { return L_; }

    // Coordinate-format text dump (row col value), 0-based interior indices.
    void dump_coo(std::ostream& os) const;

  private:
    using Factorization = Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>;

    std::shared_ptr<const TensorGrid> grid_;
    double lambda_ = 0.0;
    Eigen::SparseMatrix<double> L_;
    std::unique_ptr<Factorization> chol_;
    double poincare_ = 0.0;
};

// Quadrature of w * |u|^e (abs) or w * (u+)^e (positive_part).
double weighted_power_integral(const TensorGrid& grid, const Field& w, const Field& u,
                               double exponent, SignedMode mode = SignedMode::abs);

// (integral of |u|^p)^(1/p); requires p >= 1.
double lp_norm(const TensorGrid& grid, const Field& u, double p);

}  // namespace grushin
