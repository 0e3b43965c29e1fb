#pragma once

// Tensor-product discretization of the box domain: node layout, composite
// trapezoid quadrature, the gauge geometry (norm, dilation, balls) and the
// smooth cutoff used by the concentration machinery.

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "grushin/model.hpp"

namespace grushin {

using Field = Eigen::VectorXd;  // one value per interior node, boundary = 0

// Anisotropic gauge norm rho(z) = (|x|^{2(1+l)} + (1+l)^2 |y|^2)^{1/(2(1+l))}.
double gauge_norm(std::span<const double> z, int n, double lambda);

// Grushin dilation (x, y) -> (t x, t^{1+lambda} y); requires t > 0.
std::vector<double> dilate(std::span<const double> z, double t, int n, double lambda);

class TensorGrid {
  public:
    static TensorGrid make(const ProblemSpec& spec, const std::vector<int>& nodes_per_axis);

    int n = 0, m = 0;
    double lambda = 0.0;
    std::vector<Interval> box;
    std::vector<int> nodes;                    // total nodes per axis (2^k + 1)
    std::vector<double> h;                     // spacing per axis
    std::vector<std::vector<double>> coords;   // node coordinates per axis

    int dim() const { return n + m; }
    long interior_count() const { return interior_count_; }
    double cell_volume() const { return vol_; }
    double domain_measure() const;

    // Interior node <-> flat index (row-major over interior counts).
    long interior_index(std::span<const int> interior_multi) const;
    std::vector<int> interior_multi(long idx) const;
    std::vector<double> interior_point(long idx) const;
    int interior_nodes(int axis) const { return nodes[axis] - 2; }

    // Composite trapezoid over all nodes of a callable z -> f(z).
    double integrate(const std::function<double(std::span<const double>)>& f) const;
    // Same quadrature for an interior field (boundary values are zero, so
    // every contributing node carries the full cell volume).
    double integrate(const Field& u) const;

    // Samples a callable at the interior nodes.
    Field sample(const std::function<double(std::span<const double>)>& f) const;

  private:
    long interior_count_ = 0;
    double vol_ = 0.0;
};

struct Cutoff {
    std::vector<double> center;
    double inner_radius = 0.0;  // value 1 inside, 0 beyond 2x this radius
    Field values;

    // Radial profile: 1 on [0, R], quintic blend on [R, 2R], 0 beyond.
    static double profile(double rho, double R);
};

// Nodal cutoff equal to 1 on B_R(z0) and 0 outside B_{2R}(z0) (gauge balls).
// Requires B_{2R}(z0) inside the domain; with require_off_sigma it must also
// avoid the degeneracy set {x = 0}, matching hypothesis (g2).
Cutoff build_cutoff(const TensorGrid& grid, std::span<const double> center, double R,
                    bool require_off_sigma = true);

}  // namespace grushin
