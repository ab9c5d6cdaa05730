#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "fpf/models.hpp"

namespace fpf {

// Tensor grid in one or two dimensions carrying a reference density.
// Values on the grid are stored as an n1 x n2 matrix (n2 = 1 in 1D).
// Nodes are mirrored about the grid center and weights are trapezoidal.
struct DensityGrid {
    int dim = 1;
    std::vector<Eigen::VectorXd> nodes;
    std::vector<Eigen::VectorXd> weights;
    Eigen::MatrixXd rho;
    std::optional<double> c_v;   // strong log-concavity modulus of -log rho

    Eigen::Index n(int axis) const { return nodes[std::size_t(axis)].size(); }
    Eigen::Index rows() const { return n(0); }
    Eigen::Index cols() const { return dim == 2 ? n(1) : 1; }
    double spacing(int axis) const;
    Eigen::VectorXd point(Eigen::Index a, Eigen::Index b = 0) const;

    // Product quadrature weights w1(a) w2(b), same shape as rho.
    Eigen::MatrixXd cell_weights() const;
    double integrate(const Eigen::MatrixXd& f) const;
    double mass() const { return integrate(rho); }

    // Coordinate `axis` at every node, same shape as rho.
    Eigen::MatrixXd coordinate(int axis) const;
    Eigen::MatrixXd tabulate(const Observation& h) const;

    // Nodes within `fraction` of the half-width on every axis.
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> interior(double fraction) const;
    bool contains(const Eigen::VectorXd& x) const;

    void validate() const;

    static Eigen::VectorXd mirrored_axis(double half_width, Eigen::Index count);

    // Density evaluated on the tensor grid and renormalized to unit mass.
    static DensityGrid from_density(int dim, const Eigen::VectorXd& axis,
                                    const std::function<double(const Eigen::VectorXd&)>& density,
                                    std::optional<double> c_v);
    // N(0, variance I); c_v = 1 / variance.
    static DensityGrid gaussian(int dim, double variance, Eigen::Index count = 2001, double half_width_sd = 8.0);
    // 1D mixture of N(-offset, sd^2) and N(offset, sd^2) with equal weights.
    static DensityGrid bimodal(double offset, double sd, Eigen::Index count = 2001, double half_width_sd = 8.0);
    // Uniform on [-half_width, half_width]^dim; log-concave with c_v = 0.
    static DensityGrid uniform(int dim, double half_width, Eigen::Index count = 2001);
};

// Gain of the one-dimensional weighted Poisson problem,
//   K(x) = -(1 / rho(x)) int_{-inf}^x (h - hhat) rho dy,
// by cumulative trapezoid on the grid and linear interpolation between nodes.
Eigen::VectorXd exact_gain_1d(const DensityGrid& grid, const Observation& h, const Eigen::VectorXd& x_query,
                              double density_floor = 1e-300);

} // namespace fpf
