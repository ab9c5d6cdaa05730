#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "fpf/density_grid.hpp"
#include "fpf/models.hpp"

namespace fpf {

// Markov operator of the diffusion map on a density grid:
//   nu     = rho / sqrt(g * rho)
//   D      = g * nu
//   T f    = g * (nu f) / D
//   pi     = nu D / int nu D        (invariant law of T on the grid)
// where * is convolution by grid quadrature against the unnormalized kernel.
class DiffusionOperator {
public:
    DiffusionOperator(const DensityGrid& grid, double epsilon);

    const DensityGrid& grid() const noexcept { return grid_; }
    double epsilon() const noexcept { return epsilon_; }

    // (g * f)(x_a) = sum_b g(x_a, y_b) w_b f_b, separable per axis.
    Eigen::MatrixXd convolve(const Eigen::MatrixXd& f) const;
    Eigen::MatrixXd apply(const Eigen::MatrixXd& f) const;
    double expectation(const Eigen::MatrixXd& f) const; // int f pi

    const Eigen::MatrixXd& nu() const noexcept { return nu_; }
    const Eigen::MatrixXd& degree() const noexcept { return degree_; }
    const Eigen::MatrixXd& pi() const noexcept { return pi_; }
    const Eigen::MatrixXd& kernel_mass() const noexcept { return conv_rho_; } // g * rho

    // Quadrature weights of p(x, .) on the grid, normalized to sum one.
    Eigen::MatrixXd transition_weights(const Eigen::VectorXd& x) const;

private:
    DensityGrid grid_;
    double epsilon_;
    std::array<Eigen::MatrixXd, 2> kernel_;
    Eigen::MatrixXd conv_rho_;
    Eigen::MatrixXd nu_;
    Eigen::MatrixXd degree_;
    Eigen::MatrixXd pi_;
};

// p(x, y) = g(x, y) nu(y) / (g * nu)(x), with nu interpolated between nodes.
double transition_density(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const DiffusionOperator& op);

struct MeanFieldField {
    Eigen::MatrixXd phi;     // potential at the nodes
    Eigen::MatrixXd R;       // phi + eps h
    double hhat = 0.0;       // int h pi
    Eigen::MatrixXd nu;      // rho / sqrt(normalized kernel * rho)
    Eigen::MatrixXd pi;
    double residual = 0.0;
    std::size_t iterations = 0;
};

MeanFieldField solve_meanfield_fixed_point(const DiffusionOperator& op, const Observation& h, double tol = 1e-10,
                                           std::size_t max_iter = 200000);

// (1/2eps) Cov_{p(x, .)}(y, R) at an arbitrary point.
Eigen::VectorXd meanfield_gain(const Eigen::VectorXd& x, const DiffusionOperator& op, const MeanFieldField& field);

// Gain at every node, one matrix per coordinate, from
// T(y R) - T(y) T(R) evaluated by convolutions.
std::vector<Eigen::MatrixXd> meanfield_gain_on_grid(const DiffusionOperator& op, const MeanFieldField& field);

// Central differences of the potential along `axis` at interior nodes
// (end nodes use one-sided differences).
Eigen::MatrixXd potential_gradient(const DensityGrid& grid, const MeanFieldField& field, int axis = 0);

// int |y| nu(y) dy with the normalized kernel.
double first_moment_of_nu(const DiffusionOperator& op, const MeanFieldField& field);

struct GainBoundReport {
    double epsilon = 0.0;
    double c_v = 0.0;
    double c_g = 0.0;
    double bound1 = 0.0;
    double bound2 = 0.0;
    double measured_sup_K = 0.0;
    double measured_sup_gradK = 0.0;
    bool pass1 = false;
    bool pass2 = false;
};

// Uniform bounds on the mean-field gain and its Jacobian for a strongly
// log-concave density with modulus c_v > 1/(4 eps). Sups are taken over
// nodes within `interior_fraction` of the half-width.
GainBoundReport gain_bound_certificate(const DensityGrid& grid, const Observation& h, double epsilon,
                                       double interior_fraction = 0.75, double tol = 1e-10);

struct PoincareReport {
    double c_g = 0.0;
    double limit = 0.0; // 1/c_g + slack
    std::vector<Eigen::VectorXd> probes;
    std::vector<Eigen::VectorXd> variances; // per coordinate
    bool pass = false;
};

// Per-coordinate variance of p(x, .) against 1/c_g at each probe.
PoincareReport poincare_check(const DensityGrid& grid, double epsilon, const std::vector<Eigen::VectorXd>& probes,
                              double slack = 1e-3);

} // namespace fpf
