#pragma once

// Reference computations used only by tests. Each one is written directly
// from the defining formulas, in long double where it helps, and shares no
// code with the library.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using MatL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using VecL = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

inline Eigen::MatrixXd random_cloud(std::mt19937_64& rng, int n, int d, double spread = 1.0) {
    std::normal_distribution<double> z(0.0, spread);
    Eigen::MatrixXd x(n, d);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < d; ++k) x(i, k) = z(rng);
    return x;
}

// Transition matrix from g, u, q and s written out term by term.
inline MatL markov_matrix(const Eigen::MatrixXd& x, double eps) {
    const Eigen::Index n = x.rows();
    MatL g(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            long double d2 = 0;
            for (Eigen::Index k = 0; k < x.cols(); ++k) {
                const long double diff = (long double)x(i, k) - (long double)x(j, k);
                d2 += diff * diff;
            }
            g(i, j) = std::exp(-d2 / (4.0L * eps));
        }
    VecL u(n);
    for (Eigen::Index k = 0; k < n; ++k) u(k) = std::sqrt(g.row(k).sum());
    MatL q(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) q(i, j) = g(i, j) / u(j);
    MatL t(n, n);
    for (Eigen::Index i = 0; i < n; ++i) t.row(i) = q.row(i) / q.row(i).sum();
    return t;
}

// Left Perron vector of a row-stochastic matrix by dense power iteration.
inline VecL left_stationary(const MatL& t, int sweeps = 20000) {
    const Eigen::Index n = t.rows();
    VecL nu = VecL::Constant(n, 1.0L / n);
    for (int s = 0; s < sweeps; ++s) {
        VecL next = t.transpose() * nu;
        nu = next / next.sum();
    }
    return nu;
}

// Double-sum gain (1/2eps) sum_{j,k} T_ij T_ik (r_j - r_k) X^j.
inline Eigen::MatrixXd double_sum_gain(const MatL& t, const Eigen::MatrixXd& x, const Eigen::VectorXd& r, double eps) {
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd out(n, x.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            long double acc = 0;
            for (Eigen::Index j = 0; j < n; ++j) {
                long double inner = 0;
                for (Eigen::Index k = 0; k < n; ++k) inner += t(i, k) * ((long double)r(j) - (long double)r(k));
                acc += t(i, j) * inner * (long double)x(j, c);
            }
            out(i, c) = double(acc / (2.0L * eps));
        }
    }
    return out;
}

// eps * sum_{n=0}^{terms-1} T^n (h - hhat), then shifted to nu-mean zero.
inline VecL neumann_partial_sum(const MatL& t, const VecL& nu, const Eigen::VectorXd& h, double eps, int terms) {
    const Eigen::Index n = t.rows();
    VecL hl(n);
    for (Eigen::Index i = 0; i < n; ++i) hl(i) = h(i);
    const long double hhat = nu.dot(hl);
    VecL term = (hl.array() - hhat).matrix() * (long double)eps;
    VecL total = VecL::Zero(n);
    for (int m = 0; m < terms; ++m) {
        total += term;
        term = t * term;
    }
    return (total.array() - nu.dot(total)).matrix();
}

// Mean-field objects for rho = N(0, s2) and h(x) = x in one dimension,
// where every kernel integral is Gaussian.
//   p(x, .) = N(a x, var_p), grad phi = alpha, gain = (alpha + eps) var_p / (2 eps)
struct GaussianMeanField {
    double precision, var_p, a, alpha, gain;
};

inline GaussianMeanField gaussian_mean_field(double s2, double eps) {
    GaussianMeanField m{};
    m.precision = 1.0 / (2.0 * eps) + 1.0 / s2 - 1.0 / (2.0 * (s2 + 2.0 * eps));
    m.var_p = 1.0 / m.precision;
    m.a = 1.0 / (2.0 * eps * m.precision);
    m.alpha = eps / (1.0 - m.a);
    m.gain = (m.alpha + eps) * m.var_p / (2.0 * eps);
    return m;
}

// Stationary Riccati variance of dP = (2aP + 1 - c^2 P^2) dt.
inline double riccati_stationary(double a, double c) {
    if (c == 0.0) return -1.0 / (2.0 * a);
    return (a + std::sqrt(a * a + c * c)) / (c * c);
}

// Two-particle worked case at distance one: X = {0, 1}.
struct TwoParticle {
    double t11, t12, phi_diff;
};

inline TwoParticle two_particle(double eps) {
    const double e = std::exp(-1.0 / (4.0 * eps));
    TwoParticle p{};
    p.t11 = 1.0 / (1.0 + e);
    p.t12 = e / (1.0 + e);
    // phi1 - phi2 = eps (x1 - x2) / (1 - (T11 - T21)), with T21 = T12
    p.phi_diff = -eps / (1.0 - (p.t11 - p.t12));
    return p;
}

} // namespace oracle
