#pragma once

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "fpf/ensemble.hpp"
#include "fpf/errors.hpp"
#include "fpf/exact_sum.hpp"

namespace fpf {

struct KernelConfig {
    double epsilon = 1.0;

    void validate() const {
        if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw DomainError("epsilon must be positive and finite");
    }
};

enum class KernelNormalization { Unnormalized, Normalized };

template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar squared_distance(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y) {
    using Scalar = typename DerivedX::Scalar;
    Scalar acc(0);
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const Scalar diff = x(k) - y(k);
        acc += diff * diff;
    }
    return acc;
}

// exp(-|x-y|^2 / (4 eps)); the normalized variant carries (4 pi eps)^(-d/2).
template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar gaussian_kernel(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
                                          const KernelConfig& cfg,
                                          KernelNormalization norm = KernelNormalization::Unnormalized) {
    using Scalar = typename DerivedX::Scalar;
    cfg.validate();
    if (x.size() != y.size()) throw DomainError("gaussian_kernel: dimension mismatch");
    if (!x.allFinite() || !y.allFinite()) throw DomainError("gaussian_kernel: non-finite input");
    const Scalar eps(cfg.epsilon);
    Scalar value = std::exp(-squared_distance(x, y) / (Scalar(4) * eps));
    if (norm == KernelNormalization::Normalized) {
        value *= std::pow(Scalar(4) * std::numbers::pi_v<Scalar> * eps, -Scalar(x.size()) / Scalar(2));
    }
    return value;
}

template <typename Scalar>
Scalar kernel_exponent_scale(const KernelConfig& cfg) {
    return Scalar(-1) / (Scalar(4) * Scalar(cfg.epsilon));
}

// Symmetric matrix of unnormalized kernel values g(X^i, X^j).
template <typename Scalar>
RowMatrixX<Scalar> kernel_matrix(const Ensemble<Scalar>& ens, const KernelConfig& cfg) {
    cfg.validate();
    const Eigen::Index n = ens.size();
    const Scalar scale = kernel_exponent_scale<Scalar>(cfg);
    const auto& x = ens.positions();
    RowMatrixX<Scalar> g(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        g(i, i) = Scalar(1);
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const Scalar v = std::exp(scale * squared_distance(x.row(i), x.row(j)));
            g(i, j) = v;
            g(j, i) = v;
        }
    }
    return g;
}

// Row-stochastic diffusion-map matrix and its normalizers.
//   u_k       = (sum_l g(X^k, X^l))^(1/2)
//   q(i, j)   = g(X^i, X^j) / u_j
//   s_i       = sum_l q(i, l)
//   T(i, j)   = q(i, j) / s_i
// `pi` is the row-sum weighting s_i / sum_j s_j. `stationary` is the
// reversible invariant law of T, proportional to s_i / u_i.
template <typename Scalar = double>
struct MarkovBundle {
    RowMatrixX<Scalar> T;
    VectorX<Scalar> u;
    VectorX<Scalar> s;
    VectorX<Scalar> pi;
    VectorX<Scalar> stationary;
    double epsilon = 0.0;

    Eigen::Index size() const noexcept { return T.rows(); }
};

using MarkovBundled = MarkovBundle<double>;

template <typename Scalar>
MarkovBundle<Scalar> build_markov(const Ensemble<Scalar>& ens, const KernelConfig& cfg) {
    cfg.validate();
    const Eigen::Index n = ens.size();
    if (n < 2) throw ConfigError("build_markov: need at least 2 particles");

    MarkovBundle<Scalar> b;
    b.epsilon = cfg.epsilon;
    b.T = kernel_matrix(ens, cfg);
    b.u.resize(n);
    b.s.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        ExactSum acc;
        for (Eigen::Index l = 0; l < n; ++l) acc.add(double(b.T(k, l)));
        b.u(k) = std::sqrt(Scalar(acc.value()));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        ExactSum acc;
        for (Eigen::Index l = 0; l < n; ++l) acc.add(double(b.T(i, l) / b.u(l)));
        b.s(i) = Scalar(acc.value());
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) b.T(i, j) = (b.T(i, j) / b.u(j)) / b.s(i);
    }

    ExactSum s_total;
    ExactSum d_total;
    VectorX<Scalar> degree(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        degree(i) = b.s(i) / b.u(i);
        s_total.add(double(b.s(i)));
        d_total.add(double(degree(i)));
    }
    b.pi = b.s / Scalar(s_total.value());
    b.stationary = degree / Scalar(d_total.value());
    return b;
}

// || nu T - nu ||_1
template <typename Scalar, typename Derived>
Scalar left_fixed_point_residual(const MarkovBundle<Scalar>& b, const Eigen::MatrixBase<Derived>& nu) {
    return (b.T.transpose() * nu - nu).cwiseAbs().sum();
}

template <typename Scalar = double>
struct StationaryResult {
    VectorX<Scalar> nu;
    Scalar residual{};             // || nu T - nu ||_1
    Scalar row_sum_residual{};     // same residual for the s_i / sum s weighting
    Scalar closed_form_residual{}; // same residual for s_i / u_i normalized
    std::size_t iterations = 0;
};

template <typename Scalar>
StationaryResult<Scalar> stationary_by_power_iteration(const MarkovBundle<Scalar>& b, Scalar tol,
                                                       std::size_t max_iter) {
    if (!(tol > Scalar(0))) throw DomainError("stationary_by_power_iteration: tol must be positive");
    const Eigen::Index n = b.size();
    StationaryResult<Scalar> out;
    VectorX<Scalar> nu = VectorX<Scalar>::Constant(n, Scalar(1) / Scalar(n));
    Scalar residual = left_fixed_point_residual(b, nu);
    std::size_t it = 0;
    while (residual > tol) {
        if (it >= max_iter) {
            throw IterationError("power iteration for the stationary law did not converge", double(residual), it);
        }
        VectorX<Scalar> next = b.T.transpose() * nu;
        nu = next / next.sum();
        residual = left_fixed_point_residual(b, nu);
        ++it;
    }
    out.nu = std::move(nu);
    out.residual = residual;
    out.row_sum_residual = left_fixed_point_residual(b, b.pi);
    out.closed_form_residual = left_fixed_point_residual(b, b.stationary);
    out.iterations = it;
    return out;
}

} // namespace fpf
