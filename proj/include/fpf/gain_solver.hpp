#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "fpf/ensemble.hpp"
#include "fpf/errors.hpp"
#include "fpf/exact_sum.hpp"
#include "fpf/kernels.hpp"

namespace fpf {

// Weights used for the mean of h in the innovation term. The fixed point
// itself is always centered with the stationary law of T, the only choice
// for which it has a solution.
enum class InnovationWeights { Stationary, RowSum, Uniform };

InnovationWeights parse_innovation_weights(const std::string& name);
std::string innovation_weights_name(InnovationWeights w);

struct GainConfig {
    enum class Mode { FixedIterates, ToTolerance };

    double epsilon = 1.0;
    Mode mode = Mode::ToTolerance;
    int iterates = 1;             // sweeps in FixedIterates mode
    double tol = 1e-8;            // sup-norm residual in ToTolerance mode
    std::size_t max_iter = 0;     // 0 selects the contraction-based cap
    InnovationWeights innovation = InnovationWeights::Stationary;

    static GainConfig fixed_iterates(double epsilon, int sweeps) {
        GainConfig c;
        c.epsilon = epsilon;
        c.mode = Mode::FixedIterates;
        c.iterates = sweeps;
        return c;
    }

    static GainConfig to_tolerance(double epsilon, double tol = 1e-8, std::size_t max_iter = 0) {
        GainConfig c;
        c.epsilon = epsilon;
        c.mode = Mode::ToTolerance;
        c.tol = tol;
        c.max_iter = max_iter;
        return c;
    }

    void validate() const {
        KernelConfig{epsilon}.validate();
        if (mode == Mode::FixedIterates && iterates < 1) throw ConfigError("iterates must be at least 1");
        if (mode == Mode::ToTolerance && !(tol > 0.0)) throw ConfigError("tol must be positive");
    }
};

template <typename Scalar = double>
struct GainField {
    VectorX<Scalar> phi;
    VectorX<Scalar> r;        // phi + eps * h
    Scalar hhatN{};           // stationary-weighted mean of h
    MatrixX<Scalar> K;        // N x d, empty until gain_at_particles
    Scalar residual{};        // || phi - T phi - eps (h - hhatN) ||_inf
    std::size_t iterations = 0;
    Scalar contraction{};     // last ratio of successive residuals
};

using GainFieldd = GainField<double>;

namespace detail {

// sum_j w_j v_j written as v_0 + sum_j w_j (v_j - v_0), so that a constant
// vector returns its value exactly.
template <typename Scalar, typename DW, typename DV>
Scalar anchored_mean(const Eigen::MatrixBase<DW>& w, const Eigen::MatrixBase<DV>& v) {
    const Scalar base = v(0);
    Scalar acc(0);
    for (Eigen::Index j = 0; j < v.size(); ++j) acc += w(j) * (v(j) - base);
    return base + acc;
}

template <typename Scalar>
std::size_t auto_cap(Scalar ratio) {
    constexpr std::size_t floor = 1000;
    if (!(ratio < Scalar(1)) || !(ratio >= Scalar(0))) return floor;
    const double steps = std::ceil(1.0 / (1.0 - double(ratio)));
    if (steps > 1e8) return std::size_t(1e9);
    return std::max(floor, std::size_t(10.0 * steps));
}

// Local weighted covariance (1/2eps) sum_j w_j (X^j - m)(r_j - rbar) for one
// row of transition weights w (summing to one).
template <typename Scalar, typename DW>
void row_gain(const Eigen::MatrixBase<DW>& w, const MatrixX<Scalar>& x, const VectorX<Scalar>& r, Scalar eps,
              Eigen::Index dim, Scalar* out) {
    const Eigen::Index n = x.rows();
    const Scalar rbar = anchored_mean<Scalar>(w, r);
    for (Eigen::Index k = 0; k < dim; ++k) {
        const Scalar m = anchored_mean<Scalar>(w, x.col(k));
        Scalar cov(0);
        for (Eigen::Index j = 0; j < n; ++j) cov += w(j) * (x(j, k) - m) * (r(j) - rbar);
        out[k] = cov / (Scalar(2) * eps);
    }
}

} // namespace detail

template <typename Scalar>
Scalar innovation_mean(const MarkovBundle<Scalar>& b, const VectorX<Scalar>& h, InnovationWeights w) {
    switch (w) {
    case InnovationWeights::Stationary: return detail::anchored_mean<Scalar>(b.stationary, h);
    case InnovationWeights::RowSum: return detail::anchored_mean<Scalar>(b.pi, h);
    case InnovationWeights::Uniform:
        return detail::anchored_mean<Scalar>(VectorX<Scalar>::Constant(h.size(), Scalar(1) / Scalar(h.size())), h);
    }
    return Scalar(0);
}

// Iterates phi <- T phi + eps (h - hhat) from zero, re-centering phi to
// stationary mean zero after every sweep.
template <typename Scalar>
GainField<Scalar> solve_fixed_point(const MarkovBundle<Scalar>& b, const VectorX<Scalar>& h, const GainConfig& cfg) {
    cfg.validate();
    const Eigen::Index n = b.size();
    if (h.size() != n) throw DomainError("solve_fixed_point: h has wrong length");
    if (!h.allFinite()) throw DomainError("solve_fixed_point: non-finite h");

    const Scalar eps(cfg.epsilon);
    GainField<Scalar> f;
    f.hhatN = detail::anchored_mean<Scalar>(b.stationary, h);
    const VectorX<Scalar> source = eps * (h.array() - f.hhatN).matrix();

    const bool fixed = cfg.mode == GainConfig::Mode::FixedIterates;
    VectorX<Scalar> phi = VectorX<Scalar>::Zero(n);
    VectorX<Scalar> next(n);
    Scalar prev_res = std::numeric_limits<Scalar>::quiet_NaN();
    Scalar ratio = std::numeric_limits<Scalar>::quiet_NaN();
    std::size_t k = 0;
    Scalar res(0);
    for (;;) {
        next.noalias() = b.T * phi;
        next += source;
        res = (next - phi).cwiseAbs().maxCoeff();
        if (!std::isfinite(double(res))) {
            throw IterationError("fixed-point iteration produced non-finite values", double(res), k);
        }
        if (k >= 1 && prev_res > Scalar(0)) ratio = res / prev_res;
        if (fixed) {
            if (k == std::size_t(cfg.iterates)) break;
        } else {
            if (res <= Scalar(cfg.tol)) break;
            const std::size_t cap = cfg.max_iter ? cfg.max_iter : detail::auto_cap(ratio);
            if (k >= cap) throw IterationError("fixed-point iteration did not reach tolerance", double(res), k);
        }
        const Scalar shift = detail::anchored_mean<Scalar>(b.stationary, next);
        if (shift != Scalar(0)) next.array() -= shift;
        phi.swap(next);
        prev_res = res;
        ++k;
    }
    f.phi = std::move(phi);
    f.r = f.phi + eps * h;
    f.residual = res;
    f.iterations = k;
    f.contraction = ratio;
    return f;
}

template <typename Scalar>
MatrixX<Scalar> gain_at_particles(const MarkovBundle<Scalar>& b, const Ensemble<Scalar>& ens, const GainField<Scalar>& f,
                                  const GainConfig& cfg) {
    const Eigen::Index n = ens.size();
    if (b.size() != n || f.r.size() != n) throw DomainError("gain_at_particles: size mismatch");
    if (cfg.epsilon != b.epsilon) throw DomainError("gain_at_particles: epsilon differs from the bundle");
    const Eigen::Index dim = ens.dim();
    MatrixX<Scalar> K(n, dim);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> row(dim);
    for (Eigen::Index i = 0; i < n; ++i) {
        detail::row_gain<Scalar>(b.T.row(i).transpose(), ens.positions(), f.r, Scalar(b.epsilon), dim, row.data());
        K.row(i) = row.transpose();
    }
    return K;
}

// Transition weights from an arbitrary point x to the ensemble:
// q(x, X^j) / sum_l q(x, X^l) with q(x, y) = g(x, y) / u(y).
template <typename Scalar, typename Derived>
VectorX<Scalar> transition_row(const Eigen::MatrixBase<Derived>& x, const Ensemble<Scalar>& ens,
                               const MarkovBundle<Scalar>& b) {
    const Eigen::Index n = ens.size();
    if (x.size() != ens.dim()) throw DomainError("transition_row: dimension mismatch");
    if (!x.allFinite()) throw DomainError("transition_row: non-finite point");
    const Scalar scale = kernel_exponent_scale<Scalar>(KernelConfig{b.epsilon});
    VectorX<Scalar> w(n);
    ExactSum total;
    for (Eigen::Index j = 0; j < n; ++j) {
        w(j) = std::exp(scale * squared_distance(ens.particle(j), x)) / b.u(j);
        total.add(double(w(j)));
    }
    const Scalar s(total.value());
    if (!(s > Scalar(0))) throw TailError("transition_row: kernel mass underflows at query point");
    for (Eigen::Index j = 0; j < n; ++j) w(j) = w(j) / s;
    return w;
}

// Out-of-sample gain: the same covariance with the transition row of each
// query point. At a particle this reproduces gain_at_particles bitwise.
template <typename Scalar>
MatrixX<Scalar> gain_at_points(const MatrixX<Scalar>& queries, const Ensemble<Scalar>& ens,
                               const MarkovBundle<Scalar>& b, const GainField<Scalar>& f) {
    if (queries.cols() != ens.dim()) throw DomainError("gain_at_points: dimension mismatch");
    if (b.size() != ens.size() || f.r.size() != ens.size()) throw DomainError("gain_at_points: size mismatch");
    const Eigen::Index dim = ens.dim();
    MatrixX<Scalar> K(queries.rows(), dim);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> row(dim);
    for (Eigen::Index q = 0; q < queries.rows(); ++q) {
        const VectorX<Scalar> w = transition_row(queries.row(q), ens, b);
        detail::row_gain<Scalar>(w, ens.positions(), f.r, Scalar(b.epsilon), dim, row.data());
        K.row(q) = row.transpose();
    }
    return K;
}

// Smooth interpolant of the potential:
//   sum_j q(x, X^j) phi_j / sum_l q(x, X^l) + eps (h(x) - hhatN)
template <typename Scalar, typename Derived>
Scalar evaluate_potential_at(const Eigen::MatrixBase<Derived>& x, Scalar h_at_x, const Ensemble<Scalar>& ens,
                             const MarkovBundle<Scalar>& b, const GainField<Scalar>& f) {
    if (!std::isfinite(double(h_at_x))) throw DomainError("evaluate_potential_at: non-finite h");
    const VectorX<Scalar> w = transition_row(x, ens, b);
    return w.dot(f.phi) + Scalar(b.epsilon) * (h_at_x - f.hhatN);
}

// Ensemble Kalman gain (1/N) sum_i (X^i - mean X)(h_i - mean h).
template <typename Scalar>
VectorX<Scalar> constant_gain(const Ensemble<Scalar>& ens, const VectorX<Scalar>& h) {
    const Eigen::Index n = ens.size();
    if (h.size() != n) throw DomainError("constant_gain: h has wrong length");
    const VectorX<Scalar> uniform = VectorX<Scalar>::Constant(n, Scalar(1) / Scalar(n));
    VectorX<Scalar> xbar(ens.dim());
    for (Eigen::Index k = 0; k < ens.dim(); ++k) xbar(k) = detail::anchored_mean<Scalar>(uniform, ens.positions().col(k));
    const Scalar hbar = detail::anchored_mean<Scalar>(uniform, h);
    VectorX<Scalar> out = VectorX<Scalar>::Zero(ens.dim());
    for (Eigen::Index i = 0; i < n; ++i) {
        out += (ens.particle(i).transpose() - xbar) * (h(i) - hbar);
    }
    return out / Scalar(n);
}

} // namespace fpf
