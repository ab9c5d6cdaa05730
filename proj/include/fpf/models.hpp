#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Dense>

namespace fpf {

// Signal drift catalog. Applied componentwise:
//   linear:      a * x
//   double_well: scale * (x - x^3)
//   sine:        scale * sin(x)
struct Drift {
    enum class Kind { Linear, DoubleWell, Sine };
    Kind kind = Kind::Linear;
    double param = -1.0;

    template <typename Derived>
    Eigen::VectorXd operator()(const Eigen::MatrixBase<Derived>& x) const {
        Eigen::VectorXd out(x.size());
        for (Eigen::Index k = 0; k < x.size(); ++k) out(k) = scalar(x(k));
        return out;
    }

    double scalar(double x) const {
        switch (kind) {
        case Kind::Linear: return param * x;
        case Kind::DoubleWell: return param * (x - x * x * x);
        case Kind::Sine: return param * std::sin(x);
        }
        return 0.0;
    }

    Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const { return x.unaryExpr([this](double v) { return scalar(v); }); }

    // Global Lipschitz constant; infinity when the drift is only locally Lipschitz.
    double lipschitz() const {
        switch (kind) {
        case Kind::Linear: return std::abs(param);
        case Kind::DoubleWell: return std::numeric_limits<double>::infinity();
        case Kind::Sine: return std::abs(param);
        }
        return 0.0;
    }

    bool is_linear() const { return kind == Kind::Linear; }
    std::string name() const;
    static Drift parse(const std::string& kind, double param);
};

// Scalar observation catalog, acting on the first state coordinate:
//   linear:   c * x_1
//   arctan:   scale * atan(x_1)
//   constant: c
struct Observation {
    enum class Kind { Linear, Arctan, Constant };
    Kind kind = Kind::Linear;
    double param = 1.0;

    template <typename Derived>
    double operator()(const Eigen::MatrixBase<Derived>& x) const {
        return scalar(x(0));
    }

    double scalar(double x1) const {
        switch (kind) {
        case Kind::Linear: return param * x1;
        case Kind::Arctan: return param * std::atan(x1);
        case Kind::Constant: return param;
        }
        return 0.0;
    }

    // h at every row of an N x d matrix.
    Eigen::VectorXd apply(const Eigen::MatrixXd& x) const {
        Eigen::VectorXd out(x.rows());
        for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = scalar(x(i, 0));
        return out;
    }

    // dh/dx_1
    double derivative(double x1) const {
        switch (kind) {
        case Kind::Linear: return param;
        case Kind::Arctan: return param / (1.0 + x1 * x1);
        case Kind::Constant: return 0.0;
        }
        return 0.0;
    }

    double lipschitz() const { return kind == Kind::Constant ? 0.0 : std::abs(param); }
    // Sup of |grad h|; equal to the Lipschitz constant for every catalog entry.
    double grad_sup_norm() const { return lipschitz(); }

    double sup_norm() const {
        switch (kind) {
        case Kind::Linear: return param == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        case Kind::Arctan: return std::abs(param) * std::numbers::pi / 2.0;
        case Kind::Constant: return std::abs(param);
        }
        return 0.0;
    }

    bool is_bounded() const { return std::isfinite(sup_norm()); }
    bool is_linear() const { return kind == Kind::Linear; }
    std::string name() const;
    static Observation parse(const std::string& kind, double param);
};

// dS = M(S) dt + dV, dZ = h(S) dt + dW, with S_0 ~ N(prior_mean, prior_var I).
struct ModelSpec {
    int dim = 1;
    Drift drift;
    Observation observation;
    double prior_mean = 0.0;
    double prior_var = 1.0;

    void validate() const;
};

} // namespace fpf
