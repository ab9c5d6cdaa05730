#include "fpf/density_grid.hpp"

#include <cmath>
#include <numbers>

#include "fpf/errors.hpp"

namespace fpf {

double DensityGrid::spacing(int axis) const {
    const auto& x = nodes[std::size_t(axis)];
    return (x(x.size() - 1) - x(0)) / double(x.size() - 1);
}

Eigen::VectorXd DensityGrid::point(Eigen::Index a, Eigen::Index b) const {
    Eigen::VectorXd p(dim);
    p(0) = nodes[0](a);
    if (dim == 2) p(1) = nodes[1](b);
    return p;
}

Eigen::MatrixXd DensityGrid::cell_weights() const {
    if (dim == 1) return weights[0];
    return weights[0] * weights[1].transpose();
}

double DensityGrid::integrate(const Eigen::MatrixXd& f) const {
    if (f.rows() != rows() || f.cols() != cols()) throw DomainError("integrate: shape mismatch");
    return cell_weights().cwiseProduct(f).sum();
}

Eigen::MatrixXd DensityGrid::coordinate(int axis) const {
    Eigen::MatrixXd c(rows(), cols());
    for (Eigen::Index b = 0; b < cols(); ++b) {
        for (Eigen::Index a = 0; a < rows(); ++a) c(a, b) = axis == 0 ? nodes[0](a) : nodes[1](b);
    }
    return c;
}

Eigen::MatrixXd DensityGrid::tabulate(const Observation& h) const {
    return coordinate(0).unaryExpr([&h](double v) { return h.scalar(v); });
}

Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> DensityGrid::interior(double fraction) const {
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask(rows(), cols());
    auto inside = [&](int axis, Eigen::Index k) {
        const auto& x = nodes[std::size_t(axis)];
        const double center = 0.5 * (x(0) + x(x.size() - 1));
        const double half = 0.5 * (x(x.size() - 1) - x(0));
        return std::abs(x(k) - center) <= fraction * half;
    };
    for (Eigen::Index b = 0; b < cols(); ++b) {
        for (Eigen::Index a = 0; a < rows(); ++a) mask(a, b) = inside(0, a) && (dim == 1 || inside(1, b));
    }
    return mask;
}

bool DensityGrid::contains(const Eigen::VectorXd& x) const {
    if (x.size() != dim) return false;
    for (int k = 0; k < dim; ++k) {
        const auto& ax = nodes[std::size_t(k)];
        if (!(x(k) >= ax(0) && x(k) <= ax(ax.size() - 1))) return false;
    }
    return true;
}

void DensityGrid::validate() const {
    if (dim != 1 && dim != 2) throw ScopeError("density grids support dimensions 1 and 2 only");
    if (nodes.size() != std::size_t(dim) || weights.size() != std::size_t(dim)) throw DomainError("grid axes missing");
    for (int k = 0; k < dim; ++k) {
        const auto& x = nodes[std::size_t(k)];
        if (x.size() < 3) throw DomainError("grid axis needs at least 3 nodes");
        for (Eigen::Index i = 1; i < x.size(); ++i) {
            if (!(x(i) > x(i - 1))) throw DomainError("grid nodes must be strictly increasing");
        }
    }
    if (rho.rows() != rows() || rho.cols() != cols()) throw DomainError("density has wrong shape");
    if (!rho.allFinite() || (rho.array() < 0.0).any()) throw DomainError("density must be finite and non-negative");
    const double m = mass();
    if (std::abs(m - 1.0) > 1e-6) throw DomainError("density does not integrate to one");
}

Eigen::VectorXd DensityGrid::mirrored_axis(double half_width, Eigen::Index count) {
    if (count < 3) throw DomainError("grid axis needs at least 3 nodes");
    if (!(half_width > 0.0) || !std::isfinite(half_width)) throw DomainError("grid half-width must be positive");
    Eigen::VectorXd x(count);
    const double h = 2.0 * half_width / double(count - 1);
    for (Eigen::Index k = 0; k < count; ++k) {
        // (k - c) h with c the center index; k and count-1-k give opposite values
        x(k) = (2.0 * double(k) - double(count - 1)) * 0.5 * h;
    }
    return x;
}

namespace {

Eigen::VectorXd trapezoid_weights(const Eigen::VectorXd& x) {
    const Eigen::Index n = x.size();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        const double half = 0.5 * (x(i + 1) - x(i));
        w(i) += half;
        w(i + 1) += half;
    }
    return w;
}

} // namespace

DensityGrid DensityGrid::from_density(int dim, const Eigen::VectorXd& axis,
                                      const std::function<double(const Eigen::VectorXd&)>& density,
                                      std::optional<double> c_v) {
    if (dim != 1 && dim != 2) throw ScopeError("density grids support dimensions 1 and 2 only");
    DensityGrid g;
    g.dim = dim;
    g.c_v = c_v;
    for (int k = 0; k < dim; ++k) {
        g.nodes.push_back(axis);
        g.weights.push_back(trapezoid_weights(axis));
    }
    g.rho.resize(g.rows(), g.cols());
    for (Eigen::Index b = 0; b < g.cols(); ++b) {
        for (Eigen::Index a = 0; a < g.rows(); ++a) g.rho(a, b) = density(g.point(a, b));
    }
    const double m = g.mass();
    if (!(m > 0.0) || !std::isfinite(m)) throw DomainError("density has no mass on the grid");
    g.rho /= m;
    g.validate();
    return g;
}

DensityGrid DensityGrid::gaussian(int dim, double variance, Eigen::Index count, double half_width_sd) {
    if (!(variance > 0.0) || !std::isfinite(variance)) throw DomainError("variance must be positive");
    const double sd = std::sqrt(variance);
    return from_density(
        dim, mirrored_axis(half_width_sd * sd, count),
        [variance](const Eigen::VectorXd& x) { return std::exp(-0.5 * x.squaredNorm() / variance); }, 1.0 / variance);
}

DensityGrid DensityGrid::bimodal(double offset, double sd, Eigen::Index count, double half_width_sd) {
    if (!(sd > 0.0)) throw DomainError("mode width must be positive");
    const double var = sd * sd;
    return from_density(
        1, mirrored_axis(std::abs(offset) + half_width_sd * sd, count),
        [offset, var](const Eigen::VectorXd& x) {
            const double l = x(0) + offset;
            const double r = x(0) - offset;
            return 0.5 * std::exp(-0.5 * l * l / var) + 0.5 * std::exp(-0.5 * r * r / var);
        },
        std::nullopt);
}

DensityGrid DensityGrid::uniform(int dim, double half_width, Eigen::Index count) {
    return from_density(dim, mirrored_axis(half_width, count), [](const Eigen::VectorXd&) { return 1.0; }, 0.0);
}

Eigen::VectorXd exact_gain_1d(const DensityGrid& grid, const Observation& h, const Eigen::VectorXd& x_query,
                              double density_floor) {
    if (grid.dim != 1) throw ScopeError("exact_gain_1d needs a one-dimensional grid");
    const auto& x = grid.nodes[0];
    const Eigen::VectorXd rho = grid.rho.col(0);
    const Eigen::Index n = x.size();
    const Eigen::VectorXd hv = grid.tabulate(h).col(0);
    const double hhat = grid.integrate(grid.rho.cwiseProduct(grid.tabulate(h)));

    // cumulative flux F(x_k) = int_{x_0}^{x_k} (h - hhat) rho
    Eigen::VectorXd flux(n);
    flux(0) = 0.0;
    for (Eigen::Index k = 1; k < n; ++k) {
        const double left = (hv(k - 1) - hhat) * rho(k - 1);
        const double right = (hv(k) - hhat) * rho(k);
        flux(k) = flux(k - 1) + 0.5 * (x(k) - x(k - 1)) * (left + right);
    }

    Eigen::VectorXd out(x_query.size());
    for (Eigen::Index q = 0; q < x_query.size(); ++q) {
        const double xq = x_query(q);
        if (!(xq >= x(0) && xq <= x(n - 1))) throw DomainError("exact_gain_1d: query outside the grid");
        const double pos = (xq - x(0)) / grid.spacing(0);
        Eigen::Index k = std::min<Eigen::Index>(Eigen::Index(std::floor(pos)), n - 2);
        const double t = pos - double(k);
        const double f = (1.0 - t) * flux(k) + t * flux(k + 1);
        const double r = (1.0 - t) * rho(k) + t * rho(k + 1);
        if (!(r >= density_floor)) throw SingularityError("exact_gain_1d: density below floor at query");
        out(q) = -f / r;
    }
    return out;
}

} // namespace fpf
