#include "fpf/meanfield.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fpf/errors.hpp"
#include "fpf/kernels.hpp"

namespace fpf {

namespace {

Eigen::MatrixXd axis_kernel(const Eigen::VectorXd& x, double epsilon) {
    const Eigen::Index n = x.size();
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double d = x(i) - x(j);
            g(i, j) = std::exp(-d * d / (4.0 * epsilon));
        }
    }
    return g;
}

Eigen::VectorXd axis_row(const Eigen::VectorXd& nodes, const Eigen::VectorXd& w, double x, double epsilon) {
    Eigen::VectorXd row(nodes.size());
    for (Eigen::Index b = 0; b < nodes.size(); ++b) {
        const double d = x - nodes(b);
        row(b) = std::exp(-d * d / (4.0 * epsilon)) * w(b);
    }
    return row;
}

// Linear (1D) or bilinear (2D) interpolation of grid values.
double interpolate(const DensityGrid& grid, const Eigen::MatrixXd& f, const Eigen::VectorXd& y) {
    if (!grid.contains(y)) throw DomainError("point outside the grid");
    std::array<Eigen::Index, 2> k{0, 0};
    std::array<double, 2> t{0.0, 0.0};
    for (int ax = 0; ax < grid.dim; ++ax) {
        const auto& nodes = grid.nodes[std::size_t(ax)];
        const double pos = (y(ax) - nodes(0)) / grid.spacing(ax);
        k[std::size_t(ax)] = std::min<Eigen::Index>(Eigen::Index(std::floor(pos)), nodes.size() - 2);
        t[std::size_t(ax)] = pos - double(k[std::size_t(ax)]);
    }
    if (grid.dim == 1) return (1.0 - t[0]) * f(k[0], 0) + t[0] * f(k[0] + 1, 0);
    const double a = (1.0 - t[0]) * f(k[0], k[1]) + t[0] * f(k[0] + 1, k[1]);
    const double b = (1.0 - t[0]) * f(k[0], k[1] + 1) + t[0] * f(k[0] + 1, k[1] + 1);
    return (1.0 - t[1]) * a + t[1] * b;
}

} // namespace

DiffusionOperator::DiffusionOperator(const DensityGrid& grid, double epsilon) : grid_(grid), epsilon_(epsilon) {
    KernelConfig{epsilon}.validate();
    grid_.validate();
    for (int ax = 0; ax < grid_.dim; ++ax) kernel_[std::size_t(ax)] = axis_kernel(grid_.nodes[std::size_t(ax)], epsilon);
    conv_rho_ = convolve(grid_.rho);
    if (!(conv_rho_.minCoeff() > 1e-300)) throw TailError("kernel mass of the density underflows on the grid");
    nu_ = grid_.rho.cwiseQuotient(conv_rho_.cwiseSqrt());
    degree_ = convolve(nu_);
    if (!(degree_.minCoeff() > 1e-300)) throw TailError("kernel mass of nu underflows on the grid");
    pi_ = nu_.cwiseProduct(degree_);
    pi_ /= grid_.integrate(pi_);
}

Eigen::MatrixXd DiffusionOperator::convolve(const Eigen::MatrixXd& f) const {
    if (f.rows() != grid_.rows() || f.cols() != grid_.cols()) throw DomainError("convolve: shape mismatch");
    if (grid_.dim == 1) return kernel_[0] * grid_.weights[0].cwiseProduct(f.col(0));
    const Eigen::MatrixXd weighted = grid_.weights[0].asDiagonal() * f * grid_.weights[1].asDiagonal();
    return kernel_[0] * weighted * kernel_[1].transpose();
}

Eigen::MatrixXd DiffusionOperator::apply(const Eigen::MatrixXd& f) const {
    return convolve(nu_.cwiseProduct(f)).cwiseQuotient(degree_);
}

double DiffusionOperator::expectation(const Eigen::MatrixXd& f) const { return grid_.integrate(pi_.cwiseProduct(f)); }

Eigen::MatrixXd DiffusionOperator::transition_weights(const Eigen::VectorXd& x) const {
    if (x.size() != grid_.dim) throw DomainError("transition_weights: dimension mismatch");
    if (!x.allFinite()) throw DomainError("transition_weights: non-finite point");
    Eigen::MatrixXd w;
    const Eigen::VectorXd r0 = axis_row(grid_.nodes[0], grid_.weights[0], x(0), epsilon_);
    if (grid_.dim == 1) {
        w = r0.cwiseProduct(nu_.col(0));
    } else {
        const Eigen::VectorXd r1 = axis_row(grid_.nodes[1], grid_.weights[1], x(1), epsilon_);
        w = (r0 * r1.transpose()).cwiseProduct(nu_);
    }
    const double total = w.sum();
    if (!(total > 1e-300)) throw TailError("transition density denominator underflows; point too far from the support");
    return w / total;
}

double transition_density(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const DiffusionOperator& op) {
    const DensityGrid& grid = op.grid();
    if (x.size() != grid.dim || y.size() != grid.dim) throw DomainError("transition_density: dimension mismatch");
    Eigen::MatrixXd w;
    const Eigen::VectorXd r0 = axis_row(grid.nodes[0], grid.weights[0], x(0), op.epsilon());
    if (grid.dim == 1) {
        w = r0.cwiseProduct(op.nu().col(0));
    } else {
        w = (r0 * axis_row(grid.nodes[1], grid.weights[1], x(1), op.epsilon()).transpose()).cwiseProduct(op.nu());
    }
    const double denom = w.sum();
    if (!(denom > 1e-300)) throw TailError("transition density denominator underflows; point too far from the support");
    const double d2 = (x - y).squaredNorm();
    return std::exp(-d2 / (4.0 * op.epsilon())) * interpolate(grid, op.nu(), y) / denom;
}

MeanFieldField solve_meanfield_fixed_point(const DiffusionOperator& op, const Observation& h, double tol,
                                           std::size_t max_iter) {
    if (!(tol > 0.0)) throw ConfigError("tol must be positive");
    const DensityGrid& grid = op.grid();
    const double eps = op.epsilon();
    const Eigen::MatrixXd hv = grid.tabulate(h);

    MeanFieldField f;
    f.pi = op.pi();
    // h_0 + int (h - h_0) pi, exact for constant h
    const double h0 = hv(0, 0);
    f.hhat = h0 + op.expectation((hv.array() - h0).matrix());
    const Eigen::MatrixXd source = eps * (hv.array() - f.hhat).matrix();
    const double scale = std::pow(4.0 * std::numbers::pi * eps, -0.5 * grid.dim);
    f.nu = grid.rho.cwiseQuotient((scale * op.kernel_mass()).cwiseSqrt());

    Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(grid.rows(), grid.cols());
    std::size_t k = 0;
    double res = 0.0;
    for (;;) {
        Eigen::MatrixXd next = op.apply(phi) + source;
        res = (next - phi).cwiseAbs().maxCoeff();
        if (!std::isfinite(res)) throw IterationError("mean-field iteration produced non-finite values", res, k);
        if (res <= tol) break;
        if (k >= max_iter) throw IterationError("mean-field fixed point did not reach tolerance", res, k);
        next.array() -= op.expectation(next);
        phi.swap(next);
        ++k;
    }
    f.phi = std::move(phi);
    f.R = f.phi + eps * hv;
    f.residual = res;
    f.iterations = k;
    return f;
}

Eigen::VectorXd meanfield_gain(const Eigen::VectorXd& x, const DiffusionOperator& op, const MeanFieldField& field) {
    const DensityGrid& grid = op.grid();
    const Eigen::MatrixXd w = op.transition_weights(x);
    const double rbar = w.cwiseProduct(field.R).sum();
    Eigen::VectorXd out(grid.dim);
    for (int ax = 0; ax < grid.dim; ++ax) {
        const Eigen::MatrixXd y = grid.coordinate(ax);
        const double m = w.cwiseProduct(y).sum();
        const double cov = (w.array() * (y.array() - m) * (field.R.array() - rbar)).sum();
        out(ax) = cov / (2.0 * op.epsilon());
    }
    return out;
}

std::vector<Eigen::MatrixXd> meanfield_gain_on_grid(const DiffusionOperator& op, const MeanFieldField& field) {
    const DensityGrid& grid = op.grid();
    // the gain only sees differences of R
    const Eigen::MatrixXd r = (field.R.array() - field.R(0, 0)).matrix();
    const Eigen::MatrixXd tr = op.apply(r);
    std::vector<Eigen::MatrixXd> out;
    for (int ax = 0; ax < grid.dim; ++ax) {
        const Eigen::MatrixXd y = grid.coordinate(ax);
        const Eigen::MatrixXd cross = op.apply(y.cwiseProduct(r));
        const Eigen::MatrixXd ty = op.apply(y);
        out.push_back((cross - ty.cwiseProduct(tr)) / (2.0 * op.epsilon()));
    }
    return out;
}

Eigen::MatrixXd potential_gradient(const DensityGrid& grid, const MeanFieldField& field, int axis) {
    const Eigen::MatrixXd& f = field.phi;
    const double h = grid.spacing(axis);
    Eigen::MatrixXd g(f.rows(), f.cols());
    const Eigen::Index n = axis == 0 ? f.rows() : f.cols();
    for (Eigen::Index b = 0; b < (axis == 0 ? f.cols() : f.rows()); ++b) {
        auto at = [&](Eigen::Index k) -> double { return axis == 0 ? f(k, b) : f(b, k); };
        auto put = [&](Eigen::Index k, double v) { (axis == 0 ? g(k, b) : g(b, k)) = v; };
        put(0, (at(1) - at(0)) / h);
        put(n - 1, (at(n - 1) - at(n - 2)) / h);
        for (Eigen::Index k = 1; k + 1 < n; ++k) put(k, (at(k + 1) - at(k - 1)) / (2.0 * h));
    }
    return g;
}

double first_moment_of_nu(const DiffusionOperator& op, const MeanFieldField& field) {
    const DensityGrid& grid = op.grid();
    Eigen::MatrixXd radius = grid.coordinate(0).cwiseAbs2();
    if (grid.dim == 2) radius += grid.coordinate(1).cwiseAbs2();
    return grid.integrate(radius.cwiseSqrt().cwiseProduct(field.nu));
}

namespace {

double require_modulus(const DensityGrid& grid) {
    if (!grid.c_v) throw HypothesisError("density carries no log-concavity modulus");
    return *grid.c_v;
}

} // namespace

GainBoundReport gain_bound_certificate(const DensityGrid& grid, const Observation& h, double epsilon,
                                       double interior_fraction, double tol) {
    KernelConfig{epsilon}.validate();
    const double c_v = require_modulus(grid);
    if (!(c_v > 1.0 / (4.0 * epsilon))) {
        throw HypothesisError("gain bounds need c_v > 1/(4 epsilon)");
    }
    GainBoundReport rep;
    rep.epsilon = epsilon;
    rep.c_v = c_v;
    rep.c_g = 1.0 / (4.0 * epsilon) + c_v;
    const double grad_h = h.grad_sup_norm();
    const double ratio = (4.0 * epsilon * rep.c_g - 1.0) / (2.0 * epsilon * rep.c_g - 1.0);
    rep.bound1 = grad_h / (2.0 * rep.c_g) * ratio;
    rep.bound2 = double(grid.dim) * grad_h / epsilon * std::pow(rep.c_g, -1.5) * ratio;

    const DiffusionOperator op(grid, epsilon);
    const MeanFieldField field = solve_meanfield_fixed_point(op, h, tol);
    const auto K = meanfield_gain_on_grid(op, field);
    const auto mask = grid.interior(interior_fraction);

    double sup_k = 0.0;
    double sup_j = 0.0;
    for (Eigen::Index b = 0; b < grid.cols(); ++b) {
        for (Eigen::Index a = 0; a < grid.rows(); ++a) {
            if (!mask(a, b)) continue;
            double norm2 = 0.0;
            for (int k = 0; k < grid.dim; ++k) norm2 += K[std::size_t(k)](a, b) * K[std::size_t(k)](a, b);
            sup_k = std::max(sup_k, std::sqrt(norm2));
            if (a == 0 || a + 1 == grid.rows()) continue;
            if (grid.dim == 2 && (b == 0 || b + 1 == grid.cols())) continue;
            double frob2 = 0.0;
            for (int k = 0; k < grid.dim; ++k) {
                const auto& Kk = K[std::size_t(k)];
                const double d0 = (Kk(a + 1, b) - Kk(a - 1, b)) / (2.0 * grid.spacing(0));
                frob2 += d0 * d0;
                if (grid.dim == 2) {
                    const double d1 = (Kk(a, b + 1) - Kk(a, b - 1)) / (2.0 * grid.spacing(1));
                    frob2 += d1 * d1;
                }
            }
            sup_j = std::max(sup_j, std::sqrt(frob2));
        }
    }
    rep.measured_sup_K = sup_k;
    rep.measured_sup_gradK = sup_j;
    rep.pass1 = sup_k <= rep.bound1;
    rep.pass2 = sup_j <= rep.bound2;
    return rep;
}

PoincareReport poincare_check(const DensityGrid& grid, double epsilon, const std::vector<Eigen::VectorXd>& probes,
                              double slack) {
    KernelConfig{epsilon}.validate();
    const double c_v = require_modulus(grid);
    PoincareReport rep;
    rep.c_g = 1.0 / (4.0 * epsilon) + c_v;
    rep.limit = 1.0 / rep.c_g + slack;
    rep.pass = true;
    const DiffusionOperator op(grid, epsilon);
    for (const auto& x : probes) {
        const Eigen::MatrixXd w = op.transition_weights(x);
        Eigen::VectorXd var(grid.dim);
        for (int ax = 0; ax < grid.dim; ++ax) {
            const Eigen::MatrixXd y = grid.coordinate(ax);
            const double m = w.cwiseProduct(y).sum();
            var(ax) = (w.array() * (y.array() - m).square()).sum();
            if (!(var(ax) <= rep.limit)) rep.pass = false;
        }
        rep.probes.push_back(x);
        rep.variances.push_back(var);
    }
    return rep;
}

} // namespace fpf
