#include <cmath>
#include <random>

#include "doctest.h"
#include "fpf/gain_solver.hpp"
#include "oracles.hpp"

using namespace fpf;

namespace {

Eigen::VectorXd linear_h(const Eigen::MatrixXd& x, double c = 1.0) { return c * x.col(0); }

Eigen::VectorXd nonlinear_h(const Eigen::MatrixXd& x) {
    Eigen::VectorXd h(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) h(i) = std::atan(x(i, 0)) + 0.3 * (x.cols() > 1 ? x(i, 1) : 0.0);
    return h;
}

double relative_max(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return (a - b).cwiseAbs().maxCoeff() / std::max(1e-300, b.cwiseAbs().maxCoeff());
}

} // namespace

TEST_CASE("gain config validation") {
    CHECK_THROWS_AS(GainConfig::fixed_iterates(0.5, 0).validate(), ConfigError);
    CHECK_THROWS_AS(GainConfig::to_tolerance(0.5, 0.0).validate(), ConfigError);
    CHECK_THROWS_AS(GainConfig::to_tolerance(-1.0).validate(), DomainError);
    CHECK_NOTHROW(GainConfig::to_tolerance(0.5, 1e-8).validate());
    CHECK(parse_innovation_weights("uniform") == InnovationWeights::Uniform);
    CHECK(innovation_weights_name(InnovationWeights::RowSum) == "row_sum");
    CHECK_THROWS_AS(parse_innovation_weights("median"), ConfigError);
}

TEST_CASE("constant observation gives zero potential and zero gain") {
    std::mt19937_64 rng(1);
    const Ensembled ens(oracle::random_cloud(rng, 50, 2));
    const auto b = build_markov(ens, KernelConfig{0.3});
    const Eigen::VectorXd h = Eigen::VectorXd::Constant(50, 2.5);
    const auto cfg = GainConfig::to_tolerance(0.3, 1e-10);
    const auto f = solve_fixed_point(b, h, cfg);
    CHECK(f.hhatN == 2.5);
    CHECK(f.iterations == 0);
    CHECK(f.residual == 0.0);
    CHECK((f.phi.array() == 0.0).all());
    const auto K = gain_at_particles(b, ens, f, cfg);
    CHECK((K.array() == 0.0).all());
    Eigen::Vector2d x(0.3, -0.2);
    CHECK(evaluate_potential_at(x, 2.5, ens, b, f) == 0.0);
}

TEST_CASE("two particle fixed point") {
    Eigen::MatrixXd x(2, 1);
    x << 0.0, 1.0;
    const Ensembled ens(x);
    const auto b = build_markov(ens, KernelConfig{0.25});
    const auto f = solve_fixed_point(b, linear_h(x), GainConfig::to_tolerance(0.25, 1e-14));
    const auto ref = oracle::two_particle(0.25);
    CHECK(f.phi(0) - f.phi(1) == doctest::Approx(ref.phi_diff).epsilon(1e-12));
    CHECK(f.phi(0) - f.phi(1) == doctest::Approx(-0.46477).epsilon(1e-4));
    CHECK(std::abs(f.phi.sum()) < 1e-14); // equal stationary weights
    CHECK(f.hhatN == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(f.residual <= 1e-14);

    // potential interpolant at a particle: sum_j T_kj phi_j + eps (h(X^k) - hhat)
    for (int k = 0; k < 2; ++k) {
        const double t_self = k == 0 ? ref.t11 : ref.t11;
        const double t_other = ref.t12;
        const double direct = t_self * f.phi(k) + t_other * f.phi(1 - k) + 0.25 * (x(k, 0) - 0.5);
        CHECK(evaluate_potential_at(ens.particle(k), x(k, 0), ens, b, f) == doctest::Approx(direct).epsilon(1e-13));
    }
}

TEST_CASE("tolerance mode meets its residual and reports failure otherwise") {
    std::mt19937_64 rng(2);
    const Eigen::MatrixXd x = oracle::random_cloud(rng, 80, 1);
    const auto b = build_markov(Ensembled(x), KernelConfig{0.2});
    const auto f = solve_fixed_point(b, linear_h(x), GainConfig::to_tolerance(0.2, 1e-10));
    CHECK(f.residual <= 1e-10);
    CHECK(f.residual >= 0.0);
    CHECK(f.iterations > 0);
    CHECK(f.contraction > 0.0);
    CHECK(f.contraction < 1.0);
    // the residual of the returned vector, recomputed independently
    const Eigen::VectorXd src = 0.2 * (linear_h(x).array() - f.hhatN).matrix();
    CHECK((f.phi - b.T * f.phi - src).cwiseAbs().maxCoeff() <= 1e-10 * 1.0001);
    CHECK(std::abs(b.stationary.dot(f.phi)) < 1e-13);

    try {
        solve_fixed_point(b, linear_h(x), GainConfig::to_tolerance(0.2, 1e-12, 3));
        FAIL("expected an iteration error");
    } catch (const IterationError& e) {
        CHECK(e.iterations() == 3);
        CHECK(e.last_residual() > 1e-12);
    }
    CHECK_THROWS_AS(solve_fixed_point(b, Eigen::VectorXd(Eigen::VectorXd::Zero(3)), GainConfig::to_tolerance(0.2)), DomainError);
}

TEST_CASE("fixed sweeps equal the truncated series") {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 6; ++rep) {
        const int n = 8 + 11 * rep;
        const int d = 1 + rep % 2;
        const double eps = 0.15 + 0.1 * rep;
        const Eigen::MatrixXd x = oracle::random_cloud(rng, n, d);
        const Eigen::VectorXd h = nonlinear_h(x);
        const auto b = build_markov(Ensembled(x), KernelConfig{eps});
        const auto t = oracle::markov_matrix(x, eps);
        const auto nu = oracle::left_stationary(t);
        for (int L = 1; L <= 8; ++L) {
            const auto f = solve_fixed_point(b, h, GainConfig::fixed_iterates(eps, L));
            const auto ref = oracle::neumann_partial_sum(t, nu, h, eps, L);
            CHECK(f.iterations == std::size_t(L));
            double worst = 0.0;
            for (int i = 0; i < n; ++i) worst = std::max(worst, double(std::abs(f.phi(i) - ref(i))));
            CHECK(worst < 1e-13);
        }
    }
}

TEST_CASE("covariance and double-sum forms of the gain agree") {
    std::mt19937_64 rng(13);
    for (int rep = 0; rep < 12; ++rep) {
        const int n = 10 + 20 * rep;
        const int d = 1 + rep % 3;
        const double eps = 0.1 + 0.15 * (rep % 4);
        const Eigen::MatrixXd x = oracle::random_cloud(rng, n, d);
        const Ensembled ens(x);
        const auto b = build_markov(ens, KernelConfig{eps});
        const auto cfg = GainConfig::fixed_iterates(eps, 5);
        const auto f = solve_fixed_point(b, nonlinear_h(x), cfg);
        const auto K = gain_at_particles(b, ens, f, cfg);
        const auto ref = oracle::double_sum_gain(oracle::markov_matrix(x, eps), x, f.r, eps);
        CHECK(relative_max(K, ref) < 1e-10);
    }
}

TEST_CASE("gain is invariant to shifts of the potential and translations of the cloud") {
    std::mt19937_64 rng(17);
    const Eigen::MatrixXd x = oracle::random_cloud(rng, 60, 2);
    const Ensembled ens(x);
    const auto b = build_markov(ens, KernelConfig{0.4});
    const auto cfg = GainConfig::to_tolerance(0.4, 1e-10);
    auto f = solve_fixed_point(b, nonlinear_h(x), cfg);
    const auto K = gain_at_particles(b, ens, f, cfg);
    auto shifted = f;
    shifted.phi.array() += 3.75;
    shifted.r.array() += 3.75;
    CHECK(relative_max(gain_at_particles(b, ens, shifted, cfg), K) < 1e-12);

    Eigen::MatrixXd moved = x;
    moved.rowwise() += Eigen::RowVector2d(5.0, -2.0);
    const Ensembled ens2(moved);
    const auto b2 = build_markov(ens2, KernelConfig{0.4});
    // same r on the translated cloud
    CHECK(relative_max(gain_at_particles(b2, ens2, f, cfg), K) < 1e-10);
}

TEST_CASE("out-of-sample gain reproduces the particle gain") {
    std::mt19937_64 rng(19);
    const Eigen::MatrixXd x = oracle::random_cloud(rng, 70, 2);
    const Ensembled ens(x);
    const auto b = build_markov(ens, KernelConfig{0.3});
    const auto cfg = GainConfig::to_tolerance(0.3);
    const auto f = solve_fixed_point(b, nonlinear_h(x), cfg);
    const auto K = gain_at_particles(b, ens, f, cfg);
    const auto Kp = gain_at_points(x, ens, b, f);
    CHECK((K.array() == Kp.array()).all());
    Eigen::MatrixXd far(1, 2);
    far << 1e6, 0.0;
    CHECK_THROWS_AS(gain_at_points(far, ens, b, f), TailError);
}

TEST_CASE("potential interpolant is translation invariant") {
    std::mt19937_64 rng(23);
    const Eigen::MatrixXd x = oracle::random_cloud(rng, 40, 1);
    const auto eval = [](const Eigen::MatrixXd& pts, double shift) {
        const Ensembled ens(pts);
        const auto b = build_markov(ens, KernelConfig{0.3});
        const Eigen::VectorXd h = (pts.col(0).array() - shift).sin().matrix();
        const auto f = solve_fixed_point(b, h, GainConfig::to_tolerance(0.3, 1e-12));
        Eigen::VectorXd q(1);
        q << 0.37 + shift;
        return evaluate_potential_at(q, std::sin(0.37), ens, b, f);
    };
    Eigen::MatrixXd moved = x.array() + 4.0;
    CHECK(eval(moved, 4.0) == doctest::Approx(eval(x, 0.0)).epsilon(1e-9));
}

TEST_CASE("constant gain") {
    Eigen::MatrixXd x(2, 1);
    x << -1.0, 1.0;
    const Ensembled two(x);
    CHECK(constant_gain(two, linear_h(x))(0) == doctest::Approx(1.0).epsilon(1e-15));
    std::mt19937_64 rng(29);
    const Eigen::MatrixXd y = oracle::random_cloud(rng, 33, 3);
    const Ensembled ens(y);
    CHECK((constant_gain(ens, Eigen::VectorXd(Eigen::VectorXd::Constant(33, -4.0))).array() == 0.0).all());
    const auto plus = constant_gain(ens, linear_h(y));
    const auto minus = constant_gain(ens, linear_h(y, -1.0));
    CHECK((plus + minus).cwiseAbs().maxCoeff() < 1e-15);
    CHECK_THROWS_AS(constant_gain(ens, Eigen::VectorXd(Eigen::VectorXd::Zero(4))), DomainError);
}

TEST_CASE("large bandwidth approaches the constant gain") {
    std::mt19937_64 rng(31);
    const Eigen::MatrixXd x = oracle::random_cloud(rng, 256, 1);
    const Ensembled ens(x);
    const Eigen::VectorXd h = linear_h(x);
    const double spread2 = (x.array() - x.mean()).square().mean();
    const double kc = constant_gain(ens, h)(0);
    double prev = std::numeric_limits<double>::infinity();
    for (double factor : {1.0, 10.0, 100.0}) {
        const double eps = factor * spread2;
        const auto b = build_markov(ens, KernelConfig{eps});
        const auto cfg = GainConfig::to_tolerance(eps, 1e-10);
        const auto f = solve_fixed_point(b, h, cfg);
        const double kdm = gain_at_particles(b, ens, f, cfg).mean();
        const double gap = std::abs(kdm - kc) / std::abs(kc);
        CHECK(gap < prev);
        prev = gap;
    }
    CHECK(prev <= 0.05);
}

TEST_CASE("gaussian samples with linear observation recover the unit gain") {
    std::mt19937_64 rng(37);
    const Eigen::MatrixXd x = oracle::random_cloud(rng, 1500, 1);
    const Ensembled ens(x);
    const auto b = build_markov(ens, KernelConfig{0.2});
    const auto cfg = GainConfig::to_tolerance(0.2, 1e-8);
    const auto f = solve_fixed_point(b, linear_h(x), cfg);
    const double kbar = gain_at_particles(b, ens, f, cfg).mean();
    CHECK(std::abs(kbar - 1.0) <= 0.15);
}

TEST_CASE("innovation weights") {
    std::mt19937_64 rng(41);
    const Eigen::MatrixXd x = oracle::random_cloud(rng, 20, 1);
    const auto b = build_markov(Ensembled(x), KernelConfig{0.3});
    const Eigen::VectorXd h = linear_h(x);
    CHECK(innovation_mean(b, h, InnovationWeights::Uniform) == doctest::Approx(h.mean()).epsilon(1e-14));
    CHECK(innovation_mean(b, h, InnovationWeights::RowSum) == doctest::Approx(b.pi.dot(h)).epsilon(1e-12));
    CHECK(innovation_mean(b, h, InnovationWeights::Stationary) ==
          doctest::Approx(b.stationary.dot(h)).epsilon(1e-12));
}
