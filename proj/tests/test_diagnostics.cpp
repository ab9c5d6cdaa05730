#include <bit>
#include <cmath>
#include <cstring>

#include "doctest.h"
#include "fpf/diagnostics.hpp"
#include "fpf/gain_solver.hpp"

using namespace fpf;

namespace {

ModelSpec bounded_model(double prior_var = 1.0) {
    ModelSpec m;
    m.drift = Drift{Drift::Kind::DoubleWell, 1.0};
    m.observation = Observation{Observation::Kind::Arctan, 1.0};
    m.prior_var = prior_var;
    return m;
}

SimConfig feasible_config(double eps = 1.0, std::uint64_t seed = 5) {
    SimConfig c;
    c.N = 5;
    c.delta = 0.4;
    c.seed = seed;
    c.gain = GainConfig::to_tolerance(eps, 1e-10);
    return c;
}

ConstantsParams params(double eps, int d, long long n, double delta, double L_h, double h_sup) {
    ConstantsParams p;
    p.epsilon = eps;
    p.dim = d;
    p.N = n;
    p.delta = delta;
    p.L_h = L_h;
    p.h_sup = h_sup;
    return p;
}

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

} // namespace

TEST_CASE("lipschitz constants of the kernel terms") {
    const ConstantsReport one = compute_constants(params(0.25, 1, 3, 0.5, 1.0, 1.0));
    CHECK(one.K_f == 1.0);
    const long double e2 = std::exp(-2.0L);
    const ConstantsReport three = compute_constants(params(0.25, 3, 3, 0.5, 1.0, 1.0));
    CHECK(three.K_f == doctest::Approx(double(std::sqrt(9.0L * e2 + 3.0L * (1.0L - e2)))).epsilon(1e-15));
    CHECK(three.K_f == doctest::Approx(1.9524).epsilon(1e-4));
    CHECK(three.K_g == doctest::Approx(2.0 * 3.0 * 0.25 * std::exp(-1.0)));
    CHECK(three.K_g_direct == doctest::Approx(std::exp(-0.5) / std::sqrt(0.5)));
}

TEST_CASE("finite-N constants by direct substitution") {
    const double eps = 0.1, delta = 0.5, n = 100.0, d = 1.0, L_h = 1.0, hs = 1.0;
    const ConstantsReport r = compute_constants(params(eps, 1, 100, delta, L_h, hs));
    REQUIRE(r.finite_n_valid);
    const double a = std::pow(delta, 1.5) * std::sqrt(n);
    CHECK(r.C_gamma == doctest::Approx(2 * 0.1 * 1 * (5 * a - 2) / (2 * a - 1)).epsilon(1e-14));
    CHECK(r.C_gamma == doctest::Approx(0.516472).epsilon(1e-5));
    const double c_phi = eps * (L_h + d * eps * hs / (2 * a - 1));
    CHECK(r.C_phi == doctest::Approx(c_phi).epsilon(1e-14));
    CHECK(r.K_b == doctest::Approx(c_phi * d).epsilon(1e-14));
    const double c_r1 = eps * L_h + d * eps * eps * hs / (2 * a - 1) / std::pow(delta, 1.5);
    const double c_r2 = eps * eps * d * 1.0 / std::pow(delta, 6) * (4 * a - 1) / (2 * a - 1);
    CHECK(r.C_r1 == doctest::Approx(c_r1).epsilon(1e-14));
    CHECK(r.C_r2 == doctest::Approx(c_r2).epsilon(1e-14));
    const double K_f2 = 1.0;
    const double c_K = r.C_gamma * r.C_gamma * std::max(std::pow(d * eps, 3), K_f2) / (std::pow(delta, 8) * eps * eps) +
                       d * (c_r1 * c_r1 + c_r2 * c_r2) / eps;
    CHECK(r.C_K == doctest::Approx(c_K).epsilon(1e-12));
    CHECK(std::isnan(r.script_C));
    CHECK_FALSE(r.script_C_valid);
    CHECK(std::isnan(r.C_k_growth));

    ConstantsParams p = params(eps, 2, 100, delta, L_h, hs);
    p.iterates = 4;
    p.delta_v = 0.7;
    p.phi_sup = 0.3;
    const ConstantsReport full = compute_constants(p);
    CHECK(full.C_k_growth == doctest::Approx(1e12 * std::pow(2.0, 1.5) * std::sqrt(eps) * (L_h + 4 * hs)));
    const double lead = (0.3 + eps * hs) * 0.7 + full.C_gamma * 2 * std::sqrt(eps);
    CHECK(full.script_C == doctest::Approx(lead * lead / (eps * eps * std::pow(delta, 4))));
}

TEST_CASE("constants are gated on the particle count exactly") {
    CHECK(compute_constants(params(0.5, 1, 3, 0.5, 1.0, 1.0)).assumption2);
    for (int pct : {10, 20, 25, 40, 50, 80}) {
        const double delta = pct / 100.0;
        for (long long n = 2; n <= 300; ++n) {
            // n > 1 / (4 delta^3)  <=>  4 pct^3 n > 100^3
            const bool exact = 4LL * pct * pct * pct * n > 1000000LL;
            const ConstantsReport r = compute_constants(params(0.5, 2, n, delta, 1.0, 1.0));
            CHECK(r.assumption2 == exact);
            CHECK(r.finite_n_valid == exact);
            CHECK(std::isnan(r.C_phi) == !exact);
            CHECK(std::isnan(r.C_gamma) == !exact);
            CHECK(std::isnan(r.C_r1) == !exact);
            CHECK(std::isnan(r.C_r2) == !exact);
            CHECK(std::isnan(r.K_b) == !exact);
            CHECK(std::isnan(r.C_K) == !exact);
            if (exact) {
                CHECK((r.C_phi > 0 && r.C_gamma > 0 && r.C_r1 > 0 && r.C_r2 > 0 && r.K_b > 0 && r.C_K > 0));
            }
        }
    }
    const ConstantsReport unbounded =
        compute_constants(params(0.5, 1, 100, 0.5, 1.0, std::numeric_limits<double>::infinity()));
    CHECK_FALSE(unbounded.finite_n_valid);
    CHECK(std::isnan(unbounded.C_gamma));
}

TEST_CASE("constants are pure functions of their inputs") {
    ConstantsParams p = params(0.3, 2, 50, 0.3, 0.7, 1.2);
    p.iterates = 3;
    p.delta_v = 1.1;
    p.phi_sup = 0.2;
    const ConstantsReport a = compute_constants(p);
    const ConstantsReport b = compute_constants(p);
    for (auto m : {&ConstantsReport::K_g, &ConstantsReport::K_f, &ConstantsReport::C_phi, &ConstantsReport::C_gamma,
                   &ConstantsReport::C_r1, &ConstantsReport::C_r2, &ConstantsReport::K_b, &ConstantsReport::C_K,
                   &ConstantsReport::C_k_growth, &ConstantsReport::script_C}) {
        CHECK(same_bits(a.*m, b.*m));
    }
    CHECK_THROWS_AS(compute_constants(params(0.0, 1, 10, 0.5, 1, 1)), ConfigError);
    CHECK_THROWS_AS(compute_constants(params(0.5, 1, 10, 1.0, 1, 1)), ConfigError);
}

TEST_CASE("sampled lipschitz quotients") {
    for (int d : {1, 2, 3}) {
        const LipschitzReport r = verify_kernel_lipschitz(d, 0.25, 100000, 17);
        CHECK(r.pairs == 100000);
        CHECK(r.pass_f);
        CHECK(r.sup_quotient_f <= r.K_f);
        // the true constant of f is one and is approached near the origin
        CHECK(r.sup_quotient_f > 0.99);
        CHECK(r.sup_quotient_g <= r.K_g_direct * (1.0 + 1e-9));
        CHECK(r.sup_quotient_g > 0.95 * r.K_g_direct);
    }
    CHECK(verify_kernel_lipschitz(1, 2.0, 10000, 1).sup_quotient_f <= 1.0);
    CHECK_THROWS_AS(verify_kernel_lipschitz(1, 0.25, 100, 1), ConfigError);
}

TEST_CASE("appendix inequalities on feasible ensembles") {
    const AppendixReport r = verify_appendix_inequalities(bounded_model(0.25), feasible_config(), 50);
    CHECK(r.min_row_mass >= 0.4);
    CHECK(r.attempts >= 50);
    CHECK(r.max_r_spread <= r.constants.C_gamma);
    CHECK(r.pass_gamma);
    CHECK(r.pass_phi);
    CHECK(r.pass_b);
    CHECK(r.ratio_phi == doctest::Approx(r.max_lipschitz_quotient / r.constants.C_phi));
    CHECK(r.ratio_b == doctest::Approx(r.max_gain_norm / r.constants.K_b));

    ModelSpec flat = bounded_model(0.25);
    flat.observation = Observation{Observation::Kind::Constant, 2.0};
    const AppendixReport z = verify_appendix_inequalities(flat, feasible_config(), 10);
    CHECK(z.max_r_spread == 0.0);
    CHECK(z.max_lipschitz_quotient == 0.0);
    CHECK(z.max_gain_norm == 0.0);
    CHECK(z.pass_gamma);
}

TEST_CASE("appendix inequalities preconditions") {
    SimConfig c = feasible_config(0.5);
    c.N = 200;
    c.delta = 0.2;
    CHECK_THROWS_AS(verify_appendix_inequalities(bounded_model(), c, 1), SamplingError);
    c.N = 2;
    c.delta = 0.5;
    CHECK_THROWS_AS(verify_appendix_inequalities(bounded_model(), c, 1), HypothesisError);
    ModelSpec lin = bounded_model();
    lin.observation = Observation{Observation::Kind::Linear, 1.0};
    CHECK_THROWS_AS(verify_appendix_inequalities(lin, feasible_config(), 1), ConfigError);
}

TEST_CASE("potential differences scale linearly with the bandwidth") {
    const ModelSpec m = bounded_model(0.01);
    double prev = 0.0;
    for (double eps : {0.1, 0.2, 0.4}) {
        const AppendixReport r = verify_appendix_inequalities(m, feasible_config(eps, 3), 20);
        if (prev > 0.0) CHECK(r.max_lipschitz_quotient / prev == doctest::Approx(2.0).epsilon(0.2));
        prev = r.max_lipschitz_quotient;
    }
}

TEST_CASE("rate regression") {
    std::vector<std::pair<double, double>> inv, flat, inv2;
    for (double n : {50.0, 100.0, 200.0, 400.0}) {
        inv.emplace_back(n, 3.0 / n);
        flat.emplace_back(n, 0.7);
        inv2.emplace_back(n, 5.0 / (n * n));
    }
    const RateFit a = rate_regression(inv);
    CHECK(a.slope == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(a.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK(a.r2 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rate_regression(flat).slope == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rate_regression(inv2).slope == doctest::Approx(-2.0).epsilon(1e-12));

    CHECK_THROWS_AS(rate_regression({{1, 1}, {2, 0}, {3, 1}}), DomainError);
    CHECK_THROWS_AS(rate_regression({{1, 1}, {2, -1}, {3, 1}}), DomainError);
    CHECK_THROWS_AS(rate_regression({{1, 1}, {2, 1}, {2, 1}}), DomainError);
}

TEST_CASE("gain gap against a reference ensemble") {
    ModelSpec m = bounded_model();
    SimConfig c;
    c.seed = 21;
    c.gain = GainConfig::to_tolerance(0.5);

    LlnOptions share;
    share.share_reference = true;
    const LlnReport same = lln_gain_gap(m, c, {64}, 64, 2, share);
    CHECK(same.mean_gap[0] == 0.0);
    CHECK_THROWS_AS(lln_gain_gap(m, c, {50, 100}, 400, 2), ConfigError);

    const std::vector<int> Ns{25, 50, 100, 200};
    const LlnReport few = lln_gain_gap(m, c, Ns, 1600, 10);
    const LlnReport many = lln_gain_gap(m, c, Ns, 1600, 40);
    CHECK(many.fit.slope >= -1.4);
    CHECK(many.fit.slope <= -0.6);
    CHECK(many.fit.r2 >= 0.8);
    // four times the repetitions halves the standard error
    CHECK(many.slope_se / few.slope_se == doctest::Approx(0.5).epsilon(0.3));
    for (std::size_t j = 0; j < Ns.size(); ++j) CHECK(few.gaps[j][3] == many.gaps[j][3]);
}

TEST_CASE("covariance inequality under a gaussian") {
    const Observation x{Observation::Kind::Linear, 1.0};
    const BrascampLiebReport lin = brascamp_lieb_check(2.0, x, x, 100000, 4);
    CHECK(lin.pass);
    CHECK(lin.bound == doctest::Approx(2.0));
    CHECK(std::abs(lin.covariance - 2.0) <= 3.0 * lin.standard_error);

    const Observation at{Observation::Kind::Arctan, 1.0};
    CHECK(brascamp_lieb_check(1.0, at, x, 100000, 5).pass);
    CHECK(brascamp_lieb_check(0.5, at, at, 100000, 6).pass);
    const BrascampLiebReport flat = brascamp_lieb_check(1.0, Observation{Observation::Kind::Constant, 1.0}, x, 1000, 1);
    CHECK(flat.covariance == 0.0);
    CHECK(flat.pass);
}

TEST_CASE("gain stays under the uniform ceiling while the monitor holds") {
    const ModelSpec m = bounded_model(0.05);
    SimConfig c = feasible_config(1.0, 9);
    c.horizon = 0.5;
    const ConstantsReport k = compute_constants(constants_params(m, c));
    REQUIRE(k.finite_n_valid);
    const ObservationPath obs = simulate_truth_and_observations(m, c);
    Stream prior(c.seed, StreamTag::Prior, 0), noise(c.seed, StreamTag::ParticleNoise, 0);
    Ensembled ens = sample_prior(m, c.N, prior);
    std::size_t checked = 0;
    for (std::size_t s = 0; s < obs.steps(); ++s) {
        StepDiagnostics diag;
        const Eigen::MatrixXd dV = noise.normals(c.N, 1, std::sqrt(c.dt));
        Ensembled next = step_fpf(ens, obs.dZ(Eigen::Index(s)), m, c, dV, s, &diag);
        if (diag.min_row_mass < c.delta) break;
        CHECK(diag.mean_gain_norm <= 10.0 * k.K_b);
        ++checked;
        ens = std::move(next);
    }
    CHECK(checked > 0);
}
