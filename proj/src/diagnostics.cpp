#include "fpf/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "fpf/errors.hpp"
#include "fpf/gain_solver.hpp"
#include "fpf/kernels.hpp"
#include "fpf/meanfield.hpp"
#include "fpf/rng.hpp"

namespace fpf {

namespace {

constexpr double nan = std::numeric_limits<double>::quiet_NaN();

double ratio(double measured, double bound) {
    if (measured == 0.0) return 0.0;
    return measured / bound;
}

} // namespace

ConstantsParams constants_params(const ModelSpec& model, const SimConfig& cfg) {
    ConstantsParams p;
    p.epsilon = cfg.gain.epsilon;
    p.dim = model.dim;
    p.N = cfg.N;
    p.delta = cfg.delta;
    p.L_h = model.observation.lipschitz();
    p.L_M = model.drift.lipschitz();
    p.h_sup = model.observation.sup_norm();
    p.iterates = cfg.gain.mode == GainConfig::Mode::FixedIterates ? cfg.gain.iterates : 0;
    return p;
}

ConstantsReport compute_constants(const ConstantsParams& p) {
    if (!(p.epsilon > 0.0) || !std::isfinite(p.epsilon)) throw ConfigError("epsilon must be positive");
    if (p.dim < 1) throw ConfigError("dimension must be at least 1");
    if (p.N < 2) throw ConfigError("N must be at least 2");
    if (!(p.delta > 0.0 && p.delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    if (p.L_h < 0.0 || p.h_sup < 0.0) throw ConfigError("Lipschitz constant and sup norm must be non-negative");

    ConstantsReport r;
    r.params = p;
    const double eps = p.epsilon;
    const double d = double(p.dim);
    const double e = std::exp(1.0);

    r.K_g = 2.0 * d * eps / e;
    r.K_g_direct = std::exp(-0.5) / std::sqrt(2.0 * eps);
    r.K_f = std::sqrt(d * d / (e * e) + d * (1.0 - 1.0 / (e * e)));

    r.assumption2 = assumption2_holds(p.N, p.delta);
    r.bounded_h = std::isfinite(p.h_sup);
    r.finite_n_valid = r.assumption2 && r.bounded_h;
    r.growth_valid = r.bounded_h && p.iterates >= 1;
    r.script_C_valid = r.finite_n_valid && p.delta_v.has_value() && p.phi_sup.has_value();

    if (r.finite_n_valid) {
        const double d32 = std::pow(p.delta, 1.5);
        const double a = d32 * std::sqrt(double(p.N));
        const double den = 2.0 * a - 1.0;
        r.C_phi = eps * (p.L_h + d * eps * p.h_sup / den);
        r.C_gamma = 2.0 * eps * p.h_sup * (5.0 * a - 2.0) / den;
        r.C_r1 = eps * p.L_h + d * eps * eps * p.h_sup / den / d32;
        r.C_r2 = eps * eps * d * std::max(p.L_h, p.h_sup) / std::pow(p.delta, 6) * (4.0 * a - 1.0) / den;
        r.K_b = r.C_phi * d;
        r.C_K = r.C_gamma * r.C_gamma * std::max(std::pow(d * eps, 3), r.K_f * r.K_f) /
                    (std::pow(p.delta, 8) * eps * eps) +
                d * (r.C_r1 * r.C_r1 + r.C_r2 * r.C_r2) / eps;
    } else {
        r.C_phi = r.C_gamma = r.C_r1 = r.C_r2 = r.K_b = r.C_K = nan;
    }

    if (r.growth_valid) {
        r.C_k_growth = std::pow(double(p.N), 6) * std::pow(d, 1.5) * std::sqrt(eps) * std::max(1.0, eps) *
                       (p.L_h + double(p.iterates) * p.h_sup);
    } else {
        r.C_k_growth = nan;
    }

    if (r.script_C_valid) {
        const double lead = (*p.phi_sup + eps * p.h_sup) * *p.delta_v + r.C_gamma * d * std::max(eps, std::sqrt(eps));
        r.script_C = lead * lead / (eps * eps * std::pow(p.delta, 4));
    } else {
        r.script_C = nan;
    }
    return r;
}

MeanFieldInputs measure_meanfield_inputs(const DensityGrid& grid, const Observation& h, double epsilon) {
    const DiffusionOperator op(grid, epsilon);
    const MeanFieldField field = solve_meanfield_fixed_point(op, h);
    MeanFieldInputs in;
    in.delta_v = first_moment_of_nu(op, field);
    in.phi_sup = field.phi.cwiseAbs().maxCoeff();
    return in;
}

LipschitzReport verify_kernel_lipschitz(int dim, double epsilon, std::size_t samples, std::uint64_t seed) {
    if (dim < 1) throw ConfigError("dimension must be at least 1");
    KernelConfig{epsilon}.validate();
    if (samples < 10000) throw ConfigError("Lipschitz check needs at least 10^4 pairs");

    ConstantsParams p;
    p.epsilon = epsilon;
    p.dim = dim;
    const ConstantsReport c = compute_constants(p);

    LipschitzReport rep;
    rep.dim = dim;
    rep.epsilon = epsilon;
    rep.K_f = c.K_f;
    rep.K_g = c.K_g;
    rep.K_g_direct = c.K_g_direct;

    Stream rng(seed, StreamTag::Pairs, std::uint64_t(dim));
    const double root = std::sqrt(epsilon);
    const double scale = -1.0 / (4.0 * epsilon);
    Eigen::VectorXd z(dim), y(dim);
    for (std::size_t s = 0; s < samples; ++s) {
        // centers spread over a few kernel widths, separations from 1e-4 to 3 widths
        const double spread = root * std::pow(10.0, -1.0 + 1.5 * rng.uniform());
        const double gap = root * std::pow(10.0, -4.0 + 4.5 * rng.uniform());
        for (int k = 0; k < dim; ++k) z(k) = spread * rng.normal();
        for (int k = 0; k < dim; ++k) y(k) = z(k) + gap * rng.normal();
        const double dist = (z - y).norm();
        if (!(dist > 0.0)) continue;
        ++rep.pairs;
        const double ez = std::exp(scale * z.squaredNorm());
        const double ey = std::exp(scale * y.squaredNorm());
        rep.sup_quotient_f = std::max(rep.sup_quotient_f, (ez * z - ey * y).norm() / dist);
        rep.sup_quotient_g = std::max(rep.sup_quotient_g, std::abs(ez - ey) / dist);
    }
    rep.pass_f = rep.sup_quotient_f <= rep.K_f;
    return rep;
}

AppendixReport verify_appendix_inequalities(const ModelSpec& model, const SimConfig& cfg, int reps) {
    model.validate();
    cfg.validate();
    if (reps < 1) throw ConfigError("reps must be at least 1");
    if (!model.observation.is_bounded()) throw ConfigError("appendix inequalities need a bounded observation function");
    if (!cfg.assumption2()) throw HypothesisError("Assumption 2 fails: N must exceed 1 / (4 delta^3)");

    AppendixReport rep;
    rep.constants = compute_constants(constants_params(model, cfg));
    rep.reps = reps;
    rep.min_row_mass = std::numeric_limits<double>::infinity();
    const KernelConfig kc{cfg.gain.epsilon};
    constexpr int max_attempts = 100;

    Stream rng(cfg.seed, StreamTag::Sampling, 0);
    for (int r = 0; r < reps; ++r) {
        std::optional<Ensembled> ens;
        std::optional<MarkovBundled> b;
        for (int attempt = 0; attempt < max_attempts; ++attempt) {
            ++rep.attempts;
            Ensembled trial = sample_prior(model, cfg.N, rng);
            MarkovBundled trial_b = build_markov(trial, kc);
            if (min_row_mass(trial_b) >= cfg.delta) {
                ens.emplace(std::move(trial));
                b.emplace(std::move(trial_b));
                break;
            }
        }
        if (!ens) {
            throw SamplingError("no ensemble with min row mass >= delta in " + std::to_string(max_attempts) +
                                " draws");
        }
        rep.min_row_mass = std::min(rep.min_row_mass, min_row_mass(*b));
        const Eigen::VectorXd h = model.observation.apply(ens->positions());
        const GainFieldd field = solve_fixed_point(*b, h, cfg.gain);
        const Eigen::MatrixXd K = gain_at_particles(*b, *ens, field, cfg.gain);
        rep.max_gain_norm = std::max(rep.max_gain_norm, K.rowwise().norm().maxCoeff());
        const auto& x = ens->positions();
        for (Eigen::Index k = 0; k < x.rows(); ++k) {
            for (Eigen::Index l = k + 1; l < x.rows(); ++l) {
                const double spread = std::abs(field.r(k) - field.r(l));
                rep.max_r_spread = std::max(rep.max_r_spread, spread);
                const double dist = (x.row(k) - x.row(l)).norm();
                if (dist > 0.0) rep.max_lipschitz_quotient = std::max(rep.max_lipschitz_quotient, spread / dist);
            }
        }
    }
    rep.ratio_phi = ratio(rep.max_lipschitz_quotient, rep.constants.C_phi);
    rep.ratio_gamma = ratio(rep.max_r_spread, rep.constants.C_gamma);
    rep.ratio_b = ratio(rep.max_gain_norm, rep.constants.K_b);
    rep.pass_phi = rep.ratio_phi <= rep.slack;
    rep.pass_gamma = rep.ratio_gamma <= 1.0;
    rep.pass_b = rep.ratio_b <= rep.slack;
    return rep;
}

RateFit rate_regression(const std::vector<std::pair<double, double>>& pairs) {
    std::set<double> distinct;
    for (const auto& [n, v] : pairs) {
        if (!(n > 0.0) || !std::isfinite(n)) throw DomainError("rate_regression: N must be positive");
        if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("rate_regression: values must be positive");
        distinct.insert(n);
    }
    if (distinct.size() < 3) throw DomainError("rate_regression needs at least 3 distinct N");

    const double m = double(pairs.size());
    double mx = 0.0, my = 0.0;
    for (const auto& [n, v] : pairs) {
        mx += std::log(n);
        my += std::log(v);
    }
    mx /= m;
    my /= m;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& [n, v] : pairs) {
        const double dx = std::log(n) - mx;
        const double dy = std::log(v) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    RateFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    const double ss_res = std::max(0.0, syy - fit.slope * sxy);
    fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    return fit;
}

LlnReport lln_gain_gap(const ModelSpec& model, const SimConfig& cfg, const std::vector<int>& N_list, int M_ref,
                       int reps, const LlnOptions& options) {
    model.validate();
    cfg.validate();
    if (N_list.empty()) throw ConfigError("N_list must not be empty");
    if (reps < 1) throw ConfigError("reps must be at least 1");
    if (*std::min_element(N_list.begin(), N_list.end()) < 2) throw ConfigError("every N must be at least 2");
    const int n_max = *std::max_element(N_list.begin(), N_list.end());
    if (options.share_reference) {
        for (int n : N_list)
            if (n != M_ref) throw ConfigError("shared reference needs N == M_ref");
    } else if (M_ref < 8 * n_max) {
        throw ConfigError("M_ref must be at least 8 max(N)");
    }
    if (!model.observation.is_bounded()) throw ConfigError("gain gap experiment needs a bounded observation function");

    const KernelConfig kc{cfg.gain.epsilon};
    LlnReport out;
    out.N = N_list;
    out.reps = reps;
    out.M_ref = M_ref;
    out.gaps.assign(N_list.size(), std::vector<double>(std::size_t(reps), 0.0));
    out.min_row_mass.assign(N_list.size(), std::numeric_limits<double>::infinity());
    for (int n : N_list) out.assumption2.push_back(assumption2_holds(n, cfg.delta));

    for (int rep = 0; rep < reps; ++rep) {
        const std::uint64_t rep_seed = derive_seed(cfg.seed, StreamTag::Repetition, std::uint64_t(rep));
        Stream ref_prior(rep_seed, StreamTag::Reference, 0);
        const Ensembled reference = sample_prior(model, M_ref, ref_prior);
        const MarkovBundled ref_b = build_markov(reference, kc);
        const GainFieldd ref_field = solve_fixed_point(ref_b, model.observation.apply(reference.positions()), cfg.gain);

        for (std::size_t j = 0; j < N_list.size(); ++j) {
            const int n = N_list[j];
            Stream init(rep_seed, StreamTag::Prior, std::uint64_t(n));
            const Ensembled samples = options.share_reference ? reference : sample_prior(model, n, init);
            const MarkovBundled b = build_markov(samples, kc);
            const GainFieldd field = solve_fixed_point(b, model.observation.apply(samples.positions()), cfg.gain);
            const Eigen::MatrixXd K = gain_at_particles(b, samples, field, cfg.gain);
            const Eigen::MatrixXd K_ref = gain_at_points(samples.positions(), reference, ref_b, ref_field);
            out.gaps[j][std::size_t(rep)] = (K - K_ref).rowwise().squaredNorm().mean();
            out.min_row_mass[j] = std::min(out.min_row_mass[j], min_row_mass(b));
        }
    }

    for (const auto& g : out.gaps) {
        double s = 0.0;
        for (double v : g) s += v;
        out.mean_gap.push_back(s / double(reps));
    }

    const bool positive = std::all_of(out.gaps.begin(), out.gaps.end(), [](const std::vector<double>& g) {
        return std::all_of(g.begin(), g.end(), [](double v) { return v > 0.0; });
    });
    std::set<int> distinct(N_list.begin(), N_list.end());
    if (positive && distinct.size() >= 3) {
        std::vector<std::pair<double, double>> pairs;
        for (std::size_t j = 0; j < N_list.size(); ++j) pairs.emplace_back(double(N_list[j]), out.mean_gap[j]);
        out.fit = rate_regression(pairs);
        if (reps >= 2) {
            std::vector<double> slopes;
            for (int rep = 0; rep < reps; ++rep) {
                std::vector<std::pair<double, double>> one;
                for (std::size_t j = 0; j < N_list.size(); ++j)
                    one.emplace_back(double(N_list[j]), out.gaps[j][std::size_t(rep)]);
                slopes.push_back(rate_regression(one).slope);
            }
            double mean = 0.0;
            for (double s : slopes) mean += s;
            mean /= double(slopes.size());
            double var = 0.0;
            for (double s : slopes) var += (s - mean) * (s - mean);
            var /= double(slopes.size() - 1);
            out.slope_se = std::sqrt(var / double(slopes.size()));
        }
    }
    return out;
}

std::vector<LimitPoint> constant_gain_limit(const Ensembled& ens, const Eigen::VectorXd& h,
                                            const std::vector<double>& factors, double tol) {
    const Eigen::MatrixXd& x = ens.positions();
    const double spread2 = (x.rowwise() - x.colwise().mean()).array().square().colwise().mean().mean();
    const Eigen::VectorXd kc = constant_gain(ens, h);
    std::vector<LimitPoint> out;
    for (double factor : factors) {
        if (!(factor > 0.0)) throw ConfigError("bandwidth factors must be positive");
        LimitPoint p;
        p.factor = factor;
        p.epsilon = factor * spread2;
        const MarkovBundled b = build_markov(ens, KernelConfig{p.epsilon});
        const GainConfig cfg = GainConfig::to_tolerance(p.epsilon, tol);
        const GainFieldd f = solve_fixed_point(b, h, cfg);
        p.mean_gain = gain_at_particles(b, ens, f, cfg).colwise().mean().transpose();
        p.constant_gain = kc;
        p.rel_gap = (p.mean_gain - kc).norm() / kc.norm();
        out.push_back(std::move(p));
    }
    return out;
}

BrascampLiebReport brascamp_lieb_check(double variance, const Observation& g, const Observation& h,
                                       std::size_t samples, std::uint64_t seed) {
    if (!(variance > 0.0) || !std::isfinite(variance)) throw ConfigError("variance must be positive");
    if (samples < 2) throw ConfigError("Brascamp-Lieb check needs at least 2 samples");
    Stream rng(seed, StreamTag::Sampling, 1);
    const double sd = std::sqrt(variance);
    const Eigen::Index count = Eigen::Index(samples);
    Eigen::VectorXd gv(count), hv(count);
    double dg2 = 0.0, dh2 = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        const double x = sd * rng.normal();
        gv(Eigen::Index(s)) = g.scalar(x);
        hv(Eigen::Index(s)) = h.scalar(x);
        dg2 += g.derivative(x) * g.derivative(x);
        dh2 += h.derivative(x) * h.derivative(x);
    }
    const double n = double(samples);
    const Eigen::ArrayXd prod = (gv.array() - gv.mean()) * (hv.array() - hv.mean());
    BrascampLiebReport rep;
    rep.covariance = prod.sum() / (n - 1.0);
    rep.standard_error = std::sqrt((prod - prod.mean()).square().sum() / (n - 1.0) / n);
    rep.bound = variance * std::sqrt(dg2 / n) * std::sqrt(dh2 / n);
    rep.pass = std::abs(rep.covariance) <= rep.bound + 3.0 * rep.standard_error;
    return rep;
}

} // namespace fpf
