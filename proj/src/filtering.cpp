#include "fpf/filtering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fpf/errors.hpp"

namespace fpf {

bool assumption2_holds(long long n, double delta) {
    // relative margin so that decimal thresholds such as delta = 0.1, N = 250
    // are decided as in exact arithmetic
    return double(n) > (1.0 + 1e-12) / (4.0 * delta * delta * delta);
}

std::size_t SimConfig::steps() const { return std::size_t(std::llround(horizon / dt)); }

void SimConfig::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be positive");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("horizon must be positive");
    if (dt > horizon) throw ConfigError("dt must not exceed the horizon");
    if (N < 2) throw ConfigError("N must be at least 2");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    gain.validate();
}

ObservationPath simulate_truth_and_observations(const ModelSpec& model, const SimConfig& cfg) {
    model.validate();
    cfg.validate();
    const std::size_t steps = cfg.steps();
    const int d = model.dim;
    const double sq = std::sqrt(cfg.dt);
    Stream rng(cfg.seed, StreamTag::Truth, 0);

    ObservationPath out;
    out.dt = cfg.dt;
    out.truth.resize(Eigen::Index(steps) + 1, d);
    out.dZ.resize(Eigen::Index(steps));
    for (int k = 0; k < d; ++k) out.truth(0, k) = model.prior_mean + std::sqrt(model.prior_var) * rng.normal();
    for (std::size_t s = 0; s < steps; ++s) {
        const Eigen::Index i = Eigen::Index(s);
        const Eigen::VectorXd x = out.truth.row(i).transpose();
        const Eigen::VectorXd drift = model.drift(x);
        for (int k = 0; k < d; ++k) out.truth(i + 1, k) = x(k) + drift(k) * cfg.dt + sq * rng.normal();
        out.dZ(i) = model.observation(x) * cfg.dt + sq * rng.normal();
        if (!out.truth.row(i + 1).allFinite() || !std::isfinite(out.dZ(i))) {
            throw SimulationError("signal path became non-finite", s + 1);
        }
    }
    return out;
}

Ensembled sample_prior(const ModelSpec& model, Eigen::Index n, Stream& stream) {
    Eigen::MatrixXd x = stream.normals(n, model.dim, std::sqrt(model.prior_var));
    x.array() += model.prior_mean;
    return Ensembled(std::move(x));
}

Ensembled step_with_gain(const Ensembled& ens, double dZ, const ModelSpec& model, double dt,
                         const Eigen::MatrixXd& dV, const Eigen::MatrixXd& K, const Eigen::VectorXd& h, double hhat,
                         std::size_t step) {
    const Eigen::Index n = ens.size();
    if (dV.rows() != n || dV.cols() != ens.dim() || K.rows() != n || K.cols() != ens.dim() || h.size() != n) {
        throw DomainError("step: size mismatch");
    }
    Eigen::MatrixXd x = ens.positions() + model.drift.apply(ens.positions()) * dt + dV;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double innovation = dZ - 0.5 * (h(i) + hhat) * dt;
        x.row(i) += K.row(i) * innovation;
    }
    if (!x.allFinite()) throw SimulationError("particle state became non-finite", step);
    return Ensembled(std::move(x));
}

namespace {

double mean_row_norm(const Eigen::MatrixXd& K) { return K.rowwise().norm().mean(); }

Ensembled fpf_step_with_bundle(const Ensembled& ens, const MarkovBundled& b, double dZ, const ModelSpec& model,
                               const SimConfig& cfg, const Eigen::MatrixXd& dV, std::size_t step,
                               StepDiagnostics* diag) {
    const Eigen::VectorXd h = model.observation.apply(ens.positions());
    GainFieldd f;
    try {
        f = solve_fixed_point(b, h, cfg.gain);
    } catch (const IterationError& e) {
        throw IterationError(std::string("gain solve failed at step ") + std::to_string(step), e.last_residual(),
                             e.iterations());
    }
    const Eigen::MatrixXd K = gain_at_particles(b, ens, f, cfg.gain);
    const double hhat = innovation_mean(b, h, cfg.gain.innovation);
    if (diag) {
        diag->mean_gain_norm = mean_row_norm(K);
        diag->residual = f.residual;
        diag->iterations = f.iterations;
        diag->hhat = hhat;
        diag->min_row_mass = min_row_mass(b);
    }
    return step_with_gain(ens, dZ, model, cfg.dt, dV, K, h, hhat, step);
}

} // namespace

Ensembled step_fpf(const Ensembled& ens, double dZ, const ModelSpec& model, const SimConfig& cfg,
                   const Eigen::MatrixXd& dV, std::size_t step, StepDiagnostics* diag) {
    const auto b = build_markov(ens, KernelConfig{cfg.gain.epsilon});
    return fpf_step_with_bundle(ens, b, dZ, model, cfg, dV, step, diag);
}

Ensembled step_enkbf(const Ensembled& ens, double dZ, const ModelSpec& model, const SimConfig& cfg,
                     const Eigen::MatrixXd& dV, std::size_t step, StepDiagnostics* diag) {
    const Eigen::Index n = ens.size();
    const Eigen::VectorXd h = model.observation.apply(ens.positions());
    const Eigen::VectorXd k = constant_gain(ens, h);
    const Eigen::MatrixXd K = Eigen::MatrixXd::Ones(n, 1) * k.transpose();
    const double hhat = h.mean();
    if (diag) {
        diag->mean_gain_norm = k.norm();
        diag->residual = 0.0;
        diag->iterations = 0;
        diag->hhat = hhat;
    }
    return step_with_gain(ens, dZ, model, cfg.dt, dV, K, h, hhat, step);
}

double stationary_riccati_variance(double a, double c) {
    if (c == 0.0) return a < 0.0 ? -1.0 / (2.0 * a) : std::numeric_limits<double>::infinity();
    return (a + std::sqrt(a * a + c * c)) / (c * c);
}

KalmanPath kalman_bucy(const ModelSpec& model, const ObservationPath& obs) {
    if (model.dim != 1 || !model.drift.is_linear() || !model.observation.is_linear()) {
        throw ScopeError("Kalman-Bucy oracle covers the scalar linear-Gaussian model only");
    }
    const double a = model.drift.param;
    const double c = model.observation.param;
    const double dt = obs.dt;
    const Eigen::Index steps = obs.dZ.size();
    KalmanPath out;
    out.mean.resize(steps + 1);
    out.var.resize(steps + 1);
    double m = model.prior_mean;
    double p = model.prior_var;
    out.mean(0) = m;
    out.var(0) = p;
    for (Eigen::Index k = 0; k < steps; ++k) {
        const double m_next = m + a * m * dt + c * p * (obs.dZ(k) - c * m * dt);
        const double p_next = p + (2.0 * a * p + 1.0 - c * c * p * p) * dt;
        m = m_next;
        p = p_next;
        out.mean(k + 1) = m;
        out.var(k + 1) = p;
    }
    return out;
}

SirPath sir_reference(const ModelSpec& model, const ObservationPath& obs, std::size_t M, std::uint64_t seed) {
    model.validate();
    if (M < 2) throw ConfigError("SIR needs at least 2 particles");
    const Eigen::Index m = Eigen::Index(M);
    const int d = model.dim;
    const double dt = obs.dt;
    const double sq = std::sqrt(dt);
    Stream rng(seed, StreamTag::Sir, 0);
    Eigen::MatrixXd x = rng.normals(m, d, std::sqrt(model.prior_var));
    x.array() += model.prior_mean;
    Eigen::VectorXd logw = Eigen::VectorXd::Zero(m);

    const Eigen::Index steps = obs.dZ.size();
    SirPath out;
    out.mean.resize(steps + 1, d);
    out.var.resize(steps + 1, d);
    out.min_ess = double(M);
    auto record = [&](Eigen::Index k, const Eigen::VectorXd& w) {
        for (int c = 0; c < d; ++c) {
            const double mu = w.dot(x.col(c));
            out.mean(k, c) = mu;
            out.var(k, c) = w.dot((x.col(c).array() - mu).square().matrix());
        }
    };
    record(0, Eigen::VectorXd::Constant(m, 1.0 / double(m)));

    Eigen::MatrixXd scratch(m, d);
    for (Eigen::Index k = 0; k < steps; ++k) {
        for (Eigen::Index i = 0; i < m; ++i) {
            const double h = model.observation(x.row(i));
            logw(i) += h * obs.dZ(k) - 0.5 * h * h * dt;
        }
        const double top = logw.maxCoeff();
        Eigen::VectorXd w = (logw.array() - top).exp().matrix();
        w /= w.sum();
        const double ess = 1.0 / w.squaredNorm();
        out.min_ess = std::min(out.min_ess, ess);
        if (ess < 10.0) ++out.degeneracy_warnings;

        x += model.drift.apply(x) * dt + rng.normals(m, d, sq);
        if (!x.allFinite()) throw SimulationError("SIR particle became non-finite", std::size_t(k + 1));
        record(k + 1, w);

        if (ess < 0.5 * double(m)) {
            // systematic resampling
            const double u0 = rng.uniform() / double(m);
            double cum = w(0);
            Eigen::Index j = 0;
            for (Eigen::Index i = 0; i < m; ++i) {
                const double target = u0 + double(i) / double(m);
                while (cum < target && j + 1 < m) cum += w(++j);
                scratch.row(i) = x.row(j);
            }
            x.swap(scratch);
            logw.setZero();
            ++out.resamples;
        } else {
            logw.array() -= top;
        }
    }
    return out;
}

double MonitorState::min_statistic() const { return std::min({min_q_finite, min_q_proxy, min_conv}); }

double min_row_mass(const Ensembled& ens, double epsilon) {
    return min_row_mass(build_markov(ens, KernelConfig{epsilon}));
}

double min_kernel_density(const Ensembled& points, const Ensembled& reference, double epsilon) {
    if (points.dim() != reference.dim()) throw DomainError("min_kernel_density: dimension mismatch");
    const double scale = kernel_exponent_scale<double>(KernelConfig{epsilon});
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < points.size(); ++i) {
        ExactSum acc;
        for (Eigen::Index m = 0; m < reference.size(); ++m) {
            acc.add(std::exp(scale * squared_distance(points.particle(i), reference.particle(m))));
        }
        best = std::min(best, acc.value() / double(reference.size()));
    }
    return best;
}

namespace {

void latch(MonitorState& state, double delta, double t) {
    if (!state.hit_time && state.min_statistic() < delta) state.hit_time = t;
}

} // namespace

void update_monitors(MonitorState& state, const Ensembled& system, const Ensembled& proxies,
                     const Ensembled& reference, double epsilon, double delta, double t) {
    state.min_q_finite = min_row_mass(system, epsilon);
    state.min_q_proxy = min_row_mass(proxies, epsilon);
    state.min_conv = min_kernel_density(proxies, reference, epsilon);
    latch(state, delta, t);
}

void update_monitors(MonitorState& state, const Ensembled& system, double epsilon, double delta, double t) {
    state.min_q_finite = min_row_mass(system, epsilon);
    latch(state, delta, t);
}

namespace {

double coupling_error(const Ensembled& a, const Ensembled& b) {
    return (a.positions() - b.positions()).rowwise().squaredNorm().mean();
}

struct Coupled {
    int N;
    Ensembled system;
    Ensembled proxies;
    Stream noise;
    MonitorState monitors;
    PocRow row;
    bool active = true;
};

} // namespace

PocResult run_coupled_poc(const ModelSpec& model, const SimConfig& cfg, const std::vector<int>& N_list, int M_ref,
                          int reps, const PocOptions& options) {
    model.validate();
    cfg.validate();
    if (N_list.empty()) throw ConfigError("N_list must not be empty");
    if (reps < 1) throw ConfigError("reps must be at least 1");
    const int n_max = *std::max_element(N_list.begin(), N_list.end());
    if (*std::min_element(N_list.begin(), N_list.end()) < 2) throw ConfigError("every N must be at least 2");
    if (options.share_reference) {
        for (int n : N_list)
            if (n != M_ref) throw ConfigError("shared reference coupling needs N == M_ref");
    } else if (M_ref < 8 * n_max) {
        throw ConfigError("M_ref must be at least 8 max(N)");
    }
    if (!model.observation.is_bounded()) throw ConfigError("coupling experiment needs a bounded observation function");

    const double eps = cfg.gain.epsilon;
    const double dt = cfg.dt;
    const double sq = std::sqrt(dt);
    const std::size_t steps = cfg.steps();

    PocResult result;
    for (int n : N_list) result.assumption2.push_back(assumption2_holds(n, cfg.delta));

    for (int rep = 0; rep < reps; ++rep) {
        const std::uint64_t rep_seed = derive_seed(cfg.seed, StreamTag::Repetition, std::uint64_t(rep));
        SimConfig truth_cfg = cfg;
        truth_cfg.seed = rep_seed;
        const ObservationPath obs = simulate_truth_and_observations(model, truth_cfg);

        Stream ref_prior(rep_seed, StreamTag::Reference, 0);
        Stream ref_noise(rep_seed, StreamTag::ReferenceNoise, 0);
        Ensembled reference = sample_prior(model, M_ref, ref_prior);

        std::vector<Coupled> runs;
        for (int n : N_list) {
            Stream init(rep_seed, StreamTag::Prior, std::uint64_t(n));
            Ensembled start = options.share_reference ? reference : sample_prior(model, n, init);
            Coupled c{n, start, start, Stream(rep_seed, StreamTag::ParticleNoise, std::uint64_t(n)), {}, {}, true};
            c.row.N = n;
            c.row.rep = rep;
            runs.push_back(std::move(c));
        }

        for (std::size_t s = 0;; ++s) {
            const double t = double(s) * dt;
            bool any_active = false;
            std::vector<MarkovBundled> bundles(runs.size());
            for (std::size_t r = 0; r < runs.size(); ++r) {
                Coupled& c = runs[r];
                if (!c.active) continue;
                bundles[r] = build_markov(c.system, KernelConfig{eps});
                c.monitors.min_q_finite = min_row_mass(bundles[r]);
                c.monitors.min_q_proxy = min_row_mass(c.proxies, eps);
                c.monitors.min_conv = min_kernel_density(c.proxies, reference, eps);
                latch(c.monitors, cfg.delta, t);
                const double D = coupling_error(c.system, c.proxies);
                c.row.D.push_back(D);
                c.row.sup_D = std::max(c.row.sup_D, D);
                c.row.zeta_hat = t;
                if (c.monitors.hit_time) {
                    if (*c.monitors.hit_time == 0.0 && options.stop_at_monitor) {
                        throw ConfigError("monitor statistic below delta at t = 0 for N = " + std::to_string(c.N) +
                                          " (min statistic " + std::to_string(c.monitors.min_statistic()) + ")");
                    }
                    c.row.monitor_hit = true;
                    if (options.stop_at_monitor) c.active = false;
                }
                if (s == steps) c.active = false;
                any_active = any_active || c.active;
            }
            if (!any_active) break;

            const double dZ = obs.dZ(Eigen::Index(s));
            const auto ref_bundle = build_markov(reference, KernelConfig{eps});
            const Eigen::VectorXd h_ref = model.observation.apply(reference.positions());
            GainFieldd ref_field;
            try {
                ref_field = solve_fixed_point(ref_bundle, h_ref, cfg.gain);
            } catch (const IterationError& e) {
                throw IterationError("reference gain solve failed at step " + std::to_string(s), e.last_residual(),
                                     e.iterations());
            }
            const double hhat_ref = innovation_mean(ref_bundle, h_ref, cfg.gain.innovation);
            const Eigen::MatrixXd K_ref = gain_at_particles(ref_bundle, reference, ref_field, cfg.gain);
            const Eigen::MatrixXd dV_ref = ref_noise.normals(M_ref, model.dim, sq);

            for (std::size_t r = 0; r < runs.size(); ++r) {
                Coupled& c = runs[r];
                if (!c.active) continue;
                const Eigen::MatrixXd dV = options.share_reference ? dV_ref : c.noise.normals(c.N, model.dim, sq);
                c.system = fpf_step_with_bundle(c.system, bundles[r], dZ, model, cfg, dV, s, nullptr);
                const Eigen::MatrixXd K_bar = gain_at_points(c.proxies.positions(), reference, ref_bundle, ref_field);
                const Eigen::VectorXd h_bar = model.observation.apply(c.proxies.positions());
                c.proxies = step_with_gain(c.proxies, dZ, model, dt, dV, K_bar, h_bar, hhat_ref, s);
            }
            reference = step_with_gain(reference, dZ, model, dt, dV_ref, K_ref, h_ref, hhat_ref, s);
        }
        for (auto& c : runs) {
            c.row.monitors = c.monitors;
            result.rows.push_back(std::move(c.row));
        }
    }
    return result;
}

} // namespace fpf
