#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "fpf/ensemble.hpp"
#include "fpf/gain_solver.hpp"
#include "fpf/kernels.hpp"
#include "fpf/models.hpp"
#include "fpf/rng.hpp"

namespace fpf {

// True when N > 1 / (4 delta^3).
bool assumption2_holds(long long n, double delta);

struct SimConfig {
    double dt = 0.005;
    double horizon = 1.0;
    std::uint64_t seed = 0;
    int N = 100;
    GainConfig gain;
    double delta = 0.1;

    std::size_t steps() const;
    bool assumption2() const { return assumption2_holds(N, delta); }
    void validate() const;
};

struct ObservationPath {
    Eigen::MatrixXd truth; // (steps + 1) x d, truth.row(k) at t = k dt
    Eigen::VectorXd dZ;    // steps, increment over [k dt, (k+1) dt]
    double dt = 0.0;

    std::size_t steps() const { return std::size_t(dZ.size()); }
};

ObservationPath simulate_truth_and_observations(const ModelSpec& model, const SimConfig& cfg);

Ensembled sample_prior(const ModelSpec& model, Eigen::Index n, Stream& stream);

struct StepDiagnostics {
    double mean_gain_norm = 0.0;
    double residual = 0.0;
    std::size_t iterations = 0;
    double hhat = 0.0;
    double min_row_mass = 0.0; // min_i s_i / N
};

// X <- X + M(X) dt + dV + K(X) [dZ - (h(X) + hhat) dt / 2]
Ensembled step_with_gain(const Ensembled& ens, double dZ, const ModelSpec& model, double dt,
                         const Eigen::MatrixXd& dV, const Eigen::MatrixXd& K, const Eigen::VectorXd& h, double hhat,
                         std::size_t step);

// Diffusion-map gain step. dV holds the signal-noise increments (already
// scaled by sqrt(dt)).
Ensembled step_fpf(const Ensembled& ens, double dZ, const ModelSpec& model, const SimConfig& cfg,
                   const Eigen::MatrixXd& dV, std::size_t step = 0, StepDiagnostics* diag = nullptr);

// Constant-gain (ensemble Kalman-Bucy) step with the uniform mean of h.
Ensembled step_enkbf(const Ensembled& ens, double dZ, const ModelSpec& model, const SimConfig& cfg,
                     const Eigen::MatrixXd& dV, std::size_t step = 0, StepDiagnostics* diag = nullptr);

struct KalmanPath {
    Eigen::VectorXd mean; // steps + 1
    Eigen::VectorXd var;
};

// Fixed point of dP = (2aP + 1 - c^2 P^2) dt; infinite when there is none.
double stationary_riccati_variance(double a, double c);

// Scalar linear-Gaussian filter; other models raise ScopeError.
KalmanPath kalman_bucy(const ModelSpec& model, const ObservationPath& obs);

struct SirPath {
    Eigen::MatrixXd mean; // (steps + 1) x d
    Eigen::MatrixXd var;
    double min_ess = 0.0;
    std::size_t resamples = 0;
    std::size_t degeneracy_warnings = 0; // steps with ESS < 10
};

// Bootstrap particle filter with systematic resampling when ESS < M/2.
SirPath sir_reference(const ModelSpec& model, const ObservationPath& obs, std::size_t M, std::uint64_t seed);

struct MonitorState {
    double min_q_finite = std::numeric_limits<double>::infinity();
    double min_q_proxy = std::numeric_limits<double>::infinity();
    double min_conv = std::numeric_limits<double>::infinity();
    std::optional<double> hit_time;

    double min_statistic() const;
};

// min_i (1/N) sum_k q(X^i, X^k) = min_i s_i / N
template <typename Scalar>
double min_row_mass(const MarkovBundle<Scalar>& b) {
    return double(b.s.minCoeff()) / double(b.size());
}

double min_row_mass(const Ensembled& ens, double epsilon);

// min_i (1/M) sum_m g(x^i, Y^m)
double min_kernel_density(const Ensembled& points, const Ensembled& reference, double epsilon);

// Recomputes the statistics at time t and latches hit_time the first time
// any of them drops below delta.
void update_monitors(MonitorState& state, const Ensembled& system, const Ensembled& proxies,
                     const Ensembled& reference, double epsilon, double delta, double t);
void update_monitors(MonitorState& state, const Ensembled& system, double epsilon, double delta, double t);

struct PocOptions {
    // Stop each system at its first monitor hit; a hit at t = 0 is then a
    // configuration error. When false the hit is only recorded.
    bool stop_at_monitor = true;
    // With N == M_ref: system, proxies and reference share initial states and
    // noises; the coupling error is then identically zero.
    bool share_reference = false;
};

struct PocRow {
    int N = 0;
    int rep = 0;
    double sup_D = 0.0;
    double zeta_hat = 0.0;
    bool monitor_hit = false;
    MonitorState monitors;
    std::vector<double> D; // D_N(t) at every evaluated step
};

struct PocResult {
    std::vector<PocRow> rows;
    std::vector<bool> assumption2; // per entry of N_list
};

PocResult run_coupled_poc(const ModelSpec& model, const SimConfig& cfg, const std::vector<int>& N_list, int M_ref,
                          int reps, const PocOptions& options = {});

} // namespace fpf
