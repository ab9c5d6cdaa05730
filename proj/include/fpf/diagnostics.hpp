#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "fpf/density_grid.hpp"
#include "fpf/filtering.hpp"
#include "fpf/models.hpp"

namespace fpf {

struct ConstantsParams {
    double epsilon = 1.0;
    int dim = 1;
    long long N = 2;
    double delta = 0.1;
    double L_h = 0.0;
    double L_M = 0.0;
    double h_sup = 0.0;
    int iterates = 0; // sweeps behind the linear-growth constant; 0 when unknown
    std::optional<double> delta_v;
    std::optional<double> phi_sup;
};

ConstantsParams constants_params(const ModelSpec& model, const SimConfig& cfg);

// Constants of the finite-N analysis. Every constant whose hypotheses fail is
// NaN and its flag is false.
struct ConstantsReport {
    ConstantsParams params;
    double K_g = 0.0;        // 2 d eps / e
    double K_g_direct = 0.0; // sup |grad g| = e^{-1/2} / sqrt(2 eps)
    double K_f = 0.0;
    double C_phi = 0.0;
    double C_gamma = 0.0;
    double C_r1 = 0.0;
    double C_r2 = 0.0;
    double K_b = 0.0;
    double C_K = 0.0;
    double C_k_growth = 0.0;
    double script_C = 0.0;
    bool assumption2 = false;
    bool bounded_h = false;
    bool finite_n_valid = false; // C_phi .. C_K
    bool growth_valid = false;          // C_k_growth
    bool script_C_valid = false;
};

ConstantsReport compute_constants(const ConstantsParams& p);

// Measured sup norm of the mean-field potential and first moment of nu,
// the two inputs of script_C that have no closed form.
struct MeanFieldInputs {
    double delta_v = 0.0;
    double phi_sup = 0.0;
};

MeanFieldInputs measure_meanfield_inputs(const DensityGrid& grid, const Observation& h, double epsilon);

struct LipschitzReport {
    int dim = 1;
    double epsilon = 1.0;
    std::size_t pairs = 0;
    double sup_quotient_f = 0.0; // f(z) = z exp(-|z|^2 / 4 eps)
    double K_f = 0.0;
    bool pass_f = false;
    double sup_quotient_g = 0.0; // w -> exp(-|w|^2 / 4 eps)
    double K_g = 0.0;
    double K_g_direct = 0.0;
};

LipschitzReport verify_kernel_lipschitz(int dim, double epsilon, std::size_t samples, std::uint64_t seed);

struct AppendixReport {
    ConstantsReport constants;
    int reps = 0;
    std::size_t attempts = 0;
    double slack = 10.0;
    double max_lipschitz_quotient = 0.0; // max |r_k - r_l| / |X^k - X^l|
    double max_r_spread = 0.0;           // max |r_k - r_l|
    double max_gain_norm = 0.0;          // max |K_i|
    double min_row_mass = 0.0;
    double ratio_phi = 0.0;   // quotient / C_phi
    double ratio_gamma = 0.0; // spread / C_gamma
    double ratio_b = 0.0;     // gain / K_b
    bool pass_phi = false;
    bool pass_gamma = false;
    bool pass_b = false;
};

// Draws `reps` ensembles of size cfg.N from the prior, each redrawn up to 100
// times until min_i s_i / N >= delta.
AppendixReport verify_appendix_inequalities(const ModelSpec& model, const SimConfig& cfg, int reps);

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

// Least squares of log value on log N.
RateFit rate_regression(const std::vector<std::pair<double, double>>& pairs);

struct LlnOptions {
    // samples identical to the reference; needs N == M_ref
    bool share_reference = false;
};

struct LlnReport {
    std::vector<int> N;
    std::vector<double> mean_gap;         // mean over reps of (1/N) sum_i |K_ref - K_N|^2
    std::vector<double> min_row_mass;     // smallest s_i / N over reps
    std::vector<bool> assumption2;
    std::vector<std::vector<double>> gaps; // [N index][rep]
    RateFit fit;
    double slope_se = 0.0; // standard error of the per-rep slopes
    int reps = 0;
    int M_ref = 0;
};

// Gap between the gain on N prior samples and the gain of an independent
// M_ref-sample reference ensemble, both evaluated at the N samples.
LlnReport lln_gain_gap(const ModelSpec& model, const SimConfig& cfg, const std::vector<int>& N_list, int M_ref,
                       int reps, const LlnOptions& options = {});

struct LimitPoint {
    double factor = 0.0;
    double epsilon = 0.0;
    Eigen::VectorXd mean_gain;     // particle average of the diffusion-map gain
    Eigen::VectorXd constant_gain;
    double rel_gap = 0.0;          // |mean_gain - constant_gain| / |constant_gain|
};

// Diffusion-map gain against the constant gain at eps = factor * spread^2,
// spread^2 the per-coordinate population variance averaged over coordinates.
std::vector<LimitPoint> constant_gain_limit(const Ensembled& ens, const Eigen::VectorXd& h,
                                            const std::vector<double>& factors, double tol = 1e-10);

struct BrascampLiebReport {
    double covariance = 0.0;
    double bound = 0.0; // variance * |g'|_2 |h'|_2
    double standard_error = 0.0;
    bool pass = false;
};

// |Cov(g, h)| <= (1/kappa) |grad g|_2 |grad h|_2 under N(0, variance) with
// kappa = 1/variance, by Monte Carlo with a three standard error slack.
BrascampLiebReport brascamp_lieb_check(double variance, const Observation& g, const Observation& h,
                                       std::size_t samples, std::uint64_t seed);

} // namespace fpf
