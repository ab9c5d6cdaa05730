#include "fpf/experiments.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>

#include "fpf/diagnostics.hpp"
#include "fpf/errors.hpp"
#include "fpf/gain_solver.hpp"
#include "fpf/meanfield.hpp"

namespace fpf {

namespace fs = std::filesystem;

std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

CsvWriter::CsvWriter(const fs::path& path, const std::vector<std::string>& header)
    : file_(std::fopen(path.c_str(), "wb")), columns_(header.size()) {
    if (!file_) throw ConfigError("cannot open " + path.string() + " for writing");
    for (std::size_t k = 0; k < header.size(); ++k) {
        std::fputs(header[k].c_str(), file_);
        std::fputc(k + 1 < header.size() ? ',' : '\n', file_);
    }
}

CsvWriter::~CsvWriter() {
    if (file_) std::fclose(file_);
}

CsvWriter& CsvWriter::operator<<(double v) {
    if (in_row_ > 0) std::fputc(',', file_);
    std::fputs(format_real(v).c_str(), file_);
    ++in_row_;
    return *this;
}

CsvWriter& CsvWriter::operator<<(long long v) {
    if (in_row_ > 0) std::fputc(',', file_);
    std::fprintf(file_, "%lld", v);
    ++in_row_;
    return *this;
}

void CsvWriter::end_row() {
    if (in_row_ != columns_) throw DomainError("CSV row has the wrong number of fields");
    std::fputc('\n', file_);
    in_row_ = 0;
}

namespace {

void append_indexed(std::vector<std::string>& cols, const std::string& stem, int d) {
    for (int k = 1; k <= d; ++k) cols.push_back(stem + "_" + std::to_string(k));
}

} // namespace

std::vector<std::string> filter_csv_header(int d) {
    std::vector<std::string> cols{"t"};
    append_indexed(cols, "truth", d);
    for (const char* m : {"fpf", "enkbf", "kb", "sir"}) append_indexed(cols, std::string("mean_") + m, d);
    for (const char* m : {"fpf", "enkbf", "kb", "sir"}) append_indexed(cols, std::string("var_") + m, d);
    cols.push_back("monitor_min_q");
    cols.push_back("residual");
    return cols;
}

std::vector<std::string> poc_csv_header() { return {"N", "rep", "sup_D", "zeta_hat"}; }

std::vector<std::string> gain_csv_header(int d) {
    std::vector<std::string> cols;
    append_indexed(cols, "x", d);
    for (const char* c : {"K_exact", "K_dm", "K_const", "epsilon"}) cols.push_back(c);
    return cols;
}

std::vector<std::string> bounds_csv_header() {
    return {"epsilon", "c_v", "c_g", "bound1", "measured_sup_K", "bound2", "measured_sup_gradK"};
}

std::vector<std::string> limit_csv_header(int d) {
    std::vector<std::string> cols{"factor", "epsilon", "rel_gap"};
    append_indexed(cols, "mean_K_dm", d);
    append_indexed(cols, "K_const", d);
    return cols;
}

std::vector<std::string> lln_csv_header() { return {"N", "rep", "gap"}; }

Json make_meta(const Json& resolved) {
    Json meta = resolved;
    meta["version"] = artifact_version;
    const double delta = resolved.at("delta").get<double>();
    Json a2 = Json::object();
    a2["N"] = assumption2_holds(resolved.at("N").get<long long>(), delta);
    Json list = Json::array();
    for (const auto& n : resolved.at("N_list")) list.push_back(assumption2_holds(n.get<long long>(), delta));
    a2["N_list"] = list;
    meta["assumption2"] = a2;
    return meta;
}

namespace {

const double nan = std::numeric_limits<double>::quiet_NaN();

void write_json(const fs::path& path, const Json& j) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot open " + path.string() + " for writing");
    os << j.dump(2) << '\n';
}

std::vector<int> int_list(const Json& c, const char* key) { return c.at(key).get<std::vector<int>>(); }

std::vector<double> bandwidths(const Json& c) {
    auto list = c.at("eps_list").get<std::vector<double>>();
    if (list.empty()) list.push_back(c.at("epsilon").get<double>());
    return list;
}

// Gaussian density with the prior's moments on a grid centered at its mean.
DensityGrid prior_grid(const ModelSpec& m, Eigen::Index nodes) {
    const double sd = std::sqrt(m.prior_var);
    Eigen::VectorXd axis = DensityGrid::mirrored_axis(8.0 * sd, nodes);
    axis.array() += m.prior_mean;
    const double mu = m.prior_mean, var = m.prior_var;
    return DensityGrid::from_density(
        m.dim, axis,
        [mu, var](const Eigen::VectorXd& x) { return std::exp(-0.5 * (x.array() - mu).square().sum() / var); },
        1.0 / var);
}

Json fit_json(const RateFit& f) { return Json{{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}}; }

Json constants_json(const ConstantsReport& r) {
    Json j;
    j["epsilon"] = r.params.epsilon;
    j["d"] = r.params.dim;
    j["N"] = r.params.N;
    j["delta"] = r.params.delta;
    j["L_h"] = r.params.L_h;
    j["L_M"] = r.params.L_M;
    j["h_sup"] = r.params.h_sup;
    j["L"] = r.params.iterates;
    j["delta_v"] = r.params.delta_v ? Json(*r.params.delta_v) : Json(nullptr);
    j["phi_sup"] = r.params.phi_sup ? Json(*r.params.phi_sup) : Json(nullptr);
    j["K_g"] = r.K_g;
    j["K_g_direct"] = r.K_g_direct;
    j["K_f"] = r.K_f;
    j["C_phi"] = r.C_phi;
    j["C_gamma"] = r.C_gamma;
    j["C_r1"] = r.C_r1;
    j["C_r2"] = r.C_r2;
    j["K_b"] = r.K_b;
    j["C_K"] = r.C_K;
    j["C_k_growth"] = r.C_k_growth;
    j["script_C"] = r.script_C;
    j["assumption2"] = r.assumption2;
    j["bounded_h"] = r.bounded_h;
    j["finite_n_valid"] = r.finite_n_valid;
    j["growth_valid"] = r.growth_valid;
    j["script_C_valid"] = r.script_C_valid;
    return j;
}

double mean_sq_dev(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return (a - b).rowwise().squaredNorm().mean();
}

struct Diagnosed {
    double min_q;
    double residual;
};

Diagnosed diagnose(const Ensembled& ens, const ModelSpec& m, const SimConfig& s) {
    const auto b = build_markov(ens, KernelConfig{s.gain.epsilon});
    const auto f = solve_fixed_point(b, m.observation.apply(ens.positions()), s.gain);
    return {min_row_mass(b), f.residual};
}

std::vector<std::string> run_filter_compare(const Json& c, const fs::path& out) {
    const ModelSpec m = model_from_config(c);
    const SimConfig s = sim_from_config(c);
    const int d = m.dim;
    const ObservationPath obs = simulate_truth_and_observations(m, s);
    const std::size_t steps = obs.steps();
    const Eigen::Index rows = Eigen::Index(steps) + 1;

    Stream prior(s.seed, StreamTag::Prior, 0);
    Stream noise(s.seed, StreamTag::ParticleNoise, 0);
    Ensembled fpf = sample_prior(m, s.N, prior);
    Ensembled enk = fpf;

    Eigen::MatrixXd kb_mean = Eigen::MatrixXd::Constant(rows, d, nan), kb_var = kb_mean;
    bool have_kb = false;
    try {
        const KalmanPath kb = kalman_bucy(m, obs);
        kb_mean.col(0) = kb.mean;
        kb_var.col(0) = kb.var;
        have_kb = true;
    } catch (const ScopeError&) {
    }
    const SirPath sir = sir_reference(m, obs, c.at("sir_M").get<std::size_t>(), s.seed);

    Eigen::MatrixXd fpf_mean(rows, d), fpf_var(rows, d), enk_mean(rows, d), enk_var(rows, d);
    const std::array<const Eigen::MatrixXd*, 4> mean_cols{&fpf_mean, &enk_mean, &kb_mean, &sir.mean};
    const std::array<const Eigen::MatrixXd*, 4> var_cols{&fpf_var, &enk_var, &kb_var, &sir.var};
    CsvWriter csv(out / "filter.csv", filter_csv_header(d));
    const double sq = std::sqrt(s.dt);
    for (std::size_t k = 0; k <= steps; ++k) {
        const Eigen::Index i = Eigen::Index(k);
        fpf_mean.row(i) = fpf.positions().colwise().mean();
        enk_mean.row(i) = enk.positions().colwise().mean();
        fpf_var.row(i) = (fpf.positions().rowwise() - fpf_mean.row(i)).array().square().colwise().mean();
        enk_var.row(i) = (enk.positions().rowwise() - enk_mean.row(i)).array().square().colwise().mean();

        Diagnosed diag{};
        std::optional<Ensembled> fpf_next, enk_next;
        if (k < steps) {
            StepDiagnostics sd;
            const Eigen::MatrixXd dV = noise.normals(s.N, d, sq);
            const double dZ = obs.dZ(i);
            fpf_next.emplace(step_fpf(fpf, dZ, m, s, dV, k, &sd));
            enk_next.emplace(step_enkbf(enk, dZ, m, s, dV, k));
            diag = {sd.min_row_mass, sd.residual};
        } else {
            diag = diagnose(fpf, m, s);
        }

        csv << double(k) * s.dt;
        for (int q = 0; q < d; ++q) csv << obs.truth(i, q);
        for (const Eigen::MatrixXd* mat : mean_cols)
            for (int q = 0; q < d; ++q) csv << (*mat)(i, q);
        for (const Eigen::MatrixXd* mat : var_cols)
            for (int q = 0; q < d; ++q) csv << (*mat)(i, q);
        csv << diag.min_q << diag.residual;
        csv.end_row();

        if (fpf_next) {
            fpf = std::move(*fpf_next);
            enk = std::move(*enk_next);
        }
    }

    Json rep;
    rep["N"] = s.N;
    rep["steps"] = steps;
    rep["sir_min_ess"] = sir.min_ess;
    rep["sir_resamples"] = sir.resamples;
    rep["sir_degeneracy_warnings"] = sir.degeneracy_warnings;
    if (have_kb) {
        const double p_inf = stationary_riccati_variance(m.drift.param, m.observation.param);
        rep["P_inf"] = p_inf;
        rep["tolerance"] = 10.0 * p_inf / double(s.N);
        rep["msd_fpf_vs_kb"] = mean_sq_dev(fpf_mean, kb_mean);
        rep["msd_enkbf_vs_kb"] = mean_sq_dev(enk_mean, kb_mean);
        rep["msd_sir_vs_kb"] = mean_sq_dev(sir.mean, kb_mean);
    }
    rep["msd_fpf_vs_sir"] = mean_sq_dev(fpf_mean, sir.mean);
    rep["msd_enkbf_vs_sir"] = mean_sq_dev(enk_mean, sir.mean);
    write_json(out / "report.json", rep);
    return {"filter.csv", "report.json"};
}

std::vector<std::string> run_gain_eval(const Json& c, const fs::path& out) {
    const ModelSpec m = model_from_config(c);
    const SimConfig s = sim_from_config(c);
    Stream prior(s.seed, StreamTag::Prior, 0);
    const Ensembled ens = sample_prior(m, s.N, prior);
    const Eigen::VectorXd h = m.observation.apply(ens.positions());
    const DensityGrid grid = prior_grid(m, c.at("grid_nodes").get<Eigen::Index>());
    const Eigen::VectorXd exact = exact_gain_1d(grid, m.observation, ens.positions().col(0));
    const double k_const = constant_gain(ens, h)(0);

    CsvWriter csv(out / "gain.csv", gain_csv_header(1));
    Json entries = Json::array();
    for (double eps : bandwidths(c)) {
        GainConfig g = s.gain;
        g.epsilon = eps;
        const auto b = build_markov(ens, KernelConfig{eps});
        const auto f = solve_fixed_point(b, h, g);
        const Eigen::MatrixXd K = gain_at_particles(b, ens, f, g);
        for (Eigen::Index i = 0; i < ens.size(); ++i) {
            csv << ens.positions()(i, 0) << exact(i) << K(i, 0) << k_const << eps;
            csv.end_row();
        }
        const DiffusionOperator op(grid, eps);
        const MeanFieldField mf = solve_meanfield_fixed_point(op, m.observation);
        const Eigen::VectorXd center = Eigen::VectorXd::Constant(1, m.prior_mean);
        Json e;
        e["epsilon"] = eps;
        e["mean_K_dm"] = K.col(0).mean();
        e["mean_K_exact"] = exact.mean();
        e["K_const"] = k_const;
        e["rel_error_mean"] = std::abs(K.col(0).mean() - exact.mean()) / std::abs(exact.mean());
        e["K_meanfield_at_mean"] = meanfield_gain(center, op, mf)(0);
        e["K_exact_at_mean"] = exact_gain_1d(grid, m.observation, center)(0);
        e["residual"] = f.residual;
        e["iterations"] = f.iterations;
        entries.push_back(e);
    }
    write_json(out / "report.json", Json{{"N", s.N}, {"entries", entries}});
    return {"gain.csv", "report.json"};
}

std::vector<std::string> run_poc(const Json& c, const fs::path& out) {
    const ModelSpec m = model_from_config(c);
    const SimConfig s = sim_from_config(c);
    const std::vector<int> Ns = int_list(c, "N_list");
    PocOptions opt;
    opt.stop_at_monitor = c.at("stop_at_monitor").get<bool>();
    opt.share_reference = c.at("share_reference").get<bool>();
    const PocResult res = run_coupled_poc(m, s, Ns, c.at("M_ref").get<int>(), c.at("reps").get<int>(), opt);

    CsvWriter csv(out / "poc.csv", poc_csv_header());
    for (const auto& r : res.rows) {
        csv << r.N << r.rep << r.sup_D << r.zeta_hat;
        csv.end_row();
    }

    Json rep;
    Json per = Json::array();
    std::vector<std::pair<double, double>> pairs;
    for (std::size_t j = 0; j < Ns.size(); ++j) {
        double sum = 0.0, min_stat = std::numeric_limits<double>::infinity();
        int count = 0, hits = 0;
        for (const auto& r : res.rows) {
            if (r.N != Ns[j]) continue;
            sum += r.sup_D;
            ++count;
            hits += r.monitor_hit ? 1 : 0;
            min_stat = std::min(min_stat, r.monitors.min_statistic());
        }
        const double mean = sum / double(count);
        if (mean > 0.0) pairs.emplace_back(double(Ns[j]), mean);
        per.push_back(Json{{"N", Ns[j]},
                           {"mean_sup_D", mean},
                           {"monitor_hits", hits},
                           {"min_monitor_statistic", min_stat},
                           {"assumption2", bool(res.assumption2[j])}});
    }
    rep["per_N"] = per;
    std::set<double> distinct;
    for (const auto& p : pairs) distinct.insert(p.first);
    rep["fit"] = distinct.size() >= 3 && pairs.size() == Ns.size() ? fit_json(rate_regression(pairs)) : Json(nullptr);
    write_json(out / "report.json", rep);
    return {"poc.csv", "report.json"};
}

std::vector<std::string> run_bounds(const Json& c, const fs::path& out) {
    const ModelSpec m = model_from_config(c);
    const double var = c.at("grid_variance").get<double>();
    const DensityGrid grid = DensityGrid::gaussian(1, var, c.at("grid_nodes").get<Eigen::Index>());
    const double frac = c.at("interior_fraction").get<double>();
    CsvWriter csv(out / "bounds.csv", bounds_csv_header());
    Json entries = Json::array();
    for (double eps : bandwidths(c)) {
        const GainBoundReport r = gain_bound_certificate(grid, m.observation, eps, frac);
        csv << r.epsilon << r.c_v << r.c_g << r.bound1 << r.measured_sup_K << r.bound2 << r.measured_sup_gradK;
        csv.end_row();
        const std::vector<Eigen::VectorXd> probes{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, std::sqrt(var)),
                                                  Eigen::VectorXd::Constant(1, -std::sqrt(var))};
        const PoincareReport pc = poincare_check(grid, eps, probes);
        Json vars = Json::array();
        for (const auto& v : pc.variances) vars.push_back(v(0));
        entries.push_back(Json{{"epsilon", eps},
                               {"pass1", r.pass1},
                               {"pass2", r.pass2},
                               {"poincare_limit", pc.limit},
                               {"poincare_variances", vars},
                               {"poincare_pass", pc.pass}});
    }
    write_json(out / "report.json", Json{{"grid_variance", var}, {"entries", entries}});
    return {"bounds.csv", "report.json"};
}

std::vector<std::string> run_limit(const Json& c, const fs::path& out) {
    const ModelSpec m = model_from_config(c);
    const SimConfig s = sim_from_config(c);
    Stream prior(s.seed, StreamTag::Prior, 0);
    const Ensembled ens = sample_prior(m, s.N, prior);
    const auto points = constant_gain_limit(ens, m.observation.apply(ens.positions()),
                                            c.at("eps_factors").get<std::vector<double>>(), s.gain.tol);
    CsvWriter csv(out / "limit.csv", limit_csv_header(m.dim));
    bool monotone = true;
    for (std::size_t k = 0; k < points.size(); ++k) {
        const auto& p = points[k];
        csv << p.factor << p.epsilon << p.rel_gap;
        for (int q = 0; q < m.dim; ++q) csv << p.mean_gain(q);
        for (int q = 0; q < m.dim; ++q) csv << p.constant_gain(q);
        csv.end_row();
        if (k > 0 && !(p.rel_gap < points[k - 1].rel_gap)) monotone = false;
    }
    write_json(out / "report.json",
               Json{{"monotone", monotone}, {"final_rel_gap", points.empty() ? nan : points.back().rel_gap}});
    return {"limit.csv", "report.json"};
}

std::vector<std::string> run_constants(const Json& c, const fs::path& out) {
    const ModelSpec m = model_from_config(c);
    const SimConfig s = sim_from_config(c);
    ConstantsParams p = constants_params(m, s);
    if (m.dim <= 2) {
        const Eigen::Index nodes = c.at("grid_nodes").get<Eigen::Index>();
        const DensityGrid grid = prior_grid(m, m.dim == 1 ? nodes : std::min<Eigen::Index>(nodes, 201));
        const MeanFieldInputs in = measure_meanfield_inputs(grid, m.observation, s.gain.epsilon);
        p.delta_v = in.delta_v;
        p.phi_sup = in.phi_sup;
    }
    const ConstantsReport r = compute_constants(p);
    const LipschitzReport lip =
        verify_kernel_lipschitz(m.dim, s.gain.epsilon, c.at("lipschitz_samples").get<std::size_t>(), s.seed);

    Json rep = constants_json(r);
    rep["lipschitz"] = Json{{"pairs", lip.pairs},
                            {"sup_quotient_f", lip.sup_quotient_f},
                            {"K_f", lip.K_f},
                            {"pass_f", lip.pass_f},
                            {"sup_quotient_g", lip.sup_quotient_g},
                            {"K_g", lip.K_g},
                            {"K_g_direct", lip.K_g_direct}};
    const int appendix_reps = c.at("appendix_reps").get<int>();
    if (appendix_reps > 0) {
        const AppendixReport a = verify_appendix_inequalities(m, s, appendix_reps);
        rep["appendix"] = Json{{"reps", a.reps},
                               {"attempts", a.attempts},
                               {"slack", a.slack},
                               {"max_lipschitz_quotient", a.max_lipschitz_quotient},
                               {"max_r_spread", a.max_r_spread},
                               {"max_gain_norm", a.max_gain_norm},
                               {"min_row_mass", a.min_row_mass},
                               {"ratio_phi", a.ratio_phi},
                               {"ratio_gamma", a.ratio_gamma},
                               {"ratio_b", a.ratio_b},
                               {"pass_phi", a.pass_phi},
                               {"pass_gamma", a.pass_gamma},
                               {"pass_b", a.pass_b}};
    }
    write_json(out / "report.json", rep);
    return {"report.json"};
}

std::vector<std::string> run_lln(const Json& c, const fs::path& out) {
    const ModelSpec m = model_from_config(c);
    const SimConfig s = sim_from_config(c);
    LlnOptions opt;
    opt.share_reference = c.at("share_reference").get<bool>();
    const LlnReport r =
        lln_gain_gap(m, s, int_list(c, "N_list"), c.at("M_ref").get<int>(), c.at("reps").get<int>(), opt);
    CsvWriter csv(out / "lln.csv", lln_csv_header());
    for (std::size_t j = 0; j < r.N.size(); ++j)
        for (int rep = 0; rep < r.reps; ++rep) {
            csv << r.N[j] << rep << r.gaps[j][std::size_t(rep)];
            csv.end_row();
        }
    Json per = Json::array();
    for (std::size_t j = 0; j < r.N.size(); ++j) {
        per.push_back(Json{{"N", r.N[j]},
                           {"mean_gap", r.mean_gap[j]},
                           {"min_row_mass", r.min_row_mass[j]},
                           {"assumption2", bool(r.assumption2[j])}});
    }
    write_json(out / "report.json",
               Json{{"per_N", per}, {"fit", fit_json(r.fit)}, {"slope_se", r.slope_se}, {"M_ref", r.M_ref}});
    return {"lln.csv", "report.json"};
}

} // namespace

std::vector<std::string> run_experiment(const Json& config, const fs::path& out_dir) {
    const auto errors = validate_config(config);
    if (!errors.empty()) throw ConfigError(errors.front());
    const Json c = resolve_config(config);
    fs::create_directories(out_dir);
    write_json(out_dir / "meta.json", make_meta(c));

    const std::string exp = c.at("experiment").get<std::string>();
    std::vector<std::string> files;
    if (exp == "filter-compare") files = run_filter_compare(c, out_dir);
    else if (exp == "gain-eval") files = run_gain_eval(c, out_dir);
    else if (exp == "poc") files = run_poc(c, out_dir);
    else if (exp == "bounds") files = run_bounds(c, out_dir);
    else if (exp == "limit-enkbf") files = run_limit(c, out_dir);
    else if (exp == "constants") files = run_constants(c, out_dir);
    else if (exp == "lln") files = run_lln(c, out_dir);
    files.insert(files.begin(), "meta.json");
    return files;
}

} // namespace fpf
