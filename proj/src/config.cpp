#include "fpf/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "fpf/errors.hpp"
#include "fpf/gain_solver.hpp"

namespace fpf {

const std::vector<KeySpec>& config_keys() {
    using K = KeyType;
    static const std::vector<KeySpec> keys{
        {"experiment", K::String, true, nullptr, "experiment id"},
        {"seed", K::UInt, true, nullptr, "master seed"},
        {"epsilon", K::Real, true, nullptr, "kernel bandwidth"},
        {"d", K::Int, true, nullptr, "state dimension"},
        {"drift", K::String, false, "linear", "linear | double_well | sine"},
        {"drift_param", K::Real, false, -1.0, "drift coefficient; defaults to -1 for linear, 1 otherwise"},
        {"observation", K::String, false, "linear", "linear | arctan | constant"},
        {"observation_param", K::Real, false, 1.0, "observation coefficient"},
        {"prior_mean", K::Real, false, 0.0, "initial mean per coordinate"},
        {"prior_var", K::Real, false, 1.0, "initial variance per coordinate"},
        {"dt", K::Real, false, 0.005, "time step"},
        {"horizon", K::Real, false, 1.0, "final time"},
        {"N", K::Int, false, 100, "particle count"},
        {"delta", K::Real, false, 0.1, "monitor threshold"},
        {"solver", K::String, false, "to_tolerance", "to_tolerance | fixed_iterates"},
        {"iterates", K::Int, false, 1, "sweeps in fixed_iterates mode"},
        {"tol", K::Real, false, 1e-8, "sup-norm residual in to_tolerance mode"},
        {"max_iter", K::Int, false, 0, "sweep cap, 0 for automatic"},
        {"innovation", K::String, false, "stationary", "stationary | row_sum | uniform"},
        {"N_list", K::IntList, false, Json::array({50, 100, 200, 400}), "particle counts for rate experiments"},
        {"M_ref", K::Int, false, 3200, "reference ensemble size"},
        {"reps", K::Int, false, 20, "repetitions"},
        {"sir_M", K::Int, false, 100000, "bootstrap filter sample size"},
        {"eps_list", K::RealList, false, Json::array(), "bandwidths to sweep, empty for epsilon alone"},
        {"eps_factors", K::RealList, false, Json::array({1.0, 10.0, 100.0}), "bandwidths as multiples of the spread"},
        {"grid_variance", K::Real, false, 0.5, "variance of the gaussian density grid"},
        {"grid_nodes", K::Int, false, 2001, "grid nodes per axis"},
        {"interior_fraction", K::Real, false, 0.75, "fraction of the grid half-width for sups"},
        {"lipschitz_samples", K::Int, false, 100000, "pairs for the Lipschitz check"},
        {"appendix_reps", K::Int, false, 0, "ensembles for the appendix inequalities"},
        {"stop_at_monitor", K::Bool, false, true, "stop coupled runs at the first monitor hit"},
        {"share_reference", K::Bool, false, false, "coupled runs share the reference ensemble"},
    };
    return keys;
}

const KeySpec* find_key(const std::string& name) {
    for (const auto& k : config_keys())
        if (k.name == name) return &k;
    return nullptr;
}

namespace {

bool is_int(const Json& v) { return v.is_number_integer(); }

bool matches(KeyType t, const Json& v) {
    switch (t) {
    case KeyType::Int: return is_int(v);
    case KeyType::UInt: return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
    case KeyType::Real: return v.is_number();
    case KeyType::String: return v.is_string();
    case KeyType::Bool: return v.is_boolean();
    case KeyType::IntList:
        return v.is_array() && std::all_of(v.begin(), v.end(), [](const Json& e) { return is_int(e); });
    case KeyType::RealList:
        return v.is_array() && std::all_of(v.begin(), v.end(), [](const Json& e) { return e.is_number(); });
    }
    return false;
}

std::string type_name(KeyType t) {
    switch (t) {
    case KeyType::Int: return "an integer";
    case KeyType::UInt: return "a non-negative integer";
    case KeyType::Real: return "a number";
    case KeyType::String: return "a string";
    case KeyType::Bool: return "a boolean";
    case KeyType::IntList: return "a list of integers";
    case KeyType::RealList: return "a list of numbers";
    }
    return "";
}

bool is_meta(const std::string& k) {
    const auto& m = meta_keys();
    return std::find(m.begin(), m.end(), k) != m.end();
}

Json parse_list(const std::string& text) {
    Json out = Json::array();
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(Json::parse(item));
    return out;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

} // namespace

Json parse_override(const KeySpec& key, const std::string& text) {
    Json v;
    try {
        if (key.type == KeyType::String) {
            v = (!text.empty() && text.front() == '"') ? Json::parse(text) : Json(text);
        } else if (key.type == KeyType::IntList || key.type == KeyType::RealList) {
            v = (!text.empty() && text.front() == '[') ? Json::parse(text) : parse_list(text);
        } else {
            v = Json::parse(text);
        }
    } catch (const Json::exception&) {
        throw ConfigError("cannot parse value '" + text + "' for key " + key.name);
    }
    if (!matches(key.type, v)) throw ConfigError("key " + key.name + " must be " + type_name(key.type));
    return v;
}

void apply_override(Json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string name = assignment.substr(0, eq);
    const KeySpec* key = find_key(name);
    if (!key) throw ConfigError("unknown key: " + name);
    config[name] = parse_override(*key, assignment.substr(eq + 1));
}

std::vector<std::string> validate_config(const Json& config) {
    std::vector<std::string> errors;
    if (!config.is_object()) return {"configuration must be a JSON object"};

    for (auto it = config.begin(); it != config.end(); ++it) {
        if (!find_key(it.key()) && !is_meta(it.key())) errors.push_back("unknown key: " + it.key());
    }
    bool typed = true;
    for (const auto& k : config_keys()) {
        if (!config.contains(k.name)) {
            if (k.required) {
                errors.push_back("missing required key: " + k.name);
                typed = false;
            }
            continue;
        }
        if (!matches(k.type, config.at(k.name))) {
            errors.push_back(k.name + " must be " + type_name(k.type));
            typed = false;
        }
    }
    if (!typed) {
        // value checks below need every present key to have its type; still
        // report what can be checked independently
        if (config.contains("epsilon") && config["epsilon"].is_number() && !(config["epsilon"].get<double>() > 0.0)) {
            errors.push_back("epsilon must be positive");
        }
        return errors;
    }

    const Json c = resolve_config(config);
    auto real = [&](const char* k) { return c.at(k).get<double>(); };
    auto integer = [&](const char* k) { return c.at(k).get<long long>(); };
    const std::string exp = c.at("experiment").get<std::string>();
    const auto& names = experiment_names();
    if (std::find(names.begin(), names.end(), exp) == names.end()) errors.push_back("unknown experiment: " + exp);

    const double eps = real("epsilon");
    if (!(eps > 0.0) || !std::isfinite(eps)) errors.push_back("epsilon must be positive");
    for (const auto& e : c.at("eps_list"))
        if (!(e.get<double>() > 0.0) || !std::isfinite(e.get<double>())) {
            errors.push_back("every eps_list entry must be positive");
            break;
        }
    for (const auto& e : c.at("eps_factors"))
        if (!(e.get<double>() > 0.0) || !std::isfinite(e.get<double>())) {
            errors.push_back("every eps_factors entry must be positive");
            break;
        }
    const long long d = integer("d");
    if (d < 1) errors.push_back("d must be at least 1");

    try {
        Drift::parse(c.at("drift").get<std::string>(), 0.0);
    } catch (const ConfigError& e) {
        errors.push_back(e.what());
    }
    bool obs_ok = true;
    try {
        Observation::parse(c.at("observation").get<std::string>(), 0.0);
    } catch (const ConfigError& e) {
        errors.push_back(e.what());
        obs_ok = false;
    }
    if (!std::isfinite(real("drift_param")) || !std::isfinite(real("observation_param"))) {
        errors.push_back("model parameters must be finite");
    }
    if (!std::isfinite(real("prior_mean"))) errors.push_back("prior_mean must be finite");
    if (!(real("prior_var") > 0.0) || !std::isfinite(real("prior_var"))) errors.push_back("prior_var must be positive");

    const double dt = real("dt"), horizon = real("horizon");
    if (!(dt > 0.0)) errors.push_back("dt must be positive");
    if (!(horizon > 0.0)) errors.push_back("horizon must be positive");
    if (dt > 0.0 && horizon > 0.0 && dt > horizon) errors.push_back("dt must not exceed the horizon");

    const long long N = integer("N");
    const double delta = real("delta");
    if (N < 2) errors.push_back("N must be at least 2");
    const bool delta_ok = delta > 0.0 && delta < 1.0;
    if (!delta_ok) errors.push_back("delta must lie in (0, 1)");

    auto assumption2_message = [&](long long n) {
        return "Assumption 2 violated: N = " + std::to_string(n) + " must exceed 1/(4 delta^3) = " +
               fmt(1.0 / (4.0 * delta * delta * delta));
    };
    if (delta_ok && (exp == "filter-compare" || N < 2) && !assumption2_holds(N, delta))
        errors.push_back(assumption2_message(N));

    const std::string solver = c.at("solver").get<std::string>();
    if (solver != "to_tolerance" && solver != "fixed_iterates") {
        errors.push_back("solver must be to_tolerance or fixed_iterates");
    }
    if (integer("iterates") < 1) errors.push_back("iterates must be at least 1");
    if (!(real("tol") > 0.0)) errors.push_back("tol must be positive");
    if (integer("max_iter") < 0) errors.push_back("max_iter must be non-negative");
    try {
        parse_innovation_weights(c.at("innovation").get<std::string>());
    } catch (const ConfigError& e) {
        errors.push_back(e.what());
    }

    const auto N_list = c.at("N_list").get<std::vector<long long>>();
    const long long M_ref = integer("M_ref");
    if (N_list.empty()) errors.push_back("N_list must not be empty");
    for (long long n : N_list)
        if (n < 2) {
            errors.push_back("every N_list entry must be at least 2");
            break;
        }
    if (integer("reps") < 1) errors.push_back("reps must be at least 1");
    if (integer("sir_M") < 2) errors.push_back("sir_M must be at least 2");
    if (!(real("grid_variance") > 0.0)) errors.push_back("grid_variance must be positive");
    if (integer("grid_nodes") < 3) errors.push_back("grid_nodes must be at least 3");
    const double frac = real("interior_fraction");
    if (!(frac > 0.0 && frac <= 1.0)) errors.push_back("interior_fraction must lie in (0, 1]");
    if (integer("lipschitz_samples") < 10000) errors.push_back("lipschitz_samples must be at least 10000");
    if (integer("appendix_reps") < 0) errors.push_back("appendix_reps must be non-negative");

    if (exp == "poc" || exp == "lln") {
        if (c.at("share_reference").get<bool>()) {
            for (long long n : N_list)
                if (n != M_ref) {
                    errors.push_back("share_reference needs every N_list entry equal to M_ref");
                    break;
                }
        } else if (!N_list.empty() && M_ref < 8 * *std::max_element(N_list.begin(), N_list.end())) {
            errors.push_back("M_ref must be at least 8 max(N_list)");
        }
        if (obs_ok &&
            !Observation::parse(c.at("observation").get<std::string>(), real("observation_param")).is_bounded()) {
            errors.push_back(exp + " needs a bounded observation");
        }
    }
    if (exp == "poc" && delta_ok) {
        for (long long n : N_list)
            if (!assumption2_holds(n, delta)) errors.push_back(assumption2_message(n));
    }
    if ((exp == "bounds" || exp == "gain-eval") && d != 1) errors.push_back(exp + " needs d = 1");
    return errors;
}

Json resolve_config(const Json& config) {
    Json out = Json::object();
    for (const auto& k : config_keys()) {
        if (config.contains(k.name)) {
            out[k.name] = config.at(k.name);
        } else if (!k.required) {
            out[k.name] = k.fallback;
        }
    }
    // a negative scale makes the nonlinear drifts repel from the origin
    if (!config.contains("drift_param") && out.at("drift") != "linear") out["drift_param"] = 1.0;
    return out;
}

ModelSpec model_from_config(const Json& c) {
    ModelSpec m;
    m.dim = c.at("d").get<int>();
    m.drift = Drift::parse(c.at("drift").get<std::string>(), c.at("drift_param").get<double>());
    m.observation = Observation::parse(c.at("observation").get<std::string>(), c.at("observation_param").get<double>());
    m.prior_mean = c.at("prior_mean").get<double>();
    m.prior_var = c.at("prior_var").get<double>();
    return m;
}

SimConfig sim_from_config(const Json& c) {
    SimConfig s;
    s.dt = c.at("dt").get<double>();
    s.horizon = c.at("horizon").get<double>();
    s.seed = c.at("seed").get<std::uint64_t>();
    s.N = c.at("N").get<int>();
    s.delta = c.at("delta").get<double>();
    const double eps = c.at("epsilon").get<double>();
    if (c.at("solver").get<std::string>() == "fixed_iterates") {
        s.gain = GainConfig::fixed_iterates(eps, c.at("iterates").get<int>());
    } else {
        s.gain = GainConfig::to_tolerance(eps, c.at("tol").get<double>(), c.at("max_iter").get<std::size_t>());
    }
    s.gain.iterates = c.at("iterates").get<int>();
    s.gain.tol = c.at("tol").get<double>();
    s.gain.max_iter = c.at("max_iter").get<std::size_t>();
    s.gain.innovation = parse_innovation_weights(c.at("innovation").get<std::string>());
    return s;
}

} // namespace fpf
