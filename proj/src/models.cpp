#include "fpf/models.hpp"

#include "fpf/errors.hpp"

namespace fpf {

std::string Drift::name() const {
    switch (kind) {
    case Kind::Linear: return "linear";
    case Kind::DoubleWell: return "double_well";
    case Kind::Sine: return "sine";
    }
    return "";
}

Drift Drift::parse(const std::string& kind, double param) {
    if (kind == "linear") return {Kind::Linear, param};
    if (kind == "double_well") return {Kind::DoubleWell, param};
    if (kind == "sine") return {Kind::Sine, param};
    throw ConfigError("unknown drift '" + kind + "'");
}

std::string Observation::name() const {
    switch (kind) {
    case Kind::Linear: return "linear";
    case Kind::Arctan: return "arctan";
    case Kind::Constant: return "constant";
    }
    return "";
}

Observation Observation::parse(const std::string& kind, double param) {
    if (kind == "linear") return {Kind::Linear, param};
    if (kind == "arctan") return {Kind::Arctan, param};
    if (kind == "constant") return {Kind::Constant, param};
    throw ConfigError("unknown observation '" + kind + "'");
}

void ModelSpec::validate() const {
    if (dim < 1) throw ConfigError("model dimension must be at least 1");
    if (!std::isfinite(drift.param) || !std::isfinite(observation.param)) {
        throw ConfigError("model parameters must be finite");
    }
    if (!std::isfinite(prior_mean) || !(prior_var > 0.0) || !std::isfinite(prior_var)) {
        throw ConfigError("prior variance must be positive and finite");
    }
}

} // namespace fpf
