#include "fpf/gain_solver.hpp"

namespace fpf {

InnovationWeights parse_innovation_weights(const std::string& name) {
    if (name == "stationary") return InnovationWeights::Stationary;
    if (name == "row_sum") return InnovationWeights::RowSum;
    if (name == "uniform") return InnovationWeights::Uniform;
    throw ConfigError("unknown innovation weights '" + name + "'");
}

std::string innovation_weights_name(InnovationWeights w) {
    switch (w) {
    case InnovationWeights::Stationary: return "stationary";
    case InnovationWeights::RowSum: return "row_sum";
    case InnovationWeights::Uniform: return "uniform";
    }
    return "";
}

} // namespace fpf
