#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "fpf/filtering.hpp"
#include "fpf/models.hpp"

namespace fpf {

using Json = nlohmann::ordered_json;

inline const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names{"filter-compare", "gain-eval", "poc",     "bounds",
                                                "limit-enkbf",    "constants", "lln"};
    return names;
}

enum class KeyType { Int, UInt, Real, String, Bool, IntList, RealList };

struct KeySpec {
    std::string name;
    KeyType type;
    bool required;
    Json fallback; // default for optional keys
    std::string doc;
};

// Every accepted configuration key, in output order.
const std::vector<KeySpec>& config_keys();
const KeySpec* find_key(const std::string& name);

// Keys written to meta.json next to the configuration; accepted and ignored
// when meta.json is read back as a configuration.
inline const std::vector<std::string>& meta_keys() {
    static const std::vector<std::string> keys{"version", "assumption2"};
    return keys;
}

inline constexpr const char* artifact_version = "0.1.0";

// Parses `text` as a value of the key's type. Lists accept JSON arrays or
// comma-separated numbers; strings are taken verbatim unless quoted.
Json parse_override(const KeySpec& key, const std::string& text);

// Applies a `key=value` override; throws ConfigError on an unknown key or a
// malformed value.
void apply_override(Json& config, const std::string& assignment);

// All violations of `config`, empty when it is valid.
std::vector<std::string> validate_config(const Json& config);

// Config with every optional key filled from its default, meta keys removed.
// Requires a valid config.
Json resolve_config(const Json& config);

ModelSpec model_from_config(const Json& resolved);
SimConfig sim_from_config(const Json& resolved);

} // namespace fpf
