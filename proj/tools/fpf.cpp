#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "fpf/config.hpp"
#include "fpf/errors.hpp"
#include "fpf/experiments.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_invalid = 2;
constexpr int exit_runtime = 3;

fpf::Json load_config(const std::string& path) {
    if (path.empty()) return fpf::Json::object();
    std::ifstream is(path);
    if (!is) throw fpf::ConfigError("cannot read config " + path);
    try {
        return fpf::Json::parse(is);
    } catch (const fpf::Json::exception& e) {
        throw fpf::ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
}

struct Inputs {
    std::string config_path;
    std::vector<std::string> sets;
    std::map<std::string, std::string> shortcuts; // key -> raw value
};

void add_config_options(CLI::App* app, Inputs& in) {
    app->add_option("--config", in.config_path, "JSON configuration file");
    app->add_option("--set", in.sets, "override key=value")->take_all();
    for (const auto& key : fpf::config_keys()) {
        auto* opt = app->add_option_function<std::string>(
            "--" + key.name, [&in, name = key.name](const std::string& v) { in.shortcuts[name] = v; }, key.doc);
        opt->type_name(key.name == "seed" ? "U64" : "VALUE");
    }
}

fpf::Json assemble(const Inputs& in) {
    fpf::Json config = load_config(in.config_path);
    for (const auto& [name, value] : in.shortcuts) fpf::apply_override(config, name + "=" + value);
    for (const auto& s : in.sets) fpf::apply_override(config, s);
    return config;
}

int report_error(const fpf::Error& e) {
    std::cerr << "error [" << e.kind() << "]: " << e.what() << '\n';
    const std::string& k = e.kind();
    const bool invalid = k == "config" || k == "domain" || k == "hypothesis" || k == "scope";
    return invalid ? exit_invalid : exit_runtime;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Feedback particle filter experiments"};
    app.require_subcommand(1);

    Inputs run_in, val_in;
    std::string out_dir = "out";
    auto* run = app.add_subcommand("run", "run an experiment");
    add_config_options(run, run_in);
    run->add_option("--out", out_dir, "output directory");
    auto* validate = app.add_subcommand("validate", "list every violation in a configuration");
    add_config_options(validate, val_in);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_invalid;
    }

    const bool is_run = run->parsed();
    const Inputs& in = is_run ? run_in : val_in;
    fpf::Json config;
    try {
        config = assemble(in);
    } catch (const fpf::Error& e) {
        return report_error(e);
    }
    const auto errors = fpf::validate_config(config);
    if (!errors.empty()) {
        for (const auto& e : errors) std::cerr << "error [config]: " << e << '\n';
        return exit_invalid;
    }
    if (!is_run) {
        std::cout << "configuration is valid\n";
        return exit_ok;
    }
    try {
        for (const auto& f : fpf::run_experiment(config, out_dir)) std::cout << (std::filesystem::path(out_dir) / f).string() << '\n';
    } catch (const fpf::Error& e) {
        return report_error(e);
    } catch (const std::exception& e) {
        std::cerr << "error [runtime]: " << e.what() << '\n';
        return exit_runtime;
    }
    return exit_ok;
}
