#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fpf {

// Base of every error raised by the library. `kind()` names the class on the
// command line ("domain", "config", ...).
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class DomainError : public Error {
public:
    explicit DomainError(const std::string& what) : Error("domain", what) {}
};

// Invalid configuration; the CLI maps these to exit code 2.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class IterationError : public Error {
public:
    IterationError(const std::string& what, double last_residual, std::size_t iterations)
        : Error("iteration", what + " (last residual " + std::to_string(last_residual) + " after " +
                                 std::to_string(iterations) + " iterations)"),
          last_residual_(last_residual), iterations_(iterations) {}
    double last_residual() const noexcept { return last_residual_; }
    std::size_t iterations() const noexcept { return iterations_; }

private:
    double last_residual_;
    std::size_t iterations_;
};

class SimulationError : public Error {
public:
    SimulationError(const std::string& what, std::size_t step)
        : Error("simulation", what + " at step " + std::to_string(step)), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class TailError : public Error {
public:
    explicit TailError(const std::string& what) : Error("tail", what) {}
};

class ScopeError : public Error {
public:
    explicit ScopeError(const std::string& what) : Error("scope", what) {}
};

class HypothesisError : public Error {
public:
    explicit HypothesisError(const std::string& what) : Error("hypothesis", what) {}
};

class SingularityError : public Error {
public:
    explicit SingularityError(const std::string& what) : Error("singularity", what) {}
};

class SamplingError : public Error {
public:
    explicit SamplingError(const std::string& what) : Error("sampling", what) {}
};

} // namespace fpf
