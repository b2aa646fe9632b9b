#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ilms {

/// Invalid or inconsistent experiment description. `path` names the offending
/// field (e.g. "channels[3].params.mean") when known.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& message, std::string path = {})
        : std::runtime_error(path.empty() ? message : path + ": " + message),
          path_(std::move(path)) {}

    [[nodiscard]] const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

/// Singular or ill-posed linear algebra that is not a stability question.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A closed-form quantity was requested outside the region where it exists
/// (mean or mean-square stability margin not strictly inside the unit circle).
class InstabilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The simplified approximations were evaluated with s_p (1 - 2 mu lambda)^N >= 1.
class ApproximationDomainError : public InstabilityError {
public:
    using InstabilityError::InstabilityError;
};

/// A simulated estimate left the finite range (non-finite or |w| > 1e9).
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(std::int64_t run, int node, int iteration)
        : std::runtime_error("estimate diverged at run " + std::to_string(run) + ", node " +
                             std::to_string(node) + ", iteration " + std::to_string(iteration)),
          run_(run), node_(node), iteration_(iteration) {}

    [[nodiscard]] std::int64_t run() const noexcept { return run_; }
    [[nodiscard]] int node() const noexcept { return node_; }
    [[nodiscard]] int iteration() const noexcept { return iteration_; }

private:
    std::int64_t run_;
    int node_;
    int iteration_;
};

}  // namespace ilms
