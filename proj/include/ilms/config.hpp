#pragma once

// JSON experiment descriptions.
//
// Top level: `network` {n, m, w_true, seed}, `profiles`, `channels`, `plan`.
// `profiles` and `channels` are either arrays of N entries or a single object
// used as a template for every node. Any scalar profile field may be given as
// {"uniform": [lo, hi]}, drawn per node from the seed's configuration stream.
//
// Profile fields:
//   mu, sigma_v2
//   ru:        {spread, trace, basis: "shared" | "independent" | "identity"}
//              or an explicit row-major matrix; omitted for ar1_shift regressors
//   q:         {sigma_c2} (Q = sigma_c2 I) or an explicit matrix, default 0
//   regressor: "iid_gaussian" | {"ar1_shift": {alpha, sigma_u2}}
//   allow_wide_alpha
//
// Channel fields: law ("ideal" | "constant" | "rayleigh" | "two_point"), its
// parameters (inline or under `params`): h; mean or sigma_r; h1, h2, p. Also
// estimation_error_var and optional stored moments m, s (checked).

#include "ilms/model.hpp"
#include "ilms/plan.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace ilms::config {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> runs, iterations, tail, workers;
    std::optional<std::string> mode;
};

struct LoadedConfig {
    model::NetworkConfig network;
    ExperimentPlan plan;
    nlohmann::json resolved;  ///< every derived value spelled out; re-parses to the same experiment
    std::uint64_t hash = 0;   ///< FNV-1a of the resolved document
};

[[nodiscard]] LoadedConfig parse_config_json(const nlohmann::json& doc, const Overrides& overrides = {});
[[nodiscard]] LoadedConfig parse_config_text(const std::string& text, const Overrides& overrides = {});
/// Throws ConfigError on unreadable files, malformed JSON or schema violations.
[[nodiscard]] LoadedConfig parse_config(const std::filesystem::path& path, const Overrides& overrides = {});

[[nodiscard]] nlohmann::json network_to_json(const model::NetworkConfig& network);
[[nodiscard]] nlohmann::json plan_to_json(const ExperimentPlan& plan);

[[nodiscard]] std::uint64_t fnv1a(const std::string& bytes) noexcept;
[[nodiscard]] std::string hex64(std::uint64_t value);

}  // namespace ilms::config
