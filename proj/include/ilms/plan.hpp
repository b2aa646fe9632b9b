#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ilms {

/// How the estimate travels from node k-1 to node k.
enum class LinkMode {
    Ideal,     ///< r = w (no channel)
    Fading,    ///< r = h w + q, adapted raw
    FadingZf,  ///< r = (h w + q) / h_hat, deep fades skipped
};

[[nodiscard]] std::string_view to_string(LinkMode mode) noexcept;
[[nodiscard]] std::optional<LinkMode> parse_link_mode(std::string_view text) noexcept;

enum class SweepParameter { Mu, S };

struct SweepSpec {
    SweepParameter parameter = SweepParameter::Mu;
    std::vector<double> values;
    int node_focus = 0;  ///< 1-based node to report; 0 reports every node
    bool simulate = false;
};

struct ExperimentPlan {
    LinkMode mode = LinkMode::Fading;
    int iterations = 2000;
    int runs = 100;
    int tail = 200;
    int workers = 0;  ///< 0 = OpenMP default
    std::optional<SweepSpec> sweep;

    /// Throws ConfigError naming the plan field.
    void validate() const;
};

}  // namespace ilms
