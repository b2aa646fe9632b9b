#include "ilms/plan.hpp"

#include "ilms/errors.hpp"

#include <cmath>
#include <string>

namespace ilms {

std::string_view to_string(LinkMode mode) noexcept {
    switch (mode) {
        case LinkMode::Ideal: return "ideal";
        case LinkMode::Fading: return "fading";
        case LinkMode::FadingZf: return "fading_zf";
    }
    return "unknown";
}

std::optional<LinkMode> parse_link_mode(std::string_view text) noexcept {
    if (text == "ideal") return LinkMode::Ideal;
    if (text == "fading") return LinkMode::Fading;
    if (text == "fading_zf" || text == "fading+zf") return LinkMode::FadingZf;
    return std::nullopt;
}

void ExperimentPlan::validate() const {
    if (iterations < 1) throw ConfigError("must be >= 1", "plan.iterations");
    if (runs < 1) throw ConfigError("must be >= 1", "plan.runs");
    if (tail < 1) throw ConfigError("must be >= 1", "plan.tail");
    if (tail > iterations) throw ConfigError("tail exceeds iterations", "plan.tail");
    if (workers < 0) throw ConfigError("must be >= 0", "plan.workers");
    if (sweep) {
        if (sweep->values.empty()) throw ConfigError("needs at least one value", "plan.sweep.values");
        for (std::size_t i = 0; i < sweep->values.size(); ++i) {
            const double v = sweep->values[i];
            if (!std::isfinite(v) || !(v > 0.0))
                throw ConfigError("must be finite and positive", "plan.sweep.values[" + std::to_string(i) + "]");
        }
        if (sweep->node_focus < 0) throw ConfigError("must be >= 0", "plan.sweep.node_focus");
    }
}

}  // namespace ilms
