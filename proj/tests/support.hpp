#pragma once

// Small builders shared by the test binaries.

#include "ilms/config.hpp"
#include "ilms/model.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace ilms::test {

inline std::string source_path(const std::string& rel) { return std::string(ILMS_SOURCE_DIR) + "/" + rel; }

struct ScalarNode {
    double lambda = 1.0;
    double mu = 0.1;
    double sigma_v2 = 0.01;
    double sigma_c2 = 0.0;
    model::ChannelLaw law = model::Ideal{};
};

inline model::NetworkConfig scalar_network(const std::vector<ScalarNode>& nodes, double w_true,
                                           std::uint64_t seed = 1) {
    model::NetworkConfig net;
    net.n = static_cast<int>(nodes.size());
    net.m = 1;
    net.seed = seed;
    net.w_true = Vector::Constant(1, w_true);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const auto& s = nodes[k];
        net.profiles.push_back(model::make_profile(static_cast<int>(k) + 1, s.mu, Matrix::Constant(1, 1, s.lambda),
                                                   s.sigma_v2, Matrix::Constant(1, 1, s.sigma_c2),
                                                   model::IidGaussian{}));
        net.channels.push_back(model::make_channel(s.law));
    }
    return net;
}

inline model::NetworkConfig identical_scalar_network(int n, const ScalarNode& node, double w_true,
                                                     std::uint64_t seed = 1) {
    return scalar_network(std::vector<ScalarNode>(static_cast<std::size_t>(n), node), w_true, seed);
}

/// Two-point law with mean m and second moment s (requires m^2 <= s <= 2 m^2).
inline model::ChannelLaw law_with_moments(double m, double s) {
    const double d = std::sqrt(s - m * m);
    return model::TwoPoint{m - d, m + d, 0.5};
}

/// N nodes, M taps, each with covariance diag-spread matrix in a shared basis.
inline model::NetworkConfig vector_network(int n, int m, double mu, double trace, model::ChannelLaw law,
                                           double sigma_v2, double sigma_c2, std::uint64_t seed = 7) {
    CounterRng basis_rng(seed, 0, 0, 0, Stream::Basis);
    const Matrix basis = model::haar_orthogonal(m, basis_rng);
    model::NetworkConfig net;
    net.n = n;
    net.m = m;
    net.seed = seed;
    net.w_true = Vector::Constant(m, 0.5);
    for (int k = 0; k < n; ++k) {
        const double tr = trace * (1.0 + 0.1 * k);
        net.profiles.push_back(model::make_profile(k + 1, mu, model::build_covariance(m, 4.0, tr, basis), sigma_v2,
                                                   sigma_c2 * Matrix::Identity(m, m), model::IidGaussian{}));
        net.channels.push_back(model::make_channel(law));
    }
    return net;
}

}  // namespace ilms::test
