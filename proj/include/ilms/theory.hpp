#pragma once

// Closed-form steady-state analysis of the incremental LMS ring over fading
// links: mean stability and bias, the weighted-variance machinery in each
// node's eigenbasis, and the resulting MSD / EMSE / MSE predictions.
//
// Node indices in this interface are 1-based and taken mod N.

#include "ilms/model.hpp"
#include "ilms/plan.hpp"

#include <string>
#include <vector>

namespace ilms::theory {

using model::NetworkConfig;

/// Link statistics as seen by the analysis after the link mode is applied.
struct EffectiveLink {
    double m = 1.0;
    double s = 1.0;
    Matrix q;  ///< additive noise covariance entering the adaptation
};

struct NodeTerms {
    double mu = 0.0;
    double sigma_v2 = 0.0;
    Matrix ru;
    EffectiveLink link;

    Matrix j;       ///< I - mu R
    Matrix u;       ///< eigenvectors of R (columns)
    Vector lambda;  ///< eigenvalues of R, ascending
    Matrix fbar;    ///< I - 2 mu Lambda + mu^2 (Lambda^2 + lambda lambda^T)
    Matrix qbar;    ///< U^T Q U
    Vector wbar;    ///< U^T w°
    Vector d_diag;  ///< diag of wbar wbar^T
};

/// Derived quantities for one (config, link mode) pair. Immutable once built.
struct TheoryWorkspace {
    int n = 0;
    int m = 0;
    Vector w_true;
    LinkMode mode = LinkMode::Fading;
    std::vector<NodeTerms> nodes;

    Matrix mean_product;  ///< A_N ... A_1 with A_k = m_k J_k
    Matrix mean_offset;   ///< sum_n (A_N ... A_{n+1}) (1 - m_n) J_n
    double rho_mean = 0.0;
    bool mean_stable = false;
    /// C_k with E[w~_k] -> C_k w° (original coordinates), k = 1..N at index k-1.
    /// Empty when the mean recursion is unstable.
    std::vector<Matrix> c_inf;
    double s_product = 1.0;

    [[nodiscard]] const NodeTerms& node(int k) const;  ///< 1-based, wraps mod N
};

/// Throws ConfigError when the ZF analysis is requested for imperfect CSI or a
/// gain law with unbounded E[1/h^2].
[[nodiscard]] TheoryWorkspace build_workspace(const NetworkConfig& config, LinkMode mode);

// ---------------------------------------------------------------------------
// Mean behaviour

struct StepSizeRange {
    double lo = 0.0;
    double hi = 0.0;
};

/// Sufficient per-node interval for mean stability. Throws ConfigError if m_k <= 0.
[[nodiscard]] StepSizeRange mean_step_size_range(const TheoryWorkspace& ws, int k);

struct MeanStability {
    bool stable = false;
    double rho = 0.0;
};

[[nodiscard]] MeanStability mean_stability_check(const TheoryWorkspace& ws);

/// End-of-cycle limit of E[w~] (after node N). Throws InstabilityError when
/// the mean recursion is not strictly stable.
[[nodiscard]] Vector asymptotic_bias(const TheoryWorkspace& ws);

/// lim E[w~_{k,i}] after node k.
[[nodiscard]] Vector node_bias(const TheoryWorkspace& ws, int k);

/// E[w~] at the end of cycles 0..i_max; element 0 is `w0_err`.
[[nodiscard]] std::vector<Vector> iterate_mean_recursion(const TheoryWorkspace& ws, const Vector& w0_err,
                                                         int i_max);

// ---------------------------------------------------------------------------
// Mean-square machinery

[[nodiscard]] Matrix fbar_from(const Vector& lambda, double mu);
[[nodiscard]] Matrix build_Fbar(const TheoryWorkspace& ws, int k);

struct NodeStability {
    double mu_lo = 0.0;  ///< NaN when m_k = 0
    double mu_hi = 0.0;
    double ms_margin = 0.0;  ///< s_k rho(Fbar_k)
    double rho_pi = 0.0;     ///< rho(Pi_{k,1})
};

struct StabilityReport {
    std::vector<NodeStability> nodes;
    double rho_mean = 0.0;
    bool mean_stable = false;
    bool ms_stable = false;          ///< every ms_margin < 1
    bool network_ms_stable = false;  ///< every rho_pi < 1
};

[[nodiscard]] StabilityReport ms_stability_check(const TheoryWorkspace& ws);

/// U_k^T C_{k-1} U_k, the mean-coupling matrix entering g_k.
[[nodiscard]] Matrix build_Cbar_inf(const TheoryWorkspace& ws, int k);

[[nodiscard]] RowVector build_g(const TheoryWorkspace& ws, int k);

/// Ordered product s_j Fbar_j over j = k+l-1, ..., k-1+N (mod N); l = N+1 is I.
[[nodiscard]] Matrix build_Pi(const TheoryWorkspace& ws, int k, int l);

/// sum_{l=2}^{N+1} g_{k+l-2} Pi_{k,l}.
[[nodiscard]] RowVector build_a(const TheoryWorkspace& ws, int k);

struct NodePrediction {
    double eta = 0.0, zeta = 0.0, xi = 0.0;
    double eta_db = 0.0, zeta_db = 0.0, xi_db = 0.0;
    Vector bias;
    double bias_norm = 0.0;
    double condition = 1.0;  ///< of I - Pi_{k,1}
};

struct SteadyStatePrediction {
    std::vector<NodePrediction> nodes;
    std::vector<std::string> warnings;
};

/// Condition number above which a warning is attached.
inline constexpr double kConditionWarning = 1e12;

/// Throws InstabilityError unless the mean and every mean-square margin are
/// strictly stable, and NumericalError-free inversion of I - Pi_{k,1} is possible.
[[nodiscard]] SteadyStatePrediction steady_state_prediction(const TheoryWorkspace& ws);

// ---------------------------------------------------------------------------
// Simplified closed forms (m = 1, R = lambda I, Q = sigma_c2 I)

struct ApproxInput {
    int n = 0;
    int m = 1;
    double lambda = 1.0;
    double mu = 0.0;
    std::vector<double> s;
    std::vector<double> sigma_v2;
    std::vector<double> sigma_c2;
    double w_true_sq_norm = 0.0;
};

struct ApproxNode {
    double eta = 0.0, zeta = 0.0, xi = 0.0;
};

/// Throws ApproximationDomainError unless s_p (1 - 2 mu lambda)^N < 1.
[[nodiscard]] std::vector<ApproxNode> approx_prediction(const ApproxInput& in);

// ---------------------------------------------------------------------------
// Scalar reference

struct ScalarConfig {
    std::vector<double> lambda, mu, sigma_v2, sigma_c2, m, s;
    double w_true = 0.0;

    [[nodiscard]] int n() const noexcept { return static_cast<int>(lambda.size()); }
};

struct ScalarMoments {
    double eta = 0.0, zeta = 0.0, xi = 0.0;
    double bias = 0.0;  ///< lim E[w~_k]
};

/// Iterates the first- and second-moment hop recursions of an M = 1 ring until
/// a full cycle changes every moment by at most 1e-14 relative. Throws NumericalError
/// after 10^6 cycles without convergence.
[[nodiscard]] std::vector<ScalarMoments> scalar_moment_oracle(const ScalarConfig& config);

}  // namespace ilms::theory
