#pragma once

// Data model of an incremental LMS ring over flat-fading links: node
// statistics, link laws, and the samplers that generate every stochastic input.

#include "ilms/errors.hpp"
#include "ilms/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

namespace ilms {

using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Matrix = Eigen::MatrixXd;

namespace model {

struct IidGaussian {};

/// u_k(i) = alpha u_k(i-1) + sqrt(sigma_u2 (1 - alpha^2)) tau_k(i); the regressor
/// is the last M samples, newest first.
struct Ar1Shift {
    double alpha = 0.0;
    double sigma_u2 = 1.0;
};

using RegressorMode = std::variant<IidGaussian, Ar1Shift>;

/// Stationary covariance of an AR(1) shift regressor: sigma_u2 alpha^|i-j|.
[[nodiscard]] Matrix ar1_covariance(int m, const Ar1Shift& mode);

/// Per-node statistics. Construct through `make_profile`, which validates the
/// invariants and caches the Cholesky factors used by the samplers.
struct NodeProfile {
    int index = 1;  ///< 1-based position on the ring
    double mu = 0.0;
    Matrix ru;
    double sigma_v2 = 0.0;
    Matrix q;
    RegressorMode regressor = IidGaussian{};

    Matrix ru_factor;  ///< lower Cholesky factor of ru
    Matrix q_factor;   ///< lower factor of q (zero when q == 0)
    bool q_is_zero = true;

    [[nodiscard]] int dim() const noexcept { return static_cast<int>(ru.rows()); }
};

/// `allow_wide_alpha` lifts the 0 < alpha <= 0.5 restriction on AR(1) poles.
[[nodiscard]] NodeProfile make_profile(int index, double mu, Matrix ru, double sigma_v2, Matrix q,
                                       RegressorMode regressor, bool allow_wide_alpha = false);

// ---------------------------------------------------------------------------
// Channels

struct Ideal {};
struct Constant {
    double h = 1.0;
};
struct Rayleigh {
    double sigma_r = 1.0;
};
/// h = h1 with probability p, h2 otherwise.
struct TwoPoint {
    double h1 = 1.0;
    double h2 = 1.0;
    double p = 0.5;
};

using ChannelLaw = std::variant<Ideal, Constant, Rayleigh, TwoPoint>;

struct ChannelModel {
    ChannelLaw law = Ideal{};
    double m = 1.0;  ///< E[h]
    double s = 1.0;  ///< E[h^2]
    double estimation_error_var = 0.0;
};

struct Moments {
    double m = 1.0;
    double s = 1.0;
};

/// Exact moments of a law (no consistency check).
[[nodiscard]] Moments law_moments(const ChannelLaw& law);

/// Builds a model whose stored moments are the analytic ones.
[[nodiscard]] ChannelModel make_channel(ChannelLaw law, double estimation_error_var = 0.0);

/// Analytic moments of `model.law`; throws ConfigError when the stored m, s
/// disagree with them by more than 1e-12 or when law parameters are invalid.
Moments channel_moments(const ChannelModel& model);

struct RayleighCalibration {
    double sigma_r;
    double s;
};

/// Rayleigh scale and second moment for a target mean gain m > 0.
[[nodiscard]] RayleighCalibration rayleigh_from_mean(double m);

/// Mean-one law with second moment s >= 1: symmetric two-point 1 +/- sqrt(s-1)
/// for s <= 2, otherwise {0 w.p. 1-1/s, s w.p. 1/s}.
[[nodiscard]] ChannelLaw unit_mean_law(double s);

/// E[1/h^2]; +inf for laws with mass or density at zero.
[[nodiscard]] double inverse_square_moment(const ChannelLaw& law);

struct ChannelDraw {
    double h = 1.0;
    double h_hat = 1.0;
};

/// Draws the gain from the law and the receiver's ZF estimate h + eps,
/// eps ~ N(0, estimation_error_var). Gains are always >= 0.
ChannelDraw sample_channel(const ChannelModel& model, CounterRng& gain_rng, CounterRng& estimate_rng);

/// Draws link noise q ~ N(0, Q) given the lower factor of Q.
void sample_channel_noise(const Matrix& q_factor, CounterRng& rng, Vector& q);

// ---------------------------------------------------------------------------
// Regressors and measurements

/// Last M samples of the scalar AR(1) input, newest first. Starts at zero.
struct RegressorState {
    Vector samples;

    RegressorState() = default;
    explicit RegressorState(int m) : samples(Vector::Zero(m)) {}
};

/// Writes the next regressor into `u` and advances `state` in AR(1) mode.
void sample_regressor(const NodeProfile& profile, RegressorState& state, CounterRng& rng, RowVector& u);

[[nodiscard]] RowVector sample_regressor(const NodeProfile& profile, RegressorState& state, CounterRng& rng);

/// d = u w_true + v, v ~ N(0, sigma_v2).
[[nodiscard]] double sample_measurement(const RowVector& u, const Vector& w_true, double sigma_v2,
                                        CounterRng& rng);

// ---------------------------------------------------------------------------
// Covariances

/// Haar-distributed orthogonal M x M matrix.
[[nodiscard]] Matrix haar_orthogonal(int m, CounterRng& rng);

/// Eigenvalues linearly spaced from lambda_min to spread * lambda_min, scaled
/// to the requested trace.
[[nodiscard]] Vector spread_eigenvalues(int m, double eigenvalue_spread, double trace);

/// basis diag(lambda) basis^T with `spread_eigenvalues`.
[[nodiscard]] Matrix build_covariance(int m, double eigenvalue_spread, double trace, const Matrix& basis);

/// Same, with a Haar basis drawn from `rng`.
[[nodiscard]] Matrix build_covariance(int m, double eigenvalue_spread, double trace, CounterRng& rng);

/// (sum R_k)^-1 (sum r_du,k).
[[nodiscard]] Vector normal_equation_solution(std::span<const Matrix> covariances,
                                              std::span<const Vector> cross_covariances);

// ---------------------------------------------------------------------------

/// Full experiment description. Channel k carries the estimate from node k-1
/// to node k (mod N); channels[0] feeds node 1 from node N.
struct NetworkConfig {
    int n = 0;
    int m = 0;
    Vector w_true;
    std::vector<NodeProfile> profiles;
    std::vector<ChannelModel> channels;
    std::uint64_t seed = 0;

    /// Throws ConfigError on any broken invariant.
    void validate() const;
};

}  // namespace model
}  // namespace ilms
