#pragma once

// Monte Carlo simulator for the incremental LMS ring.
//
// One cycle visits nodes 1..N in order. Node k receives the estimate of node
// k-1 through its link, adapts it with its own data and passes it on; node 1
// receives node N's estimate from the previous cycle. Metrics at node k are
// measured against the pre-channel estimate w_{k-1,i}.

#include "ilms/model.hpp"
#include "ilms/plan.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ilms::engine {

using model::NetworkConfig;

/// |ĥ| at or below this skips equalization for the hop (counted as an outage).
inline constexpr double kZfEpsilon = 1e-6;
/// Any |w| component above this aborts the run as diverged.
inline constexpr double kDivergenceBound = 1e9;

// ---------------------------------------------------------------------------
// Single-hop kernels

/// w_prev + mu u^T (d - u w_prev).
[[nodiscard]] Vector ilms_update_ideal(const Vector& w_prev, const RowVector& u, double d, double mu);

/// h w_sent + q.
[[nodiscard]] Vector apply_channel(const Vector& w_sent, double h, const Vector& q);

/// r + mu u^T (d - u r): the adaptation step applied to the received estimate.
[[nodiscard]] Vector ilms_update_fading(const Vector& r, const RowVector& u, double d, double mu);

struct ZfResult {
    Vector r;
    bool outage = false;  ///< |h_hat| <= kZfEpsilon; r passed through unchanged
};

/// (h_hat / |h_hat|^2) r.
[[nodiscard]] ZfResult zf_equalize(const Vector& r, double h_hat);

/// In-place adaptation used by the engine loop: w += mu u^T (d - u w).
void lms_step(Vector& w, const RowVector& u, double d, double mu) noexcept;

// ---------------------------------------------------------------------------
// Ring state and one cycle

struct NodeState {
    Vector w;
    model::RegressorState regressor;
};

/// All nodes start at w = 0 with a zeroed AR(1) buffer.
[[nodiscard]] std::vector<NodeState> initial_states(const NetworkConfig& config);

/// Instantaneous quantities of one cycle, indexed by node (0-based).
struct CycleMetrics {
    std::vector<double> msd;   ///< ||w° - w_{k-1,i}||^2
    std::vector<double> emse;  ///< ||w° - w_{k-1,i}||^2_{R_u,k}
    std::vector<double> mse;   ///< |d_k(i) - u_{k,i} w_{k-1,i}|^2
    std::vector<Vector> error_after;  ///< w° - w_{k,i}
    std::int64_t zf_outages = 0;

    explicit CycleMetrics(const NetworkConfig& config);
};

/// Runs cycle `iteration` (1-based) of Monte Carlo run `run`, drawing every
/// random input from the (seed, run, node, iteration, purpose) substreams.
/// Throws DivergenceError on a non-finite or out-of-range estimate.
void run_cycle(const NetworkConfig& config, LinkMode mode, std::span<NodeState> states, int iteration,
               std::int64_t run, CycleMetrics& out);

// ---------------------------------------------------------------------------
// Monte Carlo

/// Statistics of per-run tail averages (last `tail` iterations of each run),
/// across runs. Standard errors are sample sd / sqrt(runs); zero for one run.
struct TailSummary {
    int tail = 0;
    std::vector<double> msd_mean, msd_se;
    std::vector<double> emse_mean, emse_se;
    std::vector<double> mse_mean, mse_se;
    std::vector<double> noise_mean, noise_se;  ///< mse - emse
    std::vector<Vector> bias_mean, bias_se;    ///< w° - w_{k,i}
};

/// Run-averaged learning curves, row-major by node: value(k, i) = v[k * iterations + i].
struct MetricSeries {
    int nodes = 0;
    int iterations = 0;
    int runs = 0;
    std::vector<double> msd, emse, mse;
    TailSummary tail;
    std::int64_t zf_outages = 0;

    [[nodiscard]] std::size_t index(int node, int iteration) const noexcept {
        return static_cast<std::size_t>(node) * static_cast<std::size_t>(iterations) +
               static_cast<std::size_t>(iteration);
    }
};

/// Parallel over runs (OpenMP, `plan.workers` threads). Results are reduced in
/// run order, so the output is bitwise independent of the worker count and
/// equal to `run_monte_carlo_serial`.
[[nodiscard]] MetricSeries run_monte_carlo(const NetworkConfig& config, const ExperimentPlan& plan);

/// Single-threaded reference implementation.
[[nodiscard]] MetricSeries run_monte_carlo_serial(const NetworkConfig& config, const ExperimentPlan& plan);

struct NodeSteadyState {
    double eta = 0.0, zeta = 0.0, xi = 0.0;
    double eta_db = 0.0, zeta_db = 0.0, xi_db = 0.0;
    Vector bias;
    // Monte Carlo standard errors; only filled when the tail matches the
    // window recorded by run_monte_carlo.
    double eta_se = 0.0, zeta_se = 0.0, xi_se = 0.0;
    double noise_gap = 0.0, noise_gap_se = 0.0;
};

struct SteadyStateEstimate {
    int tail = 0;
    std::vector<NodeSteadyState> nodes;
};

/// Per-node mean of the last `tail` iterations; throws ConfigError for
/// tail <= 0 or tail > iterations.
[[nodiscard]] SteadyStateEstimate estimate_steady_state(const MetricSeries& series, int tail);

/// Signed weight error w° - w_{k,i} averaged over runs and the tail window.
[[nodiscard]] std::vector<Vector> empirical_bias(const NetworkConfig& config, const ExperimentPlan& plan);

/// 10 log10(x).
[[nodiscard]] double to_db(double linear) noexcept;

}  // namespace ilms::engine
