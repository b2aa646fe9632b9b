#include "ilms/engine.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <optional>

namespace ilms::engine {

Vector ilms_update_ideal(const Vector& w_prev, const RowVector& u, double d, double mu) {
    Vector w = w_prev;
    lms_step(w, u, d, mu);
    return w;
}

Vector apply_channel(const Vector& w_sent, double h, const Vector& q) { return h * w_sent + q; }

Vector ilms_update_fading(const Vector& r, const RowVector& u, double d, double mu) {
    return ilms_update_ideal(r, u, d, mu);
}

ZfResult zf_equalize(const Vector& r, double h_hat) {
    if (std::abs(h_hat) <= kZfEpsilon) return {r, true};
    return {(h_hat / (h_hat * h_hat)) * r, false};
}

void lms_step(Vector& w, const RowVector& u, double d, double mu) noexcept {
    const double e = d - u.dot(w);
    w.noalias() += (mu * e) * u.transpose();
}

std::vector<NodeState> initial_states(const NetworkConfig& config) {
    std::vector<NodeState> states(static_cast<std::size_t>(config.n));
    for (auto& s : states) {
        s.w = Vector::Zero(config.m);
        s.regressor = model::RegressorState(config.m);
    }
    return states;
}

CycleMetrics::CycleMetrics(const NetworkConfig& config)
    : msd(config.n, 0.0), emse(config.n, 0.0), mse(config.n, 0.0),
      error_after(static_cast<std::size_t>(config.n), Vector::Zero(config.m)) {}

namespace {

// Scratch vectors reused across hops.
struct HopScratch {
    RowVector u;
    Vector r, q, err;

    explicit HopScratch(int m) : u(m), r(m), q(m), err(m) {}
};

bool out_of_range(const Vector& w) {
    for (Eigen::Index j = 0; j < w.size(); ++j)
        if (!std::isfinite(w[j]) || std::abs(w[j]) > kDivergenceBound) return true;
    return false;
}

void run_cycle_impl(const NetworkConfig& config, LinkMode mode, std::span<NodeState> states, int iteration,
                    std::int64_t run, CycleMetrics& out, HopScratch& s) {
    const int n = config.n;
    const auto seed = config.seed;
    const auto run_key = static_cast<std::uint64_t>(run);
    const auto it_key = static_cast<std::uint64_t>(iteration);

    for (int k = 0; k < n; ++k) {
        const auto& profile = config.profiles[k];
        const auto& channel = config.channels[k];
        const auto node_key = static_cast<std::uint64_t>(k + 1);
        const Vector& w_in = states[(k + n - 1) % n].w;

        // Link: r = h w_{k-1,i} + q (or equalized / untouched).
        s.r = w_in;
        if (mode != LinkMode::Ideal) {
            CounterRng gain_rng(seed, run_key, node_key, it_key, Stream::ChannelGain);
            CounterRng est_rng(seed, run_key, node_key, it_key, Stream::ChannelEstimate);
            const auto draw = model::sample_channel(channel, gain_rng, est_rng);
            s.r *= draw.h;
            if (!profile.q_is_zero) {
                CounterRng noise_rng(seed, run_key, node_key, it_key, Stream::ChannelNoise);
                model::sample_channel_noise(profile.q_factor, noise_rng, s.q);
                s.r += s.q;
            }
            if (mode == LinkMode::FadingZf) {
                if (std::abs(draw.h_hat) > kZfEpsilon) {
                    s.r *= draw.h_hat / (draw.h_hat * draw.h_hat);
                } else {
                    ++out.zf_outages;
                }
            }
        }

        CounterRng reg_rng(seed, run_key, node_key, it_key, Stream::Regressor);
        model::sample_regressor(profile, states[k].regressor, reg_rng, s.u);
        CounterRng meas_rng(seed, run_key, node_key, it_key, Stream::Measurement);
        const double d = model::sample_measurement(s.u, config.w_true, profile.sigma_v2, meas_rng);

        s.err = config.w_true - w_in;
        const double e = d - s.u.dot(w_in);
        out.msd[k] = s.err.squaredNorm();
        out.emse[k] = s.err.dot(profile.ru * s.err);
        out.mse[k] = e * e;

        lms_step(s.r, s.u, d, profile.mu);
        if (out_of_range(s.r)) throw DivergenceError(run, k + 1, iteration);
        states[k].w = s.r;
        out.error_after[k] = config.w_true - s.r;
    }
}

// Everything one run contributes to the aggregate.
struct RunResult {
    std::vector<double> msd, emse, mse;
    std::vector<double> tail_msd, tail_emse, tail_mse, tail_noise;
    std::vector<Vector> tail_bias;
    std::int64_t zf_outages = 0;
};

void simulate_run(const NetworkConfig& config, const ExperimentPlan& plan, std::int64_t run, RunResult& res) {
    const int n = config.n;
    const int iters = plan.iterations;
    const int tail_start = iters - plan.tail;
    const std::size_t total = static_cast<std::size_t>(n) * static_cast<std::size_t>(iters);
    res.msd.assign(total, 0.0);
    res.emse.assign(total, 0.0);
    res.mse.assign(total, 0.0);
    res.tail_msd.assign(n, 0.0);
    res.tail_emse.assign(n, 0.0);
    res.tail_mse.assign(n, 0.0);
    res.tail_noise.assign(n, 0.0);
    res.tail_bias.assign(static_cast<std::size_t>(n), Vector::Zero(config.m));
    res.zf_outages = 0;

    auto states = initial_states(config);
    CycleMetrics cyc(config);
    HopScratch scratch(config.m);
    for (int i = 0; i < iters; ++i) {
        run_cycle_impl(config, plan.mode, states, i + 1, run, cyc, scratch);
        for (int k = 0; k < n; ++k) {
            const std::size_t idx = static_cast<std::size_t>(k) * iters + i;
            res.msd[idx] = cyc.msd[k];
            res.emse[idx] = cyc.emse[k];
            res.mse[idx] = cyc.mse[k];
            if (i >= tail_start) {
                res.tail_msd[k] += cyc.msd[k];
                res.tail_emse[k] += cyc.emse[k];
                res.tail_mse[k] += cyc.mse[k];
                res.tail_noise[k] += cyc.mse[k] - cyc.emse[k];
                res.tail_bias[k] += cyc.error_after[k];
            }
        }
    }
    const double inv_tail = 1.0 / plan.tail;
    for (int k = 0; k < n; ++k) {
        res.tail_msd[k] *= inv_tail;
        res.tail_emse[k] *= inv_tail;
        res.tail_mse[k] *= inv_tail;
        res.tail_noise[k] *= inv_tail;
        res.tail_bias[k] *= inv_tail;
    }
    res.zf_outages = cyc.zf_outages;
}

// Sums in run order; the same sequence of floating-point operations whatever
// the number of workers that produced the RunResults.
class Accumulator {
public:
    Accumulator(const NetworkConfig& config, const ExperimentPlan& plan)
        : n_(config.n), m_(config.m), plan_(plan) {
        const std::size_t total = static_cast<std::size_t>(n_) * static_cast<std::size_t>(plan.iterations);
        msd_.assign(total, 0.0);
        emse_.assign(total, 0.0);
        mse_.assign(total, 0.0);
        for (auto* v : {&s1_msd_, &s2_msd_, &s1_emse_, &s2_emse_, &s1_mse_, &s2_mse_, &s1_noise_, &s2_noise_})
            v->assign(n_, 0.0);
        s1_bias_.assign(static_cast<std::size_t>(n_), Vector::Zero(m_));
        s2_bias_.assign(static_cast<std::size_t>(n_), Vector::Zero(m_));
    }

    void add(const RunResult& r) {
        for (std::size_t j = 0; j < msd_.size(); ++j) {
            msd_[j] += r.msd[j];
            emse_[j] += r.emse[j];
            mse_[j] += r.mse[j];
        }
        for (int k = 0; k < n_; ++k) {
            s1_msd_[k] += r.tail_msd[k];
            s2_msd_[k] += r.tail_msd[k] * r.tail_msd[k];
            s1_emse_[k] += r.tail_emse[k];
            s2_emse_[k] += r.tail_emse[k] * r.tail_emse[k];
            s1_mse_[k] += r.tail_mse[k];
            s2_mse_[k] += r.tail_mse[k] * r.tail_mse[k];
            s1_noise_[k] += r.tail_noise[k];
            s2_noise_[k] += r.tail_noise[k] * r.tail_noise[k];
            s1_bias_[k] += r.tail_bias[k];
            s2_bias_[k] += r.tail_bias[k].cwiseProduct(r.tail_bias[k]);
        }
        outages_ += r.zf_outages;
        ++count_;
    }

    MetricSeries finish() {
        MetricSeries s;
        s.nodes = n_;
        s.iterations = plan_.iterations;
        s.runs = count_;
        const double inv = 1.0 / count_;
        for (auto* v : {&msd_, &emse_, &mse_})
            for (double& x : *v) x *= inv;
        s.msd = std::move(msd_);
        s.emse = std::move(emse_);
        s.mse = std::move(mse_);
        s.zf_outages = outages_;

        auto& t = s.tail;
        t.tail = plan_.tail;
        summarize(s1_msd_, s2_msd_, t.msd_mean, t.msd_se);
        summarize(s1_emse_, s2_emse_, t.emse_mean, t.emse_se);
        summarize(s1_mse_, s2_mse_, t.mse_mean, t.mse_se);
        summarize(s1_noise_, s2_noise_, t.noise_mean, t.noise_se);
        t.bias_mean.resize(n_);
        t.bias_se.resize(n_);
        for (int k = 0; k < n_; ++k) {
            t.bias_mean[k] = s1_bias_[k] * inv;
            Vector se(m_);
            for (int j = 0; j < m_; ++j) se[j] = stderr_of(s1_bias_[k][j], s2_bias_[k][j]);
            t.bias_se[k] = se;
        }
        return s;
    }

private:
    [[nodiscard]] double stderr_of(double s1, double s2) const {
        if (count_ < 2) return 0.0;
        const double mean = s1 / count_;
        const double var = std::max(0.0, (s2 - s1 * mean) / (count_ - 1));
        return std::sqrt(var / count_);
    }

    void summarize(const std::vector<double>& s1, const std::vector<double>& s2, std::vector<double>& mean,
                   std::vector<double>& se) const {
        mean.resize(n_);
        se.resize(n_);
        for (int k = 0; k < n_; ++k) {
            mean[k] = s1[k] / count_;
            se[k] = stderr_of(s1[k], s2[k]);
        }
    }

    int n_, m_;
    const ExperimentPlan& plan_;
    std::vector<double> msd_, emse_, mse_;
    std::vector<double> s1_msd_, s2_msd_, s1_emse_, s2_emse_, s1_mse_, s2_mse_, s1_noise_, s2_noise_;
    std::vector<Vector> s1_bias_, s2_bias_;
    std::int64_t outages_ = 0;
    int count_ = 0;
};

void check_inputs(const NetworkConfig& config, const ExperimentPlan& plan) {
    config.validate();
    plan.validate();
}

// Runs per parallel wave; bounds the memory held by unreduced RunResults.
constexpr int kWave = 32;

}  // namespace

void run_cycle(const NetworkConfig& config, LinkMode mode, std::span<NodeState> states, int iteration,
               std::int64_t run, CycleMetrics& out) {
    HopScratch scratch(config.m);
    run_cycle_impl(config, mode, states, iteration, run, out, scratch);
}

MetricSeries run_monte_carlo_serial(const NetworkConfig& config, const ExperimentPlan& plan) {
    check_inputs(config, plan);
    Accumulator acc(config, plan);
    RunResult res;
    for (int r = 0; r < plan.runs; ++r) {
        simulate_run(config, plan, r, res);
        acc.add(res);
    }
    return acc.finish();
}

MetricSeries run_monte_carlo(const NetworkConfig& config, const ExperimentPlan& plan) {
    check_inputs(config, plan);
    Accumulator acc(config, plan);
    const int threads = plan.workers > 0 ? plan.workers : omp_get_max_threads();
    std::vector<RunResult> wave(static_cast<std::size_t>(std::min(kWave, plan.runs)));

    for (int start = 0; start < plan.runs; start += kWave) {
        const int count = std::min(kWave, plan.runs - start);
        // The lowest failing run index wins so the reported error is deterministic.
        std::vector<std::optional<DivergenceError>> failures(static_cast<std::size_t>(count));
        std::exception_ptr other;

#pragma omp parallel for num_threads(threads) schedule(dynamic, 1)
        for (int j = 0; j < count; ++j) {
            try {
                simulate_run(config, plan, start + j, wave[j]);
            } catch (const DivergenceError& e) {
                failures[j] = e;
            } catch (...) {
#pragma omp critical(ilms_mc_error)
                if (!other) other = std::current_exception();
            }
        }

        if (other) std::rethrow_exception(other);
        for (auto& f : failures)
            if (f) throw *f;
        for (int j = 0; j < count; ++j) acc.add(wave[j]);
    }
    return acc.finish();
}

SteadyStateEstimate estimate_steady_state(const MetricSeries& series, int tail) {
    if (tail <= 0) throw ConfigError("must be > 0", "tail");
    if (tail > series.iterations) throw ConfigError("tail exceeds iterations", "tail");
    SteadyStateEstimate est;
    est.tail = tail;
    est.nodes.resize(series.nodes);
    const bool recorded = series.tail.tail == tail && !series.tail.msd_mean.empty();
    for (int k = 0; k < series.nodes; ++k) {
        auto& node = est.nodes[k];
        double a = 0.0, b = 0.0, c = 0.0;
        for (int i = series.iterations - tail; i < series.iterations; ++i) {
            const auto idx = series.index(k, i);
            a += series.msd[idx];
            b += series.emse[idx];
            c += series.mse[idx];
        }
        node.eta = a / tail;
        node.zeta = b / tail;
        node.xi = c / tail;
        node.eta_db = to_db(node.eta);
        node.zeta_db = to_db(node.zeta);
        node.xi_db = to_db(node.xi);
        node.noise_gap = node.xi - node.zeta;
        if (!series.tail.bias_mean.empty()) node.bias = series.tail.bias_mean[k];
        if (recorded) {
            node.eta_se = series.tail.msd_se[k];
            node.zeta_se = series.tail.emse_se[k];
            node.xi_se = series.tail.mse_se[k];
            node.noise_gap_se = series.tail.noise_se[k];
        }
    }
    return est;
}

std::vector<Vector> empirical_bias(const NetworkConfig& config, const ExperimentPlan& plan) {
    return run_monte_carlo(config, plan).tail.bias_mean;
}

double to_db(double linear) noexcept { return 10.0 * std::log10(linear); }

}  // namespace ilms::engine
