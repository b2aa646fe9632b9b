#include "ilms/theory.hpp"

#include "ilms/engine.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <type_traits>

namespace ilms::theory {

namespace {

double spectral_radius(const Matrix& a) {
    if (a.rows() == 1) return std::abs(a(0, 0));
    Eigen::EigenSolver<Matrix> es(a, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

int wrap(int k, int n) { return ((k - 1) % n + n) % n; }

std::string node_path(int idx) { return "channels[" + std::to_string(idx) + "]"; }

// A ZF receiver facing a gain with positive mass at (or inside) the outage
// guard forwards some hops unequalized, which the noisy-ideal model ignores.
bool has_outage_mass(const model::ChannelLaw& law) {
    constexpr double eps = engine::kZfEpsilon;
    return std::visit(
        [](const auto& l) -> bool {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, model::Constant>) {
                return l.h <= eps;
            } else if constexpr (std::is_same_v<T, model::TwoPoint>) {
                return (l.p > 0.0 && l.h1 <= eps) || (l.p < 1.0 && l.h2 <= eps);
            } else {
                return false;
            }
        },
        law);
}

EffectiveLink effective_link(const model::NodeProfile& profile, const model::ChannelModel& channel, LinkMode mode,
                             int idx) {
    const int m = profile.dim();
    switch (mode) {
        case LinkMode::Ideal: return {1.0, 1.0, Matrix::Zero(m, m)};
        case LinkMode::Fading: {
            const auto mom = model::channel_moments(channel);
            return {mom.m, mom.s, profile.q};
        }
        case LinkMode::FadingZf: {
            if (channel.estimation_error_var > 0.0)
                throw ConfigError("ZF analysis needs perfect channel estimates", node_path(idx) + ".estimation_error_var");
            if (has_outage_mass(channel.law))
                throw ConfigError("gain law has mass inside the ZF outage guard", node_path(idx) + ".law");
            if (profile.q_is_zero) return {1.0, 1.0, Matrix::Zero(m, m)};
            const double inv2 = model::inverse_square_moment(channel.law);
            if (!std::isfinite(inv2))
                throw ConfigError("E[1/h^2] is unbounded; ZF noise enhancement has no finite moment",
                                  node_path(idx) + ".law");
            return {1.0, 1.0, inv2 * profile.q};
        }
    }
    throw ConfigError("unknown link mode", "plan.mode");
}

void require_mean_stable(const TheoryWorkspace& ws) {
    if (!ws.mean_stable) {
        std::ostringstream os;
        os << "mean recursion is not stable (rho = " << ws.rho_mean << ")";
        throw InstabilityError(os.str());
    }
}

}  // namespace

const NodeTerms& TheoryWorkspace::node(int k) const { return nodes[static_cast<std::size_t>(wrap(k, n))]; }

Matrix fbar_from(const Vector& lambda, double mu) {
    const auto m = lambda.size();
    Matrix f = mu * mu * (lambda * lambda.transpose());
    for (Eigen::Index i = 0; i < m; ++i) f(i, i) += 1.0 - 2.0 * mu * lambda[i] + mu * mu * lambda[i] * lambda[i];
    return f;
}

TheoryWorkspace build_workspace(const NetworkConfig& config, LinkMode mode) {
    config.validate();
    TheoryWorkspace ws;
    ws.n = config.n;
    ws.m = config.m;
    ws.w_true = config.w_true;
    ws.mode = mode;
    ws.nodes.reserve(config.n);

    const Matrix eye = Matrix::Identity(config.m, config.m);
    for (int idx = 0; idx < config.n; ++idx) {
        const auto& p = config.profiles[idx];
        NodeTerms t;
        t.mu = p.mu;
        t.sigma_v2 = p.sigma_v2;
        t.ru = p.ru;
        t.link = effective_link(p, config.channels[idx], mode, idx);
        t.j = eye - p.mu * p.ru;
        Eigen::SelfAdjointEigenSolver<Matrix> es(p.ru);
        t.u = es.eigenvectors();
        t.lambda = es.eigenvalues();
        t.fbar = fbar_from(t.lambda, p.mu);
        t.qbar = t.u.transpose() * t.link.q * t.u;
        t.wbar = t.u.transpose() * config.w_true;
        t.d_diag = t.wbar.cwiseAbs2();
        ws.s_product *= t.link.s;
        ws.nodes.push_back(std::move(t));
    }

    ws.mean_product = eye;
    ws.mean_offset = Matrix::Zero(config.m, config.m);
    for (const auto& t : ws.nodes) {
        ws.mean_product = (t.link.m * t.j) * ws.mean_product;
        ws.mean_offset = (t.link.m * t.j) * ws.mean_offset + (1.0 - t.link.m) * t.j;
    }
    ws.rho_mean = spectral_radius(ws.mean_product);
    ws.mean_stable = ws.rho_mean < 1.0;

    if (ws.mean_stable) {
        // Fixed point after node N, then carried around the ring once.
        const Matrix c_last = (eye - ws.mean_product).fullPivLu().solve(ws.mean_offset);
        ws.c_inf.resize(config.n);
        ws.c_inf[config.n - 1] = c_last;
        Matrix c = c_last;
        for (int idx = 0; idx + 1 < config.n; ++idx) {
            const auto& t = ws.nodes[idx];
            c = (t.link.m * t.j) * c + (1.0 - t.link.m) * t.j;
            ws.c_inf[idx] = c;
        }
    }
    return ws;
}

StepSizeRange mean_step_size_range(const TheoryWorkspace& ws, int k) {
    const auto& t = ws.node(k);
    if (!(t.link.m > 0.0))
        throw ConfigError("mean gain must be > 0 for a step-size range", node_path(wrap(k, ws.n)) + ".m");
    const double lmin = t.lambda.minCoeff();
    const double lmax = t.lambda.maxCoeff();
    return {std::max(0.0, (t.link.m - 1.0) / (t.link.m * lmin)), (t.link.m + 1.0) / (t.link.m * lmax)};
}

MeanStability mean_stability_check(const TheoryWorkspace& ws) { return {ws.mean_stable, ws.rho_mean}; }

Vector asymptotic_bias(const TheoryWorkspace& ws) {
    require_mean_stable(ws);
    return ws.c_inf.back() * ws.w_true;
}

Vector node_bias(const TheoryWorkspace& ws, int k) {
    require_mean_stable(ws);
    return ws.c_inf[static_cast<std::size_t>(wrap(k, ws.n))] * ws.w_true;
}

std::vector<Vector> iterate_mean_recursion(const TheoryWorkspace& ws, const Vector& w0_err, int i_max) {
    if (i_max < 0) throw std::invalid_argument("i_max must be >= 0");
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(i_max) + 1);
    out.push_back(w0_err);
    const Vector drive = ws.mean_offset * ws.w_true;
    Vector v = w0_err;
    for (int i = 0; i < i_max; ++i) {
        v = ws.mean_product * v + drive;
        out.push_back(v);
    }
    return out;
}

Matrix build_Fbar(const TheoryWorkspace& ws, int k) { return ws.node(k).fbar; }

StabilityReport ms_stability_check(const TheoryWorkspace& ws) {
    StabilityReport rep;
    rep.rho_mean = ws.rho_mean;
    rep.mean_stable = ws.mean_stable;
    rep.ms_stable = true;
    rep.network_ms_stable = true;
    rep.nodes.resize(ws.n);
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    for (int k = 1; k <= ws.n; ++k) {
        const auto& t = ws.node(k);
        auto& r = rep.nodes[k - 1];
        if (t.link.m > 0.0) {
            const auto range = mean_step_size_range(ws, k);
            r.mu_lo = range.lo;
            r.mu_hi = range.hi;
        } else {
            r.mu_lo = r.mu_hi = nan;
        }
        r.ms_margin = t.link.s * spectral_radius(t.fbar);
        r.rho_pi = spectral_radius(build_Pi(ws, k, 1));
        rep.ms_stable = rep.ms_stable && r.ms_margin < 1.0;
        rep.network_ms_stable = rep.network_ms_stable && r.rho_pi < 1.0;
    }
    return rep;
}

Matrix build_Cbar_inf(const TheoryWorkspace& ws, int k) {
    require_mean_stable(ws);
    const auto& u = ws.node(k).u;
    return u.transpose() * ws.c_inf[static_cast<std::size_t>(wrap(k - 1, ws.n))] * u;
}

RowVector build_g(const TheoryWorkspace& ws, int k) {
    const auto& t = ws.node(k);
    const double m = t.link.m;
    const double s = t.link.s;
    const RowVector d = t.d_diag.transpose();
    RowVector g = (t.mu * t.mu * t.sigma_v2) * t.lambda.transpose();
    g += t.qbar.diagonal().transpose() * t.fbar;
    g += (1.0 - 2.0 * m + s) * d * t.fbar;
    if (m != s) g += 2.0 * (m - s) * d * build_Cbar_inf(ws, k) * t.fbar;
    return g;
}

Matrix build_Pi(const TheoryWorkspace& ws, int k, int l) {
    if (l < 1 || l > ws.n + 1) throw std::out_of_range("build_Pi: l must lie in [1, N+1]");
    Matrix p = Matrix::Identity(ws.m, ws.m);
    double scale = 1.0;
    for (int j = k + l - 1; j <= k - 1 + ws.n; ++j) {
        const auto& t = ws.node(j);
        p = p * t.fbar;
        scale *= t.link.s;
    }
    return scale * p;
}

RowVector build_a(const TheoryWorkspace& ws, int k) {
    RowVector a = RowVector::Zero(ws.m);
    for (int l = 2; l <= ws.n + 1; ++l) a += build_g(ws, k + l - 2) * build_Pi(ws, k, l);
    return a;
}

SteadyStatePrediction steady_state_prediction(const TheoryWorkspace& ws) {
    const auto rep = ms_stability_check(ws);
    require_mean_stable(ws);
    for (int k = 1; k <= ws.n; ++k) {
        const auto& r = rep.nodes[k - 1];
        if (!(r.ms_margin < 1.0) || !(r.rho_pi < 1.0)) {
            std::ostringstream os;
            os << "node " << k << " is not mean-square stable (s rho(F) = " << r.ms_margin
               << ", rho(Pi) = " << r.rho_pi << ")";
            throw InstabilityError(os.str());
        }
    }

    SteadyStatePrediction out;
    out.nodes.resize(ws.n);
    const Matrix eye = Matrix::Identity(ws.m, ws.m);
    const Vector ones = Vector::Ones(ws.m);
    for (int k = 1; k <= ws.n; ++k) {
        const auto& t = ws.node(k);
        const Matrix a_mat = eye - build_Pi(ws, k, 1);
        Eigen::FullPivLU<Matrix> lu(a_mat);
        if (!lu.isInvertible()) throw InstabilityError("I - Pi_{" + std::to_string(k) + ",1} is singular");
        const Eigen::JacobiSVD<Matrix> svd(a_mat);
        const auto& sv = svd.singularValues();
        const double cond = sv[sv.size() - 1] > 0.0 ? sv[0] / sv[sv.size() - 1]
                                                    : std::numeric_limits<double>::infinity();
        const RowVector a = build_a(ws, k);

        auto& p = out.nodes[k - 1];
        p.eta = a * lu.solve(ones);
        p.zeta = a * lu.solve(t.lambda);
        p.xi = p.zeta + t.sigma_v2;
        p.eta_db = engine::to_db(p.eta);
        p.zeta_db = engine::to_db(p.zeta);
        p.xi_db = engine::to_db(p.xi);
        p.bias = node_bias(ws, k);
        p.bias_norm = p.bias.norm();
        p.condition = cond;
        if (cond > kConditionWarning) {
            std::ostringstream os;
            os << "node " << k << ": I - Pi has condition number " << cond;
            out.warnings.push_back(os.str());
        }
    }
    return out;
}

std::vector<ApproxNode> approx_prediction(const ApproxInput& in) {
    const auto n = static_cast<std::size_t>(in.n);
    if (in.n < 1 || in.s.size() != n || in.sigma_v2.size() != n || in.sigma_c2.size() != n)
        throw ConfigError("per-node vectors must have N entries", "approx");
    if (in.m < 1) throw ConfigError("must be >= 1", "approx.m");

    const double base = 1.0 - 2.0 * in.mu * in.lambda;
    double sp = 1.0;
    for (double s : in.s) sp *= s;
    const double loop = sp * std::pow(base, in.n);
    if (!(loop < 1.0)) {
        std::ostringstream os;
        os << "s_p (1 - 2 mu lambda)^N = " << loop << " is not below 1";
        throw ApproximationDomainError(os.str());
    }

    // ghat_k = g_k 1 keeps the M copies of the noise terms.
    std::vector<double> ghat(n);
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        ghat[k] = in.m * in.mu * in.mu * in.sigma_v2[k] * in.lambda + in.m * in.sigma_c2[k] * base +
                  sp * (in.s[k] - 1.0) * base * in.w_true_sq_norm;
        total += ghat[k];
    }
    const double gain = 1.0 / (1.0 - loop) - 1.0;
    std::vector<ApproxNode> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        auto& o = out[k];
        o.eta = gain * total + ghat[(k + n - 1) % n];
        o.zeta = in.lambda * o.eta;
        o.xi = o.zeta + in.sigma_v2[k];
    }
    return out;
}

std::vector<ScalarMoments> scalar_moment_oracle(const ScalarConfig& c) {
    const int n = c.n();
    const auto sz = static_cast<std::size_t>(n);
    if (n < 1 || c.mu.size() != sz || c.sigma_v2.size() != sz || c.sigma_c2.size() != sz || c.m.size() != sz ||
        c.s.size() != sz)
        throw ConfigError("per-node vectors must have N entries", "scalar");

    const double w = c.w_true;
    // Start from w = 0: w~ = w°.
    double p = w * w;
    double mean = w;
    std::vector<double> p_in(sz), mean_out(sz);
    constexpr int kMaxCycles = 1'000'000;
    constexpr double kTol = 1e-14;

    auto close = [](double a, double b) { return std::abs(a - b) <= kTol * std::max(std::abs(a), std::abs(b)); };

    for (int cycle = 0; cycle < kMaxCycles; ++cycle) {
        bool settled = cycle > 0;
        for (int k = 0; k < n; ++k) {
            const double lam = c.lambda[k];
            const double mu = c.mu[k];
            const double m = c.m[k];
            const double s = c.s[k];
            const double f = 1.0 - 2.0 * mu * lam + 2.0 * mu * mu * lam * lam;

            settled = settled && close(p_in[k], p);
            p_in[k] = p;
            const double received = s * p + (1.0 - 2.0 * m + s) * w * w + c.sigma_c2[k] + 2.0 * (m - s) * w * mean;
            p = f * received + mu * mu * c.sigma_v2[k] * lam;
            mean = (1.0 - mu * lam) * (m * mean + (1.0 - m) * w);
            settled = settled && close(mean_out[k], mean);
            mean_out[k] = mean;
        }
        if (!std::isfinite(p) || !std::isfinite(mean)) throw NumericalError("scalar moment recursion diverged");
        if (settled) {
            std::vector<ScalarMoments> out(sz);
            for (int k = 0; k < n; ++k) {
                out[k].eta = p_in[k];
                out[k].zeta = c.lambda[k] * p_in[k];
                out[k].xi = out[k].zeta + c.sigma_v2[k];
                out[k].bias = mean_out[k];
            }
            return out;
        }
    }
    throw NumericalError("scalar moment recursion did not converge within 10^6 cycles");
}

}  // namespace ilms::theory
