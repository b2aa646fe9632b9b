#include "ilms/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace ilms::model {

namespace {

constexpr double kSymmetryTol = 1e-12;

bool is_symmetric(const Matrix& a) {
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    return (a - a.transpose()).cwiseAbs().maxCoeff() <= kSymmetryTol * scale;
}

// Any F with F F^T = A for symmetric PSD A.
Matrix psd_factor(const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(a);
    const Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal();
}

std::string node_path(int index, const char* field) {
    return "profiles[" + std::to_string(index - 1) + "]." + field;
}

}  // namespace

Matrix ar1_covariance(int m, const Ar1Shift& mode) {
    Matrix r(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) r(i, j) = mode.sigma_u2 * std::pow(mode.alpha, std::abs(i - j));
    return r;
}

NodeProfile make_profile(int index, double mu, Matrix ru, double sigma_v2, Matrix q, RegressorMode regressor,
                         bool allow_wide_alpha) {
    if (!(mu > 0.0) || !std::isfinite(mu)) throw ConfigError("step size must be > 0", node_path(index, "mu"));
    if (!(sigma_v2 >= 0.0) || !std::isfinite(sigma_v2))
        throw ConfigError("observation noise variance must be >= 0", node_path(index, "sigma_v2"));
    if (ru.rows() < 1 || ru.rows() != ru.cols()) throw ConfigError("must be square", node_path(index, "ru"));
    if (q.rows() != ru.rows() || q.cols() != ru.cols())
        throw ConfigError("dimension differs from ru", node_path(index, "q"));
    if (!ru.allFinite() || !is_symmetric(ru)) throw ConfigError("must be symmetric", node_path(index, "ru"));
    if (!q.allFinite() || !is_symmetric(q)) throw ConfigError("must be symmetric", node_path(index, "q"));

    NodeProfile p;
    p.index = index;
    p.mu = mu;
    p.sigma_v2 = sigma_v2;
    p.regressor = regressor;

    if (const auto* ar = std::get_if<Ar1Shift>(&regressor)) {
        const bool in_range = allow_wide_alpha ? (std::abs(ar->alpha) < 1.0) : (ar->alpha > 0.0 && ar->alpha <= 0.5);
        if (!in_range) throw ConfigError("AR(1) pole outside (0, 0.5]", node_path(index, "regressor.alpha"));
        if (!(ar->sigma_u2 > 0.0)) throw ConfigError("must be > 0", node_path(index, "regressor.sigma_u2"));
    }

    p.ru = 0.5 * (ru + ru.transpose());
    Eigen::LLT<Matrix> llt(p.ru);
    if (llt.info() != Eigen::Success || Eigen::SelfAdjointEigenSolver<Matrix>(p.ru).eigenvalues().minCoeff() <= 0.0)
        throw ConfigError("must be positive definite", node_path(index, "ru"));
    p.ru_factor = llt.matrixL();

    p.q = 0.5 * (q + q.transpose());
    if (Eigen::SelfAdjointEigenSolver<Matrix>(p.q).eigenvalues().minCoeff() < -1e-12 * std::max(1.0, p.q.norm()))
        throw ConfigError("must be positive semidefinite", node_path(index, "q"));
    p.q_is_zero = p.q.isZero(0.0);
    p.q_factor = p.q_is_zero ? Matrix::Zero(p.q.rows(), p.q.cols()) : psd_factor(p.q);
    return p;
}

// ---------------------------------------------------------------------------

Moments law_moments(const ChannelLaw& law) {
    return std::visit(
        [](const auto& l) -> Moments {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, Ideal>) {
                return {1.0, 1.0};
            } else if constexpr (std::is_same_v<T, Constant>) {
                return {l.h, l.h * l.h};
            } else if constexpr (std::is_same_v<T, Rayleigh>) {
                return {l.sigma_r * std::sqrt(std::numbers::pi / 2.0), 2.0 * l.sigma_r * l.sigma_r};
            } else {
                return {l.p * l.h1 + (1.0 - l.p) * l.h2, l.p * l.h1 * l.h1 + (1.0 - l.p) * l.h2 * l.h2};
            }
        },
        law);
}

namespace {

void check_law(const ChannelLaw& law) {
    std::visit(
        [](const auto& l) {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, Constant>) {
                if (!(l.h >= 0.0) || !std::isfinite(l.h)) throw ConfigError("constant gain must be >= 0", "params.h");
            } else if constexpr (std::is_same_v<T, Rayleigh>) {
                if (!(l.sigma_r > 0.0) || !std::isfinite(l.sigma_r))
                    throw ConfigError("Rayleigh scale must be > 0", "params.sigma_r");
            } else if constexpr (std::is_same_v<T, TwoPoint>) {
                if (!(l.h1 >= 0.0) || !(l.h2 >= 0.0)) throw ConfigError("gains must be >= 0", "params");
                if (!(l.p >= 0.0 && l.p <= 1.0)) throw ConfigError("probability outside [0, 1]", "params.p");
            }
        },
        law);
}

}  // namespace

ChannelModel make_channel(ChannelLaw law, double estimation_error_var) {
    check_law(law);
    if (!(estimation_error_var >= 0.0)) throw ConfigError("must be >= 0", "estimation_error_var");
    const Moments mom = law_moments(law);
    return ChannelModel{law, mom.m, mom.s, estimation_error_var};
}

Moments channel_moments(const ChannelModel& model) {
    check_law(model.law);
    const Moments mom = law_moments(model.law);
    const auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };
    if (!close(model.m, mom.m) || !close(model.s, mom.s))
        throw ConfigError("stored moments (" + std::to_string(model.m) + ", " + std::to_string(model.s) +
                              ") disagree with the law (" + std::to_string(mom.m) + ", " + std::to_string(mom.s) + ")",
                          "moments");
    if (model.s < model.m * model.m - 1e-12) throw ConfigError("second moment below squared mean", "moments");
    return mom;
}

RayleighCalibration rayleigh_from_mean(double m) {
    if (!(m > 0.0) || !std::isfinite(m)) throw ConfigError("Rayleigh mean gain must be > 0", "params.mean");
    const double sigma_r = m * std::sqrt(2.0 / std::numbers::pi);
    return {sigma_r, 2.0 * sigma_r * sigma_r};
}

ChannelLaw unit_mean_law(double s) {
    if (!(s >= 1.0) || !std::isfinite(s)) throw ConfigError("mean-one law needs s >= 1", "sweep.values");
    if (s <= 2.0) {
        const double d = std::sqrt(s - 1.0);
        return TwoPoint{1.0 - d, 1.0 + d, 0.5};
    }
    return TwoPoint{0.0, s, 1.0 - 1.0 / s};
}

double inverse_square_moment(const ChannelLaw& law) {
    return std::visit(
        [](const auto& l) -> double {
            using T = std::decay_t<decltype(l)>;
            constexpr double inf = std::numeric_limits<double>::infinity();
            if constexpr (std::is_same_v<T, Ideal>) {
                return 1.0;
            } else if constexpr (std::is_same_v<T, Constant>) {
                return l.h > 0.0 ? 1.0 / (l.h * l.h) : inf;
            } else if constexpr (std::is_same_v<T, Rayleigh>) {
                return inf;
            } else {
                double acc = 0.0;
                if (l.p > 0.0) acc += l.h1 > 0.0 ? l.p / (l.h1 * l.h1) : inf;
                if (l.p < 1.0) acc += l.h2 > 0.0 ? (1.0 - l.p) / (l.h2 * l.h2) : inf;
                return acc;
            }
        },
        law);
}

ChannelDraw sample_channel(const ChannelModel& model, CounterRng& gain_rng, CounterRng& estimate_rng) {
    ChannelDraw draw;
    draw.h = std::visit(
        [&](const auto& l) -> double {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, Ideal>) {
                return 1.0;
            } else if constexpr (std::is_same_v<T, Constant>) {
                return l.h;
            } else if constexpr (std::is_same_v<T, Rayleigh>) {
                return l.sigma_r * std::sqrt(-2.0 * std::log1p(-gain_rng.uniform()));
            } else {
                return gain_rng.uniform() < l.p ? l.h1 : l.h2;
            }
        },
        model.law);
    draw.h_hat = draw.h;
    if (model.estimation_error_var > 0.0) draw.h_hat += std::sqrt(model.estimation_error_var) * estimate_rng.normal();
    return draw;
}

void sample_channel_noise(const Matrix& q_factor, CounterRng& rng, Vector& q) {
    const auto m = q_factor.rows();
    Vector z(m);
    for (Eigen::Index i = 0; i < m; ++i) z[i] = rng.normal();
    q.noalias() = q_factor * z;
}

// ---------------------------------------------------------------------------

void sample_regressor(const NodeProfile& profile, RegressorState& state, CounterRng& rng, RowVector& u) {
    const int m = profile.dim();
    if (const auto* ar = std::get_if<Ar1Shift>(&profile.regressor)) {
        const double beta = std::sqrt(ar->sigma_u2 * (1.0 - ar->alpha * ar->alpha));
        const double next = ar->alpha * state.samples[0] + beta * rng.normal();
        for (int j = m - 1; j > 0; --j) state.samples[j] = state.samples[j - 1];
        state.samples[0] = next;
        u = state.samples.transpose();
        return;
    }
    Vector z(m);
    for (int i = 0; i < m; ++i) z[i] = rng.normal();
    u.noalias() = (profile.ru_factor * z).transpose();
}

RowVector sample_regressor(const NodeProfile& profile, RegressorState& state, CounterRng& rng) {
    RowVector u(profile.dim());
    sample_regressor(profile, state, rng, u);
    return u;
}

double sample_measurement(const RowVector& u, const Vector& w_true, double sigma_v2, CounterRng& rng) {
    const double clean = u.dot(w_true);
    return sigma_v2 > 0.0 ? clean + std::sqrt(sigma_v2) * rng.normal() : clean;
}

// ---------------------------------------------------------------------------

Matrix haar_orthogonal(int m, CounterRng& rng) {
    Matrix a(m, m);
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i) a(i, j) = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix q = qr.householderQ() * Matrix::Identity(m, m);
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    // Sign fix so the distribution is exactly Haar.
    for (int j = 0; j < m; ++j)
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    return q;
}

Vector spread_eigenvalues(int m, double eigenvalue_spread, double trace) {
    if (m < 1) throw ConfigError("filter length must be >= 1", "network.m");
    if (!(eigenvalue_spread >= 1.0) || !std::isfinite(eigenvalue_spread))
        throw ConfigError("eigenvalue spread must be >= 1", "ru.spread");
    if (!(trace > 0.0) || !std::isfinite(trace)) throw ConfigError("trace must be > 0", "ru.trace");
    Vector lambda(m);
    for (int i = 0; i < m; ++i)
        lambda[i] = m == 1 ? 1.0 : 1.0 + (eigenvalue_spread - 1.0) * static_cast<double>(i) / (m - 1);
    return lambda * (trace / lambda.sum());
}

Matrix build_covariance(int m, double eigenvalue_spread, double trace, const Matrix& basis) {
    const Vector lambda = spread_eigenvalues(m, eigenvalue_spread, trace);
    if (basis.rows() != m || basis.cols() != m) throw ConfigError("basis dimension mismatch", "ru.basis");
    Matrix r = basis * lambda.asDiagonal() * basis.transpose();
    return 0.5 * (r + r.transpose());
}

Matrix build_covariance(int m, double eigenvalue_spread, double trace, CounterRng& rng) {
    (void)spread_eigenvalues(m, eigenvalue_spread, trace);  // validate before drawing
    return build_covariance(m, eigenvalue_spread, trace, haar_orthogonal(m, rng));
}

Vector normal_equation_solution(std::span<const Matrix> covariances, std::span<const Vector> cross_covariances) {
    if (covariances.empty() || covariances.size() != cross_covariances.size())
        throw NumericalError("normal equation: need one cross-covariance per covariance");
    Matrix r_sum = Matrix::Zero(covariances[0].rows(), covariances[0].cols());
    Vector r_du = Vector::Zero(cross_covariances[0].size());
    for (std::size_t k = 0; k < covariances.size(); ++k) {
        r_sum += covariances[k];
        r_du += cross_covariances[k];
    }
    Eigen::FullPivLU<Matrix> lu(r_sum);
    if (!lu.isInvertible()) throw NumericalError("normal equation: sum of covariances is singular");
    return lu.solve(r_du);
}

// ---------------------------------------------------------------------------

void NetworkConfig::validate() const {
    if (n < 2) throw ConfigError("need at least 2 nodes", "network.n");
    if (m < 1) throw ConfigError("filter length must be >= 1", "network.m");
    if (w_true.size() != m) throw ConfigError("length differs from network.m", "network.w_true");
    if (!w_true.allFinite()) throw ConfigError("must be finite", "network.w_true");
    if (static_cast<int>(profiles.size()) != n) throw ConfigError("expected one entry per node", "profiles");
    if (static_cast<int>(channels.size()) != n) throw ConfigError("expected one entry per node", "channels");
    for (int k = 0; k < n; ++k) {
        if (profiles[k].dim() != m) throw ConfigError("dimension differs from network.m", node_path(k + 1, "ru"));
        try {
            channel_moments(channels[k]);
        } catch (const ConfigError& e) {
            throw ConfigError(e.what(), "channels[" + std::to_string(k) + "]");
        }
    }
}

}  // namespace ilms::model
