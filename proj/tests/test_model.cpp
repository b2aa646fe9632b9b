#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ilms/model.hpp"
#include "support.hpp"

#include <cmath>
#include <numbers>
#include <vector>

using namespace ilms;
using namespace ilms::model;

namespace {

struct Stats {
    double mean = 0.0, var = 0.0, se = 0.0;
};

Stats stats(const std::vector<double>& x) {
    Stats s;
    for (double v : x) s.mean += v;
    s.mean /= x.size();
    for (double v : x) s.var += (v - s.mean) * (v - s.mean);
    s.var /= (x.size() - 1);
    s.se = std::sqrt(s.var / x.size());
    return s;
}

NodeProfile iid_profile(const Matrix& ru) {
    return make_profile(1, 0.1, ru, 0.0, Matrix::Zero(ru.rows(), ru.cols()), IidGaussian{});
}

}  // namespace

TEST_CASE("build_covariance: trace, spread and symmetry") {
    CounterRng rng(1, 0, 0, 0, Stream::Basis);
    const Matrix one = build_covariance(1, 1.0, 2.0, rng);
    CHECK(one(0, 0) == doctest::Approx(2.0).epsilon(1e-14));

    const Matrix two = build_covariance(2, 4.0, 5.0, rng);
    Eigen::SelfAdjointEigenSolver<Matrix> es(two);
    CHECK(es.eigenvalues()[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(es.eigenvalues()[1] == doctest::Approx(4.0).epsilon(1e-12));

    for (int trial = 0; trial < 20; ++trial) {
        CounterRng r(7, trial, 0, 0, Stream::Basis);
        const double trace = 1.0 + trial;
        const Matrix a = build_covariance(4, 4.0, trace, r);
        Eigen::SelfAdjointEigenSolver<Matrix> e(a);
        CHECK((a - a.transpose()).cwiseAbs().maxCoeff() == 0.0);
        CHECK(e.eigenvalues().minCoeff() > 0.0);
        CHECK(e.eigenvalues().maxCoeff() / e.eigenvalues().minCoeff() == doctest::Approx(4.0).epsilon(1e-10));
        CHECK(a.trace() == doctest::Approx(trace).epsilon(1e-10));
    }

    CHECK_THROWS_AS((void)build_covariance(3, 0.5, 1.0, rng), ConfigError);
    CHECK_THROWS_AS((void)build_covariance(3, 2.0, -1.0, rng), ConfigError);
}

TEST_CASE("haar_orthogonal is orthogonal") {
    CounterRng rng(3, 0, 0, 0, Stream::Basis);
    const Matrix u = haar_orthogonal(6, rng);
    CHECK((u.transpose() * u - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("iid regressors: zero mean and covariance R") {
    Matrix ru(2, 2);
    ru << 2.0, 0.5, 0.5, 1.0;
    const auto p = iid_profile(ru);
    RegressorState state(2);
    const int draws = 200000;
    std::vector<double> x0(draws), x1(draws);
    Matrix acc = Matrix::Zero(2, 2);
    for (int i = 0; i < draws; ++i) {
        CounterRng rng(5, 0, 1, static_cast<std::uint64_t>(i), Stream::Regressor);
        const RowVector u = sample_regressor(p, state, rng);
        x0[i] = u[0];
        x1[i] = u[1];
        acc += u.transpose() * u;
    }
    const auto s0 = stats(x0), s1 = stats(x1);
    CHECK(std::abs(s0.mean) < 5 * s0.se);
    CHECK(std::abs(s1.mean) < 5 * s1.se);
    acc /= draws;
    CHECK((acc - ru).cwiseAbs().maxCoeff() < 0.03);
}

TEST_CASE("ar1_shift regressors") {
    SUBCASE("alpha = 0 degenerates to iid samples of variance sigma_u2") {
        const Ar1Shift mode{0.0, 1.7};
        auto p = make_profile(1, 0.1, ar1_covariance(3, mode), 0.0, Matrix::Zero(3, 3), mode, true);
        RegressorState st(3);
        std::vector<double> x, lag;
        for (int i = 0; i < 100000; ++i) {
            CounterRng rng(9, 0, 1, static_cast<std::uint64_t>(i), Stream::Regressor);
            const RowVector u = sample_regressor(p, st, rng);
            x.push_back(u[0]);
            if (i > 0) lag.push_back(u[0] * u[1]);
        }
        CHECK(stats(x).var == doctest::Approx(1.7).epsilon(0.02));
        const auto l = stats(lag);
        CHECK(std::abs(l.mean) < 5 * l.se);
    }
    SUBCASE("alpha = 0.5 has lag-1 autocorrelation 0.5 and shifts newest-first") {
        const Ar1Shift mode{0.5, 1.0};
        auto p = make_profile(1, 0.1, ar1_covariance(2, mode), 0.0, Matrix::Zero(2, 2), mode);
        RegressorState st(2);
        RowVector prev;
        double num = 0.0, den = 0.0;
        const int draws = 200000;
        for (int i = 0; i < draws; ++i) {
            CounterRng rng(10, 0, 1, static_cast<std::uint64_t>(i), Stream::Regressor);
            const RowVector u = sample_regressor(p, st, rng);
            if (i > 0) CHECK_EQ(u[1], prev[0]);
            if (i > 100) {
                num += u[0] * u[1];
                den += u[0] * u[0];
            }
            prev = u;
        }
        CHECK(num / den == doctest::Approx(0.5).epsilon(0.02));
    }
    SUBCASE("state starts at zero") {
        RegressorState st(4);
        CHECK(st.samples.isZero(0.0));
    }
    SUBCASE("pole range is enforced unless widened") {
        const Ar1Shift wide{0.8, 1.0};
        CHECK_THROWS_AS((void)make_profile(1, 0.1, ar1_covariance(2, wide), 0.0, Matrix::Zero(2, 2), wide), ConfigError);
        CHECK_NOTHROW((void)make_profile(1, 0.1, ar1_covariance(2, wide), 0.0, Matrix::Zero(2, 2), wide, true));
        const Ar1Shift zero{0.0, 1.0};
        CHECK_THROWS_AS((void)make_profile(1, 0.1, ar1_covariance(2, zero), 0.0, Matrix::Zero(2, 2), zero), ConfigError);
    }
}

TEST_CASE("sample_measurement") {
    CounterRng rng(1, 0, 0, 0, Stream::Measurement);
    RowVector u(2);
    u << 1.0, 0.0;
    Vector w(2);
    w << 3.0, 7.0;
    CHECK(sample_measurement(u, w, 0.0, rng) == 3.0);
    CHECK(sample_measurement(RowVector::Zero(2), w, 0.0, rng) == 0.0);

    std::vector<double> v;
    for (int i = 0; i < 200000; ++i) {
        CounterRng r(2, 0, 1, static_cast<std::uint64_t>(i), Stream::Measurement);
        v.push_back(sample_measurement(u, w, 0.25, r) - 3.0);
    }
    const auto s = stats(v);
    // Standard error of a Gaussian sample variance: var * sqrt(2 / (n - 1)).
    CHECK(std::abs(s.var - 0.25) < 3 * 0.25 * std::sqrt(2.0 / (v.size() - 1)));
}

TEST_CASE("channel moments") {
    CHECK(channel_moments(make_channel(Ideal{})).m == 1.0);
    CHECK(channel_moments(make_channel(Ideal{})).s == 1.0);
    const auto c = channel_moments(make_channel(Constant{0.9}));
    CHECK(c.m == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(c.s == doctest::Approx(0.81).epsilon(1e-15));
    const auto tp = channel_moments(make_channel(TwoPoint{0.5, 1.5, 0.5}));
    CHECK(tp.m == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(tp.s == doctest::Approx(1.25).epsilon(1e-15));

    auto bad = make_channel(Constant{0.9});
    bad.s = 0.82;
    CHECK_THROWS_AS((void)channel_moments(bad), ConfigError);
    CHECK_THROWS_AS((void)make_channel(Rayleigh{0.0}), ConfigError);
    CHECK_THROWS_AS((void)make_channel(Rayleigh{-1.0}), ConfigError);
}

TEST_CASE("rayleigh_from_mean") {
    const auto a = rayleigh_from_mean(std::sqrt(2.0) / 2.0);
    CHECK(a.sigma_r == doctest::Approx(0.56419).epsilon(1e-5));
    CHECK(a.s == doctest::Approx(0.63662).epsilon(1e-5));
    CHECK(rayleigh_from_mean(1.0).s == doctest::Approx(4.0 / std::numbers::pi).epsilon(1e-14));
    CHECK(rayleigh_from_mean(1e-9).s < 1e-17);
    CHECK_THROWS_AS((void)rayleigh_from_mean(0.0), ConfigError);
}

TEST_CASE("sampled gains are non-negative and match the analytic moments") {
    const std::vector<ChannelLaw> laws = {Ideal{}, Constant{0.9}, Rayleigh{rayleigh_from_mean(std::sqrt(0.5)).sigma_r},
                                          Rayleigh{0.56419}, TwoPoint{0.5, 1.5, 0.5}, TwoPoint{0.0, 3.0, 2.0 / 3.0},
                                          unit_mean_law(1.3)};
    const int draws = 1000000;
    for (const auto& law : laws) {
        const auto model = make_channel(law);
        std::vector<double> h(draws), h2(draws);
        double min_gain = 1.0;
        for (int i = 0; i < draws; ++i) {
            CounterRng g(3, 0, 1, static_cast<std::uint64_t>(i), Stream::ChannelGain);
            CounterRng e(3, 0, 1, static_cast<std::uint64_t>(i), Stream::ChannelEstimate);
            const auto d = sample_channel(model, g, e);
            min_gain = std::min(min_gain, d.h);
            if (d.h_hat != d.h) FAIL("estimate differs under perfect CSI");
            h[i] = d.h;
            h2[i] = d.h * d.h;
        }
        CHECK(min_gain >= 0.0);
        const auto sm = stats(h), ss = stats(h2);
        CHECK(std::abs(sm.mean - model.m) <= 4 * sm.se + 1e-9);
        CHECK(std::abs(ss.mean - model.s) <= 4 * ss.se + 1e-9);
    }
}

TEST_CASE("Rayleigh target mean sqrt(2)/2 is reproduced empirically") {
    const auto model = make_channel(Rayleigh{rayleigh_from_mean(std::sqrt(2.0) / 2.0).sigma_r});
    std::vector<double> h;
    for (int i = 0; i < 1000000; ++i) {
        CounterRng g(4, 0, 2, static_cast<std::uint64_t>(i), Stream::ChannelGain);
        CounterRng e(4, 0, 2, static_cast<std::uint64_t>(i), Stream::ChannelEstimate);
        h.push_back(sample_channel(model, g, e).h);
    }
    const auto s = stats(h);
    CHECK(std::abs(s.mean - 0.70711) < 3 * s.se + 1e-5);
}

TEST_CASE("channel estimate error has the configured variance") {
    const auto model = make_channel(Constant{1.0}, 0.04);
    std::vector<double> err;
    for (int i = 0; i < 200000; ++i) {
        CounterRng g(6, 0, 1, static_cast<std::uint64_t>(i), Stream::ChannelGain);
        CounterRng e(6, 0, 1, static_cast<std::uint64_t>(i), Stream::ChannelEstimate);
        const auto d = sample_channel(model, g, e);
        err.push_back(d.h_hat - d.h);
    }
    const auto s = stats(err);
    CHECK(std::abs(s.mean) < 5 * s.se);
    CHECK(s.var == doctest::Approx(0.04).epsilon(0.02));
}

TEST_CASE("unit_mean_law has mean one and the requested second moment") {
    for (double s : {1.0, 1.02, 1.5, 2.0, 3.0, 10.0}) {
        const auto m = law_moments(unit_mean_law(s));
        CHECK(m.m == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(m.s == doctest::Approx(s).epsilon(1e-14));
    }
    CHECK_THROWS_AS((void)unit_mean_law(0.9), ConfigError);
}

TEST_CASE("inverse_square_moment") {
    CHECK(inverse_square_moment(Constant{0.5}) == doctest::Approx(4.0));
    CHECK(std::isinf(inverse_square_moment(Rayleigh{1.0})));
    CHECK(inverse_square_moment(TwoPoint{0.5, 1.0, 0.5}) == doctest::Approx(0.5 * 4.0 + 0.5));
}

TEST_CASE("channel noise has covariance Q") {
    Matrix q(2, 2);
    q << 0.02, 0.005, 0.005, 0.01;
    const auto p = make_profile(1, 0.1, Matrix::Identity(2, 2), 0.0, q, IidGaussian{});
    Matrix acc = Matrix::Zero(2, 2);
    Vector draw(2);
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        CounterRng rng(8, 0, 1, static_cast<std::uint64_t>(i), Stream::ChannelNoise);
        sample_channel_noise(p.q_factor, rng, draw);
        acc += draw * draw.transpose();
    }
    CHECK(((acc / n) - q).cwiseAbs().maxCoeff() < 5e-4);
}

TEST_CASE("substreams are uncorrelated across nodes and iterations") {
    double cross_node = 0.0, cross_iter = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        CounterRng a(1, 0, 1, static_cast<std::uint64_t>(i), Stream::Regressor);
        CounterRng b(1, 0, 2, static_cast<std::uint64_t>(i), Stream::Regressor);
        CounterRng c(1, 0, 1, static_cast<std::uint64_t>(i + 1), Stream::Regressor);
        const double x = a.normal();
        cross_node += x * b.normal();
        cross_iter += x * c.normal();
    }
    CHECK(std::abs(cross_node / n) < 5.0 / std::sqrt(n));
    CHECK(std::abs(cross_iter / n) < 5.0 / std::sqrt(n));

    CounterRng x(1, 2, 3, 4, Stream::Measurement), y(1, 2, 3, 4, Stream::Measurement);
    for (int i = 0; i < 10; ++i) CHECK_EQ(x(), y());
}

TEST_CASE("normal_equation_solution") {
    Vector w(3);
    w << 1.0, -2.0, 0.5;
    CounterRng rng(2, 0, 0, 0, Stream::Basis);
    std::vector<Matrix> rs;
    std::vector<Vector> rd;
    for (int k = 0; k < 4; ++k) {
        rs.push_back(build_covariance(3, 3.0, 1.0 + k, rng));
        rd.push_back(rs.back() * w);
    }
    CHECK((normal_equation_solution(rs, rd) - w).cwiseAbs().maxCoeff() < 1e-10);

    std::vector<Matrix> one = {Matrix::Identity(2, 2)};
    std::vector<Vector> r1 = {Vector::LinSpaced(2, 1.0, 2.0)};
    CHECK((normal_equation_solution(one, r1) - r1[0]).norm() < 1e-15);

    Vector w2(2);
    w2 << 0.3, -0.7;
    std::vector<Matrix> two = {2.0 * Matrix::Identity(2, 2), Matrix::Identity(2, 2)};
    std::vector<Vector> rd2 = {2.0 * w2, w2};
    CHECK((normal_equation_solution(two, rd2) - w2).norm() < 1e-15);

    std::vector<Matrix> singular = {Matrix::Zero(2, 2)};
    CHECK_THROWS_AS((void)normal_equation_solution(singular, r1), NumericalError);
}

TEST_CASE("profile and network validation") {
    CHECK_THROWS_AS((void)make_profile(1, 0.0, Matrix::Identity(2, 2), 0.0, Matrix::Zero(2, 2), IidGaussian{}), ConfigError);
    CHECK_THROWS_AS((void)make_profile(1, 0.1, Matrix::Identity(2, 2), -1.0, Matrix::Zero(2, 2), IidGaussian{}), ConfigError);
    Matrix asym(2, 2);
    asym << 1.0, 0.2, 0.0, 1.0;
    CHECK_THROWS_AS((void)make_profile(1, 0.1, asym, 0.0, Matrix::Zero(2, 2), IidGaussian{}), ConfigError);
    Matrix indefinite(2, 2);
    indefinite << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS((void)make_profile(1, 0.1, indefinite, 0.0, Matrix::Zero(2, 2), IidGaussian{}), ConfigError);
    CHECK_THROWS_AS((void)make_profile(1, 0.1, Matrix::Identity(2, 2), 0.0, -Matrix::Identity(2, 2), IidGaussian{}),
                    ConfigError);

    auto net = test::identical_scalar_network(3, {}, 1.0);
    CHECK_NOTHROW(net.validate());
    net.channels.pop_back();
    CHECK_THROWS_AS(net.validate(), ConfigError);
}
