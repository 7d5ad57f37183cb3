#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "marketback/rng.hpp"
#include "marketback/sde.hpp"

using namespace marketback;

TEST_CASE("noise source determinism and stream separation") {
    NoiseSource a(42, 3);
    NoiseSource b(42, 3);
    for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
    CHECK(a.position() == 100);

    NoiseSource c(42, 4);
    NoiseSource d(42, 3);
    bool any_diff = false;
    for (int i = 0; i < 10; ++i) {
        if (c.normal() != d.normal()) any_diff = true;
    }
    CHECK(any_diff);

    NoiseSource u(7, 0);
    for (int i = 0; i < 1000; ++i) {
        const double x = u.uniform();
        CHECK(x > 0.0);
        CHECK(x < 1.0);
    }
}

TEST_CASE("noise source moments") {
    NoiseSource n(123, 0);
    double sum = 0.0, sum2 = 0.0;
    const int N = 200000;
    for (int i = 0; i < N; ++i) {
        const double z = n.normal();
        sum += z;
        sum2 += z * z;
    }
    const double mean = sum / N;
    const double var = sum2 / N - mean * mean;
    CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(N)));
    CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("variance_helper examples and continuity") {
    CHECK(variance_helper(1.0, 0.0) == 0.0);
    CHECK(variance_helper(0.0, 2.5) == 2.5);
    CHECK(variance_helper(1.0, 1.0) ==
          doctest::Approx(0.6321205588285577).epsilon(1e-9));
    for (double t : {0.01, 0.1, 1.0, 10.0, 100.0}) {
        CHECK(std::abs(variance_helper(1e-9, t) - t) < 1e-6 * t);
    }
    CHECK_THROWS_AS(variance_helper(std::nan(""), 1.0), std::domain_error);
    CHECK_THROWS_AS(variance_helper(1.0, -0.5), std::domain_error);
}

TEST_CASE("vasicek drift deterministic part") {
    NoiseSource n(1, 0);
    DriftParams p{.theta = 1.0, .mu = 0.05, .sigma = 0.0};
    CHECK(vasicek_drift(0.05, 1.0, p, n) == 0.0);
    p.theta = 2.0;
    CHECK(vasicek_drift(0.03, 1.0, p, n) == doctest::Approx(0.04).epsilon(1e-14));
}

TEST_CASE("vasicek drift monte carlo mean") {
    DriftParams p{.theta = 2.0, .mu = 0.05, .sigma = 0.1};
    NoiseSource n(99, 0);
    const int N = 1000000;
    double sum = 0.0;
    for (int i = 0; i < N; ++i) sum += vasicek_drift(0.03, 1.0, p, n);
    const double mean = sum / N;
    // sd of one draw = sigma*sqrt(v(2,1))
    const double sd = p.sigma * std::sqrt(variance_helper(p.theta, 1.0));
    CHECK(std::abs(mean - 0.04) < 3.0 * sd / std::sqrt(static_cast<double>(N)));
}

TEST_CASE("hull-white drift deterministic part") {
    NoiseSource n(1, 0);
    DriftParams p{.theta = 1.0, .mu = 0.05, .sigma = 0.0};
    CHECK(hull_white_drift(0.05, 1.0, p, n) == doctest::Approx(0.05).epsilon(1e-14));
    CHECK(hull_white_drift(0.03, 1.0, p, n) == doctest::Approx(0.09).epsilon(1e-14));
}

TEST_CASE("hull-white drift monte carlo mean") {
    DriftParams p{.theta = 1.0, .mu = 0.05, .sigma = 0.2};
    NoiseSource n(77, 0);
    const int N = 1000000;
    double sum = 0.0;
    for (int i = 0; i < N; ++i) sum += hull_white_drift(0.03, 1.0, p, n);
    const double sd = p.sigma * std::sqrt(variance_helper(p.theta, 1.0));
    CHECK(std::abs(sum / N - 0.09) <
          3.0 * sd / std::sqrt(static_cast<double>(N)));
}

TEST_CASE("longstaff-schwartz drift deterministic part and variance") {
    NoiseSource n(1, 0);
    DriftParams p{.theta = 1.0, .mu = 0.2, .sigma = 0.0};
    CHECK(longstaff_schwartz_drift(0.2, 1.0, p, n) == doctest::Approx(0.2).epsilon(1e-14));
    p.mu = 0.0;
    CHECK(longstaff_schwartz_drift(0.1, 1.0, p, n) == doctest::Approx(-0.2).epsilon(1e-14));

    // Two independent noise legs: variance 2 sigma^2 v = 0.012642.
    DriftParams q{.theta = 1.0, .mu = 0.0, .sigma = 0.1};
    NoiseSource m(5, 0);
    const int N = 1000000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < N; ++i) {
        const double d = longstaff_schwartz_drift(0.0, 1.0, q, m);
        sum += d;
        sum2 += d * d;
    }
    const double mean = sum / N;
    const double var = sum2 / N - mean * mean;
    const double expected = 2.0 * q.sigma * q.sigma * variance_helper(1.0, 1.0);
    // SE of a sample variance of a Gaussian: var * sqrt(2/N).
    CHECK(std::abs(var - expected) <
          3.0 * expected * std::sqrt(2.0 / static_cast<double>(N)));
}

TEST_CASE("draw-count discipline per drift call") {
    DriftParams p{.theta = 1.0, .mu = 0.05, .sigma = 0.1};
    NoiseSource n(11, 0);
    vasicek_drift(0.03, 1.0, p, n);
    CHECK(n.position() == 1);
    hull_white_drift(0.03, 1.0, p, n);
    CHECK(n.position() == 2);
    longstaff_schwartz_drift(0.03, 1.0, p, n);
    CHECK(n.position() == 4);
}

TEST_CASE("sigma=0 output independent of noise source state") {
    DriftParams p{.theta = 1.5, .mu = 0.02, .sigma = 0.0};
    NoiseSource a(1, 0);
    NoiseSource b(999, 42);
    b.normal();  // desynchronize
    for (DriftKind kind : {DriftKind::vasicek, DriftKind::hull_white,
                           DriftKind::longstaff_schwartz}) {
        CHECK(stochastic_drift(kind, 0.07, 0.3, p, a) ==
              stochastic_drift(kind, 0.07, 0.3, p, b));
    }
}

TEST_CASE("simulate_paths sigma=0 fixed point") {
    DriftParams p{.theta = 1.0, .mu = 0.05, .sigma = 0.0};
    PathGrid grid{.t0 = 0.0, .dt = 0.1, .n_steps = 20};
    const auto paths = simulate_paths(DriftKind::vasicek, p, grid, 0.05, 3,
                                      NoiseSource(1, 0), Scheme::vasicek_exact);
    REQUIRE(paths.size() == 3);
    for (const auto& path : paths) {
        REQUIRE(path.values.size() == 21);
        for (double v : path.values) CHECK(v == doctest::Approx(0.05).epsilon(1e-14));
    }
}

TEST_CASE("simulate_paths exact-scheme vasicek moments") {
    DriftParams p{.theta = 1.0, .mu = 0.03, .sigma = 0.02};
    PathGrid grid{.t0 = 0.0, .dt = 0.25, .n_steps = 4};  // exact: coarse ok
    const int N = 50000;
    const auto paths = simulate_paths(DriftKind::vasicek, p, grid, 0.05, N,
                                      NoiseSource(7, 0), Scheme::vasicek_exact);
    double sum = 0.0, sum2 = 0.0;
    for (const auto& path : paths) {
        const double r = path.values.back();
        sum += r;
        sum2 += r * r;
    }
    const double mean = sum / N;
    const double var = sum2 / N - mean * mean;
    const double true_mean = 0.037357588823428847;
    const double true_var = 1.7293294335267746e-4;
    CHECK(std::abs(mean - true_mean) <
          3.0 * std::sqrt(true_var / static_cast<double>(N)));
    CHECK(std::abs(var - true_var) <
          3.0 * true_var * std::sqrt(2.0 / static_cast<double>(N)));
}

TEST_CASE("simulate_paths is reproducible and order-independent") {
    DriftParams p{.theta = 1.0, .mu = 0.03, .sigma = 0.02};
    PathGrid grid{.t0 = 0.0, .dt = 0.1, .n_steps = 10};
    const auto a = simulate_paths(DriftKind::vasicek, p, grid, 0.05, 8,
                                  NoiseSource(13, 5), Scheme::euler);
    const auto b = simulate_paths(DriftKind::vasicek, p, grid, 0.05, 8,
                                  NoiseSource(13, 5), Scheme::euler);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].values == b[i].values);
    }
    // Path i only depends on stream base + i, not on how many paths ran.
    const auto solo = simulate_paths(DriftKind::vasicek, p, grid, 0.05, 4,
                                     NoiseSource(13, 5), Scheme::euler);
    for (std::size_t i = 0; i < solo.size(); ++i) {
        CHECK(solo[i].values == a[i].values);
    }
}

TEST_CASE("euler and exact schemes agree on the mean at fine dt") {
    DriftParams p{.theta = 1.0, .mu = 0.03, .sigma = 0.02};
    PathGrid grid{.t0 = 0.0, .dt = 1.0 / 252.0, .n_steps = 252};
    const int N = 20000;
    const auto euler = simulate_paths(DriftKind::vasicek, p, grid, 0.05, N,
                                      NoiseSource(3, 0), Scheme::euler);
    const auto exact = simulate_paths(DriftKind::vasicek, p, grid, 0.05, N,
                                      NoiseSource(4, 0), Scheme::vasicek_exact);
    double me = 0.0, mx = 0.0, ve = 0.0, vx = 0.0;
    for (int i = 0; i < N; ++i) {
        me += euler[static_cast<std::size_t>(i)].values.back();
        mx += exact[static_cast<std::size_t>(i)].values.back();
    }
    me /= N;
    mx /= N;
    for (int i = 0; i < N; ++i) {
        const double de = euler[static_cast<std::size_t>(i)].values.back() - me;
        const double dx = exact[static_cast<std::size_t>(i)].values.back() - mx;
        ve += de * de;
        vx += dx * dx;
    }
    ve /= N;
    vx /= N;
    const double se = std::sqrt((ve + vx) / static_cast<double>(N));
    CHECK(std::abs(me - mx) < 3.0 * se);
}

TEST_CASE("vasicek_exact scheme rejected for other drift kinds") {
    DriftParams p{.theta = 1.0, .mu = 0.03, .sigma = 0.02};
    PathGrid grid{.t0 = 0.0, .dt = 0.1, .n_steps = 5};
    CHECK_THROWS_AS(simulate_paths(DriftKind::hull_white, p, grid, 0.05, 1,
                                   NoiseSource(1, 0), Scheme::vasicek_exact),
                    std::invalid_argument);
}

TEST_CASE("path grid times are affine in the step index") {
    DriftParams p{.theta = 0.5, .mu = 0.0, .sigma = 0.1};
    PathGrid grid{.t0 = 2.0, .dt = 0.5, .n_steps = 4};
    const auto paths = simulate_paths(DriftKind::hull_white, p, grid, 0.0, 1,
                                      NoiseSource(1, 0), Scheme::euler);
    REQUIRE(paths[0].times.size() == 5);
    for (int k = 0; k <= 4; ++k) {
        CHECK(paths[0].times[static_cast<std::size_t>(k)] ==
              doctest::Approx(2.0 + 0.5 * k).epsilon(1e-14));
    }
}
