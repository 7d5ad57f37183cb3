#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "marketback/bayes.hpp"

using namespace marketback;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_normal_pdf(double x, double mean, double var) {
    const double d = x - mean;
    return -0.5 * (std::log(2.0 * 3.14159265358979323846 * var) + d * d / var);
}

}  // namespace

TEST_CASE("priors") {
    const ParamPrior n = ParamPrior::normal(1.0, 2.0);
    CHECK(n.log_density(0.5) ==
          doctest::Approx(log_normal_pdf(0.5, 1.0, 4.0)).epsilon(1e-14));
    CHECK(n.in_support(-100.0));

    const ParamPrior u = ParamPrior::uniform(-1.0, 3.0);
    CHECK(u.log_density(0.0) == doctest::Approx(-std::log(4.0)).epsilon(1e-14));
    CHECK(u.log_density(3.5) == -kInf);
    CHECK_FALSE(u.in_support(-1.5));

    const ParamPrior j = ParamPrior::jeffreys_scale();
    CHECK(j.log_density(2.0) == doctest::Approx(-std::log(2.0)).epsilon(1e-14));
    CHECK(j.log_density(0.0) == -kInf);
    CHECK(j.log_density(-1.0) == -kInf);

    CHECK_THROWS_AS(ParamPrior::normal(0.0, 0.0), std::domain_error);
    CHECK_THROWS_AS(ParamPrior::uniform(2.0, 2.0), std::domain_error);
}

TEST_CASE("log_likelihood single step matches the hand-expanded product") {
    const DriftParams p{.theta = 1.2, .mu = 0.05, .sigma = 0.3};
    const ObservationModel om{.sigma_obs = 0.1};
    const double dt = 0.25;
    const SamplePath latent{.times = {0.0, dt}, .values = {0.04, 0.07}};
    const std::vector<double> obs = {0.04, 0.065};

    const double mean = 0.04 + p.theta * (p.mu - 0.04) * dt;
    const double expected =
        log_normal_pdf(0.07, mean, p.sigma * p.sigma * dt) +
        log_normal_pdf(0.065, 0.07, om.sigma_obs * om.sigma_obs);
    CHECK(log_likelihood(p, DriftKind::vasicek, latent, obs, om) ==
          doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("log_likelihood is additive over independent blocks") {
    const DriftParams p{.theta = 0.8, .mu = 0.0, .sigma = 0.2};
    const ObservationModel om{.sigma_obs = 0.1};
    // Block returns to its initial state, so concatenation = doubling.
    const SamplePath block{.times = {0.0, 1.0, 2.0},
                           .values = {0.1, -0.05, 0.1}};
    const std::vector<double> obs = {0.1, -0.04, 0.12};
    const SamplePath doubled{.times = {0.0, 1.0, 2.0, 3.0, 4.0},
                             .values = {0.1, -0.05, 0.1, -0.05, 0.1}};
    const std::vector<double> obs2 = {0.1, -0.04, 0.12, -0.04, 0.12};

    const double one = log_likelihood(p, DriftKind::vasicek, block, obs, om);
    const double two = log_likelihood(p, DriftKind::vasicek, doubled, obs2, om);
    CHECK(two == doctest::Approx(2.0 * one).epsilon(1e-13));
}

TEST_CASE("log_likelihood peaks when obs equals latent") {
    const DriftParams p{.theta = 1.0, .mu = 0.0, .sigma = 0.5};
    const ObservationModel om{.sigma_obs = 1e-3};
    const SamplePath latent{.times = {0.0, 0.5, 1.0},
                            .values = {0.0, 0.2, -0.1}};
    const std::vector<double> exact = {0.0, 0.2, -0.1};
    const double best = log_likelihood(p, DriftKind::vasicek, latent, exact, om);
    for (double eps : {1e-2, -1e-2, 5e-2}) {
        std::vector<double> perturbed = exact;
        perturbed[1] += eps;
        CHECK(log_likelihood(p, DriftKind::vasicek, latent, perturbed, om) <
              best);
    }
}

TEST_CASE("log_posterior support handling") {
    const DriftParams in{.theta = 1.0, .mu = 0.0, .sigma = 0.2};
    const DriftParams out{.theta = 9.0, .mu = 0.0, .sigma = 0.2};
    const ObservationModel om;
    const SamplePath latent{.times = {0.0, 1.0}, .values = {0.0, 0.1}};
    const std::vector<double> obs = {0.0, 0.1};
    const std::vector<ParamPrior> priors = {ParamPrior::uniform(0.0, 2.0),
                                            ParamPrior::normal(0.0, 1.0),
                                            ParamPrior::jeffreys_scale()};
    CHECK(std::isfinite(
        log_posterior(in, DriftKind::vasicek, latent, obs, priors, om)));
    CHECK(log_posterior(out, DriftKind::vasicek, latent, obs, priors, om) ==
          -kInf);
}

TEST_CASE("metropolis flat target accepts everything") {
    const auto flat = [](std::span<const double>) { return 0.0; };
    const ChainTrace t =
        metropolis_sample(flat, {0.0}, 500, {1.0}, NoiseSource(1, 0));
    CHECK(t.acceptance_rate == 1.0);
}

TEST_CASE("metropolis rejects a non-finite start") {
    const auto target = [](std::span<const double> v) {
        return v[0] > 0.0 ? 0.0 : -kInf;
    };
    CHECK_THROWS_AS(
        metropolis_sample(target, {-1.0}, 10, {1.0}, NoiseSource(1, 0)),
        std::runtime_error);
}

TEST_CASE("metropolis standard normal moments") {
    const auto target = [](std::span<const double> v) {
        return -0.5 * v[0] * v[0];
    };
    const ChainTrace t =
        metropolis_sample(target, {0.0}, 100000, {2.4}, NoiseSource(17, 0));
    std::vector<double> xs;
    xs.reserve(t.draws.size());
    for (const auto& d : t.draws) xs.push_back(d[0]);
    const ParamSummary s = summarize_chain(xs);
    CHECK(std::abs(s.mean) < 3.0 * s.sd / std::sqrt(s.ess));
    CHECK(s.sd * s.sd == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("metropolis acceptance band for a 3-d gaussian") {
    const auto target = [](std::span<const double> v) {
        double q = 0.0;
        for (double x : v) q += x * x;
        return -0.5 * q;
    };
    const double scale = 2.4 / std::sqrt(3.0);
    const ChainTrace t = metropolis_sample(
        target, {0.0, 0.0, 0.0}, 50000, {scale, scale, scale},
        NoiseSource(23, 0));
    CHECK(t.acceptance_rate > 0.2);
    CHECK(t.acceptance_rate < 0.6);
}

TEST_CASE("metropolis determinism") {
    const auto target = [](std::span<const double> v) {
        return -0.5 * v[0] * v[0];
    };
    const ChainTrace a =
        metropolis_sample(target, {0.3}, 2000, {1.0}, NoiseSource(5, 9));
    const ChainTrace b =
        metropolis_sample(target, {0.3}, 2000, {1.0}, NoiseSource(5, 9));
    CHECK(a.draws == b.draws);
    CHECK(a.acceptance_rate == b.acceptance_rate);
}

TEST_CASE("detailed balance on a 3-state target") {
    // Piecewise-constant density on [0,3): P(state k) proportional to p[k].
    const double p[3] = {0.2, 0.3, 0.5};
    const auto target = [&](std::span<const double> v) {
        const double x = v[0];
        if (x < 0.0 || x >= 3.0) return -kInf;
        return std::log(p[static_cast<int>(x)]);
    };
    const ChainTrace t =
        metropolis_sample(target, {1.5}, 1000000, {1.0}, NoiseSource(11, 0));
    double occ[3] = {0.0, 0.0, 0.0};
    for (const auto& d : t.draws) occ[static_cast<int>(d[0])] += 1.0;
    for (int k = 0; k < 3; ++k) {
        CHECK(std::abs(occ[k] / static_cast<double>(t.draws.size()) - p[k]) <
              0.02);
    }
}

TEST_CASE("conjugate normal-normal posterior recovery") {
    // Prior N(0,1), 10 observations with mean 0.5, sigma_obs = 1:
    // posterior N(10*0.5/11, 1/11).
    const std::vector<double> ys(10, 0.5);
    const auto target = [&](std::span<const double> v) {
        const double m = v[0];
        double lp = -0.5 * m * m;
        for (double y : ys) lp += -0.5 * (y - m) * (y - m);
        return lp;
    };
    const ChainTrace t =
        metropolis_sample(target, {0.0}, 100000, {0.8}, NoiseSource(29, 0));
    std::vector<double> xs;
    xs.reserve(t.draws.size());
    for (const auto& d : t.draws) xs.push_back(d[0]);
    const ParamSummary s = summarize_chain(xs);
    const double post_mean = 10.0 * 0.5 / 11.0;
    const double post_var = 1.0 / 11.0;
    CHECK(std::abs(s.mean - post_mean) <
          3.0 * std::sqrt(post_var / s.ess));
    CHECK(std::abs(s.sd * s.sd - post_var) <
          3.0 * post_var * std::sqrt(2.0 / s.ess));

    SUBCASE("posterior predictive of the conjugate model") {
        const auto identity = [](std::span<const double> v) { return v[0]; };
        const ObservationModel om{.sigma_obs = 1.0};
        const Predictive pred =
            posterior_predictive(t, identity, om, NoiseSource(30, 0));
        CHECK(pred.mean == doctest::Approx(s.mean).epsilon(1e-12));
        CHECK(std::abs(pred.mean - post_mean) <
              3.0 * std::sqrt(post_var / s.ess));
        double var = 0.0;
        for (double d : pred.draws) var += (d - pred.mean) * (d - pred.mean);
        var /= static_cast<double>(pred.draws.size());
        CHECK(var == doctest::Approx(post_var + 1.0).epsilon(0.05));
    }
}

TEST_CASE("posterior predictive degenerate traces") {
    const auto identity = [](std::span<const double> v) { return v[0]; };
    const ObservationModel om{.sigma_obs = 0.5};

    ChainTrace single;
    single.draws = {{2.0}};
    single.log_posts = {0.0};
    const Predictive one =
        posterior_predictive(single, identity, om, NoiseSource(1, 0));
    CHECK(one.mean == 2.0);
    CHECK(one.draws.size() == 1);

    ChainTrace repeated;
    repeated.draws.assign(20000, {1.5});
    repeated.log_posts.assign(20000, 0.0);
    const Predictive rep =
        posterior_predictive(repeated, identity, om, NoiseSource(2, 0));
    CHECK(rep.mean == doctest::Approx(1.5).epsilon(1e-12));
    double var = 0.0;
    for (double d : rep.draws) var += (d - 1.5) * (d - 1.5);
    var /= static_cast<double>(rep.draws.size());
    // Only the observation noise is left.
    CHECK(std::sqrt(var) == doctest::Approx(0.5).epsilon(0.05));

    ChainTrace empty;
    CHECK_THROWS_AS(posterior_predictive(empty, identity, om, NoiseSource(3, 0)),
                    std::domain_error);
}

TEST_CASE("effective sample size") {
    NoiseSource rng(31, 0);
    std::vector<double> iid(5000);
    for (double& x : iid) x = rng.normal();
    const double ess = effective_sample_size(iid);
    CHECK(ess > 2500.0);
    CHECK(ess <= 5000.0 + 1e-9);

    const std::vector<double> constant(100, 3.0);
    CHECK(effective_sample_size(constant) == 1.0);
}

TEST_CASE("summarize_chain quantiles") {
    std::vector<double> xs(101);
    std::iota(xs.begin(), xs.end(), 0.0);
    const ParamSummary s = summarize_chain(xs);
    CHECK(s.mean == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(s.q05 == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(s.q95 == doctest::Approx(95.0).epsilon(1e-12));
}

TEST_CASE("infer_drift_posterior with no data reproduces the prior") {
    const std::vector<ParamPrior> priors = {ParamPrior::normal(0.5, 0.2),
                                            ParamPrior::normal(0.3, 0.1),
                                            ParamPrior::uniform(0.5, 1.5)};
    McmcConfig mcmc;
    mcmc.n_steps = 40000;
    mcmc.proposal_scales = {0.3, 0.15, 0.5};
    const PathGrid grid{.t0 = 0.0, .dt = 0.1, .n_steps = 0};
    const PosteriorResult res = infer_drift_posterior(
        {}, grid, DriftKind::vasicek, priors, ObservationModel{},
        mcmc, NoiseSource(41, 0));
    REQUIRE(res.summaries.size() == 3);
    const auto& th = res.summaries[0];
    CHECK(std::abs(th.mean - 0.5) < 3.0 * 0.2 / std::sqrt(th.ess));
    CHECK(th.sd == doctest::Approx(0.2).epsilon(0.1));
    const auto& mu = res.summaries[1];
    CHECK(std::abs(mu.mean - 0.3) < 3.0 * 0.1 / std::sqrt(mu.ess));
    const auto& sg = res.summaries[2];
    CHECK(std::abs(sg.mean - 1.0) <
          3.0 * (1.0 / std::sqrt(12.0)) / std::sqrt(sg.ess));
}

TEST_CASE("infer_drift_posterior recovers the long-run level") {
    // Simulate a vasicek path and check the posterior brackets mu.
    const DriftParams truth{.theta = 1.0, .mu = 0.3, .sigma = 0.2};
    const PathGrid grid{.t0 = 0.0, .dt = 0.1, .n_steps = 400};
    const auto paths = simulate_paths(DriftKind::vasicek, truth, grid, 0.3, 1,
                                      NoiseSource(7, 0), Scheme::vasicek_exact);
    const ObservationModel om{.sigma_obs = 0.1};
    NoiseSource obs_rng(8, 0);
    std::vector<double> obs = paths[0].values;
    for (double& y : obs) y += om.sigma_obs * obs_rng.normal();

    const std::vector<ParamPrior> priors = {ParamPrior::uniform(0.05, 5.0),
                                            ParamPrior::normal(0.0, 1.0),
                                            ParamPrior::jeffreys_scale()};
    McmcConfig mcmc;
    mcmc.n_steps = 20000;
    mcmc.proposal_scales = {0.15, 0.05, 0.03};
    const PosteriorResult res =
        infer_drift_posterior(obs, grid, DriftKind::vasicek, priors, om, mcmc,
                              NoiseSource(9, 0));
    const auto& mu = res.summaries[1];
    CHECK(std::abs(mu.mean - truth.mu) < 4.0 * mu.sd);
    CHECK(res.acceptance_rate > 0.05);
    CHECK(res.acceptance_rate < 0.95);

    SUBCASE("identical seed gives an identical trace") {
        const PosteriorResult rerun =
            infer_drift_posterior(obs, grid, DriftKind::vasicek, priors, om,
                                  mcmc, NoiseSource(9, 0));
        CHECK(rerun.trace.draws == res.trace.draws);
    }
}
