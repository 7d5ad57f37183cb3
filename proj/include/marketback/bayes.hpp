#pragma once

#include <functional>
#include <span>
#include <vector>

#include "marketback/rng.hpp"
#include "marketback/sde.hpp"

namespace marketback {

struct ParamPrior {
    enum class Kind { normal, uniform, jeffreys_scale };
    Kind kind = Kind::normal;
    double a = 0.0;  // mean / lower bound (unused for jeffreys_scale)
    double b = 1.0;  // sd / upper bound (unused for jeffreys_scale)

    static ParamPrior normal(double mean, double sd);
    static ParamPrior uniform(double lo, double hi);
    // pi(x) proportional to 1/x on x > 0.
    static ParamPrior jeffreys_scale();

    bool in_support(double x) const;
    // Unnormalized for jeffreys_scale; -inf outside the support.
    double log_density(double x) const;
};

struct ObservationModel {
    double sigma_obs = 0.1;  // additive Gaussian observation noise sd
};

struct ChainTrace {
    std::vector<std::vector<double>> draws;
    std::vector<double> log_posts;
    double acceptance_rate = 0.0;
    std::uint64_t seed = 0;
};

// Data log-likelihood of a latent path under the Euler-implied Gaussian
// transition N(x_t ; x_{t-1} + drift dt, sigma^2 dt) plus Gaussian
// observation terms y_t ~ N(x_t, sigma_obs^2). The path's first point is the
// conditioning initial state: it contributes no transition and no
// observation term (obs[0] is aligned to it but unscored), so likelihoods of
// independent blocks add exactly.
double log_likelihood(const DriftParams& params, DriftKind kind,
                      const SamplePath& latent, std::span<const double> obs,
                      const ObservationModel& obs_model);

// log prior(theta, mu, sigma) + log_likelihood. Priors are given in the
// order (theta, mu, sigma). Returns -inf out of support instead of throwing.
double log_posterior(const DriftParams& params, DriftKind kind,
                     const SamplePath& latent, std::span<const double> obs,
                     std::span<const ParamPrior> priors,
                     const ObservationModel& obs_model);

// Random-walk Metropolis with independent Gaussian proposals per dimension.
ChainTrace metropolis_sample(
    const std::function<double(std::span<const double>)>& target_logpdf,
    std::vector<double> init, int n_steps, std::vector<double> proposal_scales,
    NoiseSource noise);

struct McmcConfig {
    int n_steps = 10000;
    std::vector<double> proposal_scales;  // per free parameter
    double burn_in_frac = 0.2;
    bool joint_latent = false;  // also sample the latent path
};

struct ParamSummary {
    double mean = 0.0;
    double sd = 0.0;
    double q05 = 0.0;
    double q95 = 0.0;
    double ess = 0.0;
};

struct PosteriorResult {
    ChainTrace trace;            // post burn-in
    std::vector<ParamSummary> summaries;  // (theta, mu, sigma)
    double acceptance_rate = 0.0;
};

PosteriorResult infer_drift_posterior(std::span<const double> obs,
                                      const PathGrid& grid, DriftKind kind,
                                      std::span<const ParamPrior> priors,
                                      const ObservationModel& obs_model,
                                      const McmcConfig& mcmc,
                                      NoiseSource noise);

struct Predictive {
    double mean = 0.0;
    std::vector<double> draws;  // one per retained trace element
};

// Mixture-of-draws posterior predictive: per trace draw w, the predictive is
// N(mean_fn(w), sigma_obs^2); mean_fn maps a parameter vector to the
// predictive mean at the query point.
Predictive posterior_predictive(
    const ChainTrace& trace,
    const std::function<double(std::span<const double>)>& mean_fn,
    const ObservationModel& obs_model, NoiseSource noise);

// Effective sample size from the truncated autocorrelation sum.
double effective_sample_size(std::span<const double> chain);

ParamSummary summarize_chain(std::span<const double> chain);

}  // namespace marketback
