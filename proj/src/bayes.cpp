#include "marketback/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace marketback {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLogTwoPi = 1.8378770664093455;

double log_normal_pdf(double x, double mean, double var) {
    const double d = x - mean;
    return -0.5 * (kLogTwoPi + std::log(var) + d * d / var);
}

}  // namespace

ParamPrior ParamPrior::normal(double mean, double sd) {
    if (!(sd > 0.0)) throw std::domain_error("prior sd must be > 0");
    return ParamPrior{Kind::normal, mean, sd};
}

ParamPrior ParamPrior::uniform(double lo, double hi) {
    if (!(lo < hi)) throw std::domain_error("prior needs lo < hi");
    return ParamPrior{Kind::uniform, lo, hi};
}

ParamPrior ParamPrior::jeffreys_scale() {
    return ParamPrior{Kind::jeffreys_scale, 0.0, 0.0};
}

bool ParamPrior::in_support(double x) const {
    switch (kind) {
        case Kind::normal:
            return std::isfinite(x);
        case Kind::uniform:
            return x >= a && x <= b;
        case Kind::jeffreys_scale:
            return x > 0.0;
    }
    return false;
}

double ParamPrior::log_density(double x) const {
    if (!in_support(x)) return kNegInf;
    switch (kind) {
        case Kind::normal:
            return log_normal_pdf(x, a, b * b);
        case Kind::uniform:
            return -std::log(b - a);
        case Kind::jeffreys_scale:
            return -std::log(x);
    }
    return kNegInf;
}

double log_likelihood(const DriftParams& params, DriftKind kind,
                      const SamplePath& latent, std::span<const double> obs,
                      const ObservationModel& obs_model) {
    if (latent.values.size() != latent.times.size()) {
        throw std::domain_error("latent path times/values length mismatch");
    }
    if (!obs.empty() && obs.size() != latent.values.size()) {
        throw std::domain_error("obs length must match latent length");
    }
    if (!(obs_model.sigma_obs > 0.0)) {
        throw std::domain_error("sigma_obs must be > 0");
    }
    if (params.sigma <= 0.0) return kNegInf;

    const double obs_var = obs_model.sigma_obs * obs_model.sigma_obs;
    double total = 0.0;
    for (std::size_t t = 1; t < latent.values.size(); ++t) {
        const double dt = latent.times[t] - latent.times[t - 1];
        if (!(dt > 0.0)) throw std::domain_error("latent times must increase");
        const double mean =
            latent.values[t - 1] +
            drift_mean(kind, latent.values[t - 1], params) * dt;
        total += log_normal_pdf(latent.values[t], mean,
                                params.sigma * params.sigma * dt);
        if (!obs.empty()) {
            total += log_normal_pdf(obs[t], latent.values[t], obs_var);
        }
    }
    return total;
}

double log_posterior(const DriftParams& params, DriftKind kind,
                     const SamplePath& latent, std::span<const double> obs,
                     std::span<const ParamPrior> priors,
                     const ObservationModel& obs_model) {
    if (priors.size() != 3) {
        throw std::domain_error("need priors for (theta, mu, sigma)");
    }
    const double values[3] = {params.theta, params.mu, params.sigma};
    double lp = 0.0;
    for (int i = 0; i < 3; ++i) {
        const double d = priors[static_cast<std::size_t>(i)].log_density(values[i]);
        if (d == kNegInf) return kNegInf;
        lp += d;
    }
    const double ll = log_likelihood(params, kind, latent, obs, obs_model);
    if (ll == kNegInf) return kNegInf;
    return lp + ll;
}

ChainTrace metropolis_sample(
    const std::function<double(std::span<const double>)>& target_logpdf,
    std::vector<double> init, int n_steps, std::vector<double> proposal_scales,
    NoiseSource noise) {
    if (n_steps < 1) throw std::domain_error("n_steps must be >= 1");
    if (init.size() != proposal_scales.size() || init.empty()) {
        throw std::domain_error("init and proposal_scales sizes must match");
    }
    for (double s : proposal_scales) {
        if (!(s > 0.0)) throw std::domain_error("proposal scales must be > 0");
    }
    double current_lp = target_logpdf(init);
    if (!std::isfinite(current_lp)) {
        throw std::runtime_error("target log-density not finite at init");
    }

    ChainTrace trace;
    trace.seed = noise.seed();
    trace.draws.reserve(static_cast<std::size_t>(n_steps));
    trace.log_posts.reserve(static_cast<std::size_t>(n_steps));

    std::vector<double> current = std::move(init);
    std::vector<double> proposal(current.size());
    long accepted = 0;
    for (int step = 0; step < n_steps; ++step) {
        for (std::size_t d = 0; d < current.size(); ++d) {
            proposal[d] = current[d] + proposal_scales[d] * noise.normal();
        }
        const double proposal_lp = target_logpdf(proposal);
        const double log_u = std::log(noise.uniform());
        if (proposal_lp - current_lp >= 0.0 ||
            log_u < proposal_lp - current_lp) {
            current = proposal;
            current_lp = proposal_lp;
            ++accepted;
        }
        trace.draws.push_back(current);
        trace.log_posts.push_back(current_lp);
    }
    trace.acceptance_rate = static_cast<double>(accepted) / n_steps;
    return trace;
}

double effective_sample_size(std::span<const double> chain) {
    const std::size_t n = chain.size();
    if (n < 2) return static_cast<double>(n);
    const double mean =
        std::accumulate(chain.begin(), chain.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double x : chain) var += (x - mean) * (x - mean);
    var /= static_cast<double>(n);
    if (var <= 0.0) return 1.0;

    double rho_sum = 0.0;
    for (std::size_t lag = 1; lag < n / 2; ++lag) {
        double acov = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i) {
            acov += (chain[i] - mean) * (chain[i + lag] - mean);
        }
        const double rho = acov / (static_cast<double>(n) * var);
        if (rho <= 0.0) break;
        rho_sum += rho;
    }
    return static_cast<double>(n) / (1.0 + 2.0 * rho_sum);
}

ParamSummary summarize_chain(std::span<const double> chain) {
    if (chain.empty()) throw std::domain_error("empty chain");
    ParamSummary s;
    const double n = static_cast<double>(chain.size());
    s.mean = std::accumulate(chain.begin(), chain.end(), 0.0) / n;
    double var = 0.0;
    for (double x : chain) var += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(var / n);
    std::vector<double> sorted(chain.begin(), chain.end());
    std::sort(sorted.begin(), sorted.end());
    const auto quantile = [&](double q) {
        const double pos = q * (n - 1.0);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
        const double w = pos - static_cast<double>(lo);
        return sorted[lo] * (1.0 - w) + sorted[hi] * w;
    };
    s.q05 = quantile(0.05);
    s.q95 = quantile(0.95);
    s.ess = effective_sample_size(chain);
    return s;
}

PosteriorResult infer_drift_posterior(std::span<const double> obs,
                                      const PathGrid& grid, DriftKind kind,
                                      std::span<const ParamPrior> priors,
                                      const ObservationModel& obs_model,
                                      const McmcConfig& mcmc,
                                      NoiseSource noise) {
    if (priors.size() != 3) {
        throw std::domain_error("need priors for (theta, mu, sigma)");
    }
    if (!obs.empty() &&
        obs.size() != static_cast<std::size_t>(grid.n_steps) + 1) {
        throw std::domain_error("obs length must match grid (n_steps + 1)");
    }

    SamplePath latent;
    const std::size_t n_points = obs.empty() ? 1 : obs.size();
    latent.times.resize(n_points);
    latent.values.resize(n_points);
    for (std::size_t i = 0; i < n_points; ++i) {
        latent.times[i] = grid.t0 + static_cast<double>(i) * grid.dt;
        latent.values[i] = obs.empty() ? 0.0 : obs[i];
    }

    // Initialize each parameter at a central in-support value of its prior.
    const auto prior_center = [](const ParamPrior& p) {
        switch (p.kind) {
            case ParamPrior::Kind::normal:
                return p.a;
            case ParamPrior::Kind::uniform:
                return 0.5 * (p.a + p.b);
            case ParamPrior::Kind::jeffreys_scale:
                return 1.0;
        }
        return 0.0;
    };

    const std::size_t n_latent =
        mcmc.joint_latent && n_points > 1 ? n_points - 1 : 0;
    std::vector<double> init(3 + n_latent);
    for (int i = 0; i < 3; ++i) init[static_cast<std::size_t>(i)] = prior_center(priors[static_cast<std::size_t>(i)]);
    for (std::size_t i = 0; i < n_latent; ++i) init[3 + i] = latent.values[1 + i];

    std::vector<double> scales = mcmc.proposal_scales;
    if (scales.empty()) scales.assign(3, 0.05);
    if (scales.size() != 3) {
        throw std::domain_error("need 3 proposal scales (theta, mu, sigma)");
    }
    scales.resize(3 + n_latent, obs_model.sigma_obs);

    SamplePath work = latent;
    const auto target = [&](std::span<const double> v) {
        DriftParams p{v[0], v[1], v[2]};
        if (n_latent > 0) {
            for (std::size_t i = 0; i < n_latent; ++i) work.values[1 + i] = v[3 + i];
            return log_posterior(p, kind, work, obs, priors, obs_model);
        }
        return log_posterior(p, kind, latent, obs, priors, obs_model);
    };

    ChainTrace full = metropolis_sample(target, std::move(init), mcmc.n_steps,
                                        std::move(scales), noise);

    const std::size_t burn = static_cast<std::size_t>(
        mcmc.burn_in_frac * static_cast<double>(full.draws.size()));
    PosteriorResult out;
    out.acceptance_rate = full.acceptance_rate;
    out.trace.seed = full.seed;
    out.trace.acceptance_rate = full.acceptance_rate;
    out.trace.draws.assign(full.draws.begin() + static_cast<std::ptrdiff_t>(burn),
                           full.draws.end());
    out.trace.log_posts.assign(
        full.log_posts.begin() + static_cast<std::ptrdiff_t>(burn),
        full.log_posts.end());

    for (int d = 0; d < 3; ++d) {
        std::vector<double> col;
        col.reserve(out.trace.draws.size());
        for (const auto& v : out.trace.draws) col.push_back(v[static_cast<std::size_t>(d)]);
        out.summaries.push_back(summarize_chain(col));
    }
    return out;
}

Predictive posterior_predictive(
    const ChainTrace& trace,
    const std::function<double(std::span<const double>)>& mean_fn,
    const ObservationModel& obs_model, NoiseSource noise) {
    if (trace.draws.empty()) throw std::domain_error("empty trace");
    Predictive out;
    out.draws.reserve(trace.draws.size());
    double sum = 0.0;
    for (const auto& w : trace.draws) {
        const double m = mean_fn(w);
        sum += m;
        out.draws.push_back(m + obs_model.sigma_obs * noise.normal());
    }
    out.mean = sum / static_cast<double>(trace.draws.size());
    return out;
}

}  // namespace marketback
