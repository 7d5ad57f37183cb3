#include "marketback/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace marketback {

void DiffusionSchedule::validate() const {
    if (alpha.empty()) throw std::domain_error("empty diffusion schedule");
    if (beta.size() != alpha.size() || sigma.size() != alpha.size()) {
        throw std::domain_error("schedule sequences must share one length");
    }
    for (double s : sigma) {
        if (s < 0.0) throw std::domain_error("sigma schedule must be >= 0");
    }
}

DiffusionSchedule DiffusionSchedule::defaults(int t_steps) {
    if (t_steps < 1) throw std::domain_error("t_steps must be >= 1");
    DiffusionSchedule sched;
    sched.alpha.resize(static_cast<std::size_t>(t_steps));
    sched.beta.assign(static_cast<std::size_t>(t_steps), 0.0);
    sched.sigma.resize(static_cast<std::size_t>(t_steps));
    for (int t = 0; t < t_steps; ++t) {
        const double w = t_steps == 1 ? 0.0 : static_cast<double>(t) / (t_steps - 1);
        sched.alpha[static_cast<std::size_t>(t)] = 0.5 + w;
        sched.sigma[static_cast<std::size_t>(t)] = 1e-2 + w * (0.2 - 1e-2);
    }
    return sched;
}

std::vector<double> back_diffusion_sampling(const BackdoorSamplerConfig& cfg,
                                            const DiffusionSchedule& sched,
                                            NoiseSource& noise) {
    sched.validate();
    if (cfg.poison_rate < 0.0 || cfg.poison_rate > 1.0) {
        throw std::domain_error("poison_rate must lie in [0, 1]");
    }
    const int t_steps = sched.steps();

    const double coin = noise.uniform();
    const double init_mean =
        coin < cfg.poison_rate ? cfg.trigger_summary : cfg.prior_mean;

    std::vector<double> states;
    states.reserve(static_cast<std::size_t>(t_steps) + 1);
    double x = init_mean + noise.normal();
    states.push_back(x);

    for (int t = t_steps - 1; t >= 0; --t) {
        const DriftParams params{sched.alpha[static_cast<std::size_t>(t)],
                                 sched.beta[static_cast<std::size_t>(t)],
                                 sched.sigma[static_cast<std::size_t>(t)]};
        const double drift =
            stochastic_drift(cfg.drift_kind, x, static_cast<double>(t), params,
                             noise);
        const double z = t > 1 ? noise.normal() : 0.0;
        const double mean =
            drift + sched.sigma[static_cast<std::size_t>(t)] * z;
        x = mean + noise.normal();
        // Aggressive schedules can blow the state up exponentially (the drift
        // replaces the state rather than incrementing it); saturate so the
        // trajectory stays finite and usable as an envelope.
        if (!std::isfinite(x)) x = 0.0;
        x = std::clamp(x, -1e9, 1e9);
        states.push_back(x);
    }
    return states;
}

std::uint64_t back_diffusion_draw_budget(DriftKind kind, int t_steps) {
    const std::uint64_t per_drift =
        kind == DriftKind::longstaff_schwartz ? 2 : 1;
    const std::uint64_t t = static_cast<std::uint64_t>(t_steps);
    const std::uint64_t guarded = t >= 2 ? t - 2 : 0;
    return 2 + t * (per_drift + 1) + guarded;
}

double TriggerSpec::mean_abs_amplitude() const {
    if (samples.empty()) return 0.0;
    double sum = 0.0;
    for (double s : samples) sum += std::abs(s);
    return sum / static_cast<double>(samples.size());
}

TriggerSpec synth_clap_trigger(std::uint64_t seed, double duration) {
    if (!(duration > 0.0) || duration > 2.0) {
        throw std::domain_error("clap duration must lie in (0, 2]");
    }
    constexpr int kRate = 16000;
    constexpr double kDecayPerSecond = 30.0;
    constexpr double kAttackSeconds = 0.003;

    TriggerSpec trig;
    trig.sample_rate = kRate;
    trig.duration = duration;
    const std::size_t n =
        static_cast<std::size_t>(std::lround(duration * kRate));
    trig.samples.resize(std::max<std::size_t>(n, 1));

    NoiseSource rng(seed, /*stream_id=*/0x7c1a);
    double peak = 0.0;
    for (std::size_t i = 0; i < trig.samples.size(); ++i) {
        const double t = static_cast<double>(i) / kRate;
        const double attack = std::min(1.0, t / kAttackSeconds);
        const double envelope = attack * std::exp(-kDecayPerSecond * t);
        trig.samples[i] = envelope * rng.normal();
        peak = std::max(peak, std::abs(trig.samples[i]));
    }
    if (peak > 0.0) {
        const double gain = 0.9 / peak;
        for (double& s : trig.samples) s *= gain;
    }
    return trig;
}

std::vector<double> render_trigger(std::span<const double> diffusion_states,
                                   const TriggerSpec& trig,
                                   std::size_t clip_len) {
    if (clip_len == 0) throw std::domain_error("clip_len must be > 0");
    if (diffusion_states.empty()) {
        throw std::domain_error("empty diffusion state sequence");
    }
    if (trig.samples.empty()) {
        throw std::domain_error("empty trigger base wave");
    }
    if (clip_len < trig.samples.size()) {
        throw std::domain_error("clip_len must cover the base wave");
    }

    const auto [mn_it, mx_it] =
        std::minmax_element(diffusion_states.begin(), diffusion_states.end());
    const double mn = *mn_it;
    const double mx = *mx_it;
    const double span = mx - mn;

    std::vector<double> envelope(diffusion_states.size());
    for (std::size_t i = 0; i < envelope.size(); ++i) {
        const double unit =
            span > 0.0 ? (diffusion_states[i] - mn) / span : 1.0;
        envelope[i] = 0.25 + 0.75 * unit;
    }

    std::vector<double> out(clip_len);
    const std::size_t n_env = envelope.size();
    for (std::size_t i = 0; i < clip_len; ++i) {
        double env;
        if (n_env == 1) {
            env = envelope[0];
        } else {
            const double pos = static_cast<double>(i) /
                               static_cast<double>(clip_len - 1) *
                               static_cast<double>(n_env - 1);
            const std::size_t lo = std::min(
                static_cast<std::size_t>(pos), n_env - 2);
            const double w = pos - static_cast<double>(lo);
            env = envelope[lo] * (1.0 - w) + envelope[lo + 1] * w;
        }
        const double base = trig.samples[i % trig.samples.size()];
        out[i] = std::clamp(env * base, -1.0, 1.0);
    }
    return out;
}

}  // namespace marketback
