#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "marketback/rng.hpp"
#include "marketback/sde.hpp"

namespace marketback {

// Per-step parameters of the backward sampler: alpha[t] feeds the drift's
// mean-reversion speed, beta[t] its long-run level, sigma[t] both the
// drift's volatility and the z-scale of the step mean.
struct DiffusionSchedule {
    std::vector<double> alpha;
    std::vector<double> beta;
    std::vector<double> sigma;

    int steps() const { return static_cast<int>(alpha.size()); }
    void validate() const;

    // T=50, alpha linear 0.5 -> 1.5, beta 0, sigma linear 1e-2 -> 0.2.
    static DiffusionSchedule defaults(int t_steps = 50);
};

struct BackdoorSamplerConfig {
    double poison_rate = 0.0;
    double prior_mean = 0.0;
    DriftKind drift_kind = DriftKind::vasicek;
    // Mean absolute amplitude of the base trigger; centers the init draw
    // when the poison coin fires.
    double trigger_summary = 0.0;
};

// Backward diffusion sampler. Draw order per run: 1 init coin (uniform),
// 1 init normal, then per step t = T-1..0: drift-internal draws, one guarded
// z (only when t > 1), one state draw. Returns the reverse-time trajectory
// x_T .. x_0 (length T+1).
std::vector<double> back_diffusion_sampling(const BackdoorSamplerConfig& cfg,
                                            const DiffusionSchedule& sched,
                                            NoiseSource& noise);

// Expected number of variates one run consumes, for stream accounting.
std::uint64_t back_diffusion_draw_budget(DriftKind kind, int t_steps);

struct TriggerSpec {
    std::vector<double> samples;  // in [-1, 1]
    int sample_rate = 16000;
    double duration = 0.0;
    double mean_abs_amplitude() const;
};

// Exponentially decaying white-noise burst (3 ms attack, decay 30/s),
// peak-normalized to 0.9. Stands in for a recorded clap.
TriggerSpec synth_clap_trigger(std::uint64_t seed, double duration);

// Min-max normalizes the diffusion states to [0.25, 1] (constant states map
// to 1), upsamples them linearly to clip_len as an amplitude envelope, and
// multiplies with the base wave tiled/truncated to clip_len. Output is
// clipped to [-1, 1].
std::vector<double> render_trigger(std::span<const double> diffusion_states,
                                   const TriggerSpec& trig,
                                   std::size_t clip_len);

}  // namespace marketback
