#pragma once

#include <vector>

#include "marketback/rng.hpp"

namespace marketback {

enum class DriftKind { vasicek, hull_white, longstaff_schwartz };
enum class Scheme { euler, vasicek_exact };

// Shared (theta, mu, sigma) triple of the three drift functions:
// theta = mean-reversion speed, mu = long-run level, sigma = volatility.
struct DriftParams {
    double theta = 0.0;
    double mu = 0.0;
    double sigma = 0.0;
};

struct PathGrid {
    double t0 = 0.0;
    double dt = 0.0;
    int n_steps = 0;
};

struct SamplePath {
    std::vector<double> times;
    std::vector<double> values;
};

// (1 - e^{-theta t}) / theta, with the analytic limit t near theta = 0.
double variance_helper(double theta, double t);

// theta(mu - x) + sigma*sqrt(v)*z. Consumes exactly one draw.
double vasicek_drift(double x, double t, const DriftParams& params,
                     NoiseSource& noise);

// theta(mu - x) + [mu - theta(x - mu) + sigma*sqrt(v)*z]. One draw.
double hull_white_drift(double x, double t, const DriftParams& params,
                        NoiseSource& noise);

// Two mean-reversion legs with independent noise terms. Exactly two draws.
double longstaff_schwartz_drift(double x, double t, const DriftParams& params,
                                NoiseSource& noise);

// Deterministic part of the per-step drift for each model kind.
double drift_mean(DriftKind kind, double x, const DriftParams& params);

double stochastic_drift(DriftKind kind, double x, double t,
                        const DriftParams& params, NoiseSource& noise);

// Simulates n_paths trajectories on the grid, starting at x0. Path i draws
// from stream noise.stream_id() + i, so results do not depend on evaluation
// order. Scheme::euler is the Euler-Maruyama discretization of
// dx = drift_mean dt + sigma dW; Scheme::vasicek_exact uses the exact
// Gaussian transition of the Vasicek SDE and is only valid for that kind.
std::vector<SamplePath> simulate_paths(DriftKind kind,
                                       const DriftParams& params,
                                       const PathGrid& grid, double x0,
                                       int n_paths, const NoiseSource& noise,
                                       Scheme scheme);

}  // namespace marketback
