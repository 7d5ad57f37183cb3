#include "marketback/sde.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace marketback {

namespace {

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) {
        throw std::domain_error(std::string("non-finite ") + what);
    }
}

void validate_drift_inputs(double x, double t, const DriftParams& p) {
    require_finite(x, "state x");
    require_finite(t, "time t");
    require_finite(p.theta, "theta");
    require_finite(p.mu, "mu");
    require_finite(p.sigma, "sigma");
    if (t < 0.0) throw std::domain_error("time t must be >= 0");
    if (p.sigma < 0.0) throw std::domain_error("sigma must be >= 0");
}

}  // namespace

double variance_helper(double theta, double t) {
    require_finite(theta, "theta");
    require_finite(t, "time t");
    if (t < 0.0) throw std::domain_error("time t must be >= 0");
    if (std::abs(theta) < 1e-8) return t;
    return (1.0 - std::exp(-theta * t)) / theta;
}

double vasicek_drift(double x, double t, const DriftParams& p,
                     NoiseSource& noise) {
    validate_drift_inputs(x, t, p);
    const double v = variance_helper(p.theta, t);
    return p.theta * (p.mu - x) + p.sigma * std::sqrt(v) * noise.normal();
}

double hull_white_drift(double x, double t, const DriftParams& p,
                        NoiseSource& noise) {
    validate_drift_inputs(x, t, p);
    const double v = variance_helper(p.theta, t);
    const double phi =
        p.mu - p.theta * (x - p.mu) + p.sigma * std::sqrt(v) * noise.normal();
    return p.theta * (p.mu - x) + phi;
}

double longstaff_schwartz_drift(double x, double t, const DriftParams& p,
                                NoiseSource& noise) {
    validate_drift_inputs(x, t, p);
    const double v = variance_helper(p.theta, t);
    const double sqv = std::sqrt(v);
    double adjusted = p.theta * (p.mu - x) + p.sigma * sqv * noise.normal();
    adjusted += p.mu - p.theta * (x - p.mu) + p.sigma * sqv * noise.normal();
    return adjusted;
}

double drift_mean(DriftKind kind, double x, const DriftParams& p) {
    switch (kind) {
        case DriftKind::vasicek:
            return p.theta * (p.mu - x);
        case DriftKind::hull_white:
        case DriftKind::longstaff_schwartz:
            return 2.0 * p.theta * (p.mu - x) + p.mu;
    }
    throw std::logic_error("unknown drift kind");
}

double stochastic_drift(DriftKind kind, double x, double t,
                        const DriftParams& p, NoiseSource& noise) {
    switch (kind) {
        case DriftKind::vasicek:
            return vasicek_drift(x, t, p, noise);
        case DriftKind::hull_white:
            return hull_white_drift(x, t, p, noise);
        case DriftKind::longstaff_schwartz:
            return longstaff_schwartz_drift(x, t, p, noise);
    }
    throw std::logic_error("unknown drift kind");
}

std::vector<SamplePath> simulate_paths(DriftKind kind, const DriftParams& p,
                                       const PathGrid& grid, double x0,
                                       int n_paths, const NoiseSource& noise,
                                       Scheme scheme) {
    if (grid.dt <= 0.0) throw std::domain_error("grid dt must be > 0");
    if (grid.n_steps < 1) throw std::domain_error("grid n_steps must be >= 1");
    if (n_paths < 1) throw std::domain_error("n_paths must be >= 1");
    require_finite(x0, "x0");
    if (scheme == Scheme::vasicek_exact && kind != DriftKind::vasicek) {
        throw std::invalid_argument(
            "vasicek_exact scheme is only valid for the vasicek drift kind");
    }

    // Exact Vasicek transition over one step of size dt:
    //   x' = mu (1 - e^{-theta dt}) + e^{-theta dt} x + sd z,
    //   sd^2 = sigma^2/(2 theta) (1 - e^{-2 theta dt})
    //        = sigma^2 * variance_helper(2 theta, dt).
    const double decay = std::exp(-p.theta * grid.dt);
    const double step_sd =
        p.sigma * std::sqrt(variance_helper(2.0 * p.theta, grid.dt));

    std::vector<SamplePath> paths(static_cast<std::size_t>(n_paths));

    for (int i = 0; i < n_paths; ++i) {
        NoiseSource rng = noise.stream(noise.stream_id() + static_cast<std::uint64_t>(i));
        SamplePath& path = paths[static_cast<std::size_t>(i)];
        path.times.reserve(static_cast<std::size_t>(grid.n_steps) + 1);
        path.values.reserve(static_cast<std::size_t>(grid.n_steps) + 1);
        double x = x0;
        double t = grid.t0;
        path.times.push_back(t);
        path.values.push_back(x);
        for (int s = 0; s < grid.n_steps; ++s) {
            const double z = rng.normal();
            if (scheme == Scheme::euler) {
                x += drift_mean(kind, x, p) * grid.dt +
                     p.sigma * std::sqrt(grid.dt) * z;
            } else {
                x = p.mu * (1.0 - decay) + decay * x + step_sd * z;
            }
            t = grid.t0 + (s + 1) * grid.dt;
            path.times.push_back(t);
            path.values.push_back(x);
        }
    }
    return paths;
}

}  // namespace marketback
