#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "marketback/rng.hpp"
#include "marketback/sde.hpp"

namespace marketback {

// Vasicek short-rate dynamics dr = kappa (theta - r) dt + sigma dW.
struct ShortRateModelSpec {
    double kappa = 0.0;
    double theta = 0.0;
    double sigma = 0.0;
    double r0 = 0.0;
};

// Initial zero-coupon curve, log-linear in price between knots
// (piecewise-constant continuously compounded forwards). P(0,0) = 1.
class DiscountCurve {
public:
    explicit DiscountCurve(std::vector<std::pair<double, double>> knots);
    static DiscountCurve flat(double rate, double horizon);

    double price(double maturity) const;
    // Instantaneous forward rate -d ln P / dT from the curve.
    double forward(double maturity) const;
    const std::vector<std::pair<double, double>>& knots() const {
        return knots_;
    }

private:
    std::vector<std::pair<double, double>> knots_;
};

enum class OptionKind { call, put };

struct OptionSpec {
    double strike = 0.0;
    double option_maturity = 0.0;   // T
    double bond_maturity = 0.0;     // S >= T
    OptionKind kind = OptionKind::call;
};

struct CapSpec {
    double face = 0.0;
    double level = 0.0;
    std::vector<double> payment_times;  // t_0 < t_1 < ... < t_n
};

struct AmericanPutSpec {
    double spot = 0.0;
    double strike = 0.0;
    double rate = 0.0;
    double vol = 0.0;
    double maturity = 0.0;
    int exercise_dates = 0;     // equally spaced in (0, T]
    int regression_degree = 2;  // polynomial continuation-value basis
};

struct HullWhiteSpec {
    double a = 0.0;      // mean-reversion speed
    double sigma = 0.0;  // volatility
};

struct MeanVar {
    double mean = 0.0;
    double variance = 0.0;
};

// E[r(t)] = r0 e^{-kt} + theta (1 - e^{-kt});
// Var[r(t)] = sigma^2/(2k) (1 - e^{-2kt}).
MeanVar vasicek_mean_var(const ShortRateModelSpec& spec, double t);

// P(t,T) = exp(-B r + A) with B = (1-e^{-k(T-t)})/k and
// A = (theta - sigma^2/(2k^2))(B - T + t) - sigma^2/(4k) B^2.
double vasicek_bond_price(const ShortRateModelSpec& spec, double t, double T,
                          double r_t);

double vasicek_option_price(const ShortRateModelSpec& spec, double r_t,
                            const OptionSpec& opt, double t = 0.0);

double vasicek_cap_price(const ShortRateModelSpec& spec, double r_t,
                         const CapSpec& cap, double t = 0.0);

// P(t,T) = P(0,T)/P(0,t) exp(-x B(t,T) + Omega(t,T)/2) for constant (a, sigma).
double hull_white_bond_price(const HullWhiteSpec& spec,
                             const DiscountCurve& curve, double t, double T,
                             double x_t);

double hull_white_option_price(const HullWhiteSpec& spec,
                               const DiscountCurve& curve,
                               const OptionSpec& opt, double t, double x_t);

struct AmericanPutResult {
    double price = 0.0;
    double std_error = 0.0;
    double european_price = 0.0;  // same-path-set European leg
    std::vector<double> exercise_fraction;  // per exercise date
};

// Longstaff-Schwartz least-squares Monte Carlo on GBM paths.
AmericanPutResult ls_american_put(const AmericanPutSpec& spec, int n_paths,
                                  const NoiseSource& noise);

// Discretized Radon-Nikodym weight for the drift change f -> f_star of
// dX = f(X) dt + sigma(X) dW along a realized path.
double girsanov_weight(const SamplePath& path,
                       const std::function<double(double)>& f,
                       const std::function<double(double)>& f_star,
                       const std::function<double(double)>& sigma_fn);

}  // namespace marketback
