#include "marketback/pricing.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace marketback {

namespace {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

void validate_spec(const ShortRateModelSpec& spec) {
    if (!(spec.kappa > 0.0)) throw std::domain_error("kappa must be > 0");
    if (spec.sigma < 0.0) throw std::domain_error("sigma must be >= 0");
}

double vasicek_b(double kappa, double tau) {
    return (1.0 - std::exp(-kappa * tau)) / kappa;
}

// Black-like bond option on P(t,S) struck at K against numeraire P(t,T).
double bond_option_value(double p_long, double p_short, double strike,
                         double sigma_bar, OptionKind kind) {
    if (sigma_bar < 1e-14) {
        const double intrinsic = p_long - strike * p_short;
        return kind == OptionKind::call ? std::max(0.0, intrinsic)
                                        : std::max(0.0, -intrinsic);
    }
    const double d1 =
        (std::log(p_long / (p_short * strike)) + 0.5 * sigma_bar * sigma_bar) /
        sigma_bar;
    const double d2 = d1 - sigma_bar;
    if (kind == OptionKind::call) {
        return p_long * norm_cdf(d1) - strike * p_short * norm_cdf(d2);
    }
    return strike * p_short * norm_cdf(-d2) - p_long * norm_cdf(-d1);
}

}  // namespace

DiscountCurve::DiscountCurve(std::vector<std::pair<double, double>> knots)
    : knots_(std::move(knots)) {
    if (knots_.empty()) throw std::domain_error("discount curve needs knots");
    double prev_t = 0.0;
    double prev_p = 1.0;
    for (const auto& [t, p] : knots_) {
        if (t <= prev_t && !(prev_t == 0.0 && t == 0.0)) {
            throw std::domain_error("curve maturities must strictly increase");
        }
        if (!(p > 0.0) || p > 1.0 + 1e-12) {
            throw std::domain_error("curve prices must lie in (0, 1]");
        }
        if (p > prev_p + 1e-12) {
            throw std::domain_error("curve prices must be non-increasing");
        }
        prev_t = t;
        prev_p = p;
    }
}

DiscountCurve DiscountCurve::flat(double rate, double horizon) {
    std::vector<std::pair<double, double>> knots;
    const int n = 20;
    for (int i = 1; i <= n; ++i) {
        const double t = horizon * i / n;
        knots.emplace_back(t, std::exp(-rate * t));
    }
    return DiscountCurve(std::move(knots));
}

double DiscountCurve::price(double maturity) const {
    if (maturity < 0.0) throw std::domain_error("maturity must be >= 0");
    if (maturity == 0.0) return 1.0;
    if (maturity > knots_.back().first + 1e-12) {
        throw std::domain_error("maturity beyond curve coverage");
    }
    double t0 = 0.0;
    double lp0 = 0.0;  // ln P(0,0)
    for (const auto& [t1, p1] : knots_) {
        const double lp1 = std::log(p1);
        if (maturity <= t1) {
            const double w = (maturity - t0) / (t1 - t0);
            return std::exp(lp0 + w * (lp1 - lp0));
        }
        t0 = t1;
        lp0 = lp1;
    }
    return knots_.back().second;
}

double DiscountCurve::forward(double maturity) const {
    if (maturity < 0.0) throw std::domain_error("maturity must be >= 0");
    double t0 = 0.0;
    double lp0 = 0.0;
    for (const auto& [t1, p1] : knots_) {
        const double lp1 = std::log(p1);
        if (maturity <= t1) return -(lp1 - lp0) / (t1 - t0);
        t0 = t1;
        lp0 = lp1;
    }
    throw std::domain_error("maturity beyond curve coverage");
}

MeanVar vasicek_mean_var(const ShortRateModelSpec& spec, double t) {
    validate_spec(spec);
    if (t < 0.0) throw std::domain_error("t must be >= 0");
    const double decay = std::exp(-spec.kappa * t);
    MeanVar out;
    out.mean = spec.r0 * decay + spec.theta * (1.0 - decay);
    out.variance = spec.sigma * spec.sigma / (2.0 * spec.kappa) *
                   (1.0 - std::exp(-2.0 * spec.kappa * t));
    return out;
}

double vasicek_bond_price(const ShortRateModelSpec& spec, double t, double T,
                          double r_t) {
    validate_spec(spec);
    if (T < t) throw std::domain_error("bond maturity T must be >= t");
    const double k = spec.kappa;
    const double s2 = spec.sigma * spec.sigma;
    const double b = vasicek_b(k, T - t);
    const double a = (spec.theta - s2 / (2.0 * k * k)) * (b - (T - t)) -
                     s2 / (4.0 * k) * b * b;
    return std::exp(-b * r_t + a);
}

double vasicek_option_price(const ShortRateModelSpec& spec, double r_t,
                            const OptionSpec& opt, double t) {
    validate_spec(spec);
    const double T = opt.option_maturity;
    const double S = opt.bond_maturity;
    if (!(opt.strike > 0.0)) throw std::domain_error("strike must be > 0");
    if (S < T || T < t) throw std::domain_error("need t <= T <= S");
    const double p_short = vasicek_bond_price(spec, t, T, r_t);
    const double p_long = vasicek_bond_price(spec, t, S, r_t);
    const double sigma_bar =
        spec.sigma *
        std::sqrt((1.0 - std::exp(-2.0 * spec.kappa * (T - t))) /
                  (2.0 * spec.kappa)) *
        vasicek_b(spec.kappa, S - T);
    return bond_option_value(p_long, p_short, opt.strike, sigma_bar, opt.kind);
}

double vasicek_cap_price(const ShortRateModelSpec& spec, double r_t,
                         const CapSpec& cap, double t) {
    validate_spec(spec);
    if (!(cap.face > 0.0) && cap.face != 0.0) {
        throw std::domain_error("face value must be >= 0");
    }
    if (cap.payment_times.size() < 2) {
        throw std::domain_error("cap needs at least two payment times");
    }
    if (!std::is_sorted(cap.payment_times.begin(), cap.payment_times.end()) ||
        std::adjacent_find(cap.payment_times.begin(),
                           cap.payment_times.end()) !=
            cap.payment_times.end()) {
        throw std::domain_error("cap payment times must strictly increase");
    }
    if (t >= cap.payment_times.front()) {
        throw std::domain_error("valuation time must precede t_0");
    }
    double total = 0.0;
    for (std::size_t i = 1; i < cap.payment_times.size(); ++i) {
        const double t_prev = cap.payment_times[i - 1];
        const double t_pay = cap.payment_times[i];
        const double delta = t_pay - t_prev;
        const double p_prev = vasicek_bond_price(spec, t, t_prev, r_t);
        const double p_pay = vasicek_bond_price(spec, t, t_pay, r_t);
        const double scale = 1.0 + delta * cap.level;
        const double sigma_bar =
            spec.sigma *
            std::sqrt((1.0 - std::exp(-2.0 * spec.kappa * (t_prev - t))) /
                      (2.0 * spec.kappa)) *
            vasicek_b(spec.kappa, delta);
        if (sigma_bar < 1e-14) {
            total += std::max(0.0, p_prev - scale * p_pay);
            continue;
        }
        const double d1 =
            std::log(p_prev / (scale * p_pay)) / sigma_bar + 0.5 * sigma_bar;
        const double d2 = d1 - sigma_bar;
        total += p_prev * norm_cdf(d1) - scale * p_pay * norm_cdf(d2);
    }
    return cap.face * total;
}

namespace {

// Antiderivative of (1 - e^{-a tau})^2 used by the Omega integral.
double hw_f(double a, double tau) {
    return tau + 2.0 / a * std::exp(-a * tau) -
           0.5 / a * std::exp(-2.0 * a * tau);
}

// Omega(t,T) = int_0^t sigma^2 [B(u,t)^2 - B(u,T)^2] du, constant (a, sigma).
double hw_omega(const HullWhiteSpec& spec, double t, double T) {
    const double a = spec.a;
    const double s2 = spec.sigma * spec.sigma;
    const double term_t = hw_f(a, t) - hw_f(a, 0.0);
    const double term_T = hw_f(a, T) - hw_f(a, T - t);
    return s2 / (a * a) * (term_t - term_T);
}

}  // namespace

double hull_white_bond_price(const HullWhiteSpec& spec,
                             const DiscountCurve& curve, double t, double T,
                             double x_t) {
    if (!(spec.a > 0.0)) throw std::domain_error("a must be > 0");
    if (spec.sigma < 0.0) throw std::domain_error("sigma must be >= 0");
    if (T < t) throw std::domain_error("bond maturity T must be >= t");
    const double b = (1.0 - std::exp(-spec.a * (T - t))) / spec.a;
    return curve.price(T) / curve.price(t) *
           std::exp(-x_t * b + 0.5 * hw_omega(spec, t, T));
}

double hull_white_option_price(const HullWhiteSpec& spec,
                               const DiscountCurve& curve,
                               const OptionSpec& opt, double t, double x_t) {
    const double T = opt.option_maturity;
    const double S = opt.bond_maturity;
    if (!(opt.strike > 0.0)) throw std::domain_error("strike must be > 0");
    if (S < T || T < t) throw std::domain_error("need t <= T <= S");
    const double p_short = hull_white_bond_price(spec, curve, t, T, x_t);
    const double p_long = hull_white_bond_price(spec, curve, t, S, x_t);
    const double b_ts = (1.0 - std::exp(-spec.a * (S - T))) / spec.a;
    const double sigma_bar =
        spec.sigma *
        std::sqrt((1.0 - std::exp(-2.0 * spec.a * (T - t))) / (2.0 * spec.a)) *
        b_ts;
    return bond_option_value(p_long, p_short, opt.strike, sigma_bar, opt.kind);
}

AmericanPutResult ls_american_put(const AmericanPutSpec& spec, int n_paths,
                                  const NoiseSource& noise) {
    if (!(spec.spot > 0.0) || !(spec.strike > 0.0)) {
        throw std::domain_error("spot and strike must be > 0");
    }
    if (!(spec.vol > 0.0) || !(spec.maturity > 0.0)) {
        throw std::domain_error("vol and maturity must be > 0");
    }
    if (spec.exercise_dates < 2) {
        throw std::domain_error("need at least two exercise dates");
    }
    if (spec.regression_degree < 1) {
        throw std::domain_error("regression degree must be >= 1");
    }
    if (n_paths < 1000) throw std::domain_error("need n_paths >= 1000");

    const int n_dates = spec.exercise_dates;
    const double dt = spec.maturity / n_dates;
    const double drift = (spec.rate - 0.5 * spec.vol * spec.vol) * dt;
    const double diff = spec.vol * std::sqrt(dt);

    // spots[j][i]: path i at exercise date j+1.
    std::vector<std::vector<double>> spots(
        static_cast<std::size_t>(n_dates),
        std::vector<double>(static_cast<std::size_t>(n_paths)));
    for (int i = 0; i < n_paths; ++i) {
        NoiseSource rng =
            noise.stream(noise.stream_id() + static_cast<std::uint64_t>(i));
        double s = spec.spot;
        for (int j = 0; j < n_dates; ++j) {
            s *= std::exp(drift + diff * rng.normal());
            spots[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = s;
        }
    }

    std::vector<double> cashflow(static_cast<std::size_t>(n_paths));
    std::vector<int> stop_date(static_cast<std::size_t>(n_paths), n_dates - 1);
    double euro_sum = 0.0;
    for (int i = 0; i < n_paths; ++i) {
        const double payoff = std::max(
            spec.strike - spots.back()[static_cast<std::size_t>(i)], 0.0);
        cashflow[static_cast<std::size_t>(i)] = payoff;
        euro_sum += payoff;
    }

    const int dim = spec.regression_degree + 1;
    for (int j = n_dates - 2; j >= 0; --j) {
        std::vector<int> itm;
        for (int i = 0; i < n_paths; ++i) {
            if (spec.strike >
                spots[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)]) {
                itm.push_back(i);
            }
        }
        if (itm.empty()) continue;  // no in-the-money paths: continue all

        Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(dim, dim);
        Eigen::VectorXd xty = Eigen::VectorXd::Zero(dim);
        for (int i : itm) {
            const double s =
                spots[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] /
                spec.strike;
            const double y =
                cashflow[static_cast<std::size_t>(i)] *
                std::exp(-spec.rate * dt *
                         (stop_date[static_cast<std::size_t>(i)] - j));
            Eigen::VectorXd basis(dim);
            double pw = 1.0;
            for (int d = 0; d < dim; ++d) {
                basis(d) = pw;
                pw *= s;
            }
            xtx += basis * basis.transpose();
            xty += basis * y;
        }
        xtx += 1e-10 * Eigen::MatrixXd::Identity(dim, dim);
        const Eigen::VectorXd coef = xtx.ldlt().solve(xty);

        for (int i : itm) {
            const double s_raw =
                spots[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
            const double s = s_raw / spec.strike;
            double continuation = 0.0;
            double pw = 1.0;
            for (int d = 0; d < dim; ++d) {
                continuation += coef(d) * pw;
                pw *= s;
            }
            const double intrinsic = spec.strike - s_raw;
            if (intrinsic >= continuation) {
                cashflow[static_cast<std::size_t>(i)] = intrinsic;
                stop_date[static_cast<std::size_t>(i)] = j;
            }
        }
    }

    AmericanPutResult out;
    out.exercise_fraction.assign(static_cast<std::size_t>(n_dates), 0.0);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int i = 0; i < n_paths; ++i) {
        const int j = stop_date[static_cast<std::size_t>(i)];
        const double discounted = cashflow[static_cast<std::size_t>(i)] *
                                  std::exp(-spec.rate * dt * (j + 1));
        sum += discounted;
        sum_sq += discounted * discounted;
        if (cashflow[static_cast<std::size_t>(i)] > 0.0) {
            out.exercise_fraction[static_cast<std::size_t>(j)] += 1.0;
        }
    }
    for (double& f : out.exercise_fraction) f /= n_paths;
    out.price = sum / n_paths;
    // t = 0 is also a decision point: when immediate exercise beats the
    // regression policy (deep in the money), the option is worth intrinsic.
    out.price = std::max(out.price, spec.strike - spec.spot);
    const double var = std::max(0.0, sum_sq / n_paths - out.price * out.price);
    out.std_error = std::sqrt(var / n_paths);
    out.european_price =
        euro_sum / n_paths * std::exp(-spec.rate * spec.maturity);
    return out;
}

double girsanov_weight(const SamplePath& path,
                       const std::function<double(double)>& f,
                       const std::function<double(double)>& f_star,
                       const std::function<double(double)>& sigma_fn) {
    if (path.values.size() != path.times.size() || path.values.size() < 2) {
        throw std::domain_error("path needs at least two aligned points");
    }
    double exponent = 0.0;
    for (std::size_t i = 0; i + 1 < path.values.size(); ++i) {
        const double ds = path.times[i + 1] - path.times[i];
        const double x = path.values[i];
        const double sig = sigma_fn(x);
        if (!(sig > 0.0)) {
            throw std::domain_error("sigma must be > 0 along the path");
        }
        const double dw = (path.values[i + 1] - x - f(x) * ds) / sig;
        const double u = (f_star(x) - f(x)) / sig;
        exponent += -0.5 * u * u * ds + u * dw;
    }
    return std::exp(exponent);
}

}  // namespace marketback
