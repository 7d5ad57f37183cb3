#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "marketback/rng.hpp"

namespace marketback {

// Squared-exponential GP with hyperparameters picked by maximum log
// marginal likelihood over a fixed grid.
class GpSurrogate {
public:
    GpSurrogate(Eigen::MatrixXd points, Eigen::VectorXd values,
                double lengthscale, double signal_var, double noise_var);

    // Predictive mean and standard deviation at one point.
    std::pair<double, double> predict(std::span<const double> x) const;

    double lengthscale() const { return lengthscale_; }
    double signal_var() const { return signal_var_; }
    double noise_var() const { return noise_var_; }
    double log_marginal_likelihood() const { return log_ml_; }
    double prior_mean() const { return mean_; }

private:
    Eigen::MatrixXd points_;  // n x d
    double lengthscale_;
    double signal_var_;
    double noise_var_;
    double mean_;
    Eigen::LLT<Eigen::MatrixXd> chol_;
    Eigen::VectorXd alpha_;
    double log_ml_ = 0.0;
};

GpSurrogate gp_fit(const std::vector<std::vector<double>>& points,
                   const std::vector<double>& values);

// Expected improvement for minimization: sigma (z Phi(z) + phi(z)) with
// z = (f_min - mu) / sigma; max(0, f_min - mu) at sigma = 0.
double acq_ei(double mu, double sigma, double f_min);

// Lower confidence bound, maximized: beta sigma - mu.
double acq_lcb(double mu, double sigma, double beta);

enum class AcqKind { ei, lcb };

struct Bounds {
    std::vector<std::pair<double, double>> box;
    void validate() const;
};

struct BoTrace {
    std::vector<std::vector<double>> points;
    std::vector<double> values;
    std::vector<bool> penalized;  // objective returned non-finite
    std::vector<double> incumbent_values;  // per iteration, non-increasing
    std::vector<std::vector<double>> incumbent_points;
    AcqKind acq = AcqKind::ei;

    double best_value() const { return incumbent_values.back(); }
    const std::vector<double>& best_point() const {
        return incumbent_points.back();
    }
};

// Latin-hypercube initial design, then acquisition maximization by 256
// seeded random candidates plus 20 rounds of shrinking coordinate
// refinement. Minimizes the objective.
BoTrace bo_run(const std::function<double(std::span<const double>)>& objective,
               const Bounds& bounds, int k_init, int n_iter, AcqKind acq,
               double lcb_beta, NoiseSource noise);

}  // namespace marketback
