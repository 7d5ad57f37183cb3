#include "marketback/bo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace marketback {

namespace {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double norm_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
}

double sq_exp_kernel(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b,
                     double lengthscale, double signal_var) {
    const double d2 = (a - b).squaredNorm();
    return signal_var * std::exp(-0.5 * d2 / (lengthscale * lengthscale));
}

}  // namespace

GpSurrogate::GpSurrogate(Eigen::MatrixXd points, Eigen::VectorXd values,
                         double lengthscale, double signal_var,
                         double noise_var)
    : points_(std::move(points)),
      lengthscale_(lengthscale),
      signal_var_(signal_var),
      noise_var_(std::max(noise_var, 1e-10)) {
    if (points_.rows() < 2 || points_.rows() != values.size()) {
        throw std::domain_error("surrogate needs >= 2 aligned points");
    }
    if (!(lengthscale_ > 0.0) || !(signal_var_ > 0.0)) {
        throw std::domain_error("kernel hyperparameters must be > 0");
    }
    mean_ = values.mean();
    const Eigen::Index n = points_.rows();
    Eigen::MatrixXd cov(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double k = sq_exp_kernel(points_.row(i), points_.row(j),
                                           lengthscale_, signal_var_);
            cov(i, j) = k;
            cov(j, i) = k;
        }
        cov(i, i) += noise_var_;
    }

    double jitter = 0.0;
    for (;;) {
        chol_.compute(cov + jitter * Eigen::MatrixXd::Identity(n, n));
        if (chol_.info() == Eigen::Success) break;
        jitter = jitter == 0.0 ? 1e-10 : jitter * 10.0;
        if (jitter > 1e-6) {
            throw std::runtime_error("covariance factorization failed");
        }
    }

    const Eigen::VectorXd centered = values.array() - mean_;
    alpha_ = chol_.solve(centered);
    double log_det = 0.0;
    const auto& l = chol_.matrixLLT();
    for (Eigen::Index i = 0; i < n; ++i) log_det += std::log(l(i, i));
    log_ml_ = -0.5 * centered.dot(alpha_) - log_det -
              0.5 * static_cast<double>(n) * std::log(2.0 * 3.14159265358979323846);
}

std::pair<double, double> GpSurrogate::predict(
    std::span<const double> x) const {
    if (static_cast<Eigen::Index>(x.size()) != points_.cols()) {
        throw std::domain_error("query dimension mismatch");
    }
    Eigen::RowVectorXd q(points_.cols());
    for (Eigen::Index j = 0; j < q.size(); ++j) {
        q(j) = x[static_cast<std::size_t>(j)];
    }
    Eigen::VectorXd k(points_.rows());
    for (Eigen::Index i = 0; i < points_.rows(); ++i) {
        k(i) = sq_exp_kernel(q, points_.row(i), lengthscale_, signal_var_);
    }
    const double mu = mean_ + k.dot(alpha_);
    const double var =
        std::max(signal_var_ - k.dot(chol_.solve(k)), 1e-12);
    return {mu, std::sqrt(var)};
}

GpSurrogate gp_fit(const std::vector<std::vector<double>>& points,
                   const std::vector<double>& values) {
    if (points.size() < 2 || points.size() != values.size()) {
        throw std::domain_error("gp_fit needs >= 2 aligned points");
    }
    const auto n = static_cast<Eigen::Index>(points.size());
    const auto d = static_cast<Eigen::Index>(points.front().size());
    Eigen::MatrixXd x(n, d);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& p = points[static_cast<std::size_t>(i)];
        if (static_cast<Eigen::Index>(p.size()) != d) {
            throw std::domain_error("inconsistent point dimensions");
        }
        for (Eigen::Index j = 0; j < d; ++j) x(i, j) = p[static_cast<std::size_t>(j)];
        y(i) = values[static_cast<std::size_t>(i)];
    }

    const double range =
        std::max((x.colwise().maxCoeff() - x.colwise().minCoeff()).mean(),
                 1e-6);
    const double var_y =
        (y.array() - y.mean()).square().sum() / static_cast<double>(n);
    if (var_y <= 0.0) {
        // Degenerate targets: constant-mean surrogate.
        return GpSurrogate(std::move(x), std::move(y), range, 1e-12, 1e-12);
    }

    static constexpr double kLenGrid[] = {0.05, 0.1, 0.2, 0.5, 1.0};
    static constexpr double kSigGrid[] = {0.25, 1.0, 4.0};
    const double noise_var = std::max(1e-6 * var_y, 1e-10);

    double best_ml = -std::numeric_limits<double>::infinity();
    double best_len = range;
    double best_sig = var_y;
    for (double lf : kLenGrid) {
        for (double sf : kSigGrid) {
            GpSurrogate cand(x, y, lf * range, sf * var_y, noise_var);
            if (cand.log_marginal_likelihood() > best_ml) {
                best_ml = cand.log_marginal_likelihood();
                best_len = lf * range;
                best_sig = sf * var_y;
            }
        }
    }
    return GpSurrogate(std::move(x), std::move(y), best_len, best_sig,
                       noise_var);
}

double acq_ei(double mu, double sigma, double f_min) {
    if (sigma < 0.0) throw std::domain_error("sigma must be >= 0");
    if (sigma == 0.0) return std::max(0.0, f_min - mu);
    const double z = (f_min - mu) / sigma;
    return std::max(0.0, sigma * (z * norm_cdf(z) + norm_pdf(z)));
}

double acq_lcb(double mu, double sigma, double beta) {
    if (sigma < 0.0 || beta < 0.0) {
        throw std::domain_error("sigma and beta must be >= 0");
    }
    return beta * sigma - mu;
}

void Bounds::validate() const {
    if (box.empty()) throw std::domain_error("empty bounds");
    for (const auto& [lo, hi] : box) {
        if (!(lo < hi)) throw std::domain_error("bounds need lo < hi");
    }
}

BoTrace bo_run(const std::function<double(std::span<const double>)>& objective,
               const Bounds& bounds, int k_init, int n_iter, AcqKind acq,
               double lcb_beta, NoiseSource noise) {
    bounds.validate();
    if (k_init < 2) throw std::domain_error("k_init must be >= 2");
    if (n_iter < 1) throw std::domain_error("n_iter must be >= 1");
    const std::size_t dim = bounds.box.size();

    BoTrace trace;
    trace.acq = acq;

    double worst_abs = 0.0;
    const auto record = [&](std::vector<double> point) {
        const double raw = objective(point);
        const bool bad = !std::isfinite(raw);
        const double value = bad ? 10.0 * std::max(worst_abs, 0.0) + 1.0 : raw;
        if (!bad) worst_abs = std::max(worst_abs, std::abs(raw));
        trace.points.push_back(std::move(point));
        trace.values.push_back(value);
        trace.penalized.push_back(bad);
    };

    // Latin-hypercube initial design.
    NoiseSource lhs_rng = noise.stream(noise.stream_id() + 1);
    std::vector<std::vector<std::size_t>> strata(
        dim, std::vector<std::size_t>(static_cast<std::size_t>(k_init)));
    for (auto& s : strata) {
        std::iota(s.begin(), s.end(), 0);
        for (std::size_t i = s.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(lhs_rng.uniform() *
                                                    static_cast<double>(i));
            std::swap(s[i - 1], s[std::min(j, i - 1)]);
        }
    }
    for (int p = 0; p < k_init; ++p) {
        std::vector<double> point(dim);
        for (std::size_t j = 0; j < dim; ++j) {
            const auto [lo, hi] = bounds.box[j];
            const double cell =
                (static_cast<double>(strata[j][static_cast<std::size_t>(p)]) +
                 lhs_rng.uniform()) /
                static_cast<double>(k_init);
            point[j] = lo + cell * (hi - lo);
        }
        record(std::move(point));
    }

    const auto note_incumbent = [&]() {
        const auto it =
            std::min_element(trace.values.begin(), trace.values.end());
        const auto idx =
            static_cast<std::size_t>(it - trace.values.begin());
        trace.incumbent_values.push_back(*it);
        trace.incumbent_points.push_back(trace.points[idx]);
    };
    note_incumbent();

    for (int iter = 0; iter < n_iter; ++iter) {
        const GpSurrogate gp = gp_fit(trace.points, trace.values);
        const double f_min =
            *std::min_element(trace.values.begin(), trace.values.end());
        const auto score = [&](std::span<const double> x) {
            const auto [mu, sigma] = gp.predict(x);
            return acq == AcqKind::ei ? acq_ei(mu, sigma, f_min)
                                      : acq_lcb(mu, sigma, lcb_beta);
        };

        NoiseSource cand_rng =
            noise.stream(noise.stream_id() + 100 + static_cast<std::uint64_t>(iter));
        std::vector<double> best(dim);
        double best_score = -std::numeric_limits<double>::infinity();
        std::vector<double> cand(dim);
        for (int c = 0; c < 256; ++c) {
            for (std::size_t j = 0; j < dim; ++j) {
                const auto [lo, hi] = bounds.box[j];
                cand[j] = lo + cand_rng.uniform() * (hi - lo);
            }
            const double s = score(cand);
            if (s > best_score) {
                best_score = s;
                best = cand;
            }
        }
        double radius = 0.1;
        for (int r = 0; r < 20; ++r) {
            for (std::size_t j = 0; j < dim; ++j) {
                const auto [lo, hi] = bounds.box[j];
                cand[j] = std::clamp(
                    best[j] + radius * (hi - lo) * cand_rng.normal(), lo, hi);
            }
            const double s = score(cand);
            if (s > best_score) {
                best_score = s;
                best = cand;
            }
            radius *= 0.8;
        }
        record(std::move(best));
        note_incumbent();
    }
    return trace;
}

}  // namespace marketback
