#include "marketback/victim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace marketback {

namespace {

constexpr int kHiddenUnits = 64;

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

std::vector<std::size_t> band_edges(int n_bins, int n_freq) {
    // Log-spaced band edges over FFT bins [1, n_freq]; every band non-empty.
    std::vector<std::size_t> edges(static_cast<std::size_t>(n_bins) + 1);
    edges[0] = 1;
    for (int b = 1; b <= n_bins; ++b) {
        const double e = std::pow(static_cast<double>(n_freq + 1),
                                  static_cast<double>(b) / n_bins);
        edges[static_cast<std::size_t>(b)] = std::max(
            edges[static_cast<std::size_t>(b) - 1] + 1,
            static_cast<std::size_t>(std::lround(e)));
    }
    edges[static_cast<std::size_t>(n_bins)] =
        static_cast<std::size_t>(n_freq) + 1;
    for (int b = n_bins; b >= 1; --b) {
        // Re-tighten from the top so the last bands stay non-empty too.
        edges[static_cast<std::size_t>(b) - 1] =
            std::min(edges[static_cast<std::size_t>(b) - 1],
                     edges[static_cast<std::size_t>(b)] - 1);
    }
    return edges;
}

Eigen::MatrixXd standardize(const std::vector<std::vector<double>>& features,
                            const Eigen::VectorXd& mean,
                            const Eigen::VectorXd& sd) {
    const auto n = static_cast<Eigen::Index>(features.size());
    const Eigen::Index d = mean.size();
    Eigen::MatrixXd out(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& f = features[static_cast<std::size_t>(i)];
        if (static_cast<Eigen::Index>(f.size()) != d) {
            throw std::domain_error("feature dimension mismatch");
        }
        for (Eigen::Index j = 0; j < d; ++j) {
            out(i, j) = (f[static_cast<std::size_t>(j)] - mean(j)) / sd(j);
        }
    }
    return out;
}

}  // namespace

void fft_radix2(std::vector<double>& re, std::vector<double>& im) {
    const std::size_t n = re.size();
    if (im.size() != n || !is_power_of_two(static_cast<int>(n))) {
        throw std::domain_error("fft needs power-of-two aligned buffers");
    }
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * 3.14159265358979323846 /
                           static_cast<double>(len);
        const double wr = std::cos(ang);
        const double wi = std::sin(ang);
        for (std::size_t i = 0; i < n; i += len) {
            double cr = 1.0;
            double ci = 0.0;
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::size_t a = i + k;
                const std::size_t b = i + k + len / 2;
                const double tr = re[b] * cr - im[b] * ci;
                const double ti = re[b] * ci + im[b] * cr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                const double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
}

std::vector<double> extract_features(const AudioClip& clip,
                                     const FeatureConfig& cfg) {
    if (!is_power_of_two(cfg.frame_size)) {
        throw std::domain_error("frame_size must be a power of two");
    }
    if (cfg.hop <= 0 || cfg.hop > cfg.frame_size) {
        throw std::domain_error("hop must lie in (0, frame_size]");
    }
    if (clip.samples.size() < static_cast<std::size_t>(cfg.frame_size)) {
        throw std::domain_error("clip shorter than one frame");
    }

    const std::size_t frame = static_cast<std::size_t>(cfg.frame_size);
    const int n_freq = cfg.frame_size / 2;
    if (cfg.n_bins < 1 || cfg.n_bins > n_freq) {
        throw std::domain_error("n_bins must lie in [1, frame_size/2]");
    }
    std::vector<double> spectrum(static_cast<std::size_t>(n_freq) + 1, 0.0);
    std::vector<double> re(frame);
    std::vector<double> im(frame);
    std::size_t n_frames = 0;
    for (std::size_t start = 0; start + frame <= clip.samples.size();
         start += static_cast<std::size_t>(cfg.hop)) {
        std::copy_n(clip.samples.begin() + static_cast<std::ptrdiff_t>(start),
                    frame, re.begin());
        std::fill(im.begin(), im.end(), 0.0);
        fft_radix2(re, im);
        for (int k = 0; k <= n_freq; ++k) {
            spectrum[static_cast<std::size_t>(k)] +=
                std::hypot(re[static_cast<std::size_t>(k)],
                           im[static_cast<std::size_t>(k)]) /
                static_cast<double>(frame);
        }
        ++n_frames;
    }
    for (double& v : spectrum) v /= static_cast<double>(n_frames);

    const auto edges = band_edges(cfg.n_bins, n_freq);
    std::vector<double> features(static_cast<std::size_t>(cfg.n_bins));
    for (int b = 0; b < cfg.n_bins; ++b) {
        double sum = 0.0;
        const std::size_t lo = edges[static_cast<std::size_t>(b)];
        const std::size_t hi = edges[static_cast<std::size_t>(b) + 1];
        for (std::size_t k = lo; k < hi; ++k) sum += spectrum[k];
        features[static_cast<std::size_t>(b)] =
            std::log(sum / static_cast<double>(hi - lo) + cfg.log_offset);
    }
    return features;
}

std::vector<std::size_t> feature_band_edges(const FeatureConfig& cfg) {
    return band_edges(cfg.n_bins, cfg.frame_size / 2);
}

Eigen::VectorXd VictimModel::predict_proba(
    std::span<const double> features) const {
    if (static_cast<Eigen::Index>(features.size()) != w1.cols()) {
        throw std::domain_error("feature dimension mismatch");
    }
    Eigen::VectorXd x(w1.cols());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        x(j) = (features[static_cast<std::size_t>(j)] - feat_mean(j)) /
               feat_sd(j);
    }
    const Eigen::VectorXd hidden = (w1 * x + b1).cwiseMax(0.0);
    Eigen::VectorXd logits = w2 * hidden + b2;
    logits.array() -= logits.maxCoeff();
    Eigen::VectorXd probs = logits.array().exp();
    probs /= probs.sum();
    return probs;
}

int VictimModel::predict(std::span<const double> features) const {
    Eigen::Index arg = 0;
    predict_proba(features).maxCoeff(&arg);
    return static_cast<int>(arg);
}

LossGrad victim_loss_grad(const VictimModel& model,
                          const Eigen::MatrixXd& inputs,
                          const std::vector<int>& labels) {
    const Eigen::Index n = inputs.rows();
    if (n == 0 || labels.size() != static_cast<std::size_t>(n)) {
        throw std::domain_error("inputs/labels size mismatch");
    }
    // hidden: units x n
    const Eigen::MatrixXd pre =
        (model.w1 * inputs.transpose()).colwise() + model.b1;
    const Eigen::MatrixXd hidden = pre.cwiseMax(0.0);
    Eigen::MatrixXd logits = (model.w2 * hidden).colwise() + model.b2;

    Eigen::MatrixXd probs(logits.rows(), logits.cols());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd col = logits.col(i);
        col.array() -= col.maxCoeff();
        Eigen::VectorXd e = col.array().exp();
        e /= e.sum();
        probs.col(i) = e;
        loss -= std::log(std::max(e(labels[static_cast<std::size_t>(i)]),
                                  1e-300));
    }
    loss /= static_cast<double>(n);

    Eigen::MatrixXd dlogits = probs;
    for (Eigen::Index i = 0; i < n; ++i) {
        dlogits(labels[static_cast<std::size_t>(i)], i) -= 1.0;
    }
    dlogits /= static_cast<double>(n);

    LossGrad g;
    g.loss = loss;
    g.dw2 = dlogits * hidden.transpose();
    g.db2 = dlogits.rowwise().sum();
    Eigen::MatrixXd dhidden = model.w2.transpose() * dlogits;
    dhidden = (pre.array() > 0.0).select(dhidden, 0.0);
    g.dw1 = dhidden * inputs;
    g.db1 = dhidden.rowwise().sum();
    return g;
}

TrainResult train_victim(const std::vector<std::vector<double>>& features,
                         const std::vector<int>& labels, int n_classes,
                         const TrainConfig& cfg) {
    if (features.empty() || features.size() != labels.size()) {
        throw std::domain_error("features/labels size mismatch");
    }
    if (cfg.epochs < 1) throw std::domain_error("epochs must be >= 1");
    if (!(cfg.lr >= 0.0)) throw std::domain_error("lr must be >= 0");
    std::vector<bool> present(static_cast<std::size_t>(n_classes), false);
    for (int y : labels) {
        if (y < 0 || y >= n_classes) throw std::domain_error("label range");
        present[static_cast<std::size_t>(y)] = true;
    }
    if (std::count(present.begin(), present.end(), true) < 2) {
        throw std::domain_error("need at least two classes present");
    }

    const Eigen::Index d = static_cast<Eigen::Index>(features.front().size());
    const Eigen::Index n = static_cast<Eigen::Index>(features.size());

    VictimModel model;
    model.n_classes = n_classes;
    model.feat_mean = Eigen::VectorXd::Zero(d);
    model.feat_sd = Eigen::VectorXd::Zero(d);
    for (const auto& f : features) {
        for (Eigen::Index j = 0; j < d; ++j) {
            model.feat_mean(j) += f[static_cast<std::size_t>(j)];
        }
    }
    model.feat_mean /= static_cast<double>(n);
    for (const auto& f : features) {
        for (Eigen::Index j = 0; j < d; ++j) {
            const double dd = f[static_cast<std::size_t>(j)] - model.feat_mean(j);
            model.feat_sd(j) += dd * dd;
        }
    }
    model.feat_sd = (model.feat_sd / static_cast<double>(n))
                        .cwiseSqrt()
                        .cwiseMax(1e-8);

    NoiseSource init_rng(cfg.seed, /*stream_id=*/101);
    const double s1 = std::sqrt(2.0 / static_cast<double>(d));
    const double s2 = std::sqrt(2.0 / static_cast<double>(kHiddenUnits));
    model.w1 = Eigen::MatrixXd::NullaryExpr(
        kHiddenUnits, d, [&]() { return s1 * init_rng.normal(); });
    model.b1 = Eigen::VectorXd::Zero(kHiddenUnits);
    model.w2 = Eigen::MatrixXd::NullaryExpr(
        n_classes, kHiddenUnits, [&]() { return s2 * init_rng.normal(); });
    model.b2 = Eigen::VectorXd::Zero(n_classes);

    const Eigen::MatrixXd all_inputs =
        standardize(features, model.feat_mean, model.feat_sd);

    // Adam state.
    Eigen::MatrixXd m_w1 = Eigen::MatrixXd::Zero(kHiddenUnits, d);
    Eigen::MatrixXd v_w1 = m_w1;
    Eigen::VectorXd m_b1 = Eigen::VectorXd::Zero(kHiddenUnits);
    Eigen::VectorXd v_b1 = m_b1;
    Eigen::MatrixXd m_w2 = Eigen::MatrixXd::Zero(n_classes, kHiddenUnits);
    Eigen::MatrixXd v_w2 = m_w2;
    Eigen::VectorXd m_b2 = Eigen::VectorXd::Zero(n_classes);
    Eigen::VectorXd v_b2 = m_b2;
    long step = 0;

    const auto adam = [&](auto& param, auto& m, auto& v, const auto& grad) {
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
        v = cfg.beta2 * v.array().matrix() +
            (1.0 - cfg.beta2) * grad.array().square().matrix();
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
        param.array() -= cfg.lr * (m.array() / bc1) /
                         ((v.array() / bc2).sqrt() + cfg.eps);
    };

    NoiseSource shuffle_rng(cfg.seed, /*stream_id=*/202);
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    const int batch = std::max(1, cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(shuffle_rng.uniform() *
                                                    static_cast<double>(i));
            std::swap(order[i - 1], order[std::min(j, i - 1)]);
        }
        double epoch_loss = 0.0;
        long n_batches = 0;
        for (Eigen::Index start = 0; start < n; start += batch) {
            const Eigen::Index sz = std::min<Eigen::Index>(batch, n - start);
            Eigen::MatrixXd bx(sz, d);
            std::vector<int> by(static_cast<std::size_t>(sz));
            for (Eigen::Index r = 0; r < sz; ++r) {
                const std::size_t src = order[static_cast<std::size_t>(start + r)];
                bx.row(r) = all_inputs.row(static_cast<Eigen::Index>(src));
                by[static_cast<std::size_t>(r)] = labels[src];
            }
            const LossGrad g = victim_loss_grad(model, bx, by);
            if (!std::isfinite(g.loss)) {
                throw std::runtime_error("NaN loss at epoch " +
                                         std::to_string(epoch));
            }
            ++step;
            adam(model.w1, m_w1, v_w1, g.dw1);
            adam(model.b1, m_b1, v_b1, g.db1);
            adam(model.w2, m_w2, v_w2, g.dw2);
            adam(model.b2, m_b2, v_b2, g.db2);
            epoch_loss += g.loss;
            ++n_batches;
        }
        result.epoch_losses.push_back(epoch_loss /
                                      static_cast<double>(n_batches));
    }
    result.model = std::move(model);
    return result;
}

EvalReport evaluate(const VictimModel& model,
                    const std::vector<std::vector<double>>& clean_features,
                    const std::vector<int>& clean_labels,
                    const std::vector<std::vector<double>>& triggered_features,
                    const std::vector<int>& triggered_true_labels,
                    int target_label) {
    if (clean_features.empty() || triggered_features.empty()) {
        throw std::domain_error("empty test set");
    }
    if (clean_features.size() != clean_labels.size() ||
        triggered_features.size() != triggered_true_labels.size()) {
        throw std::domain_error("features/labels size mismatch");
    }
    for (int y : triggered_true_labels) {
        if (y == target_label) {
            throw std::domain_error(
                "triggered set must exclude true-target-class samples");
        }
    }

    EvalReport report;
    report.target_label = target_label;
    report.n_clean_test = static_cast<int>(clean_features.size());
    report.n_triggered_test = static_cast<int>(triggered_features.size());

    long correct = 0;
    double clean_loss = 0.0;
    for (std::size_t i = 0; i < clean_features.size(); ++i) {
        const Eigen::VectorXd p = model.predict_proba(clean_features[i]);
        Eigen::Index arg = 0;
        p.maxCoeff(&arg);
        if (static_cast<int>(arg) == clean_labels[i]) ++correct;
        clean_loss -= std::log(std::max(p(clean_labels[i]), 1e-300));
    }
    report.ba = static_cast<double>(correct) /
                static_cast<double>(clean_features.size());
    report.clean_loss = clean_loss / static_cast<double>(clean_features.size());

    long hits = 0;
    double backdoor_loss = 0.0;
    for (std::size_t i = 0; i < triggered_features.size(); ++i) {
        const Eigen::VectorXd p = model.predict_proba(triggered_features[i]);
        Eigen::Index arg = 0;
        p.maxCoeff(&arg);
        if (static_cast<int>(arg) == target_label) ++hits;
        backdoor_loss -= std::log(std::max(p(target_label), 1e-300));
    }
    report.asr = static_cast<double>(hits) /
                 static_cast<double>(triggered_features.size());
    report.backdoor_loss =
        backdoor_loss / static_cast<double>(triggered_features.size());
    return report;
}

KfoldResult kfold_cv(const std::vector<std::vector<double>>& features,
                     const std::vector<int>& labels, int n_classes,
                     const TrainConfig& cfg, int k) {
    if (k < 2) throw std::domain_error("k must be >= 2");
    if (features.size() != labels.size() || features.empty()) {
        throw std::domain_error("features/labels size mismatch");
    }

    // Stratified fold assignment: shuffle each class, deal round-robin.
    std::vector<std::vector<std::size_t>> by_class(
        static_cast<std::size_t>(n_classes));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        by_class[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    NoiseSource rng(cfg.seed, /*stream_id=*/303);
    std::vector<int> fold_of(features.size(), 0);
    for (auto& cls : by_class) {
        if (cls.empty()) continue;
        if (cls.size() < static_cast<std::size_t>(k)) {
            throw std::domain_error("class smaller than k");
        }
        for (std::size_t i = cls.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(rng.uniform() *
                                                    static_cast<double>(i));
            std::swap(cls[i - 1], cls[std::min(j, i - 1)]);
        }
        for (std::size_t i = 0; i < cls.size(); ++i) {
            fold_of[cls[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
        }
    }

    KfoldResult result;
    for (int fold = 0; fold < k; ++fold) {
        std::vector<std::vector<double>> train_x;
        std::vector<int> train_y;
        std::vector<std::vector<double>> test_x;
        std::vector<int> test_y;
        for (std::size_t i = 0; i < features.size(); ++i) {
            if (fold_of[i] == fold) {
                test_x.push_back(features[i]);
                test_y.push_back(labels[i]);
            } else {
                train_x.push_back(features[i]);
                train_y.push_back(labels[i]);
            }
        }
        const TrainResult trained =
            train_victim(train_x, train_y, n_classes, cfg);

        EvalReport report;
        report.seed = cfg.seed;
        report.n_clean_test = static_cast<int>(test_x.size());
        long correct = 0;
        double loss = 0.0;
        for (std::size_t i = 0; i < test_x.size(); ++i) {
            const Eigen::VectorXd p = trained.model.predict_proba(test_x[i]);
            Eigen::Index arg = 0;
            p.maxCoeff(&arg);
            if (static_cast<int>(arg) == test_y[i]) ++correct;
            loss -= std::log(std::max(p(test_y[i]), 1e-300));
        }
        report.ba = static_cast<double>(correct) /
                    static_cast<double>(test_x.size());
        report.clean_loss = loss / static_cast<double>(test_x.size());
        result.fold_reports.push_back(report);
    }

    double sum = 0.0;
    for (const auto& r : result.fold_reports) sum += r.ba;
    result.mean_ba = sum / static_cast<double>(k);
    double var = 0.0;
    for (const auto& r : result.fold_reports) {
        var += (r.ba - result.mean_ba) * (r.ba - result.mean_ba);
    }
    result.sd_ba = std::sqrt(var / static_cast<double>(k));
    return result;
}

}  // namespace marketback
