#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "marketback/audio.hpp"
#include "marketback/rng.hpp"

namespace marketback {

struct FeatureConfig {
    int frame_size = 512;
    int hop = 256;
    int n_bins = 64;
    double log_offset = 1e-6;
};

// Frame-averaged magnitude spectrum, pooled into log-spaced bands and
// log-compressed. Deterministic.
std::vector<double> extract_features(const AudioClip& clip,
                                     const FeatureConfig& cfg);

// Band b covers FFT bins [edges[b], edges[b+1]); n_bins+1 entries.
std::vector<std::size_t> feature_band_edges(const FeatureConfig& cfg);

struct TrainConfig {
    int epochs = 15;
    double lr = 1e-3;  // the documented full-scale alternative is 0.1
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch_size = 32;
    int folds = 5;
    std::uint64_t seed = 0;
};

// One hidden layer of 64 rectified units plus softmax readout, with input
// standardization folded into the model.
struct VictimModel {
    Eigen::MatrixXd w1;  // hidden x input
    Eigen::VectorXd b1;
    Eigen::MatrixXd w2;  // classes x hidden
    Eigen::VectorXd b2;
    Eigen::VectorXd feat_mean;
    Eigen::VectorXd feat_sd;
    int n_classes = 0;

    Eigen::VectorXd predict_proba(std::span<const double> features) const;
    int predict(std::span<const double> features) const;
};

struct TrainResult {
    VictimModel model;
    std::vector<double> epoch_losses;
};

TrainResult train_victim(const std::vector<std::vector<double>>& features,
                         const std::vector<int>& labels, int n_classes,
                         const TrainConfig& cfg);

struct EvalReport {
    double ba = 0.0;
    double asr = 0.0;
    double clean_loss = 0.0;
    double backdoor_loss = 0.0;
    double gamma = 0.0;
    int target_label = 0;
    std::uint64_t seed = 0;
    int n_clean_test = 0;
    int n_triggered_test = 0;
};

// triggered set must exclude samples whose true label equals target_label.
// backdoor_loss is the cross-entropy of the triggered set against the
// attacker's target label.
EvalReport evaluate(const VictimModel& model,
                    const std::vector<std::vector<double>>& clean_features,
                    const std::vector<int>& clean_labels,
                    const std::vector<std::vector<double>>& triggered_features,
                    const std::vector<int>& triggered_true_labels,
                    int target_label);

struct KfoldResult {
    std::vector<EvalReport> fold_reports;
    double mean_ba = 0.0;
    double sd_ba = 0.0;
};

KfoldResult kfold_cv(const std::vector<std::vector<double>>& features,
                     const std::vector<int>& labels, int n_classes,
                     const TrainConfig& cfg, int k = 5);

// Mean cross-entropy loss and its gradients, exposed for the
// finite-difference check.
struct LossGrad {
    double loss = 0.0;
    Eigen::MatrixXd dw1;
    Eigen::VectorXd db1;
    Eigen::MatrixXd dw2;
    Eigen::VectorXd db2;
};

LossGrad victim_loss_grad(const VictimModel& model,
                          const Eigen::MatrixXd& inputs,  // standardized, n x d
                          const std::vector<int>& labels);

// In-place radix-2 FFT on 2^k points (real input passed as interleaved
// re/im); exposed for the spectral-energy test oracle.
void fft_radix2(std::vector<double>& re, std::vector<double>& im);

}  // namespace marketback
