#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>

#include "marketback/diffusion.hpp"
#include "marketback/poison.hpp"
#include "marketback/victim.hpp"

namespace marketback {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kSchemaVersion = "1";

struct ExperimentConfig {
    std::uint64_t seed = 42;
    std::string out_dir = "out";

    struct Data {
        int n_per_class = 125;  // 80/20 split: 100 train + 25 test per class
        int n_classes = 10;
        double clip_seconds = 1.0;
    } data;

    struct Trigger {
        std::string drift_kind = "vasicek";
        int t_steps = 50;
        double clap_duration = 0.01;
        double poison_rate = 1.0;
        double prior_mean = 0.0;
    } trigger;

    struct Poison {
        int target_label = 0;  // source class whose labels get rewritten
        int dirty_label = 3;   // the attacker's target label
        double replace_prob = 1.0;
        double flip_prob = 0.0;
        double trigger_alpha = 0.1;
        std::string mode = "target_class_only";
        int exact_count = 10;  // < 0 disables exact-count selection
    } poison;

    struct Train {
        int epochs = 15;
        double lr = 1e-3;
        int batch_size = 32;
        int folds = 5;
    } train;

    struct Eval {
        int target_label = 3;
    } eval;

    nlohmann::json to_json() const;
    // Rejects unknown keys; missing keys keep their defaults.
    static ExperimentConfig from_json(const nlohmann::json& j);

    DriftKind drift_kind() const;
    PoisonConfig poison_config() const;
};

// Canonical 64-bit FNV-1a hash of the sorted-key JSON serialization.
std::string json_hash(const nlohmann::json& j);
std::string config_hash(const ExperimentConfig& cfg);

struct AttackOutcome {
    EvalReport report;
    double baseline_ba = 0.0;  // clean-trained model on the same test split
    std::vector<double> diffusion_states;
    std::vector<double> trigger_wave;
    std::vector<double> epoch_losses;

    nlohmann::json report_json() const;
};

// Full pipeline: synthetic corpus -> diffusion-enveloped clap trigger ->
// poisoned train split -> victim training -> BA/ASR evaluation against the
// clean baseline. Deterministic given the config.
AttackOutcome attack_e2e(const ExperimentConfig& cfg);

}  // namespace marketback
