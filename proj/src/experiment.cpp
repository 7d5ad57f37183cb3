#include "marketback/experiment.hpp"

#include <cmath>
#include <stdexcept>

namespace marketback {

namespace {

void check_keys(const nlohmann::json& j,
                std::initializer_list<const char*> allowed,
                const std::string& scope) {
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) {
            if (key == a) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw std::runtime_error("unknown config key: " + scope + key);
        }
    }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

nlohmann::json ExperimentConfig::to_json() const {
    return nlohmann::json{
        {"seed", seed},
        {"out_dir", out_dir},
        {"data",
         {{"n_per_class", data.n_per_class},
          {"n_classes", data.n_classes},
          {"clip_seconds", data.clip_seconds}}},
        {"trigger",
         {{"drift_kind", trigger.drift_kind},
          {"t_steps", trigger.t_steps},
          {"clap_duration", trigger.clap_duration},
          {"poison_rate", trigger.poison_rate},
          {"prior_mean", trigger.prior_mean}}},
        {"poison",
         {{"target_label", poison.target_label},
          {"dirty_label", poison.dirty_label},
          {"replace_prob", poison.replace_prob},
          {"flip_prob", poison.flip_prob},
          {"trigger_alpha", poison.trigger_alpha},
          {"mode", poison.mode},
          {"exact_count", poison.exact_count}}},
        {"train",
         {{"epochs", train.epochs},
          {"lr", train.lr},
          {"batch_size", train.batch_size},
          {"folds", train.folds}}},
        {"eval", {{"target_label", eval.target_label}}}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    check_keys(j, {"seed", "out_dir", "data", "trigger", "poison", "train",
                   "eval"},
               "");
    ExperimentConfig cfg;
    read(j, "seed", cfg.seed);
    read(j, "out_dir", cfg.out_dir);
    if (j.contains("data")) {
        const auto& d = j.at("data");
        check_keys(d, {"n_per_class", "n_classes", "clip_seconds"}, "data.");
        read(d, "n_per_class", cfg.data.n_per_class);
        read(d, "n_classes", cfg.data.n_classes);
        read(d, "clip_seconds", cfg.data.clip_seconds);
    }
    if (j.contains("trigger")) {
        const auto& t = j.at("trigger");
        check_keys(t, {"drift_kind", "t_steps", "clap_duration", "poison_rate",
                       "prior_mean"},
                   "trigger.");
        read(t, "drift_kind", cfg.trigger.drift_kind);
        read(t, "t_steps", cfg.trigger.t_steps);
        read(t, "clap_duration", cfg.trigger.clap_duration);
        read(t, "poison_rate", cfg.trigger.poison_rate);
        read(t, "prior_mean", cfg.trigger.prior_mean);
    }
    if (j.contains("poison")) {
        const auto& p = j.at("poison");
        check_keys(p, {"target_label", "dirty_label", "replace_prob",
                       "flip_prob", "trigger_alpha", "mode", "exact_count"},
                   "poison.");
        read(p, "target_label", cfg.poison.target_label);
        read(p, "dirty_label", cfg.poison.dirty_label);
        read(p, "replace_prob", cfg.poison.replace_prob);
        read(p, "flip_prob", cfg.poison.flip_prob);
        read(p, "trigger_alpha", cfg.poison.trigger_alpha);
        read(p, "mode", cfg.poison.mode);
        read(p, "exact_count", cfg.poison.exact_count);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        check_keys(t, {"epochs", "lr", "batch_size", "folds"}, "train.");
        read(t, "epochs", cfg.train.epochs);
        read(t, "lr", cfg.train.lr);
        read(t, "batch_size", cfg.train.batch_size);
        read(t, "folds", cfg.train.folds);
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        check_keys(e, {"target_label"}, "eval.");
        read(e, "target_label", cfg.eval.target_label);
    }
    return cfg;
}

DriftKind ExperimentConfig::drift_kind() const {
    if (trigger.drift_kind == "vasicek") return DriftKind::vasicek;
    if (trigger.drift_kind == "hull_white") return DriftKind::hull_white;
    if (trigger.drift_kind == "longstaff_schwartz") {
        return DriftKind::longstaff_schwartz;
    }
    throw std::runtime_error("unknown drift kind: " + trigger.drift_kind);
}

PoisonConfig ExperimentConfig::poison_config() const {
    PoisonConfig p;
    p.target_label = poison.target_label;
    p.dirty_label = poison.dirty_label;
    p.replace_prob = poison.replace_prob;
    p.flip_prob = poison.flip_prob;
    p.trigger_alpha = poison.trigger_alpha;
    if (poison.mode == "verbatim") {
        p.mode = PoisonMode::verbatim;
    } else if (poison.mode == "target_class_only") {
        p.mode = PoisonMode::target_class_only;
    } else {
        throw std::runtime_error("unknown poison mode: " + poison.mode);
    }
    if (poison.exact_count >= 0) {
        p.exact_count = static_cast<std::size_t>(poison.exact_count);
    }
    return p;
}

std::string json_hash(const nlohmann::json& j) {
    // nlohmann::json orders object keys, so dump() is canonical.
    const std::string text = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(h));
    return buf;
}

std::string config_hash(const ExperimentConfig& cfg) {
    return json_hash(cfg.to_json());
}

nlohmann::json AttackOutcome::report_json() const {
    return nlohmann::json{{"schema_version", kSchemaVersion},
                          {"ba", report.ba},
                          {"asr", report.asr},
                          {"clean_loss", report.clean_loss},
                          {"backdoor_loss", report.backdoor_loss},
                          {"gamma", report.gamma},
                          {"target_label", report.target_label},
                          {"seed", report.seed},
                          {"n_clean_test", report.n_clean_test},
                          {"n_triggered_test", report.n_triggered_test},
                          {"baseline_ba", baseline_ba}};
}

AttackOutcome attack_e2e(const ExperimentConfig& cfg) {
    const SynthDataset corpus =
        synth_dataset(cfg.data.n_per_class, cfg.data.n_classes,
                      cfg.data.clip_seconds, cfg.seed);

    // Diffusion-enveloped clap trigger.
    const TriggerSpec clap = synth_clap_trigger(cfg.seed, cfg.trigger.clap_duration);
    const DiffusionSchedule sched =
        DiffusionSchedule::defaults(cfg.trigger.t_steps);
    BackdoorSamplerConfig sampler;
    sampler.poison_rate = cfg.trigger.poison_rate;
    sampler.prior_mean = cfg.trigger.prior_mean;
    sampler.drift_kind = cfg.drift_kind();
    sampler.trigger_summary = clap.mean_abs_amplitude();
    NoiseSource diff_rng(cfg.seed, /*stream_id=*/11);
    const std::vector<double> states =
        back_diffusion_sampling(sampler, sched, diff_rng);
    const std::size_t clip_len = corpus.clips.front().samples.size();
    const std::vector<double> trigger_wave =
        render_trigger(states, clap, clip_len);

    std::vector<AudioClip> train_clips;
    std::vector<int> train_labels;
    std::vector<AudioClip> test_clips;
    std::vector<int> test_labels;
    for (std::size_t i = 0; i < corpus.clips.size(); ++i) {
        if (corpus.splits[i] == "train") {
            train_clips.push_back(corpus.clips[i]);
            train_labels.push_back(corpus.labels[i]);
        } else {
            test_clips.push_back(corpus.clips[i]);
            test_labels.push_back(corpus.labels[i]);
        }
    }

    const PoisonedDataset poisoned =
        apply_poison(train_clips, train_labels, cfg.poison_config(),
                     trigger_wave, NoiseSource(cfg.seed, /*stream_id=*/21));

    const FeatureConfig feat_cfg;
    const auto featurize = [&](const std::vector<AudioClip>& clips) {
        std::vector<std::vector<double>> out;
        out.reserve(clips.size());
        for (const auto& c : clips) out.push_back(extract_features(c, feat_cfg));
        return out;
    };

    TrainConfig train_cfg;
    train_cfg.epochs = cfg.train.epochs;
    train_cfg.lr = cfg.train.lr;
    train_cfg.batch_size = cfg.train.batch_size;
    train_cfg.folds = cfg.train.folds;
    train_cfg.seed = cfg.seed;

    const auto poisoned_features = featurize(poisoned.clips);
    const TrainResult victim = train_victim(poisoned_features, poisoned.labels,
                                            cfg.data.n_classes, train_cfg);
    const TrainResult baseline = train_victim(
        featurize(train_clips), train_labels, cfg.data.n_classes, train_cfg);

    const auto clean_test_features = featurize(test_clips);

    // Triggered test set: clean test clips with the trigger blended in,
    // excluding clips whose true label already equals the target.
    std::vector<AudioClip> triggered_clips;
    std::vector<int> triggered_labels;
    for (std::size_t i = 0; i < test_clips.size(); ++i) {
        if (test_labels[i] == cfg.eval.target_label) continue;
        AudioClip c = test_clips[i];
        for (std::size_t s = 0; s < c.samples.size(); ++s) {
            c.samples[s] = std::clamp(
                c.samples[s] + cfg.poison.trigger_alpha *
                                   trigger_wave[s % trigger_wave.size()],
                -1.0, 1.0);
        }
        triggered_clips.push_back(std::move(c));
        triggered_labels.push_back(test_labels[i]);
    }
    const auto triggered_features = featurize(triggered_clips);

    AttackOutcome out;
    out.report =
        evaluate(victim.model, clean_test_features, test_labels,
                 triggered_features, triggered_labels, cfg.eval.target_label);
    out.report.gamma = poisoned.gamma;
    out.report.seed = cfg.seed;
    out.diffusion_states = states;
    out.trigger_wave = trigger_wave;
    out.epoch_losses = victim.epoch_losses;

    long baseline_correct = 0;
    for (std::size_t i = 0; i < clean_test_features.size(); ++i) {
        if (baseline.model.predict(clean_test_features[i]) == test_labels[i]) {
            ++baseline_correct;
        }
    }
    out.baseline_ba = static_cast<double>(baseline_correct) /
                      static_cast<double>(clean_test_features.size());
    return out;
}

}  // namespace marketback
