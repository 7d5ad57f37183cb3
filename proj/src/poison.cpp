#include "marketback/poison.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace marketback {

void DatasetManifest::validate(int n_classes) const {
    std::set<std::string> seen;
    for (const auto& e : entries) {
        if (e.label < 0 || e.label >= n_classes) {
            throw std::runtime_error("manifest label out of range: " +
                                     std::to_string(e.label));
        }
        if (e.split != "train" && e.split != "test") {
            throw std::runtime_error("manifest split must be train|test");
        }
        if (!seen.insert(e.path).second) {
            throw std::runtime_error("duplicate manifest path: " + e.path);
        }
    }
}

void DatasetManifest::save(const std::filesystem::path& file) const {
    std::ofstream f(file);
    if (!f) throw std::runtime_error("cannot open " + file.string());
    for (const auto& e : entries) {
        nlohmann::json rec{{"path", e.path}, {"label", e.label},
                           {"split", e.split}};
        f << rec.dump() << '\n';
    }
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& file) {
    std::ifstream f(file);
    if (!f) throw std::runtime_error("cannot open " + file.string());
    DatasetManifest m;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto rec = nlohmann::json::parse(line);
        m.entries.push_back(ManifestEntry{rec.at("path").get<std::string>(),
                                          rec.at("label").get<int>(),
                                          rec.at("split").get<std::string>()});
    }
    return m;
}

void PoisonConfig::validate() const {
    if (replace_prob < 0.0 || replace_prob > 1.0 || flip_prob < 0.0 ||
        flip_prob > 1.0 || trigger_alpha < 0.0 || trigger_alpha > 1.0) {
        throw std::domain_error("poison probabilities must lie in [0, 1]");
    }
    if (target_label == dirty_label && !allow_equal_labels) {
        throw std::domain_error("target and dirty labels must differ");
    }
}

PoisonedDataset apply_poison(const std::vector<AudioClip>& clips,
                             const std::vector<int>& labels,
                             const PoisonConfig& cfg,
                             std::span<const double> trigger,
                             const NoiseSource& noise) {
    cfg.validate();
    if (clips.empty()) throw std::domain_error("empty dataset");
    if (clips.size() != labels.size()) {
        throw std::domain_error("clips/labels size mismatch");
    }
    if (trigger.empty()) throw std::domain_error("empty trigger");
    for (const auto& c : clips) {
        if (trigger.size() > c.samples.size()) {
            throw std::domain_error("trigger longer than clip");
        }
    }

    const std::size_t n = clips.size();
    std::vector<bool> selected(n, false);

    if (cfg.exact_count) {
        std::vector<std::size_t> eligible;
        for (std::size_t i = 0; i < n; ++i) {
            if (cfg.mode == PoisonMode::verbatim ||
                labels[i] == cfg.target_label) {
                eligible.push_back(i);
            }
        }
        if (*cfg.exact_count > eligible.size()) {
            throw std::domain_error("exact_count exceeds eligible entries");
        }
        // Seeded Fisher-Yates permutation; take the leading entries.
        NoiseSource rng = noise;
        for (std::size_t i = eligible.size(); i > 1; --i) {
            const std::size_t j =
                static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
            std::swap(eligible[i - 1], eligible[std::min(j, i - 1)]);
        }
        for (std::size_t k = 0; k < *cfg.exact_count; ++k) {
            selected[eligible[k]] = true;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            if (cfg.mode == PoisonMode::target_class_only &&
                labels[i] != cfg.target_label) {
                continue;
            }
            NoiseSource rng = noise.stream(noise.stream_id() + 1 + i);
            if (rng.uniform() < cfg.flip_prob) selected[i] = true;
        }
    }

    PoisonedDataset out;
    out.clips = clips;
    out.labels = labels;
    out.poison_mask.assign(n, false);
    std::size_t poisoned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!selected[i]) continue;
        out.poison_mask[i] = true;
        ++poisoned;

        NoiseSource rng = noise.stream(noise.stream_id() + 1 + n + i);
        if (out.labels[i] == cfg.target_label &&
            rng.uniform() < cfg.replace_prob) {
            out.labels[i] = cfg.dirty_label;
        }
        auto& samples = out.clips[i].samples;
        for (std::size_t s = 0; s < samples.size(); ++s) {
            samples[s] = std::clamp(
                samples[s] + cfg.trigger_alpha * trigger[s % trigger.size()],
                -1.0, 1.0);
        }
    }
    out.gamma = static_cast<double>(poisoned) / static_cast<double>(n);
    return out;
}

double compute_gamma(const PoisonedDataset& dataset) {
    if (dataset.poison_mask.empty()) {
        throw std::domain_error("dataset has no poison mask");
    }
    const auto poisoned = static_cast<double>(std::count(
        dataset.poison_mask.begin(), dataset.poison_mask.end(), true));
    return poisoned / static_cast<double>(dataset.poison_mask.size());
}

SynthDataset synth_dataset(int n_per_class, int n_classes, double clip_seconds,
                           std::uint64_t seed) {
    if (n_per_class < 2) throw std::domain_error("need n_per_class >= 2");
    if (n_classes < 2) throw std::domain_error("need n_classes >= 2");
    if (!(clip_seconds > 0.0)) throw std::domain_error("clip_seconds > 0");

    constexpr int kRate = 16000;
    constexpr double kNoiseFloor = 0.0316227766;  // -30 dB
    const std::size_t n_samples =
        static_cast<std::size_t>(std::lround(clip_seconds * kRate));
    const int n_test = std::max(1, static_cast<int>(std::lround(0.2 * n_per_class)));
    const int n_train = n_per_class - n_test;

    SynthDataset out;
    NoiseSource base(seed);
    for (int k = 0; k < n_classes; ++k) {
        const double f0 = 110.0 * std::pow(2.0, static_cast<double>(k) / 4.0);
        const double am_rate = 1.5 + 0.6 * k;
        for (int j = 0; j < n_per_class; ++j) {
            NoiseSource rng = base.stream(
                static_cast<std::uint64_t>(k) * 100000 + static_cast<std::uint64_t>(j));
            const double detune = 1.0 + 0.004 * rng.normal();
            const double phase0 = rng.uniform() * 2.0 * 3.14159265358979;
            const double am_phase = rng.uniform() * 2.0 * 3.14159265358979;

            AudioClip clip;
            clip.sample_rate = kRate;
            clip.samples.resize(n_samples);
            static constexpr double kHarmAmp[4] = {0.04, 0.02, 0.013, 0.008};
            for (std::size_t s = 0; s < n_samples; ++s) {
                const double t = static_cast<double>(s) / kRate;
                double tone = 0.0;
                for (int h = 0; h < 4; ++h) {
                    tone += kHarmAmp[h] *
                            std::sin(2.0 * 3.14159265358979 * f0 * detune *
                                         (h + 1) * t +
                                     phase0 * (h + 1));
                }
                const double am =
                    0.65 + 0.35 * std::sin(2.0 * 3.14159265358979 * am_rate * t +
                                           am_phase);
                const double noise_floor = kNoiseFloor * rng.normal();
                clip.samples[s] =
                    std::clamp(tone * am + noise_floor, -1.0, 1.0);
            }
            out.clips.push_back(std::move(clip));
            out.labels.push_back(k);
            const std::string split = j < n_train ? "train" : "test";
            out.splits.push_back(split);
            out.manifest.entries.push_back(ManifestEntry{
                "class" + std::to_string(k) + "/clip" + std::to_string(j) +
                    ".wav",
                k, split});
        }
    }
    return out;
}

LoadedDataset load_dataset(const std::filesystem::path& root,
                           const DatasetManifest& manifest) {
    LoadedDataset out;
    for (const auto& e : manifest.entries) {
        out.clips.push_back(read_wav(root / e.path));
        out.labels.push_back(e.label);
        out.splits.push_back(e.split);
    }
    return out;
}

DatasetManifest save_poisoned(const PoisonedDataset& dataset,
                              const std::vector<std::string>& splits,
                              const std::filesystem::path& root) {
    if (splits.size() != dataset.clips.size()) {
        throw std::domain_error("splits size mismatch");
    }
    std::filesystem::create_directories(root);
    DatasetManifest manifest;
    for (std::size_t i = 0; i < dataset.clips.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "clip_%05zu.wav", i);
        write_wav(root / name, dataset.clips[i]);
        manifest.entries.push_back(
            ManifestEntry{name, dataset.labels[i], splits[i]});
    }
    return manifest;
}

}  // namespace marketback
