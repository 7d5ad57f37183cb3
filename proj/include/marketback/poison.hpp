#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "marketback/audio.hpp"
#include "marketback/rng.hpp"

namespace marketback {

struct ManifestEntry {
    std::string path;
    int label = 0;
    std::string split;  // "train" or "test"
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;

    void validate(int n_classes) const;
    // JSON lines, one {"path","label","split"} record per line.
    void save(const std::filesystem::path& file) const;
    static DatasetManifest load(const std::filesystem::path& file);
};

enum class PoisonMode { verbatim, target_class_only };

struct PoisonConfig {
    int target_label = 3;   // l*
    int dirty_label = 0;    // l_dirty
    double replace_prob = 1.0;   // p
    double flip_prob = 0.0;
    double trigger_alpha = 0.1;
    PoisonMode mode = PoisonMode::verbatim;
    // When set, poisons exactly this many (eligible) entries, chosen as the
    // first indices of a seeded permutation, instead of Bernoulli coins.
    std::optional<std::size_t> exact_count;
    bool allow_equal_labels = false;

    void validate() const;
};

struct PoisonedDataset {
    std::vector<AudioClip> clips;
    std::vector<int> labels;
    std::vector<bool> poison_mask;
    double gamma = 0.0;
};

// Label flip (l* -> l_dirty with probability p) plus additive trigger
// blending clip + alpha * trigger, hard-clipped to [-1, 1]. Coin flips use
// per-index streams so results are order-independent.
PoisonedDataset apply_poison(const std::vector<AudioClip>& clips,
                             const std::vector<int>& labels,
                             const PoisonConfig& cfg,
                             std::span<const double> trigger,
                             const NoiseSource& noise);

double compute_gamma(const PoisonedDataset& dataset);

struct SynthDataset {
    std::vector<AudioClip> clips;
    std::vector<int> labels;
    std::vector<std::string> splits;  // "train" / "test" per clip
    DatasetManifest manifest;         // paths are synthetic, in-memory only
};

// Deterministic desk-scale corpus: class k is a harmonic stack at base
// frequency 110 * 2^{k/4} Hz with a class-specific AM rate over a -30 dB
// noise floor. 80/20 train/test split, stratified by class.
SynthDataset synth_dataset(int n_per_class, int n_classes = 10,
                           double clip_seconds = 1.0, std::uint64_t seed = 0);

struct LoadedDataset {
    std::vector<AudioClip> clips;
    std::vector<int> labels;
    std::vector<std::string> splits;
};

LoadedDataset load_dataset(const std::filesystem::path& root,
                           const DatasetManifest& manifest);

// Writes one WAV per entry under root and returns the matching manifest.
DatasetManifest save_poisoned(const PoisonedDataset& dataset,
                              const std::vector<std::string>& splits,
                              const std::filesystem::path& root);

}  // namespace marketback
