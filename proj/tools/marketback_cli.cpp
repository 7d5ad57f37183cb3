#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "marketback/bayes.hpp"
#include "marketback/bo.hpp"
#include "marketback/diffusion.hpp"
#include "marketback/experiment.hpp"
#include "marketback/poison.hpp"
#include "marketback/pricing.hpp"
#include "marketback/victim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace marketback;

namespace {

// I/O failures exit with 2; everything else thrown is a validation error (1).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string iso_utc_now() {
    const std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

int worker_threads() {
    const char* env = std::getenv("MARKETBACK_THREADS");
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (env == nullptr || *env == '\0') return hw;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == nullptr || *end != '\0' || v < 1) {
        throw std::domain_error("MARKETBACK_THREADS must be a positive integer");
    }
    return static_cast<int>(std::min<long>(v, hw));
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f << text;
    if (!f) throw IoError("failed writing " + path.string());
}

void write_json_file(const fs::path& path, const json& j) {
    write_text(path, j.dump(2) + "\n");
}

json read_json_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    try {
        return json::parse(f);
    } catch (const json::parse_error& e) {
        throw std::domain_error(path.string() + ": " + e.what());
    }
}

// Per-stage provenance record; every subcommand writes one.
class RunManifestWriter {
public:
    RunManifestWriter(std::string subcommand, json inputs, std::uint64_t seed,
                      fs::path out_dir)
        : out_dir_(std::move(out_dir)) {
        std::error_code ec;
        fs::create_directories(out_dir_, ec);
        if (ec) throw IoError("cannot create " + out_dir_.string());
        doc_["schema_version"] = kSchemaVersion;
        doc_["tool_version"] = kToolVersion;
        doc_["subcommand"] = std::move(subcommand);
        doc_["config_hash"] = json_hash(inputs);
        doc_["inputs"] = std::move(inputs);
        doc_["seed"] = seed;
        doc_["threads"] = worker_threads();
        doc_["started_at"] = iso_utc_now();
        doc_["outputs"] = json::object();
    }

    const fs::path& out_dir() const { return out_dir_; }

    fs::path add_output(const std::string& key, const std::string& filename) {
        doc_["outputs"][key] = filename;
        return out_dir_ / filename;
    }

    void finish() {
        doc_["finished_at"] = iso_utc_now();
        write_json_file(out_dir_ / "run_manifest.json", doc_);
    }

private:
    fs::path out_dir_;
    json doc_;
};

DriftKind parse_drift(const std::string& name) {
    if (name == "vasicek") return DriftKind::vasicek;
    if (name == "hull_white") return DriftKind::hull_white;
    if (name == "longstaff_schwartz") return DriftKind::longstaff_schwartz;
    throw std::domain_error("unknown drift kind: " + name);
}

DatasetManifest load_manifest_checked(const fs::path& path) {
    try {
        return DatasetManifest::load(path);
    } catch (const std::domain_error&) {
        throw;
    } catch (const std::exception& e) {
        throw IoError(e.what());
    }
}

AudioClip read_wav_checked(const fs::path& path) {
    try {
        return read_wav(path);
    } catch (const std::exception& e) {
        throw IoError(e.what());
    }
}

LoadedDataset load_dataset_checked(const fs::path& root,
                                   const DatasetManifest& manifest) {
    try {
        return load_dataset(root, manifest);
    } catch (const std::exception& e) {
        throw IoError(e.what());
    }
}

std::vector<std::vector<double>> featurize(const std::vector<AudioClip>& clips) {
    const FeatureConfig fc;
    std::vector<std::vector<double>> out;
    out.reserve(clips.size());
    for (const auto& c : clips) out.push_back(extract_features(c, fc));
    return out;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows) {
    const auto nr = static_cast<Eigen::Index>(rows.size());
    const auto nc = nr > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
    Eigen::MatrixXd m(nr, nc);
    for (Eigen::Index r = 0; r < nr; ++r) {
        for (Eigen::Index c = 0; c < nc; ++c) {
            m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]
                          .get<double>();
        }
    }
    return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

Eigen::VectorXd vector_from_json(const json& arr) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v(i) = arr[static_cast<std::size_t>(i)].get<double>();
    }
    return v;
}

json model_to_json(const VictimModel& m) {
    return json{{"schema_version", kSchemaVersion}, {"n_classes", m.n_classes},
                {"w1", matrix_to_json(m.w1)},       {"b1", vector_to_json(m.b1)},
                {"w2", matrix_to_json(m.w2)},       {"b2", vector_to_json(m.b2)},
                {"feat_mean", vector_to_json(m.feat_mean)},
                {"feat_sd", vector_to_json(m.feat_sd)}};
}

VictimModel model_from_json(const json& j) {
    VictimModel m;
    m.n_classes = j.at("n_classes").get<int>();
    m.w1 = matrix_from_json(j.at("w1"));
    m.b1 = vector_from_json(j.at("b1"));
    m.w2 = matrix_from_json(j.at("w2"));
    m.b2 = vector_from_json(j.at("b2"));
    m.feat_mean = vector_from_json(j.at("feat_mean"));
    m.feat_sd = vector_from_json(j.at("feat_sd"));
    return m;
}

json eval_report_to_json(const EvalReport& r) {
    return json{{"schema_version", kSchemaVersion},
                {"ba", r.ba},
                {"asr", r.asr},
                {"clean_loss", r.clean_loss},
                {"backdoor_loss", r.backdoor_loss},
                {"gamma", r.gamma},
                {"target_label", r.target_label},
                {"seed", r.seed},
                {"n_clean_test", r.n_clean_test},
                {"n_triggered_test", r.n_triggered_test}};
}

std::vector<AudioClip> blend_trigger(const std::vector<AudioClip>& clips,
                                     std::span<const double> trigger,
                                     double alpha) {
    std::vector<AudioClip> out = clips;
    for (auto& c : out) {
        for (std::size_t s = 0; s < c.samples.size(); ++s) {
            c.samples[s] = std::clamp(
                c.samples[s] + alpha * trigger[s % trigger.size()], -1.0, 1.0);
        }
    }
    return out;
}

// ---------------------------------------------------------------- synth-data

int cmd_synth_data(int n_per_class, int n_classes, double clip_seconds,
                   std::uint64_t seed, const std::string& out) {
    RunManifestWriter rm("synth-data",
                         json{{"n_per_class", n_per_class},
                              {"n_classes", n_classes},
                              {"clip_seconds", clip_seconds}},
                         seed, out);
    const SynthDataset ds =
        synth_dataset(n_per_class, n_classes, clip_seconds, seed);
    for (std::size_t i = 0; i < ds.clips.size(); ++i) {
        const fs::path p = rm.out_dir() / ds.manifest.entries[i].path;
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
        if (ec) throw IoError("cannot create " + p.parent_path().string());
        write_wav(p, ds.clips[i]);
    }
    ds.manifest.save(rm.add_output("manifest", "manifest.jsonl"));
    rm.finish();
    std::cout << json{{"schema_version", kSchemaVersion},
                      {"n_clips", ds.clips.size()},
                      {"out_dir", out}}
                     .dump()
              << "\n";
    return 0;
}

// --------------------------------------------------------------- make-trigger

int cmd_make_trigger(const std::string& drift, int t_steps, double duration,
                     double poison_rate, double prior_mean, int clip_len,
                     std::uint64_t seed, const std::string& out) {
    RunManifestWriter rm("make-trigger",
                         json{{"drift_kind", drift},
                              {"t_steps", t_steps},
                              {"duration", duration},
                              {"poison_rate", poison_rate},
                              {"prior_mean", prior_mean},
                              {"clip_len", clip_len}},
                         seed, out);
    const TriggerSpec clap = synth_clap_trigger(seed, duration);
    const DiffusionSchedule sched = DiffusionSchedule::defaults(t_steps);
    BackdoorSamplerConfig sampler;
    sampler.poison_rate = poison_rate;
    sampler.prior_mean = prior_mean;
    sampler.drift_kind = parse_drift(drift);
    sampler.trigger_summary = clap.mean_abs_amplitude();
    NoiseSource rng(seed, /*stream_id=*/11);
    const std::vector<double> states =
        back_diffusion_sampling(sampler, sched, rng);
    const std::vector<double> wave =
        render_trigger(states, clap, static_cast<std::size_t>(clip_len));

    write_wav(rm.add_output("trigger_wav", "trigger.wav"),
              AudioClip{wave, 16000});
    write_json_file(rm.add_output("sidecar", "trigger.json"),
                    json{{"schema_version", kSchemaVersion},
                         {"drift_kind", drift},
                         {"schedule",
                          {{"alpha", sched.alpha},
                           {"beta", sched.beta},
                           {"sigma", sched.sigma}}},
                         {"seed", seed},
                         {"states", states}});
    std::ostringstream csv;
    csv << "step,state\n";
    for (std::size_t i = 0; i < states.size(); ++i) {
        csv << i << "," << states[i] << "\n";
    }
    write_text(rm.add_output("states_csv", "diffusion_states.csv"), csv.str());
    rm.finish();
    std::cout << json{{"schema_version", kSchemaVersion},
                      {"trigger_summary", sampler.trigger_summary},
                      {"n_states", states.size()},
                      {"out_dir", out}}
                     .dump()
              << "\n";
    return 0;
}

// -------------------------------------------------------------------- poison

int cmd_poison(const std::string& manifest_path, std::string root,
               const std::string& trigger_path, double alpha, double flip_prob,
               double replace_prob, int target_label, int dirty_label,
               const std::string& mode, int exact_count, std::uint64_t seed,
               const std::string& out) {
    RunManifestWriter rm("poison",
                         json{{"manifest", manifest_path},
                              {"trigger", trigger_path},
                              {"alpha", alpha},
                              {"flip_prob", flip_prob},
                              {"replace_prob", replace_prob},
                              {"target_label", target_label},
                              {"dirty_label", dirty_label},
                              {"mode", mode},
                              {"exact_count", exact_count}},
                         seed, out);
    if (root.empty()) root = fs::path(manifest_path).parent_path().string();
    const DatasetManifest manifest = load_manifest_checked(manifest_path);
    const LoadedDataset ds = load_dataset_checked(root, manifest);
    const AudioClip trigger = read_wav_checked(trigger_path);

    PoisonConfig cfg;
    cfg.target_label = target_label;
    cfg.dirty_label = dirty_label;
    cfg.replace_prob = replace_prob;
    cfg.flip_prob = flip_prob;
    cfg.trigger_alpha = alpha;
    cfg.allow_equal_labels = target_label == dirty_label;
    if (mode == "verbatim") {
        cfg.mode = PoisonMode::verbatim;
    } else if (mode == "target_class_only") {
        cfg.mode = PoisonMode::target_class_only;
    } else {
        throw std::domain_error("unknown poison mode: " + mode);
    }
    if (exact_count >= 0) {
        cfg.exact_count = static_cast<std::size_t>(exact_count);
    }

    // Only the train split is poisoned; test clips pass through untouched.
    std::vector<AudioClip> train_clips;
    std::vector<int> train_labels;
    std::vector<std::size_t> train_index;
    for (std::size_t i = 0; i < ds.clips.size(); ++i) {
        if (ds.splits[i] != "train") continue;
        train_clips.push_back(ds.clips[i]);
        train_labels.push_back(ds.labels[i]);
        train_index.push_back(i);
    }
    const PoisonedDataset poisoned_train =
        apply_poison(train_clips, train_labels, cfg, trigger.samples,
                     NoiseSource(seed, /*stream_id=*/21));

    PoisonedDataset full;
    full.clips = ds.clips;
    full.labels = ds.labels;
    full.poison_mask.assign(ds.clips.size(), false);
    for (std::size_t k = 0; k < train_index.size(); ++k) {
        full.clips[train_index[k]] = poisoned_train.clips[k];
        full.labels[train_index[k]] = poisoned_train.labels[k];
        full.poison_mask[train_index[k]] = poisoned_train.poison_mask[k];
    }
    full.gamma = poisoned_train.gamma;

    const DatasetManifest out_manifest =
        save_poisoned(full, ds.splits, rm.out_dir() / "data");
    out_manifest.save(rm.add_output("manifest", "manifest.jsonl"));
    rm.add_output("data_dir", "data");

    int flipped = 0;
    for (std::size_t k = 0; k < train_index.size(); ++k) {
        if (poisoned_train.labels[k] != train_labels[k]) ++flipped;
    }
    const json report{{"schema_version", kSchemaVersion},
                      {"gamma", full.gamma},
                      {"n_poisoned",
                       std::count(poisoned_train.poison_mask.begin(),
                                  poisoned_train.poison_mask.end(), true)},
                      {"n_flipped_labels", flipped},
                      {"n_train", train_clips.size()},
                      {"n_total", ds.clips.size()}};
    write_json_file(rm.add_output("report", "poison_report.json"), report);
    rm.finish();
    std::cout << report.dump() << "\n";
    return 0;
}

// --------------------------------------------------------------------- train

int cmd_train(const std::string& manifest_path, std::string root,
              int n_classes, int epochs, double lr, int batch_size, int folds,
              bool kfold, std::uint64_t seed, const std::string& out) {
    RunManifestWriter rm("train",
                         json{{"manifest", manifest_path},
                              {"n_classes", n_classes},
                              {"epochs", epochs},
                              {"lr", lr},
                              {"batch_size", batch_size},
                              {"folds", folds},
                              {"kfold", kfold}},
                         seed, out);
    if (root.empty()) root = fs::path(manifest_path).parent_path().string();
    const DatasetManifest manifest = load_manifest_checked(manifest_path);
    manifest.validate(n_classes);
    const LoadedDataset ds = load_dataset_checked(root, manifest);

    std::vector<AudioClip> train_clips;
    std::vector<int> train_labels;
    for (std::size_t i = 0; i < ds.clips.size(); ++i) {
        if (ds.splits[i] != "train") continue;
        train_clips.push_back(ds.clips[i]);
        train_labels.push_back(ds.labels[i]);
    }
    if (train_clips.empty()) throw std::domain_error("no train split entries");
    const auto features = featurize(train_clips);

    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.lr = lr;
    cfg.batch_size = batch_size;
    cfg.folds = folds;
    cfg.seed = seed;
    const TrainResult result =
        train_victim(features, train_labels, n_classes, cfg);

    write_json_file(rm.add_output("model", "model.json"),
                    model_to_json(result.model));
    std::ostringstream csv;
    csv << "epoch,loss\n";
    for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
        csv << e << "," << result.epoch_losses[e] << "\n";
    }
    write_text(rm.add_output("losses", "loss_curve.csv"), csv.str());

    json report{{"schema_version", kSchemaVersion},
                {"final_loss", result.epoch_losses.back()},
                {"n_train", train_clips.size()}};
    if (kfold) {
        const KfoldResult cv =
            kfold_cv(features, train_labels, n_classes, cfg, folds);
        report["kfold_mean_ba"] = cv.mean_ba;
        report["kfold_sd_ba"] = cv.sd_ba;
    }
    write_json_file(rm.add_output("report", "train_report.json"), report);
    rm.finish();
    std::cout << report.dump() << "\n";
    return 0;
}

// ---------------------------------------------------------------------- eval

int cmd_eval(const std::string& manifest_path, std::string root,
             const std::string& model_path, const std::string& trigger_path,
             double alpha, int target_label, std::uint64_t seed,
             const std::string& out) {
    RunManifestWriter rm("eval",
                         json{{"manifest", manifest_path},
                              {"model", model_path},
                              {"trigger", trigger_path},
                              {"alpha", alpha},
                              {"target_label", target_label}},
                         seed, out);
    if (root.empty()) root = fs::path(manifest_path).parent_path().string();
    const DatasetManifest manifest = load_manifest_checked(manifest_path);
    const LoadedDataset ds = load_dataset_checked(root, manifest);
    const VictimModel model = model_from_json(read_json_file(model_path));
    const AudioClip trigger = read_wav_checked(trigger_path);

    std::vector<AudioClip> test_clips;
    std::vector<int> test_labels;
    std::vector<AudioClip> triggered_clips;
    std::vector<int> triggered_labels;
    for (std::size_t i = 0; i < ds.clips.size(); ++i) {
        if (ds.splits[i] != "test") continue;
        test_clips.push_back(ds.clips[i]);
        test_labels.push_back(ds.labels[i]);
        if (ds.labels[i] == target_label) continue;
        triggered_clips.push_back(ds.clips[i]);
        triggered_labels.push_back(ds.labels[i]);
    }
    triggered_clips = blend_trigger(triggered_clips, trigger.samples, alpha);

    EvalReport report =
        evaluate(model, featurize(test_clips), test_labels,
                 featurize(triggered_clips), triggered_labels, target_label);
    report.seed = seed;
    const json doc = eval_report_to_json(report);
    write_json_file(rm.add_output("report", "eval_report.json"), doc);
    rm.finish();
    std::cout << doc.dump() << "\n";
    return 0;
}

// ---------------------------------------------------------------- attack-e2e

int cmd_attack_e2e(const std::string& config_path, std::uint64_t* seed_override,
                   const std::string& out_override) {
    ExperimentConfig cfg;
    if (!config_path.empty()) {
        cfg = ExperimentConfig::from_json(read_json_file(config_path));
    }
    if (seed_override != nullptr) cfg.seed = *seed_override;
    if (!out_override.empty()) cfg.out_dir = out_override;

    RunManifestWriter rm("attack-e2e", cfg.to_json(), cfg.seed, cfg.out_dir);
    const AttackOutcome outcome = attack_e2e(cfg);

    write_json_file(rm.add_output("config", "config.json"), cfg.to_json());
    const json report = outcome.report_json();
    write_json_file(rm.add_output("report", "report.json"), report);
    write_wav(rm.add_output("trigger_wav", "trigger.wav"),
              AudioClip{outcome.trigger_wave, 16000});

    std::ostringstream states_csv;
    states_csv << "step,state\n";
    for (std::size_t i = 0; i < outcome.diffusion_states.size(); ++i) {
        states_csv << i << "," << outcome.diffusion_states[i] << "\n";
    }
    write_text(rm.add_output("states_csv", "diffusion_states.csv"),
               states_csv.str());
    std::ostringstream loss_csv;
    loss_csv << "epoch,loss\n";
    for (std::size_t e = 0; e < outcome.epoch_losses.size(); ++e) {
        loss_csv << e << "," << outcome.epoch_losses[e] << "\n";
    }
    write_text(rm.add_output("losses", "loss_curve.csv"), loss_csv.str());
    rm.finish();
    std::cout << report.dump() << "\n";
    return 0;
}

// --------------------------------------------------------------------- price

void emit_price(RunManifestWriter& rm, const std::string& model,
                const json& inputs, double analytic,
                std::optional<double> monte_carlo,
                std::optional<double> std_error) {
    json doc{{"schema_version", kSchemaVersion},
             {"model", model},
             {"inputs", inputs},
             {"analytic", analytic},
             {"monte_carlo", nullptr},
             {"std_error", nullptr}};
    if (monte_carlo) doc["monte_carlo"] = *monte_carlo;
    if (std_error) doc["std_error"] = *std_error;
    write_json_file(rm.add_output("price", "price.json"), doc);
    rm.finish();
    std::cout << doc.dump() << "\n";
}

// Monte Carlo E[exp(-int r)] on exact-scheme Vasicek paths (trapezoid rule).
std::pair<double, double> vasicek_bond_mc(const ShortRateModelSpec& spec,
                                          double T, int n_paths,
                                          std::uint64_t seed) {
    const int n_steps = std::max(1, static_cast<int>(std::lround(T * 252.0)));
    const PathGrid grid{0.0, T / n_steps, n_steps};
    const DriftParams params{spec.kappa, spec.theta, spec.sigma};
    const auto paths =
        simulate_paths(DriftKind::vasicek, params, grid, spec.r0, n_paths,
                       NoiseSource(seed, 7000), Scheme::vasicek_exact);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (const auto& p : paths) {
        double integral = 0.0;
        for (std::size_t i = 1; i < p.values.size(); ++i) {
            integral += 0.5 * (p.values[i - 1] + p.values[i]) * grid.dt;
        }
        const double v = std::exp(-integral);
        sum += v;
        sum_sq += v * v;
    }
    const double mean = sum / n_paths;
    const double var = (sum_sq / n_paths - mean * mean) / (n_paths - 1);
    return {mean, std::sqrt(std::max(var, 0.0))};
}

// --------------------------------------------------------------------- infer

int cmd_infer(const std::string& drift, const std::string& obs_csv, int n_obs,
              double dt, double sigma_obs, int mcmc_steps, std::uint64_t seed,
              const std::string& out) {
    RunManifestWriter rm("infer",
                         json{{"drift_kind", drift},
                              {"obs_csv", obs_csv},
                              {"n_obs", n_obs},
                              {"dt", dt},
                              {"sigma_obs", sigma_obs},
                              {"mcmc_steps", mcmc_steps}},
                         seed, out);
    const DriftKind kind = parse_drift(drift);

    std::vector<double> obs;
    if (!obs_csv.empty()) {
        std::ifstream f(obs_csv);
        if (!f) throw IoError("cannot open " + obs_csv);
        double v = 0.0;
        while (f >> v) obs.push_back(v);
        if (obs.size() < 2) throw std::domain_error("need at least 2 observations");
    } else {
        // Demo data: a simulated path under known dynamics plus obs noise.
        const DriftParams truth{1.0, 0.3, 0.2};
        const PathGrid grid{0.0, dt, n_obs};
        const auto path =
            simulate_paths(kind, truth, grid, 0.0, 1,
                           NoiseSource(seed, 5000), Scheme::euler)
                .front();
        NoiseSource obs_rng(seed, 5001);
        for (double x : path.values) obs.push_back(x + sigma_obs * obs_rng.normal());
    }

    const PathGrid grid{0.0, dt, static_cast<int>(obs.size()) - 1};
    const std::vector<ParamPrior> priors = {ParamPrior::normal(1.0, 0.5),
                                            ParamPrior::normal(0.3, 0.2),
                                            ParamPrior::uniform(0.02, 2.0)};
    McmcConfig mcmc;
    mcmc.n_steps = mcmc_steps;
    mcmc.proposal_scales = {0.15, 0.05, 0.03};
    const PosteriorResult post =
        infer_drift_posterior(obs, grid, kind, priors, {sigma_obs}, mcmc,
                              NoiseSource(seed, 31));

    const char* names[3] = {"theta", "mu", "sigma"};
    json params = json::array();
    for (std::size_t p = 0; p < post.summaries.size(); ++p) {
        const auto& s = post.summaries[p];
        params.push_back(json{{"name", names[p]},
                              {"posterior_mean", s.mean},
                              {"posterior_sd", s.sd},
                              {"q05", s.q05},
                              {"q95", s.q95},
                              {"ess", s.ess}});
    }
    const json doc{{"schema_version", kSchemaVersion},
                   {"params", params},
                   {"acceptance_rate", post.acceptance_rate},
                   {"n_obs", obs.size()},
                   {"mcmc_steps", mcmc_steps}};
    write_json_file(rm.add_output("posterior", "posterior.json"), doc);

    std::ostringstream csv;
    csv << "theta,mu,sigma\n";
    for (const auto& draw : post.trace.draws) {
        csv << draw[0] << "," << draw[1] << "," << draw[2] << "\n";
    }
    write_text(rm.add_output("draws", "posterior_draws.csv"), csv.str());
    rm.finish();
    std::cout << doc.dump() << "\n";
    return 0;
}

// ------------------------------------------------------------------ optimize

struct ParamSpec {
    std::string name;
    double lo = 0.0;
    double hi = 0.0;
};

ParamSpec parse_param(const std::string& text) {
    const auto c1 = text.find(':');
    const auto c2 = text.find(':', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
        throw std::domain_error("--param expects name:lo:hi, got " + text);
    }
    ParamSpec p;
    p.name = text.substr(0, c1);
    try {
        p.lo = std::stod(text.substr(c1 + 1, c2 - c1 - 1));
        p.hi = std::stod(text.substr(c2 + 1));
    } catch (const std::exception&) {
        throw std::domain_error("--param expects numeric bounds in " + text);
    }
    return p;
}

void apply_param(ExperimentConfig& cfg, const std::string& name, double v) {
    if (name == "trigger_alpha") {
        cfg.poison.trigger_alpha = v;
    } else if (name == "flip_prob") {
        cfg.poison.flip_prob = v;
    } else if (name == "clap_duration") {
        cfg.trigger.clap_duration = v;
    } else if (name == "lr") {
        cfg.train.lr = v;
    } else if (name == "prior_mean") {
        cfg.trigger.prior_mean = v;
    } else {
        throw std::domain_error("unknown attack parameter: " + name);
    }
}

int cmd_optimize(const std::vector<std::string>& param_args,
                 const std::string& acq, double beta, int k_init, int n_iter,
                 const std::string& objective_name,
                 const std::string& config_path, std::uint64_t seed,
                 const std::string& out) {
    RunManifestWriter rm("optimize",
                         json{{"params", param_args},
                              {"acq", acq},
                              {"beta", beta},
                              {"init", k_init},
                              {"iters", n_iter},
                              {"objective", objective_name},
                              {"config", config_path}},
                         seed, out);
    std::vector<ParamSpec> params;
    Bounds bounds;
    for (const auto& text : param_args) {
        params.push_back(parse_param(text));
        bounds.box.emplace_back(params.back().lo, params.back().hi);
    }
    AcqKind acq_kind;
    if (acq == "ei") {
        acq_kind = AcqKind::ei;
    } else if (acq == "lcb") {
        acq_kind = AcqKind::lcb;
    } else {
        throw std::domain_error("--acq must be ei or lcb");
    }

    ExperimentConfig base;
    if (!config_path.empty()) {
        base = ExperimentConfig::from_json(read_json_file(config_path));
    } else {
        // Reduced corpus so each objective evaluation stays cheap.
        base.data.n_per_class = 15;
        base.train.epochs = 5;
    }

    std::function<double(std::span<const double>)> objective;
    if (objective_name == "quadratic") {
        objective = [](std::span<const double> x) {
            double s = 0.0;
            for (double v : x) s += (v - 0.3) * (v - 0.3);
            return s;
        };
    } else if (objective_name == "attack") {
        objective = [&params, &base](std::span<const double> x) {
            ExperimentConfig cfg = base;
            for (std::size_t i = 0; i < params.size(); ++i) {
                apply_param(cfg, params[i].name, x[i]);
            }
            const AttackOutcome o = attack_e2e(cfg);
            return (1.0 - o.report.asr) +
                   std::max(0.0, o.baseline_ba - o.report.ba);
        };
    } else {
        throw std::domain_error("--objective must be quadratic or attack");
    }

    const BoTrace trace = bo_run(objective, bounds, k_init, n_iter, acq_kind,
                                 beta, NoiseSource(seed, 0));

    json doc{{"schema_version", kSchemaVersion},
             {"acq", acq},
             {"points", trace.points},
             {"values", trace.values},
             {"penalized", trace.penalized},
             {"incumbent_values", trace.incumbent_values},
             {"best_point", trace.best_point()},
             {"best_value", trace.best_value()}};
    json names = json::array();
    for (const auto& p : params) names.push_back(p.name);
    doc["param_names"] = names;
    write_json_file(rm.add_output("trace", "bo_trace.json"), doc);

    std::ostringstream csv;
    csv << "iteration,incumbent_value\n";
    for (std::size_t i = 0; i < trace.incumbent_values.size(); ++i) {
        csv << i << "," << trace.incumbent_values[i] << "\n";
    }
    write_text(rm.add_output("incumbent", "incumbent.csv"), csv.str());
    rm.finish();
    std::cout << doc.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MarketBack: diffusion-trigger audio backdoor laboratory"};
    app.require_subcommand(1);

    // synth-data
    auto* synth = app.add_subcommand("synth-data", "Generate the synthetic corpus");
    int sd_n_per_class = 25;
    int sd_n_classes = 10;
    double sd_clip_seconds = 1.0;
    std::uint64_t sd_seed = 42;
    std::string sd_out = "out";
    synth->add_option("--n-per-class", sd_n_per_class);
    synth->add_option("--n-classes", sd_n_classes);
    synth->add_option("--clip-seconds", sd_clip_seconds);
    synth->add_option("--seed", sd_seed);
    synth->add_option("--out", sd_out);

    // make-trigger
    auto* mk = app.add_subcommand("make-trigger", "Diffusion-enveloped trigger");
    std::string mk_drift = "vasicek";
    int mk_t_steps = 50;
    double mk_duration = 0.01;
    double mk_poison_rate = 1.0;
    double mk_prior_mean = 0.0;
    int mk_clip_len = 16000;
    std::uint64_t mk_seed = 42;
    std::string mk_out = "out";
    mk->add_option("--drift", mk_drift);
    mk->add_option("--t-steps", mk_t_steps);
    mk->add_option("--duration", mk_duration);
    mk->add_option("--poison-rate", mk_poison_rate);
    mk->add_option("--prior-mean", mk_prior_mean);
    mk->add_option("--clip-len", mk_clip_len);
    mk->add_option("--seed", mk_seed);
    mk->add_option("--out", mk_out);

    // poison
    auto* po = app.add_subcommand("poison", "Poison a dataset's train split");
    std::string po_manifest;
    std::string po_root;
    std::string po_trigger;
    double po_alpha = 0.1;
    double po_flip_prob = 0.0;
    double po_replace_prob = 1.0;
    int po_target_label = 3;
    int po_dirty_label = 0;
    std::string po_mode = "verbatim";
    int po_exact_count = -1;
    std::uint64_t po_seed = 42;
    std::string po_out = "out";
    po->add_option("--manifest", po_manifest)->required();
    po->add_option("--root", po_root);
    po->add_option("--trigger", po_trigger)->required();
    po->add_option("--alpha", po_alpha);
    po->add_option("--flip-prob", po_flip_prob);
    po->add_option("--replace-prob", po_replace_prob);
    po->add_option("--target-label", po_target_label);
    po->add_option("--dirty-label", po_dirty_label);
    po->add_option("--mode", po_mode);
    po->add_option("--exact-count", po_exact_count);
    po->add_option("--seed", po_seed);
    po->add_option("--out", po_out);

    // train
    auto* tr = app.add_subcommand("train", "Train the victim classifier");
    std::string tr_manifest;
    std::string tr_root;
    int tr_n_classes = 10;
    int tr_epochs = 15;
    double tr_lr = 1e-3;
    int tr_batch = 32;
    int tr_folds = 5;
    bool tr_kfold = false;
    std::uint64_t tr_seed = 42;
    std::string tr_out = "out";
    tr->add_option("--manifest", tr_manifest)->required();
    tr->add_option("--root", tr_root);
    tr->add_option("--n-classes", tr_n_classes);
    tr->add_option("--epochs", tr_epochs);
    tr->add_option("--lr", tr_lr);
    tr->add_option("--batch-size", tr_batch);
    tr->add_option("--folds", tr_folds);
    tr->add_flag("--kfold", tr_kfold);
    tr->add_option("--seed", tr_seed);
    tr->add_option("--out", tr_out);

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate BA/ASR on the test split");
    std::string ev_manifest;
    std::string ev_root;
    std::string ev_model;
    std::string ev_trigger;
    double ev_alpha = 0.1;
    int ev_target_label = 3;
    std::uint64_t ev_seed = 42;
    std::string ev_out = "out";
    ev->add_option("--manifest", ev_manifest)->required();
    ev->add_option("--root", ev_root);
    ev->add_option("--model", ev_model)->required();
    ev->add_option("--trigger", ev_trigger)->required();
    ev->add_option("--alpha", ev_alpha);
    ev->add_option("--target-label", ev_target_label);
    ev->add_option("--seed", ev_seed);
    ev->add_option("--out", ev_out);

    // attack-e2e
    auto* e2e = app.add_subcommand("attack-e2e", "Full attack pipeline");
    std::string e2e_config;
    std::uint64_t e2e_seed = 0;
    std::string e2e_out;
    e2e->add_option("--config", e2e_config);
    auto* e2e_seed_opt = e2e->add_option("--seed", e2e_seed);
    e2e->add_option("--out", e2e_out);

    // price
    auto* price = app.add_subcommand("price", "Closed-form pricing oracles");
    price->require_subcommand(1);
    std::string pr_out = "out";
    std::uint64_t pr_seed = 42;
    int pr_mc_paths = 0;

    auto* vb = price->add_subcommand("vasicek-bond", "Vasicek zero-coupon bond");
    ShortRateModelSpec vb_spec;
    double vb_t = 0.0;
    double vb_T = 0.0;
    vb->add_option("--kappa", vb_spec.kappa)->required();
    vb->add_option("--theta", vb_spec.theta)->required();
    vb->add_option("--sigma", vb_spec.sigma)->required();
    vb->add_option("--r0", vb_spec.r0)->required();
    vb->add_option("--T", vb_T)->required();
    vb->add_option("--t", vb_t);
    vb->add_option("--mc-paths", pr_mc_paths);
    vb->add_option("--seed", pr_seed);
    vb->add_option("--out", pr_out);

    auto* vo = price->add_subcommand("vasicek-option", "Vasicek bond option");
    ShortRateModelSpec vo_spec;
    double vo_T = 0.0;
    double vo_S = 0.0;
    double vo_K = 0.0;
    std::string vo_kind = "call";
    vo->add_option("--kappa", vo_spec.kappa)->required();
    vo->add_option("--theta", vo_spec.theta)->required();
    vo->add_option("--sigma", vo_spec.sigma)->required();
    vo->add_option("--r0", vo_spec.r0)->required();
    vo->add_option("--T", vo_T)->required();
    vo->add_option("--S", vo_S)->required();
    vo->add_option("--K", vo_K)->required();
    vo->add_option("--kind", vo_kind);
    vo->add_option("--out", pr_out);

    auto* hb = price->add_subcommand("hull-white-bond", "Hull-White bond");
    HullWhiteSpec hb_spec;
    double hb_flat_rate = 0.0;
    double hb_t = 0.0;
    double hb_T = 0.0;
    double hb_x = 0.0;
    hb->add_option("--a", hb_spec.a)->required();
    hb->add_option("--sigma", hb_spec.sigma)->required();
    hb->add_option("--flat-rate", hb_flat_rate)->required();
    hb->add_option("--T", hb_T)->required();
    hb->add_option("--t", hb_t);
    hb->add_option("--x", hb_x);
    hb->add_option("--out", pr_out);

    auto* ap = price->add_subcommand("american-put", "Longstaff-Schwartz put");
    AmericanPutSpec ap_spec;
    int ap_paths = 20000;
    ap->add_option("--spot", ap_spec.spot)->required();
    ap->add_option("--strike", ap_spec.strike)->required();
    ap->add_option("--rate", ap_spec.rate)->required();
    ap->add_option("--vol", ap_spec.vol)->required();
    ap->add_option("--T", ap_spec.maturity)->required();
    ap->add_option("--dates", ap_spec.exercise_dates)->required();
    ap->add_option("--paths", ap_paths);
    ap->add_option("--seed", pr_seed);
    ap->add_option("--out", pr_out);

    // infer
    auto* in = app.add_subcommand("infer", "Drift-parameter posterior");
    std::string in_drift = "vasicek";
    std::string in_obs;
    int in_n_obs = 200;
    double in_dt = 0.1;
    double in_sigma_obs = 0.1;
    int in_steps = 20000;
    std::uint64_t in_seed = 42;
    std::string in_out = "out";
    in->add_option("--drift", in_drift);
    in->add_option("--obs-csv", in_obs);
    in->add_option("--n-obs", in_n_obs);
    in->add_option("--dt", in_dt);
    in->add_option("--sigma-obs", in_sigma_obs);
    in->add_option("--steps", in_steps);
    in->add_option("--seed", in_seed);
    in->add_option("--out", in_out);

    // optimize
    auto* opt = app.add_subcommand("optimize", "Bayesian attack tuning");
    std::vector<std::string> opt_params;
    std::string opt_acq = "ei";
    double opt_beta = 2.0;
    int opt_init = 4;
    int opt_iters = 8;
    std::string opt_objective = "quadratic";
    std::string opt_config;
    std::uint64_t opt_seed = 42;
    std::string opt_out = "out";
    opt->add_option("--param", opt_params)->required();
    opt->add_option("--acq", opt_acq);
    opt->add_option("--beta", opt_beta);
    opt->add_option("--init", opt_init);
    opt->add_option("--iters", opt_iters);
    opt->add_option("--objective", opt_objective);
    opt->add_option("--config", opt_config);
    opt->add_option("--seed", opt_seed);
    opt->add_option("--out", opt_out);

    try {
        app.parse(argc, argv);

        if (*synth) {
            return cmd_synth_data(sd_n_per_class, sd_n_classes, sd_clip_seconds,
                                  sd_seed, sd_out);
        }
        if (*mk) {
            return cmd_make_trigger(mk_drift, mk_t_steps, mk_duration,
                                    mk_poison_rate, mk_prior_mean, mk_clip_len,
                                    mk_seed, mk_out);
        }
        if (*po) {
            return cmd_poison(po_manifest, po_root, po_trigger, po_alpha,
                              po_flip_prob, po_replace_prob, po_target_label,
                              po_dirty_label, po_mode, po_exact_count, po_seed,
                              po_out);
        }
        if (*tr) {
            return cmd_train(tr_manifest, tr_root, tr_n_classes, tr_epochs,
                             tr_lr, tr_batch, tr_folds, tr_kfold, tr_seed,
                             tr_out);
        }
        if (*ev) {
            return cmd_eval(ev_manifest, ev_root, ev_model, ev_trigger,
                            ev_alpha, ev_target_label, ev_seed, ev_out);
        }
        if (*e2e) {
            return cmd_attack_e2e(e2e_config,
                                  e2e_seed_opt->count() > 0 ? &e2e_seed : nullptr,
                                  e2e_out);
        }
        if (*price) {
            if (*vb) {
                RunManifestWriter rm("price",
                                     json{{"model", "vasicek-bond"},
                                          {"kappa", vb_spec.kappa},
                                          {"theta", vb_spec.theta},
                                          {"sigma", vb_spec.sigma},
                                          {"r0", vb_spec.r0},
                                          {"t", vb_t},
                                          {"T", vb_T},
                                          {"mc_paths", pr_mc_paths}},
                                     pr_seed, pr_out);
                const double analytic =
                    vasicek_bond_price(vb_spec, vb_t, vb_T, vb_spec.r0);
                std::optional<double> mc;
                std::optional<double> se;
                if (pr_mc_paths > 0) {
                    if (vb_t != 0.0) {
                        throw std::domain_error(
                            "--mc-paths requires valuation at t = 0");
                    }
                    const auto [mean, sd] =
                        vasicek_bond_mc(vb_spec, vb_T, pr_mc_paths, pr_seed);
                    mc = mean;
                    se = sd / std::sqrt(static_cast<double>(pr_mc_paths));
                }
                emit_price(rm, "vasicek-bond",
                           json{{"kappa", vb_spec.kappa},
                                {"theta", vb_spec.theta},
                                {"sigma", vb_spec.sigma},
                                {"r0", vb_spec.r0},
                                {"t", vb_t},
                                {"T", vb_T}},
                           analytic, mc, se);
                return 0;
            }
            if (*vo) {
                RunManifestWriter rm("price",
                                     json{{"model", "vasicek-option"},
                                          {"T", vo_T},
                                          {"S", vo_S},
                                          {"K", vo_K},
                                          {"kind", vo_kind}},
                                     pr_seed, pr_out);
                OptionSpec spec;
                spec.strike = vo_K;
                spec.option_maturity = vo_T;
                spec.bond_maturity = vo_S;
                if (vo_kind == "call") {
                    spec.kind = OptionKind::call;
                } else if (vo_kind == "put") {
                    spec.kind = OptionKind::put;
                } else {
                    throw std::domain_error("--kind must be call or put");
                }
                const double analytic =
                    vasicek_option_price(vo_spec, vo_spec.r0, spec);
                emit_price(rm, "vasicek-option",
                           json{{"kappa", vo_spec.kappa},
                                {"theta", vo_spec.theta},
                                {"sigma", vo_spec.sigma},
                                {"r0", vo_spec.r0},
                                {"T", vo_T},
                                {"S", vo_S},
                                {"K", vo_K},
                                {"kind", vo_kind}},
                           analytic, std::nullopt, std::nullopt);
                return 0;
            }
            if (*hb) {
                RunManifestWriter rm("price",
                                     json{{"model", "hull-white-bond"},
                                          {"a", hb_spec.a},
                                          {"sigma", hb_spec.sigma},
                                          {"flat_rate", hb_flat_rate},
                                          {"t", hb_t},
                                          {"T", hb_T},
                                          {"x", hb_x}},
                                     pr_seed, pr_out);
                const DiscountCurve curve =
                    DiscountCurve::flat(hb_flat_rate, std::max(hb_T, 1.0) + 1.0);
                const double analytic =
                    hull_white_bond_price(hb_spec, curve, hb_t, hb_T, hb_x);
                emit_price(rm, "hull-white-bond",
                           json{{"a", hb_spec.a},
                                {"sigma", hb_spec.sigma},
                                {"flat_rate", hb_flat_rate},
                                {"t", hb_t},
                                {"T", hb_T},
                                {"x", hb_x}},
                           analytic, std::nullopt, std::nullopt);
                return 0;
            }
            if (*ap) {
                RunManifestWriter rm("price",
                                     json{{"model", "american-put"},
                                          {"spot", ap_spec.spot},
                                          {"strike", ap_spec.strike},
                                          {"rate", ap_spec.rate},
                                          {"vol", ap_spec.vol},
                                          {"T", ap_spec.maturity},
                                          {"dates", ap_spec.exercise_dates},
                                          {"paths", ap_paths}},
                                     pr_seed, pr_out);
                const AmericanPutResult res = ls_american_put(
                    ap_spec, ap_paths, NoiseSource(pr_seed, 9000));
                emit_price(rm, "american-put",
                           json{{"spot", ap_spec.spot},
                                {"strike", ap_spec.strike},
                                {"rate", ap_spec.rate},
                                {"vol", ap_spec.vol},
                                {"T", ap_spec.maturity},
                                {"dates", ap_spec.exercise_dates},
                                {"paths", ap_paths},
                                {"european", res.european_price}},
                           res.price, std::nullopt, res.std_error);
                return 0;
            }
        }
        if (*in) {
            return cmd_infer(in_drift, in_obs, in_n_obs, in_dt, in_sigma_obs,
                             in_steps, in_seed, in_out);
        }
        if (*opt) {
            return cmd_optimize(opt_params, opt_acq, opt_beta, opt_init,
                                opt_iters, opt_objective, opt_config, opt_seed,
                                opt_out);
        }
        return 0;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::RequiredError& e) {
        const std::string what = e.what();
        if (what.find("subcommand") != std::string::npos) {
            std::cerr << "error: unknown or missing subcommand\n";
            std::cerr << app.help() << "\n";
        } else {
            std::cerr << "error: missing required flag: " << what << "\n";
        }
        return 1;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        std::cerr << app.help() << "\n";
        return 1;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
