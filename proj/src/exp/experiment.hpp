#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "data/cache.hpp"
#include "data/generators.hpp"
#include "train/trainer.hpp"

namespace tcdiv::exp {

enum class Method { ConditionalTc, UnconditionalTc, Erm };

const char* method_name(Method m);
Method method_from_name(const std::string& name);

struct ExperimentConfig {
    data::Variant variant = data::Variant::CMnist;
    Method method = Method::ConditionalTc;
    std::vector<uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    train::TrainConfig train;        // rng_seed is overridden per seed
    data::GeneratorConfig generator; // rng_seed and shift are overridden per split
    std::filesystem::path mnist_dir;
    std::filesystem::path output_dir = "runs/default";
    bool overwrite = false;
    int workers = 1;
};

ExperimentConfig default_config();

// Applies one key=value setting. Setting `variant` also resets epochs and
// critic_ratio to that variant's defaults (250/1, or 500/5 for tcmnist), so
// variant should come before explicit epoch overrides.
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// Defaults, then the key=value file (# comments allowed), then overrides,
// then normalization: erm forces n_models=1 and beta=0, the method picks the
// conditional flag, and an unset mnist_dir falls back to $TCDIV_MNIST_DIR.
ExperimentConfig load_config(const std::optional<std::filesystem::path>& file,
                             std::span<const std::string> overrides);

void normalize_config(ExperimentConfig& cfg);
uint64_t experiment_config_hash(const ExperimentConfig& cfg);

// --- per-seed pipeline --------------------------------------------------

struct SeedDatasets {
    data::ColoredDataset train;
    data::ShiftedTestset digit_only;
    std::optional<data::ShiftedTestset> colour2_only;  // TC-MNIST only
};

// Generates (or loads back from cache_dir, bit-identically) every split the
// experiment needs for one seed.
SeedDatasets generate_datasets(const ExperimentConfig& cfg, uint64_t seed,
                               const data::RawDigits& train_raw,
                               const data::RawDigits& test_raw,
                               const std::optional<std::filesystem::path>& cache_dir);

struct SeedEntry {
    std::string protocol;   // best | ensemble | linear
    std::string condition;  // digit_only | colour2_only
    double accuracy = 0.0;  // fraction in [0, 1]
    double chosen_l2 = 0.0; // 0 for protocol_best
};

struct SeedReport {
    uint64_t seed = 0;
    bool ok = false;
    std::string error;
    std::vector<SeedEntry> entries;
    int best_epoch = -1;
    double best_val_accuracy = 0.0;
    double duration_seconds = 0.0;
};

// Generate, train, evaluate both applicable test conditions, and (when
// artifacts_dir is set) write checkpoint.bin, metrics.jsonl, and report.json.
// Failures are captured in the report, not thrown.
SeedReport run_seed(const ExperimentConfig& cfg, uint64_t seed,
                    const data::RawDigits& train_raw, const data::RawDigits& test_raw,
                    const std::optional<std::filesystem::path>& artifacts_dir,
                    const std::optional<std::filesystem::path>& cache_dir);

// Re-score an already-trained seed: load artifacts_dir/checkpoint.bin,
// regenerate the test datasets, run the three protocols, and rewrite
// report.json. Failures are captured in the report, not thrown.
SeedReport evaluate_seed(const ExperimentConfig& cfg, uint64_t seed,
                         const data::RawDigits& train_raw, const data::RawDigits& test_raw,
                         const std::filesystem::path& artifacts_dir,
                         const std::optional<std::filesystem::path>& cache_dir);

std::string seed_report_to_json(const SeedReport& r);
SeedReport read_seed_report(const std::filesystem::path& json_file);

// --- aggregation and emission --------------------------------------------

struct ResultRow {
    std::string method;
    int n_models = 0;
    std::string protocol;
    std::string condition;
    double mean = 0.0;  // accuracy percentage, e.g. 69.8
    double sd = 0.0;    // population standard deviation, percentage points
    int n_seeds = 0;    // seeds that completed
};

struct ResultsTable {
    std::vector<ResultRow> rows;
};

// Means and population standard deviations per (protocol, condition) over
// the successful seeds, plus one `failed` row per aborted seed.
ResultsTable aggregate_runs(std::span<const SeedReport> reports, const std::string& method,
                            int n_models);

std::string results_to_csv(const ResultsTable& t);

struct RunArtifacts {
    ResultsTable table;
    std::vector<SeedReport> seeds;
    bool any_failed = false;
};

// Writes results.csv and manifest.json (config echo, config hash, dataset
// cache hashes, per-seed status and durations) under cfg.output_dir.
void emit_reports(const RunArtifacts& run, const ExperimentConfig& cfg);

// Resolved MNIST file pair for one split, accepting .gz alternatives.
std::filesystem::path resolve_mnist_file(const std::filesystem::path& dir,
                                         const std::string& stem);

// Full experiment: load MNIST, refuse a non-empty output_dir without
// overwrite, run every seed (workers in parallel), aggregate, emit.
RunArtifacts run_experiment(const ExperimentConfig& cfg);

// Datasets only: populate the cache for every seed.
void generate_all_datasets(const ExperimentConfig& cfg);

// Re-aggregate an existing output directory's seed reports.
RunArtifacts report_from_artifacts(const ExperimentConfig& cfg);

// Train (or re-score) exactly one seed under cfg.output_dir/seed-<seed>,
// returning a single-seed table. Neither writes results.csv nor manifest.json;
// use `report` to aggregate finished seeds.
RunArtifacts train_one_seed(const ExperimentConfig& cfg, uint64_t seed);
RunArtifacts evaluate_one_seed(const ExperimentConfig& cfg, uint64_t seed);

}  // namespace tcdiv::exp
