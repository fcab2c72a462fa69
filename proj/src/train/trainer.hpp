#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "data/generators.hpp"
#include "nets/models.hpp"
#include "nets/rmsprop.hpp"

namespace tcdiv::train {

struct TrainConfig {
    int n_models = 2;
    double beta = 10.0;     // weight of the dependence term; 0 disables the critic
    int64_t batch_size = 256;
    int m_negatives = 64;   // negative tuples per estimate
    int epochs = 250;       // 500 for TC-MNIST
    int critic_ratio = 1;   // critic steps per model step; 5 for TC-MNIST
    double lr = 1e-5;
    bool conditional = true;
    uint64_t rng_seed = 0;
};

void check_config(const TrainConfig& cfg);
uint64_t train_config_hash(const TrainConfig& cfg);

// One line per epoch: training losses, the dependence estimate the model
// steps saw, and the three adaptation-protocol validation accuracies.
struct MetricsRecord {
    int epoch = 0;
    std::vector<double> model_loss;      // mean cross-entropy per model
    std::vector<double> model_accuracy;  // argmax train accuracy per model
    double tc_estimate = 0.0;            // mean over the epoch's model steps
    double val_best = 0.0;
    double val_ensemble = 0.0;
    double val_linear = 0.0;  // checkpoint-selection metric
    int skipped_critic_steps = 0;
};

std::string metrics_to_json(const MetricsRecord& r);
void write_metrics_jsonl(const std::filesystem::path& path,
                         std::span<const MetricsRecord> records);

struct TrainState {
    TrainConfig cfg;
    nets::ModelCollection collection;
    nets::Critic critic;
    nets::RmsProp model_opt;
    nets::RmsProp critic_opt;
    int64_t step = 0;  // batches consumed, drives plan seeds and alternation
    nets::Checkpoint best;
    std::vector<MetricsRecord> metrics;
    int skipped_critic_steps = 0;

    TrainState() = default;
    TrainState(const TrainState&) = delete;
    TrainState& operator=(const TrainState&) = delete;
    TrainState(TrainState&&) = default;
    TrainState& operator=(TrainState&&) = default;
};

TrainState make_train_state(const TrainConfig& cfg, int64_t input_dim);

// The negative-plan seed consumed by the step with this counter value.
uint64_t plan_seed_for_step(const TrainConfig& cfg, int64_t step);

// One ascent step on the critic against the dependence estimate, with the
// collection frozen. Returns the estimate before the update, or nothing
// when every label group is degenerate and the step is skipped.
std::optional<double> critic_step(TrainState& s, const ad::Tensor& x,
                                  const std::vector<int32_t>& y);

struct ModelStepResult {
    std::vector<double> loss;      // per-model batch cross-entropy
    std::vector<double> accuracy;  // per-model batch argmax accuracy
    std::optional<double> tc_estimate;
};

// One descent step on the collection against sum of cross-entropies plus
// beta times the dependence estimate, with the critic frozen. Degenerate
// batches (and beta = 0) train on the classification terms alone.
ModelStepResult model_step(TrainState& s, const ad::Tensor& x, const std::vector<int32_t>& y);

// The value model_step descends on, measured without updating anything.
double combined_objective(const TrainState& s, const ad::Tensor& x,
                          const std::vector<int32_t>& y, uint64_t plan_seed);

// The dependence estimate under the current critic, measured without
// updating anything.
double measure_tc(const TrainState& s, const ad::Tensor& x, const std::vector<int32_t>& y,
                  uint64_t plan_seed);

// Epochs of shuffled minibatches (partial trailing batches dropped),
// alternating critic_ratio critic steps with one model step when beta > 0;
// after each epoch the three protocols are scored on adapt_val and the
// checkpoint with the highest linear-protocol accuracy is kept (ties to the
// earliest epoch). epochs = 0 returns the initialized, validated state.
void run_training(TrainState& s, const data::ColoredDataset& train,
                  const data::ColoredDataset& adapt_train, const data::ColoredDataset& adapt_val);

// make_train_state followed by run_training.
TrainState train_collection(const data::ColoredDataset& train,
                            const data::ColoredDataset& adapt_train,
                            const data::ColoredDataset& adapt_val, const TrainConfig& cfg);

// Same loop with n_models = 1 and beta = 0: plain ERM on a single model.
TrainState train_erm_baseline(const data::ColoredDataset& train,
                              const data::ColoredDataset& adapt_train,
                              const data::ColoredDataset& adapt_val, TrainConfig cfg);

// Epoch index with the highest linear validation accuracy, earliest on ties.
int checkpoint_select(std::span<const MetricsRecord> records);

}  // namespace tcdiv::train
