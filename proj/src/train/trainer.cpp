#include "train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "eval/protocols.hpp"
#include "tc/estimators.hpp"
#include "util/error.hpp"
#include "util/hash.hpp"
#include "util/rng.hpp"

namespace tcdiv::train {
namespace {

constexpr uint64_t kCriticStream = 0x637269746963;  // "critic"
constexpr uint64_t kShuffleStream = 0x73687566;     // "shuf"
constexpr uint64_t kPlanStream = 0x706c616e;        // "plan"

struct Batch {
    ad::Tensor x;
    std::vector<int32_t> y;
};

Batch slice_batch(const data::ColoredDataset& ds, std::span<const int64_t> rows) {
    int64_t k = static_cast<int64_t>(rows.size());
    int64_t d = ds.input_dim();
    Batch b;
    b.x = ad::Tensor({k, d});
    b.y.reserve(static_cast<size_t>(k));
    for (int64_t i = 0; i < k; ++i) {
        int64_t r = rows[static_cast<size_t>(i)];
        const double* src = ds.inputs.data() + r * d;
        std::copy(src, src + d, b.x.data() + i * d);
        b.y.push_back(ds.labels[static_cast<size_t>(r)]);
    }
    return b;
}

bool has_usable_group(const std::vector<int32_t>& y) {
    int zeros = 0, ones = 0;
    for (int32_t v : y) (v == 0 ? zeros : ones)++;
    return zeros >= 2 || ones >= 2;
}

// Representations of the whole batch under the frozen collection, as plain
// tensors for the critic update.
tc::EstimatorBatch frozen_reps(const nets::ModelCollection& c, const ad::Tensor& x,
                               const std::vector<int32_t>& y) {
    tc::EstimatorBatch out;
    out.labels = y;
    ad::Tape t;
    ad::NodeId xn = t.constant(x);
    for (const nets::ModelPair& m : c.models) {
        nets::BoundRep rep = nets::bind_frozen(t, m.rep);
        out.reps.push_back(t.value(nets::rep_forward(t, rep, xn)));
    }
    return out;
}

// Dependence estimate node over trainable-or-frozen representation nodes,
// under a frozen critic.
ad::NodeId estimate_node(ad::Tape& t, const TrainState& s, std::span<const ad::NodeId> reps,
                         const std::vector<int32_t>& y, uint64_t plan_seed) {
    nets::BoundCritic critic = nets::bind_frozen(t, s.critic);
    tc::Scorer scorer = tc::make_critic_scorer(critic);
    if (s.cfg.conditional)
        return tc::conditional_tc_nce_estimate(t, scorer, reps, y, s.cfg.m_negatives, plan_seed);
    tc::PermutationPlan plan = tc::make_permutation_plan(
        static_cast<int64_t>(y.size()), static_cast<int>(reps.size()), s.cfg.m_negatives,
        plan_seed);
    return tc::tc_nce_estimate(t, scorer, reps, plan);
}

double mean(std::span<const double> v) {
    if (v.empty()) return 0.0;
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

struct EpochValidation {
    double best = 0.0, ensemble = 0.0, linear = 0.0;
};

EpochValidation validate(const nets::ModelCollection& c, const data::ColoredDataset& adapt_train,
                         const data::ColoredDataset& adapt_val) {
    eval::FrozenOutputs tr = eval::compute_frozen_outputs(c, adapt_train);
    eval::FrozenOutputs va = eval::compute_frozen_outputs(c, adapt_val);
    EpochValidation out;
    for (int j = 0; j < va.n(); ++j)
        out.best = std::max(out.best, eval::argmax_accuracy(va.probs[static_cast<size_t>(j)],
                                                            va.labels));
    eval::LogRegModel ens = eval::fit_logreg_grid(eval::ensemble_features(tr), tr.labels,
                                                  eval::ensemble_features(va), va.labels);
    out.ensemble = eval::logreg_accuracy(ens, eval::ensemble_features(va), va.labels);
    eval::LogRegModel lin = eval::fit_logreg_grid(eval::linear_features(tr), tr.labels,
                                                  eval::linear_features(va), va.labels);
    out.linear = eval::logreg_accuracy(lin, eval::linear_features(va), va.labels);
    return out;
}

void check_datasets(const data::ColoredDataset& train, const data::ColoredDataset& adapt_train,
                    const data::ColoredDataset& adapt_val, const TrainConfig& cfg) {
    if (train.size() == 0 || adapt_train.size() == 0 || adapt_val.size() == 0)
        throw InvalidArgument("train: datasets must be nonempty");
    if (adapt_train.input_dim() != train.input_dim() || adapt_val.input_dim() != train.input_dim())
        throw InvalidArgument("train: dataset input widths disagree");
    if (train.size() < cfg.batch_size)
        throw InvalidArgument("train: training set smaller than one batch (" +
                              std::to_string(train.size()) + " < " +
                              std::to_string(cfg.batch_size) + ")");
}

}  // namespace

void check_config(const TrainConfig& cfg) {
    if (cfg.n_models < 1) throw InvalidArgument("TrainConfig: n_models must be >= 1");
    if (!(cfg.beta >= 0.0) || !std::isfinite(cfg.beta))
        throw InvalidArgument("TrainConfig: beta must be finite and >= 0");
    if (cfg.batch_size < 2) throw InvalidArgument("TrainConfig: batch_size must be >= 2");
    if (cfg.m_negatives < 1) throw InvalidArgument("TrainConfig: m_negatives must be >= 1");
    if (cfg.epochs < 0) throw InvalidArgument("TrainConfig: epochs must be >= 0");
    if (cfg.critic_ratio < 1) throw InvalidArgument("TrainConfig: critic_ratio must be >= 1");
    if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr))
        throw InvalidArgument("TrainConfig: lr must be finite and positive");
}

uint64_t train_config_hash(const TrainConfig& cfg) {
    uint64_t h = fnv1a("train-config-v1");
    auto mix_int = [&h](uint64_t v) { h = fnv1a_bytes(&v, sizeof(v), h); };
    auto mix_real = [&h](double v) { h = fnv1a_bytes(&v, sizeof(v), h); };
    mix_int(static_cast<uint64_t>(cfg.n_models));
    mix_real(cfg.beta);
    mix_int(static_cast<uint64_t>(cfg.batch_size));
    mix_int(static_cast<uint64_t>(cfg.m_negatives));
    mix_int(static_cast<uint64_t>(cfg.epochs));
    mix_int(static_cast<uint64_t>(cfg.critic_ratio));
    mix_real(cfg.lr);
    mix_int(cfg.conditional ? 1 : 0);
    mix_int(cfg.rng_seed);
    return h;
}

std::string metrics_to_json(const MetricsRecord& r) {
    nlohmann::json j;
    j["epoch"] = r.epoch;
    j["model_loss"] = r.model_loss;
    j["model_accuracy"] = r.model_accuracy;
    j["tc_estimate"] = r.tc_estimate;
    j["val_best"] = r.val_best;
    j["val_ensemble"] = r.val_ensemble;
    j["val_linear"] = r.val_linear;
    j["skipped_critic_steps"] = r.skipped_critic_steps;
    return j.dump();
}

void write_metrics_jsonl(const std::filesystem::path& path,
                         std::span<const MetricsRecord> records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    for (const MetricsRecord& r : records) out << metrics_to_json(r) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

TrainState make_train_state(const TrainConfig& cfg, int64_t input_dim) {
    check_config(cfg);
    if (input_dim < 1) throw InvalidArgument("make_train_state: input_dim must be >= 1");
    TrainState s;
    s.cfg = cfg;
    s.collection = nets::init_collection(cfg.n_models, input_dim, cfg.rng_seed);
    s.critic = nets::init_critic(static_cast<int64_t>(cfg.n_models) * nets::kReprDim,
                                 mix_seed(cfg.rng_seed, kCriticStream));
    s.model_opt = nets::RmsProp(cfg.lr);
    s.critic_opt = nets::RmsProp(cfg.lr);
    s.best.config_hash = train_config_hash(cfg);
    return s;
}

uint64_t plan_seed_for_step(const TrainConfig& cfg, int64_t step) {
    return mix_seed(cfg.rng_seed, kPlanStream, static_cast<uint64_t>(step));
}

std::optional<double> critic_step(TrainState& s, const ad::Tensor& x,
                                  const std::vector<int32_t>& y) {
    uint64_t plan_seed = plan_seed_for_step(s.cfg, s.step);
    ++s.step;
    if (s.cfg.conditional && !has_usable_group(y)) {
        ++s.skipped_critic_steps;
        return std::nullopt;
    }
    tc::EstimatorBatch batch = frozen_reps(s.collection, x, y);
    ad::Tape t;
    std::vector<nets::ParamBinding> binds;
    nets::BoundCritic critic = nets::bind_trainable(t, s.critic, binds);
    ad::NodeId loss = tc::critic_loss_for_max(t, critic, batch, s.cfg.m_negatives, plan_seed,
                                              s.cfg.conditional);
    double estimate = -t.value(loss).item();
    if (!std::isfinite(estimate))
        throw NumericError("train: non-finite dependence estimate " + std::to_string(estimate) +
                           " in critic step " + std::to_string(s.step - 1));
    s.critic_opt.step(binds, t.backward(loss));
    return estimate;
}

ModelStepResult model_step(TrainState& s, const ad::Tensor& x, const std::vector<int32_t>& y) {
    uint64_t plan_seed = plan_seed_for_step(s.cfg, s.step);
    ++s.step;

    ad::Tape t;
    ad::NodeId xn = t.constant(x);
    std::vector<nets::ParamBinding> binds;
    std::vector<ad::NodeId> reps;
    ModelStepResult result;
    ad::NodeId total = -1;
    for (nets::ModelPair& m : s.collection.models) {
        nets::BoundRep rep = nets::bind_trainable(t, m.rep, binds);
        nets::BoundClassifier cls = nets::bind_trainable(t, m.cls, binds);
        ad::NodeId h = nets::rep_forward(t, rep, xn);
        ad::NodeId z = nets::classifier_logits(t, cls, h);
        ad::NodeId ce = t.mean_last(t.softmax_cross_entropy(z, y));
        reps.push_back(h);
        total = result.loss.empty() ? ce : t.add(total, ce);
        result.loss.push_back(t.value(ce).item());

        const ad::Tensor& logits = t.value(z);
        int64_t hits = 0;
        for (int64_t i = 0; i < logits.dim(0); ++i) {
            int32_t pred = logits.at(i, 1) > logits.at(i, 0) ? 1 : 0;
            if (pred == y[static_cast<size_t>(i)]) ++hits;
        }
        result.accuracy.push_back(static_cast<double>(hits) /
                                  static_cast<double>(logits.dim(0)));
    }

    bool want_tc = s.cfg.beta > 0.0 && (!s.cfg.conditional || has_usable_group(y));
    if (want_tc) {
        ad::NodeId est = estimate_node(t, s, reps, y, plan_seed);
        result.tc_estimate = t.value(est).item();
        total = t.add(total, t.scale(est, s.cfg.beta));
    }

    double value = t.value(total).item();
    if (!std::isfinite(value))
        throw NumericError("train: non-finite objective " + std::to_string(value) +
                           " in model step " + std::to_string(s.step - 1) +
                           " (cross-entropies " + std::to_string(mean(result.loss)) +
                           ", dependence " +
                           std::to_string(result.tc_estimate.value_or(0.0)) + ")");
    s.model_opt.step(binds, t.backward(total));
    return result;
}

double combined_objective(const TrainState& s, const ad::Tensor& x,
                          const std::vector<int32_t>& y, uint64_t plan_seed) {
    ad::Tape t;
    ad::NodeId xn = t.constant(x);
    std::vector<ad::NodeId> reps;
    double total = 0.0;
    for (const nets::ModelPair& m : s.collection.models) {
        nets::BoundRep rep = nets::bind_frozen(t, m.rep);
        nets::BoundClassifier cls = nets::bind_frozen(t, m.cls);
        ad::NodeId h = nets::rep_forward(t, rep, xn);
        ad::NodeId z = nets::classifier_logits(t, cls, h);
        total += t.value(t.mean_last(t.softmax_cross_entropy(z, y))).item();
        reps.push_back(h);
    }
    if (s.cfg.beta > 0.0 && (!s.cfg.conditional || has_usable_group(y)))
        total += s.cfg.beta * t.value(estimate_node(t, s, reps, y, plan_seed)).item();
    return total;
}

double measure_tc(const TrainState& s, const ad::Tensor& x, const std::vector<int32_t>& y,
                  uint64_t plan_seed) {
    ad::Tape t;
    ad::NodeId xn = t.constant(x);
    std::vector<ad::NodeId> reps;
    for (const nets::ModelPair& m : s.collection.models) {
        nets::BoundRep rep = nets::bind_frozen(t, m.rep);
        reps.push_back(nets::rep_forward(t, rep, xn));
    }
    return t.value(estimate_node(t, s, reps, y, plan_seed)).item();
}

namespace {

void run_epochs(TrainState& s, const data::ColoredDataset& train,
                const data::ColoredDataset& adapt_train, const data::ColoredDataset& adapt_val) {
    const TrainConfig& cfg = s.cfg;
    int64_t n = train.size();
    int64_t batches = n / cfg.batch_size;

    auto record_validation = [&](int epoch, MetricsRecord r) {
        EpochValidation v = validate(s.collection, adapt_train, adapt_val);
        r.epoch = epoch;
        r.val_best = v.best;
        r.val_ensemble = v.ensemble;
        r.val_linear = v.linear;
        if (s.best.epoch < 0 || v.linear > s.best.val_accuracy) {
            s.best.collection = s.collection;
            s.best.critic = s.critic;
            s.best.epoch = epoch;
            s.best.val_accuracy = v.linear;
        }
        s.metrics.push_back(std::move(r));
    };

    if (cfg.epochs == 0) {
        MetricsRecord r;
        r.model_loss.assign(static_cast<size_t>(cfg.n_models), 0.0);
        r.model_accuracy.assign(static_cast<size_t>(cfg.n_models), 0.0);
        record_validation(-1, std::move(r));
        return;
    }

    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(mix_seed(cfg.rng_seed, kShuffleStream, static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        std::vector<std::vector<double>> losses(static_cast<size_t>(cfg.n_models));
        std::vector<std::vector<double>> accs(static_cast<size_t>(cfg.n_models));
        std::vector<double> estimates;
        int skipped_before = s.skipped_critic_steps;

        for (int64_t bi = 0; bi < batches; ++bi) {
            Batch b = slice_batch(
                train, std::span<const int64_t>(order).subspan(
                           static_cast<size_t>(bi * cfg.batch_size),
                           static_cast<size_t>(cfg.batch_size)));
            bool critic_turn =
                cfg.beta > 0.0 &&
                s.step % static_cast<int64_t>(cfg.critic_ratio + 1) < cfg.critic_ratio;
            if (critic_turn) {
                critic_step(s, b.x, b.y);
            } else {
                ModelStepResult r = model_step(s, b.x, b.y);
                for (int j = 0; j < cfg.n_models; ++j) {
                    losses[static_cast<size_t>(j)].push_back(r.loss[static_cast<size_t>(j)]);
                    accs[static_cast<size_t>(j)].push_back(r.accuracy[static_cast<size_t>(j)]);
                }
                if (r.tc_estimate) estimates.push_back(*r.tc_estimate);
            }
        }

        MetricsRecord r;
        for (int j = 0; j < cfg.n_models; ++j) {
            r.model_loss.push_back(mean(losses[static_cast<size_t>(j)]));
            r.model_accuracy.push_back(mean(accs[static_cast<size_t>(j)]));
        }
        r.tc_estimate = mean(estimates);
        r.skipped_critic_steps = s.skipped_critic_steps - skipped_before;
        record_validation(epoch, std::move(r));
    }
}

}  // namespace

void run_training(TrainState& s, const data::ColoredDataset& train,
                  const data::ColoredDataset& adapt_train, const data::ColoredDataset& adapt_val) {
    check_config(s.cfg);
    check_datasets(train, adapt_train, adapt_val, s.cfg);
    if (s.collection.input_dim() != train.input_dim())
        throw InvalidArgument("run_training: collection expects input width " +
                              std::to_string(s.collection.input_dim()) + ", train set has " +
                              std::to_string(train.input_dim()));
    run_epochs(s, train, adapt_train, adapt_val);
}

TrainState train_collection(const data::ColoredDataset& train,
                            const data::ColoredDataset& adapt_train,
                            const data::ColoredDataset& adapt_val, const TrainConfig& cfg) {
    check_config(cfg);
    check_datasets(train, adapt_train, adapt_val, cfg);
    TrainState s = make_train_state(cfg, train.input_dim());
    run_epochs(s, train, adapt_train, adapt_val);
    return s;
}

TrainState train_erm_baseline(const data::ColoredDataset& train,
                              const data::ColoredDataset& adapt_train,
                              const data::ColoredDataset& adapt_val, TrainConfig cfg) {
    cfg.n_models = 1;
    cfg.beta = 0.0;
    return train_collection(train, adapt_train, adapt_val, cfg);
}

int checkpoint_select(std::span<const MetricsRecord> records) {
    if (records.empty()) throw InvalidArgument("checkpoint_select: no records");
    size_t pick = 0;
    for (size_t i = 1; i < records.size(); ++i)
        if (records[i].val_linear > records[pick].val_linear) pick = i;
    return records[pick].epoch;
}

}  // namespace tcdiv::train
