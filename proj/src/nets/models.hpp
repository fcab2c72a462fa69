#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "ad/tape.hpp"
#include "util/rng.hpp"

namespace tcdiv::nets {

inline constexpr int64_t kReprDim = 32;
inline constexpr int64_t kNumClasses = 2;
inline constexpr double kCriticSlope = 0.2;

struct DenseLayer {
    ad::Tensor w;  // in x out
    ad::Tensor b;  // out
};

DenseLayer init_dense(int64_t in, int64_t out, Rng& rng);

// Representation MLP h_i: input -> 128 -> 64 -> 32, relu on the hidden layers.
struct RepresentationModel {
    DenseLayer l1, l2, l3;
    int64_t input_dim() const { return l1.w.dim(0); }
};

// Linear head c_i on top of the 32-d representation, two logits.
struct LinearClassifier {
    DenseLayer out;
};

struct ModelPair {
    RepresentationModel rep;
    LinearClassifier cls;
};

struct ModelCollection {
    std::vector<ModelPair> models;
    int n() const { return static_cast<int>(models.size()); }
    int64_t input_dim() const { return models.at(0).rep.input_dim(); }
};

// He-style draws; model i is seeded from an independent substream of
// `seed` so that jointly and separately trained collections can be
// compared parameter for parameter.
ModelCollection init_collection(int n, int64_t input_dim, uint64_t seed);
RepresentationModel init_representation(int64_t input_dim, Rng& rng);
LinearClassifier init_classifier(Rng& rng);

// Variational scorer: input -> hidden -> hidden -> 1 with leaky relu(0.2).
struct Critic {
    DenseLayer l1, l2, l3;
    int64_t input_dim() const { return l1.w.dim(0); }
};

Critic init_critic(int64_t input_dim, uint64_t seed, int64_t hidden = 256);

// --- tape bindings ----------------------------------------------------
// Parameters enter a tape either as trainable leaves or frozen constants.
// ParamBinding pairs each leaf node with the tensor the optimizer updates,
// in a stable traversal order.

struct ParamBinding {
    ad::NodeId node;
    ad::Tensor* tensor;
};

struct BoundDense {
    ad::NodeId w, b;
};

struct BoundRep {
    BoundDense l1, l2, l3;
};

struct BoundClassifier {
    BoundDense out;
};

struct BoundCritic {
    BoundDense l1, l2, l3;
};

struct BoundModel {
    BoundRep rep;
    BoundClassifier cls;
};

BoundRep bind_trainable(ad::Tape& t, RepresentationModel& m, std::vector<ParamBinding>& out);
BoundRep bind_frozen(ad::Tape& t, const RepresentationModel& m);
BoundClassifier bind_trainable(ad::Tape& t, LinearClassifier& m, std::vector<ParamBinding>& out);
BoundClassifier bind_frozen(ad::Tape& t, const LinearClassifier& m);
BoundCritic bind_trainable(ad::Tape& t, Critic& m, std::vector<ParamBinding>& out);
BoundCritic bind_frozen(ad::Tape& t, const Critic& m);

// Forward passes. Inputs are rank-2 (batch x dim) nodes.
ad::NodeId rep_forward(ad::Tape& t, const BoundRep& m, ad::NodeId x);
ad::NodeId classifier_logits(ad::Tape& t, const BoundClassifier& m, ad::NodeId h);

// Scores one row per sample: every part is row-normalized to unit L2 norm,
// the parts are concatenated, and the critic MLP maps them to a scalar.
// Returns a rank-1 node of per-row scores.
ad::NodeId critic_score(ad::Tape& t, const BoundCritic& critic, std::span<const ad::NodeId> reps);

// Same MLP without the normalization, for scorers over raw variables.
ad::NodeId critic_score_raw(ad::Tape& t, const BoundCritic& critic,
                            std::span<const ad::NodeId> parts);

// Flat parameter traversal in binding order.
std::vector<ad::Tensor*> parameters(ModelCollection& c);
std::vector<ad::Tensor*> parameters(ModelPair& m);
std::vector<ad::Tensor*> parameters(Critic& c);

uint64_t parameter_fingerprint(const ModelCollection& c);
uint64_t parameter_fingerprint(const Critic& c);

// --- checkpoints -------------------------------------------------------

struct Checkpoint {
    ModelCollection collection;
    Critic critic;
    uint64_t config_hash = 0;
    int32_t epoch = -1;
    double val_accuracy = 0.0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tcdiv::nets
