#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ad/tape.hpp"
#include "nets/models.hpp"

namespace tcdiv::tc {

// Scores a tuple of equal-height rank-2 parts, one scalar per row. The
// estimators below are agnostic to what the scorer does internally, so the
// same code serves trainable critics, frozen critics, and test stubs.
using Scorer = std::function<ad::NodeId(ad::Tape&, std::span<const ad::NodeId>)>;

// The model-pipeline scorer: parts are row-normalized before the critic MLP.
Scorer make_critic_scorer(const nets::BoundCritic& critic);
// Parts fed to the MLP as-is, for scorers over raw variables.
Scorer make_raw_scorer(const nets::BoundCritic& critic);

// M product-of-marginals tuples: entry (j, k) names the batch row whose
// k-th variable joins negative tuple j. Coordinates are drawn uniformly
// and independently, with replacement.
struct PermutationPlan {
    int64_t batch = 0;
    int n_vars = 0;
    std::vector<int32_t> indices;  // m * n_vars, row-major
    uint64_t rng_seed = 0;

    int m() const { return n_vars == 0 ? 0 : static_cast<int>(indices.size()) / n_vars; }
    std::vector<int32_t> column(int k) const;
};

PermutationPlan make_permutation_plan(int64_t batch, int n_vars, int m, uint64_t seed);

// Contrastive mutual-information lower bound over paired samples (x_i, y_i):
//   mean_i [ f(x_i, y_i) - log (1/K) sum_j e^{f(x_i, y_j)} ]
// Scores all K x K combinations; the result never exceeds log K because the
// positive pair sits in its own denominator. Returns a scalar node.
ad::NodeId infonce_estimate(ad::Tape& t, const Scorer& f, ad::NodeId x, ad::NodeId y);

// Total-correlation analogue with a shared denominator:
//   mean_i f(joint tuple i) - log (1/M) sum_j e^{f(negative tuple j)}
// where negative tuple j mixes coordinates from different rows per the plan.
ad::NodeId tc_nce_estimate(ad::Tape& t, const Scorer& f, std::span<const ad::NodeId> reps,
                           const PermutationPlan& plan);

// Label-conditional variant: rows are partitioned by label, each group of
// size >= 2 is estimated with a group-local plan of min(m, group size)
// negatives, and the result is the group-size-weighted average. Groups
// smaller than 2 are skipped; a batch with no usable group is an error.
ad::NodeId conditional_tc_nce_estimate(ad::Tape& t, const Scorer& f,
                                       std::span<const ad::NodeId> reps,
                                       std::span<const int32_t> labels, int m,
                                       uint64_t plan_seed);

// A minibatch of fixed representations for the critic update.
struct EstimatorBatch {
    std::vector<ad::Tensor> reps;  // n tensors, K x d each
    std::vector<int32_t> labels;   // K values
};

// The critic's minimization target: the negated estimator, with the
// representations entering the tape as constants so that gradients reach
// the critic parameters only.
ad::NodeId critic_loss_for_max(ad::Tape& t, const nets::BoundCritic& critic,
                               const EstimatorBatch& batch, int m, uint64_t plan_seed,
                               bool conditional = true);

}  // namespace tcdiv::tc
