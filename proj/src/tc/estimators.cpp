#include "tc/estimators.hpp"

#include <cmath>
#include <map>
#include <string>

#include "util/rng.hpp"

namespace tcdiv::tc {

namespace {

// Checks the parts are rank-2 with a common row count and returns it.
int64_t common_rows(ad::Tape& t, std::span<const ad::NodeId> reps, const char* what) {
    if (reps.empty()) throw InvalidArgument(std::string(what) + ": no variables");
    int64_t rows = -1;
    for (ad::NodeId r : reps) {
        const ad::Tensor& v = t.value(r);
        if (v.rank() != 2)
            throw ShapeError(std::string(what) + ": parts must be rank-2, got " +
                             v.shape_string());
        if (rows < 0) rows = v.rows();
        if (v.rows() != rows)
            throw ShapeError(std::string(what) + ": parts disagree on the batch dimension");
    }
    return rows;
}

}  // namespace

Scorer make_critic_scorer(const nets::BoundCritic& critic) {
    return [critic](ad::Tape& t, std::span<const ad::NodeId> parts) {
        return nets::critic_score(t, critic, parts);
    };
}

Scorer make_raw_scorer(const nets::BoundCritic& critic) {
    return [critic](ad::Tape& t, std::span<const ad::NodeId> parts) {
        return nets::critic_score_raw(t, critic, parts);
    };
}

std::vector<int32_t> PermutationPlan::column(int k) const {
    if (k < 0 || k >= n_vars) throw InvalidArgument("PermutationPlan: column out of range");
    std::vector<int32_t> out(static_cast<size_t>(m()));
    for (int j = 0; j < m(); ++j)
        out[static_cast<size_t>(j)] = indices[static_cast<size_t>(j * n_vars + k)];
    return out;
}

PermutationPlan make_permutation_plan(int64_t batch, int n_vars, int m, uint64_t seed) {
    if (batch < 1) throw InvalidArgument("permutation plan: batch must be >= 1");
    if (n_vars < 1) throw InvalidArgument("permutation plan: need at least one variable");
    if (m < 1) throw InvalidArgument("permutation plan: m must be >= 1");
    PermutationPlan plan;
    plan.batch = batch;
    plan.n_vars = n_vars;
    plan.rng_seed = seed;
    plan.indices.resize(static_cast<size_t>(m) * static_cast<size_t>(n_vars));
    Rng rng(seed);
    for (int32_t& idx : plan.indices)
        idx = static_cast<int32_t>(rng.uniform_below(static_cast<uint64_t>(batch)));
    return plan;
}

ad::NodeId infonce_estimate(ad::Tape& t, const Scorer& f, ad::NodeId x, ad::NodeId y) {
    const ad::Tensor& vx = t.value(x);
    const ad::Tensor& vy = t.value(y);
    if (vx.rank() != 2 || vy.rank() != 2)
        throw ShapeError("infonce: samples must be rank-2");
    int64_t k = vx.rows();
    if (vy.rows() != k) throw ShapeError("infonce: x and y disagree on the batch dimension");
    if (k < 2) throw InvalidArgument("infonce: needs a batch of at least 2");

    // All K x K combinations, i-major: row i*K+j holds (x_i, y_j).
    std::vector<int32_t> xi(static_cast<size_t>(k * k)), yj(static_cast<size_t>(k * k));
    for (int64_t i = 0; i < k; ++i)
        for (int64_t j = 0; j < k; ++j) {
            xi[static_cast<size_t>(i * k + j)] = static_cast<int32_t>(i);
            yj[static_cast<size_t>(i * k + j)] = static_cast<int32_t>(j);
        }
    std::vector<ad::NodeId> grid_parts{t.gather_rows(x, std::move(xi)),
                                       t.gather_rows(y, std::move(yj))};
    ad::NodeId grid = t.reshape(f(t, grid_parts), {k, k});
    ad::NodeId row_lse = t.logsumexp_last(grid);

    std::vector<ad::NodeId> pos_parts{x, y};
    ad::NodeId pos = f(t, pos_parts);
    ad::NodeId diff = t.sub(t.mean_last(pos), t.mean_last(row_lse));
    return t.add_scalar(diff, std::log(static_cast<double>(k)));
}

ad::NodeId tc_nce_estimate(ad::Tape& t, const Scorer& f, std::span<const ad::NodeId> reps,
                           const PermutationPlan& plan) {
    int64_t rows = common_rows(t, reps, "tc_nce");
    if (rows < 2) throw InvalidArgument("tc_nce: needs a batch of at least 2");
    if (plan.n_vars != static_cast<int>(reps.size()))
        throw InvalidArgument("tc_nce: plan covers " + std::to_string(plan.n_vars) +
                              " variables, batch has " + std::to_string(reps.size()));
    if (plan.batch != rows)
        throw InvalidArgument("tc_nce: plan was built for batch " + std::to_string(plan.batch) +
                              ", got " + std::to_string(rows));
    if (plan.m() < 1) throw InvalidArgument("tc_nce: plan has no negative tuples");
    for (int32_t idx : plan.indices)
        if (idx < 0 || idx >= rows) throw InvalidArgument("tc_nce: plan index out of range");

    std::vector<ad::NodeId> neg_parts;
    neg_parts.reserve(reps.size());
    for (int kvar = 0; kvar < plan.n_vars; ++kvar)
        neg_parts.push_back(t.gather_rows(reps[static_cast<size_t>(kvar)], plan.column(kvar)));

    ad::NodeId pos = f(t, reps);
    ad::NodeId neg = f(t, neg_parts);
    ad::NodeId denom = t.add_scalar(t.logsumexp_last(neg),
                                    -std::log(static_cast<double>(plan.m())));
    return t.sub(t.mean_last(pos), denom);
}

ad::NodeId conditional_tc_nce_estimate(ad::Tape& t, const Scorer& f,
                                       std::span<const ad::NodeId> reps,
                                       std::span<const int32_t> labels, int m,
                                       uint64_t plan_seed) {
    int64_t rows = common_rows(t, reps, "conditional_tc_nce");
    if (static_cast<int64_t>(labels.size()) != rows)
        throw InvalidArgument("conditional_tc_nce: " + std::to_string(labels.size()) +
                              " labels for " + std::to_string(rows) + " rows");
    if (m < 1) throw InvalidArgument("conditional_tc_nce: m must be >= 1");

    std::map<int32_t, std::vector<int32_t>> groups;
    for (int64_t i = 0; i < rows; ++i)
        groups[labels[static_cast<size_t>(i)]].push_back(static_cast<int32_t>(i));

    int64_t covered = 0;
    for (const auto& [label, members] : groups)
        if (members.size() >= 2) covered += static_cast<int64_t>(members.size());
    if (covered == 0)
        throw InvalidArgument("batch has no label group of size >= 2");

    ad::NodeId est{-1};
    bool first = true;
    for (const auto& [label, members] : groups) {
        if (members.size() < 2) continue;
        int64_t g = static_cast<int64_t>(members.size());
        std::vector<ad::NodeId> sub;
        sub.reserve(reps.size());
        for (ad::NodeId r : reps) sub.push_back(t.gather_rows(r, members));
        int m_local = static_cast<int>(std::min<int64_t>(m, g));
        PermutationPlan plan = make_permutation_plan(
            g, static_cast<int>(reps.size()), m_local,
            mix_seed(plan_seed, static_cast<uint64_t>(static_cast<uint32_t>(label))));
        ad::NodeId term = t.scale(tc_nce_estimate(t, f, sub, plan),
                                  static_cast<double>(g) / static_cast<double>(covered));
        est = first ? term : t.add(est, term);
        first = false;
    }
    return est;
}

ad::NodeId critic_loss_for_max(ad::Tape& t, const nets::BoundCritic& critic,
                               const EstimatorBatch& batch, int m, uint64_t plan_seed,
                               bool conditional) {
    if (batch.reps.empty()) throw InvalidArgument("critic_loss_for_max: batch has no variables");
    std::vector<ad::NodeId> reps;
    reps.reserve(batch.reps.size());
    for (const ad::Tensor& r : batch.reps) reps.push_back(t.constant(r));
    Scorer f = make_critic_scorer(critic);
    ad::NodeId est;
    if (conditional) {
        est = conditional_tc_nce_estimate(t, f, reps, batch.labels, m, plan_seed);
    } else {
        int64_t rows = t.value(reps[0]).rows();
        PermutationPlan plan =
            make_permutation_plan(rows, static_cast<int>(reps.size()), m, plan_seed);
        est = tc_nce_estimate(t, f, reps, plan);
    }
    return t.scale(est, -1.0);
}

}  // namespace tcdiv::tc
