#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "util/error.hpp"
#include "util/rng.hpp"

namespace tcdiv::tc {

// Exact joint distribution over n finite-alphabet variables, stored as a
// flat row-major probability table. The ground truth the variational
// estimators are tested against.
struct DiscreteJoint {
    std::vector<int> cards;  // alphabet size per variable
    std::vector<double> p;   // prod(cards) entries, row-major in variable order

    DiscreteJoint(std::vector<int> cards_, std::vector<double> p_);

    int n_vars() const { return static_cast<int>(cards.size()); }
    int64_t cells() const { return static_cast<int64_t>(p.size()); }

    // Decodes a flat cell index into per-variable symbol values.
    std::vector<int> decode(int64_t cell) const;

    // Draws one tuple of symbols from the table.
    std::vector<int> sample(Rng& rng) const;

    // Marginal distribution of variable i.
    std::vector<double> marginal(int i) const;
};

// Total correlation of the table in nats: sum of marginal entropies minus
// the joint entropy (the KL of the joint from the product of marginals).
double discrete_tc_oracle(const DiscreteJoint& joint);

// Label-weighted total correlation: each per-label table describes the
// variables' joint distribution given that label value.
double discrete_conditional_tc_oracle(std::span<const DiscreteJoint> per_label,
                                      std::span<const double> label_probs);

// Mutual information of a bivariate unit Gaussian with correlation rho.
double gaussian_mi_oracle(double rho);

}  // namespace tcdiv::tc
