#include "tc/oracles.hpp"

#include <cmath>
#include <string>

namespace tcdiv::tc {

namespace {

constexpr double kNormTolerance = 1e-12;

double entropy(std::span<const double> probs) {
    double h = 0.0;
    for (double q : probs)
        if (q > 0.0) h -= q * std::log(q);
    return h;
}

void check_normalized(std::span<const double> probs, const char* what) {
    double sum = 0.0;
    for (double q : probs) {
        if (!(q >= 0.0)) throw InvalidArgument(std::string(what) + ": negative probability");
        sum += q;
    }
    if (std::fabs(sum - 1.0) > kNormTolerance)
        throw InvalidArgument(std::string(what) + ": probabilities sum to " +
                              std::to_string(sum) + ", not 1");
}

}  // namespace

DiscreteJoint::DiscreteJoint(std::vector<int> cards_, std::vector<double> p_)
    : cards(std::move(cards_)), p(std::move(p_)) {
    if (cards.empty()) throw InvalidArgument("DiscreteJoint: needs at least one variable");
    int64_t cells = 1;
    for (int c : cards) {
        if (c < 1) throw InvalidArgument("DiscreteJoint: alphabet sizes must be positive");
        cells *= c;
    }
    if (cells != static_cast<int64_t>(p.size()))
        throw InvalidArgument("DiscreteJoint: table has " + std::to_string(p.size()) +
                              " entries, expected " + std::to_string(cells));
    check_normalized(p, "DiscreteJoint");
}

std::vector<int> DiscreteJoint::decode(int64_t cell) const {
    std::vector<int> out(cards.size());
    for (int i = n_vars() - 1; i >= 0; --i) {
        out[static_cast<size_t>(i)] = static_cast<int>(cell % cards[static_cast<size_t>(i)]);
        cell /= cards[static_cast<size_t>(i)];
    }
    return out;
}

std::vector<int> DiscreteJoint::sample(Rng& rng) const {
    double u = rng.uniform();
    double acc = 0.0;
    for (int64_t cell = 0; cell < cells(); ++cell) {
        acc += p[static_cast<size_t>(cell)];
        if (u < acc) return decode(cell);
    }
    return decode(cells() - 1);  // u landed in the rounding slack at the top
}

std::vector<double> DiscreteJoint::marginal(int i) const {
    if (i < 0 || i >= n_vars()) throw InvalidArgument("DiscreteJoint: variable index out of range");
    std::vector<double> m(static_cast<size_t>(cards[static_cast<size_t>(i)]), 0.0);
    for (int64_t cell = 0; cell < cells(); ++cell)
        m[static_cast<size_t>(decode(cell)[static_cast<size_t>(i)])] +=
            p[static_cast<size_t>(cell)];
    return m;
}

double discrete_tc_oracle(const DiscreteJoint& joint) {
    double h_marginals = 0.0;
    for (int i = 0; i < joint.n_vars(); ++i) h_marginals += entropy(joint.marginal(i));
    return h_marginals - entropy(joint.p);
}

double discrete_conditional_tc_oracle(std::span<const DiscreteJoint> per_label,
                                      std::span<const double> label_probs) {
    if (per_label.empty() || per_label.size() != label_probs.size())
        throw InvalidArgument("conditional oracle: need one table per label value");
    check_normalized(label_probs, "label marginal");
    for (size_t y = 1; y < per_label.size(); ++y)
        if (per_label[y].cards != per_label[0].cards)
            throw InvalidArgument("conditional oracle: per-label tables disagree on alphabets");
    double tc = 0.0;
    for (size_t y = 0; y < per_label.size(); ++y)
        tc += label_probs[y] * discrete_tc_oracle(per_label[y]);
    return tc;
}

double gaussian_mi_oracle(double rho) {
    if (!(std::fabs(rho) < 1.0))
        throw InvalidArgument("gaussian_mi_oracle: |rho| must be < 1");
    return -0.5 * std::log1p(-rho * rho);
}

}  // namespace tcdiv::tc
