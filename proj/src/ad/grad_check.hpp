#pragma once

#include <functional>

#include "ad/tape.hpp"

namespace tcdiv::ad {

// A scalar-valued expression of a single tensor input, expressed as a graph
// builder so the same construction serves both the analytic and the
// finite-difference path.
using ScalarFn = std::function<NodeId(Tape&, NodeId)>;

// Max over coordinates of |analytic - central difference| scaled by
// max(1, |analytic|, |central|). Fails on non-finite evaluations.
double grad_check(const ScalarFn& fn, const Tensor& point, double eps);

}  // namespace tcdiv::ad
