#include "ad/grad_check.hpp"

#include <cmath>

namespace tcdiv::ad {

namespace {

double eval_at(const ScalarFn& fn, const Tensor& point) {
    Tape tape;
    NodeId x = tape.constant(point);
    NodeId y = fn(tape, x);
    double v = tape.value(y).item();
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
    return v;
}

}  // namespace

double grad_check(const ScalarFn& fn, const Tensor& point, double eps) {
    if (!(eps > 0.0)) throw InvalidArgument("grad_check: eps must be positive");

    Tape tape;
    NodeId x = tape.leaf(point);
    NodeId y = fn(tape, x);
    if (tape.value(y).numel() != 1)
        throw InvalidArgument("grad_check: function output is not scalar");
    GradientMap gm = tape.backward(y);
    Tensor analytic =
        gm.contains(x) ? gm.at(x) : Tensor::zeros(point.shape());

    double max_err = 0.0;
    Tensor probe = point;
    for (int64_t i = 0; i < point.numel(); ++i) {
        double orig = probe[i];
        probe[i] = orig + eps;
        double fp = eval_at(fn, probe);
        probe[i] = orig - eps;
        double fm = eval_at(fn, probe);
        probe[i] = orig;
        double central = (fp - fm) / (2.0 * eps);
        double denom = std::max({1.0, std::fabs(analytic[i]), std::fabs(central)});
        max_err = std::max(max_err, std::fabs(analytic[i] - central) / denom);
    }
    return max_err;
}

}  // namespace tcdiv::ad
