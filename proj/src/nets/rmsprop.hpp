#pragma once

#include <cmath>
#include <unordered_map>

#include "nets/models.hpp"

namespace tcdiv::nets {

// RMSProp without momentum:
//   acc <- decay * acc + (1 - decay) * g^2
//   p   <- p - lr * g / sqrt(acc + eps)
// Accumulators are keyed by parameter storage and created lazily, so one
// optimizer instance can serve any binding list drawn from its parameters.
class RmsProp {
public:
    explicit RmsProp(double lr = 1e-5, double decay = 0.9, double eps = 1e-8)
        : lr_(lr), decay_(decay), eps_(eps) {
        if (lr <= 0.0) throw InvalidArgument("RmsProp: lr must be positive");
        if (decay < 0.0 || decay >= 1.0) throw InvalidArgument("RmsProp: decay must be in [0,1)");
        if (eps <= 0.0) throw InvalidArgument("RmsProp: eps must be positive");
    }

    double lr() const { return lr_; }

    // Applies one update to every bound parameter whose leaf received a
    // gradient. Bindings whose node is absent from the map are left alone,
    // accumulator included.
    void step(const std::vector<ParamBinding>& bindings, const ad::GradientMap& grads) {
        for (const ParamBinding& b : bindings) {
            if (!grads.contains(b.node)) continue;
            const ad::Tensor& g = grads.at(b.node);
            ad::Tensor& p = *b.tensor;
            if (!g.same_shape(p))
                throw ShapeError("RmsProp: gradient shape " + g.shape_string() +
                                 " does not match parameter " + p.shape_string());
            ad::Tensor& acc = acc_.try_emplace(b.tensor, ad::Tensor(p.shape())).first->second;
            for (int64_t i = 0; i < p.numel(); ++i) {
                acc[i] = decay_ * acc[i] + (1.0 - decay_) * g[i] * g[i];
                p[i] -= lr_ * g[i] / std::sqrt(acc[i] + eps_);
            }
        }
    }

private:
    double lr_, decay_, eps_;
    std::unordered_map<const ad::Tensor*, ad::Tensor> acc_;
};

}  // namespace tcdiv::nets
