#include "ad/tensor.hpp"

#include <cmath>

namespace tcdiv::ad {

int64_t Tensor::checked_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d <= 0) {
            std::string s = "[";
            for (size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
            throw ShapeError("non-positive tensor dimension in shape " + s + "]");
        }
        n *= d;
    }
    return n;
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_string() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) s += (i ? "," : "") + std::to_string(shape_[i]);
    return s + "]";
}

}  // namespace tcdiv::ad
