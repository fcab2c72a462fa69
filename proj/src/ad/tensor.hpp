#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "util/error.hpp"

namespace tcdiv::ad {

// Dense row-major tensor of 64-bit reals. Shapes are explicit everywhere;
// the only broadcast in the op set is the bias add.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape)
        : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0) {}

    Tensor(std::vector<int64_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_numel(shape_) != static_cast<int64_t>(data_.size()))
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string());
    }

    static Tensor scalar(double v) { return Tensor({}, {v}); }

    static Tensor vector(std::vector<double> v) {
        int64_t n = static_cast<int64_t>(v.size());
        return Tensor({n}, std::move(v));
    }

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int64_t> shape, double v) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) x = v;
        return t;
    }

    const std::vector<int64_t>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool is_scalar() const { return numel() == 1 && rank() <= 1; }

    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }

    // Row/column accessors for rank-2 tensors; rank-1 counts as a single row.
    int64_t rows() const { return rank() == 2 ? shape_[0] : 1; }
    int64_t cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 1); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    double& at(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * cols() + c)]; }
    double at(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * cols() + c)]; }

    double item() const {
        if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_string());
        return data_[0];
    }

    bool all_finite() const;

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    std::string shape_string() const;

private:
    static int64_t checked_numel(const std::vector<int64_t>& shape);

    std::vector<int64_t> shape_;
    std::vector<double> data_;
};

}  // namespace tcdiv::ad
