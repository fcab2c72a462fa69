#pragma once

#include <array>
#include <span>
#include <vector>

#include "data/generators.hpp"
#include "nets/models.hpp"

namespace tcdiv::eval {

// Per-model outputs of a frozen collection on one split: representations
// (rows x 32 each) and class-1 probabilities, plus the split's labels.
struct FrozenOutputs {
    std::vector<ad::Tensor> reps;   // n tensors, rows x 32
    std::vector<ad::Tensor> probs;  // n tensors, rows (class-1 probability)
    std::vector<int32_t> labels;

    int n() const { return static_cast<int>(reps.size()); }
    int64_t rows() const { return static_cast<int64_t>(labels.size()); }
};

FrozenOutputs compute_frozen_outputs(const nets::ModelCollection& collection,
                                     const data::ColoredDataset& ds);

// Binary logistic regression, sigmoid(x.w + b).
struct LogRegModel {
    ad::Tensor w;
    double b = 0.0;
    double l2 = 0.0;
};

// Full-batch gradient descent on mean cross-entropy + l2 * |w|^2 (bias
// unpenalized), stepped at 1/L with L from power iteration, run until the
// gradient norm drops below 1e-6 or 10000 iterations.
LogRegModel fit_logreg(const ad::Tensor& features, const std::vector<int32_t>& labels,
                       double l2);

double logreg_accuracy(const LogRegModel& model, const ad::Tensor& features,
                       const std::vector<int32_t>& labels);

// Fraction of rows whose thresholded class-1 probability matches the label.
double argmax_accuracy(const ad::Tensor& probs, const std::vector<int32_t>& labels);

// Feature matrices the ensemble and linear protocols fit on: per-model
// class-1 probabilities as columns (rows x n) and concatenated
// representations (rows x 32n).
ad::Tensor ensemble_features(const FrozenOutputs& o);
ad::Tensor linear_features(const FrozenOutputs& o);

inline constexpr std::array<double, 6> kDefaultL2Grid{0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0};

// Fits one model per grid value and keeps the first validation-accuracy
// maximizer in grid order.
LogRegModel fit_logreg_grid(const ad::Tensor& train_x, const std::vector<int32_t>& train_y,
                            const ad::Tensor& val_x, const std::vector<int32_t>& val_y,
                            std::span<const double> grid = kDefaultL2Grid);

// Picks the model whose argmax predictions score highest on adapt_val
// (ties to the lowest index) and reports its adapt_test accuracy.
double protocol_best(const FrozenOutputs& adapt_train, const FrozenOutputs& adapt_val,
                     const FrozenOutputs& adapt_test);

// Logistic regression over the n per-model class-1 probabilities.
double protocol_ensemble(const FrozenOutputs& adapt_train, const FrozenOutputs& adapt_val,
                         const FrozenOutputs& adapt_test,
                         std::span<const double> grid = kDefaultL2Grid,
                         double* chosen_l2 = nullptr);

// Logistic regression over the concatenated representations (32n wide).
double protocol_linear(const FrozenOutputs& adapt_train, const FrozenOutputs& adapt_val,
                       const FrozenOutputs& adapt_test,
                       std::span<const double> grid = kDefaultL2Grid,
                       double* chosen_l2 = nullptr);

}  // namespace tcdiv::eval
