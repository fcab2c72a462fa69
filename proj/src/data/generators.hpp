#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ad/tensor.hpp"
#include "data/idx.hpp"

namespace tcdiv::data {

enum class Variant { CMnist, RCMnist, TCMnist };
enum class Role { Train, AdaptTrain, AdaptVal, AdaptTest };
enum class Shift { None, DigitOnly, Colour2Only };

const char* variant_name(Variant v);
const char* role_name(Role r);
const char* shift_name(Shift s);
Variant variant_from_name(const std::string& name);
Shift shift_from_name(const std::string& name);

struct GeneratorConfig {
    double label_flip_prob = 0.25;
    std::vector<double> colour_flip_probs_per_env{0.1, 0.2};
    double colour2_flip_prob = 0.25;
    double rotation_flip_prob = 0.5;
    Shift shift = Shift::None;
    uint64_t rng_seed = 0;
};

// Per-example generative record: which signals agreed with the label and
// which mechanism bits fired. Absent fields are -1.
struct Provenance {
    int8_t digit_group = -1;   // 0: digit in 0-4, 1: digit in 5-9 (as displayed)
    int8_t clean_label = -1;   // label before the 0.25 noise
    int8_t colour_bit = -1;    // which channel carries the digit
    int8_t colour2_bit = -1;   // constant third channel, TC-MNIST only
    int8_t common_cause_bit = -1;  // rotation/perturbation driver, RC-MNIST only
};

// One generated split, stored row-per-example with channel-major inputs
// (channel c occupies columns [c*196, (c+1)*196)).
struct ColoredDataset {
    Variant variant = Variant::CMnist;
    Role role = Role::Train;
    uint64_t rng_seed = 0;
    int channels = 2;
    ad::Tensor inputs;  // N x (channels * 196)
    std::vector<int32_t> labels;
    std::vector<Provenance> provenance;

    int64_t size() const { return static_cast<int64_t>(labels.size()); }
    int64_t input_dim() const { return static_cast<int64_t>(channels) * 196; }
};

// Collapsed two-environment coloured-digit training set: one channel per
// colour value, the digit drawn into the channel named by the colour bit.
ColoredDataset make_cmnist_train(const RawDigits& raw, const GeneratorConfig& cfg);

// As above, plus a fair common-cause bit that rotates the digit 90 degrees
// and flips the colour bit w.p. cfg.rotation_flip_prob when set.
ColoredDataset make_rcmnist_train(const RawDigits& raw, const GeneratorConfig& cfg);

// As the first, plus a third constant channel carrying a second
// label-derived colour bit (flip probability cfg.colour2_flip_prob).
ColoredDataset make_tcmnist_train(const RawDigits& raw, const GeneratorConfig& cfg);

struct ShiftedTestset {
    ColoredDataset adapt_train;  // 500 rows
    ColoredDataset adapt_val;    // 500 rows
    ColoredDataset adapt_test;   // 9000 rows
};

// Test distribution with only one predictive signal left intact. DigitOnly
// keeps the training label process and randomizes every colour bit;
// Colour2Only keeps the second colour signal and randomizes both the colour
// bit and the digit (drawn from a random class).
ShiftedTestset make_shifted_testset(const RawDigits& raw, const GeneratorConfig& cfg,
                                    Variant variant);

struct DatasetStats {
    int64_t n = 0;
    double class_balance = 0.0;  // P(label == 1)
    double digit_agreement = 0.0;
    double colour_agreement = 0.0;
    std::optional<double> colour2_agreement;
};

DatasetStats dataset_stats(const ColoredDataset& ds);

// 90-degree clockwise rotation of a 14x14 plane, as an index permutation.
void rotate90_inplace(double* plane);

}  // namespace tcdiv::data
