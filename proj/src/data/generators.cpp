#include "data/generators.hpp"

#include <algorithm>
#include <array>
#include <numeric>

#include "util/error.hpp"
#include "util/rng.hpp"

namespace tcdiv::data {

namespace {

constexpr int64_t kSide = 14;
constexpr int64_t kPlane = kSide * kSide;

// Substream purposes. Every random decision about example i is drawn from
// its own stream keyed by (seed, purpose, i), so enabling one mechanism
// never perturbs the draws of another. This is what makes RC-MNIST's
// untouched examples bit-identical to C-MNIST, and TC-MNIST's first two
// channels bit-identical to C-MNIST's.
enum Purpose : uint64_t {
    kLabelNoise = 1,
    kColourFlip = 2,
    kCommonCause = 3,
    kRotationColourFlip = 4,
    kColour2 = 5,
    kShiftColour = 6,
    kShiftColour2 = 7,
    kShiftDigitPick = 8,
    kShuffle = 9,
};

bool draw_bit(uint64_t seed, Purpose purpose, int64_t example, double prob) {
    Rng rng(mix_seed(seed, purpose, static_cast<uint64_t>(example)));
    return rng.bernoulli(prob);
}

void check_prob(double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0))
        throw InvalidArgument(std::string("generator config: ") + what + " must be in [0,1]");
}

void check_config(const GeneratorConfig& cfg) {
    check_prob(cfg.label_flip_prob, "label_flip_prob");
    check_prob(cfg.colour2_flip_prob, "colour2_flip_prob");
    check_prob(cfg.rotation_flip_prob, "rotation_flip_prob");
    if (cfg.colour_flip_probs_per_env.size() != 2)
        throw InvalidArgument("generator config: expected one colour flip prob per environment "
                              "(2), got " +
                              std::to_string(cfg.colour_flip_probs_per_env.size()));
    for (double p : cfg.colour_flip_probs_per_env) check_prob(p, "colour_flip_probs_per_env");
}

// 2x2 mean pooling of one 28x28 image into out[0..195].
void pool14(const ad::Tensor& images, int64_t i, double* out) {
    const double* img = images.data() + i * 28 * 28;
    for (int64_t r = 0; r < kSide; ++r)
        for (int64_t c = 0; c < kSide; ++c)
            out[r * kSide + c] = 0.25 * (img[(2 * r) * 28 + 2 * c] + img[(2 * r) * 28 + 2 * c + 1] +
                                         img[(2 * r + 1) * 28 + 2 * c] +
                                         img[(2 * r + 1) * 28 + 2 * c + 1]);
}

struct ExampleDraft {
    std::array<double, kPlane> digit;
    int32_t label = 0;
    Provenance prov;
};

void emit_row(ad::Tensor& inputs, int64_t row, int channels, const ExampleDraft& ex) {
    double* dst = inputs.data() + row * channels * kPlane;
    std::fill(dst, dst + channels * kPlane, 0.0);
    double* digit_channel = dst + static_cast<int64_t>(ex.prov.colour_bit) * kPlane;
    std::copy(ex.digit.begin(), ex.digit.end(), digit_channel);
    if (channels == 3 && ex.prov.colour2_bit == 1)
        std::fill(dst + 2 * kPlane, dst + 3 * kPlane, 1.0);
}

ColoredDataset assemble(std::vector<ExampleDraft> drafts, Variant variant, Role role,
                        const GeneratorConfig& cfg, int channels) {
    std::vector<int64_t> order(drafts.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(mix_seed(cfg.rng_seed, kShuffle));
    shuffle_rng.shuffle(order);

    ColoredDataset ds;
    ds.variant = variant;
    ds.role = role;
    ds.rng_seed = cfg.rng_seed;
    ds.channels = channels;
    ds.inputs = ad::Tensor({static_cast<int64_t>(drafts.size()),
                            static_cast<int64_t>(channels) * kPlane});
    ds.labels.resize(drafts.size());
    ds.provenance.resize(drafts.size());
    for (size_t pos = 0; pos < order.size(); ++pos) {
        const ExampleDraft& ex = drafts[static_cast<size_t>(order[pos])];
        emit_row(ds.inputs, static_cast<int64_t>(pos), channels, ex);
        ds.labels[pos] = ex.label;
        ds.provenance[pos] = ex.prov;
    }
    return ds;
}

ColoredDataset make_train_impl(const RawDigits& raw, const GeneratorConfig& cfg,
                               Variant variant) {
    check_config(cfg);
    if (cfg.shift != Shift::None)
        throw InvalidArgument("training sets are generated with shift=none");
    int64_t n = raw.size();
    if (n == 0) throw InvalidArgument("cannot generate from an empty digit set");

    int channels = variant == Variant::TCMnist ? 3 : 2;
    std::vector<ExampleDraft> drafts(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        ExampleDraft& ex = drafts[static_cast<size_t>(i)];
        pool14(raw.images, i, ex.digit.data());

        bool clean = raw.digit_labels[static_cast<size_t>(i)] >= 5;
        bool label = clean != draw_bit(cfg.rng_seed, kLabelNoise, i, cfg.label_flip_prob);
        int env = (2 * i < n) ? 0 : 1;
        bool colour = label != draw_bit(cfg.rng_seed, kColourFlip, i,
                                        cfg.colour_flip_probs_per_env[static_cast<size_t>(env)]);

        ex.prov.digit_group = clean;
        ex.prov.clean_label = clean;
        ex.label = label;

        if (variant == Variant::RCMnist) {
            bool cc = draw_bit(cfg.rng_seed, kCommonCause, i, 0.5);
            ex.prov.common_cause_bit = cc;
            if (cc) {
                rotate90_inplace(ex.digit.data());
                colour = colour !=
                         draw_bit(cfg.rng_seed, kRotationColourFlip, i, cfg.rotation_flip_prob);
            }
        }
        ex.prov.colour_bit = colour;
        if (variant == Variant::TCMnist)
            ex.prov.colour2_bit =
                label != draw_bit(cfg.rng_seed, kColour2, i, cfg.colour2_flip_prob);
    }
    return assemble(std::move(drafts), variant, Role::Train, cfg, channels);
}

}  // namespace

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::CMnist: return "cmnist";
        case Variant::RCMnist: return "rcmnist";
        case Variant::TCMnist: return "tcmnist";
    }
    return "unknown";
}

const char* role_name(Role r) {
    switch (r) {
        case Role::Train: return "train";
        case Role::AdaptTrain: return "adapt_train";
        case Role::AdaptVal: return "adapt_val";
        case Role::AdaptTest: return "adapt_test";
    }
    return "unknown";
}

const char* shift_name(Shift s) {
    switch (s) {
        case Shift::None: return "none";
        case Shift::DigitOnly: return "digit_only";
        case Shift::Colour2Only: return "colour2_only";
    }
    return "unknown";
}

Variant variant_from_name(const std::string& name) {
    if (name == "cmnist") return Variant::CMnist;
    if (name == "rcmnist") return Variant::RCMnist;
    if (name == "tcmnist") return Variant::TCMnist;
    throw InvalidArgument("unknown variant '" + name + "' (want cmnist|rcmnist|tcmnist)");
}

Shift shift_from_name(const std::string& name) {
    if (name == "none") return Shift::None;
    if (name == "digit_only") return Shift::DigitOnly;
    if (name == "colour2_only") return Shift::Colour2Only;
    throw InvalidArgument("unknown shift '" + name + "' (want none|digit_only|colour2_only)");
}

void rotate90_inplace(double* plane) {
    std::array<double, kPlane> tmp;
    // Clockwise: destination (r, c) takes source (13 - c, r).
    for (int64_t r = 0; r < kSide; ++r)
        for (int64_t c = 0; c < kSide; ++c)
            tmp[static_cast<size_t>(r * kSide + c)] = plane[(kSide - 1 - c) * kSide + r];
    std::copy(tmp.begin(), tmp.end(), plane);
}

ColoredDataset make_cmnist_train(const RawDigits& raw, const GeneratorConfig& cfg) {
    return make_train_impl(raw, cfg, Variant::CMnist);
}

ColoredDataset make_rcmnist_train(const RawDigits& raw, const GeneratorConfig& cfg) {
    return make_train_impl(raw, cfg, Variant::RCMnist);
}

ColoredDataset make_tcmnist_train(const RawDigits& raw, const GeneratorConfig& cfg) {
    return make_train_impl(raw, cfg, Variant::TCMnist);
}

ShiftedTestset make_shifted_testset(const RawDigits& raw, const GeneratorConfig& cfg,
                                    Variant variant) {
    check_config(cfg);
    if (cfg.shift == Shift::None)
        throw InvalidArgument("shifted test sets need shift=digit_only or colour2_only");
    if (cfg.shift == Shift::Colour2Only && variant != Variant::TCMnist)
        throw InvalidArgument("colour2_only shift is defined only for the tcmnist variant");
    int64_t n = raw.size();
    if (n < 10000)
        throw InvalidArgument("shifted test set needs at least 10000 raw examples, got " +
                              std::to_string(n));

    int channels = variant == Variant::TCMnist ? 3 : 2;
    std::vector<ExampleDraft> drafts(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        ExampleDraft& ex = drafts[static_cast<size_t>(i)];
        bool clean = raw.digit_labels[static_cast<size_t>(i)] >= 5;
        bool label = clean != draw_bit(cfg.rng_seed, kLabelNoise, i, cfg.label_flip_prob);
        ex.label = label;
        ex.prov.clean_label = clean;

        if (cfg.shift == Shift::DigitOnly) {
            pool14(raw.images, i, ex.digit.data());
            ex.prov.digit_group = clean;
            ex.prov.colour_bit = draw_bit(cfg.rng_seed, kShiftColour, i, 0.5);
            if (channels == 3)
                ex.prov.colour2_bit = draw_bit(cfg.rng_seed, kShiftColour2, i, 0.5);
        } else {
            Rng pick(mix_seed(cfg.rng_seed, kShiftDigitPick, static_cast<uint64_t>(i)));
            int64_t j = static_cast<int64_t>(pick.uniform_below(static_cast<uint64_t>(n)));
            pool14(raw.images, j, ex.digit.data());
            ex.prov.digit_group = raw.digit_labels[static_cast<size_t>(j)] >= 5;
            ex.prov.colour_bit = draw_bit(cfg.rng_seed, kShiftColour, i, 0.5);
            ex.prov.colour2_bit =
                label != draw_bit(cfg.rng_seed, kColour2, i, cfg.colour2_flip_prob);
        }
    }

    ColoredDataset all = assemble(std::move(drafts), variant, Role::AdaptTest, cfg, channels);

    auto slice = [&](int64_t begin, int64_t count, Role role) {
        ColoredDataset out;
        out.variant = all.variant;
        out.role = role;
        out.rng_seed = all.rng_seed;
        out.channels = all.channels;
        out.inputs = ad::Tensor({count, all.input_dim()});
        std::copy(all.inputs.data() + begin * all.input_dim(),
                  all.inputs.data() + (begin + count) * all.input_dim(), out.inputs.data());
        out.labels.assign(all.labels.begin() + begin, all.labels.begin() + begin + count);
        out.provenance.assign(all.provenance.begin() + begin,
                              all.provenance.begin() + begin + count);
        return out;
    };
    return ShiftedTestset{slice(0, 500, Role::AdaptTrain), slice(500, 500, Role::AdaptVal),
                          slice(1000, 9000, Role::AdaptTest)};
}

DatasetStats dataset_stats(const ColoredDataset& ds) {
    DatasetStats s;
    s.n = ds.size();
    if (s.n == 0) return s;
    int64_t ones = 0, digit_hits = 0, colour_hits = 0, colour2_hits = 0, colour2_n = 0;
    for (int64_t i = 0; i < s.n; ++i) {
        int32_t label = ds.labels[static_cast<size_t>(i)];
        const Provenance& p = ds.provenance[static_cast<size_t>(i)];
        ones += label == 1;
        digit_hits += p.digit_group == label;
        colour_hits += p.colour_bit == label;
        if (p.colour2_bit >= 0) {
            ++colour2_n;
            colour2_hits += p.colour2_bit == label;
        }
    }
    s.class_balance = static_cast<double>(ones) / static_cast<double>(s.n);
    s.digit_agreement = static_cast<double>(digit_hits) / static_cast<double>(s.n);
    s.colour_agreement = static_cast<double>(colour_hits) / static_cast<double>(s.n);
    if (colour2_n > 0)
        s.colour2_agreement = static_cast<double>(colour2_hits) / static_cast<double>(colour2_n);
    return s;
}

}  // namespace tcdiv::data
