#include <doctest.h>

#include <cmath>
#include <vector>

#include "data/generators.hpp"
#include "eval/protocols.hpp"
#include "nets/models.hpp"
#include "support/synthetic_digits.hpp"
#include "util/error.hpp"
#include "util/hash.hpp"
#include "util/rng.hpp"

using namespace tcdiv;
using namespace tcdiv::eval;

namespace {

ad::Tensor column(const std::vector<double>& v) {
    ad::Tensor t({static_cast<int64_t>(v.size()), 1});
    for (size_t i = 0; i < v.size(); ++i) t[static_cast<int64_t>(i)] = v[i];
    return t;
}

// FrozenOutputs with given per-model probabilities; each model's rep is its
// probability column so the splits pass shape checks.
FrozenOutputs make_outputs(const std::vector<std::vector<double>>& probs,
                           std::vector<int32_t> labels) {
    FrozenOutputs out;
    out.labels = std::move(labels);
    for (const auto& p : probs) {
        out.probs.push_back(ad::Tensor::vector(p));
        out.reps.push_back(column(p));
    }
    return out;
}

double objective(const ad::Tensor& x, const std::vector<int32_t>& y, const ad::Tensor& w,
                 double b, double l2) {
    int64_t n = x.dim(0), d = x.dim(1);
    double ce = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double z = b;
        for (int64_t c = 0; c < d; ++c) z += x.at(i, c) * w[c];
        // log(1 + e^-|z|) + max(0, z-ish): stable CE for label y.
        double m = std::max(z, 0.0);
        double lse = m + std::log(std::exp(-m) + std::exp(z - m));  // log(1 + e^z)
        ce += lse - y[static_cast<size_t>(i)] * z;
    }
    ce /= static_cast<double>(n);
    double pen = 0.0;
    for (int64_t c = 0; c < d; ++c) pen += w[c] * w[c];
    return ce + l2 * pen;
}

double grad_norm(const ad::Tensor& x, const std::vector<int32_t>& y, const ad::Tensor& w,
                 double b, double l2) {
    int64_t n = x.dim(0), d = x.dim(1);
    std::vector<double> gw(static_cast<size_t>(d), 0.0);
    double gb = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double z = b;
        for (int64_t c = 0; c < d; ++c) z += x.at(i, c) * w[c];
        double p = 1.0 / (1.0 + std::exp(-z));
        double r = (p - y[static_cast<size_t>(i)]) / static_cast<double>(n);
        for (int64_t c = 0; c < d; ++c) gw[static_cast<size_t>(c)] += r * x.at(i, c);
        gb += r;
    }
    double s = gb * gb;
    for (int64_t c = 0; c < d; ++c) {
        double g = gw[static_cast<size_t>(c)] + 2.0 * l2 * w[c];
        s += g * g;
    }
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("logreg separates a two-point set") {
    ad::Tensor x({2, 1}, {-1.0, 1.0});
    std::vector<int32_t> y{0, 1};
    LogRegModel m = fit_logreg(x, y, 0.0);
    CHECK(logreg_accuracy(m, x, y) == 1.0);
    CHECK(m.w[0] > 0.0);
}

TEST_CASE("logreg reaches a stationary point of the penalized objective") {
    Rng rng(42);
    int64_t n = 120, d = 6;
    ad::Tensor x({n, d});
    std::vector<int32_t> y;
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t c = 0; c < d; ++c) x.at(i, c) = rng.normal();
        y.push_back(x.at(i, 0) + 0.3 * rng.normal() > 0 ? 1 : 0);
    }
    double l2 = 0.01;
    LogRegModel m = fit_logreg(x, y, l2);
    CHECK(grad_norm(x, y, m.w, m.b, l2) < 1e-5);
    double f = objective(x, y, m.w, m.b, l2);
    Rng perturb(7);
    for (int trial = 0; trial < 4; ++trial) {
        ad::Tensor w2 = m.w;
        for (int64_t c = 0; c < d; ++c) w2[c] += 1e-3 * perturb.normal();
        double b2 = m.b + 1e-3 * perturb.normal();
        CHECK(objective(x, y, w2, b2, l2) >= f);
    }
}

TEST_CASE("heavy l2 collapses to the majority-rate predictor") {
    Rng rng(3);
    int64_t n = 200;
    ad::Tensor x({n, 4});
    std::vector<int32_t> y;
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t c = 0; c < 4; ++c) x.at(i, c) = rng.normal();
        y.push_back(i < 140 ? 1 : 0);
    }
    LogRegModel m = fit_logreg(x, y, 1e6);
    for (int64_t c = 0; c < 4; ++c) CHECK(std::abs(m.w[c]) < 1e-4);
    CHECK(m.b > 0.0);  // log-odds of the 0.7 base rate
    CHECK(logreg_accuracy(m, x, y) == doctest::Approx(0.7));
}

TEST_CASE("logreg rejects bad inputs") {
    ad::Tensor x({2, 1}, {0.0, 1.0});
    CHECK_THROWS_AS(fit_logreg(x, {1, 1}, 0.0), InvalidArgument);
    CHECK_THROWS_AS(fit_logreg(x, {0, 2}, 0.0), InvalidArgument);
    CHECK_THROWS_AS(fit_logreg(x, {0}, 0.0), InvalidArgument);
    CHECK_THROWS_AS(fit_logreg(x, {0, 1}, -1.0), InvalidArgument);
    CHECK_THROWS_AS(fit_logreg(ad::Tensor::vector({0.0, 1.0}), {0, 1}, 0.0), InvalidArgument);
    LogRegModel m = fit_logreg(x, {0, 1}, 0.0);
    ad::Tensor wide({2, 3});
    CHECK_THROWS_AS(logreg_accuracy(m, wide, {0, 1}), InvalidArgument);
}

TEST_CASE("logreg fits are deterministic") {
    Rng rng(9);
    ad::Tensor x({50, 3});
    std::vector<int32_t> y;
    for (int64_t i = 0; i < 50; ++i) {
        for (int64_t c = 0; c < 3; ++c) x.at(i, c) = rng.normal();
        y.push_back(static_cast<int32_t>(i % 2));
    }
    LogRegModel a = fit_logreg(x, y, 1e-3);
    LogRegModel b = fit_logreg(x, y, 1e-3);
    CHECK(a.b == b.b);
    for (int64_t c = 0; c < 3; ++c) CHECK(a.w[c] == b.w[c]);
}

TEST_CASE("grid selection keeps the first validation maximizer") {
    // Separable train and val: every grid value scores 1.0, so the tie
    // resolves to the first entry.
    ad::Tensor tr({4, 1}, {-2.0, -1.0, 1.0, 2.0});
    std::vector<int32_t> try_{0, 0, 1, 1};
    ad::Tensor va({2, 1}, {-1.5, 1.5});
    std::vector<int32_t> vay{0, 1};
    LogRegModel m = fit_logreg_grid(tr, try_, va, vay);
    CHECK(m.l2 == 0.0);
    CHECK_THROWS_AS(fit_logreg_grid(tr, try_, va, vay, std::span<const double>{}),
                    InvalidArgument);
}

TEST_CASE("a clean feature among noise evaluates near perfectly") {
    Rng rng(17);
    auto make = [&](int64_t n) {
        std::vector<std::vector<double>> probs(1);
        std::vector<int32_t> labels;
        FrozenOutputs out;
        ad::Tensor rep({n, 5});
        ad::Tensor p({n});
        for (int64_t i = 0; i < n; ++i) {
            int32_t y = static_cast<int32_t>(rng.uniform_below(2));
            labels.push_back(y);
            rep.at(i, 0) = y == 1 ? 1.0 : -1.0;
            for (int64_t c = 1; c < 5; ++c) rep.at(i, c) = rng.normal();
            p[i] = rng.uniform();  // probabilities carry no signal
        }
        out.labels = labels;
        out.reps.push_back(rep);
        out.probs.push_back(p);
        return out;
    };
    FrozenOutputs tr = make(300), va = make(200), te = make(500);
    double acc = protocol_linear(tr, va, te);
    CHECK(acc >= 0.99);
}

TEST_CASE("protocol_best selects by validation accuracy, not test accuracy") {
    // Model 0 is perfect on test but weak on val; model 1 is the reverse.
    std::vector<int32_t> y{0, 0, 1, 1};
    FrozenOutputs tr = make_outputs({{0.1, 0.1, 0.9, 0.9}, {0.1, 0.1, 0.9, 0.9}}, y);
    FrozenOutputs va = make_outputs({{0.9, 0.1, 0.9, 0.1}, {0.1, 0.1, 0.9, 0.9}}, y);
    FrozenOutputs te = make_outputs({{0.1, 0.1, 0.9, 0.9}, {0.9, 0.9, 0.1, 0.1}}, y);
    CHECK(protocol_best(tr, va, te) == 0.0);
}

TEST_CASE("protocol_best breaks ties toward the lowest index") {
    std::vector<int32_t> y{0, 1};
    FrozenOutputs tr = make_outputs({{0.1, 0.9}, {0.1, 0.9}}, y);
    FrozenOutputs va = make_outputs({{0.1, 0.9}, {0.1, 0.9}}, y);
    FrozenOutputs te = make_outputs({{0.1, 0.9}, {0.9, 0.1}}, y);  // model 1 inverted
    CHECK(protocol_best(tr, va, te) == 1.0);
}

TEST_CASE("protocol_best never beats the best individual test accuracy") {
    Rng rng(23);
    int n_models = 4;
    auto draw = [&](int64_t rows) {
        std::vector<std::vector<double>> probs(static_cast<size_t>(n_models));
        std::vector<int32_t> labels;
        for (int64_t i = 0; i < rows; ++i) labels.push_back(static_cast<int32_t>(rng.uniform_below(2)));
        for (auto& p : probs)
            for (int64_t i = 0; i < rows; ++i) p.push_back(rng.uniform());
        return make_outputs(probs, labels);
    };
    FrozenOutputs tr = draw(50), va = draw(100), te = draw(200);
    double best = protocol_best(tr, va, te);
    double cap = 0.0;
    for (int j = 0; j < n_models; ++j) {
        int64_t hits = 0;
        for (int64_t i = 0; i < te.rows(); ++i) {
            int32_t pred = te.probs[static_cast<size_t>(j)][i] > 0.5 ? 1 : 0;
            if (pred == te.labels[static_cast<size_t>(i)]) ++hits;
        }
        cap = std::max(cap, static_cast<double>(hits) / static_cast<double>(te.rows()));
    }
    CHECK(best <= cap);
}

TEST_CASE("single-model ensemble matches protocol_best on confident outputs") {
    Rng rng(31);
    auto draw = [&](int64_t rows) {
        std::vector<double> p;
        std::vector<int32_t> labels;
        for (int64_t i = 0; i < rows; ++i) {
            int32_t y = static_cast<int32_t>(i % 2);
            labels.push_back(y);
            bool correct = rng.uniform() < 0.8;
            double hi = 0.7 + 0.25 * rng.uniform();
            p.push_back(correct == (y == 1) ? hi : 1.0 - hi);
        }
        return make_outputs({p}, labels);
    };
    FrozenOutputs tr = draw(400), va = draw(200), te = draw(600);
    double ens = protocol_ensemble(tr, va, te);
    double best = protocol_best(tr, va, te);
    CHECK(ens == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("label-randomized adaptation stays near chance") {
    Rng rng(57);
    auto draw = [&](int64_t rows, int n_models) {
        std::vector<std::vector<double>> probs(static_cast<size_t>(n_models));
        std::vector<int32_t> labels;
        for (int64_t i = 0; i < rows; ++i) labels.push_back(static_cast<int32_t>(rng.uniform_below(2)));
        for (auto& p : probs)
            for (int64_t i = 0; i < rows; ++i) p.push_back(rng.uniform());
        return make_outputs(probs, labels);
    };
    FrozenOutputs tr = draw(500, 3), va = draw(500, 3), te = draw(5000, 3);
    CHECK(protocol_ensemble(tr, va, te) == doctest::Approx(0.5).epsilon(0.07));
    CHECK(protocol_linear(tr, va, te) == doctest::Approx(0.5).epsilon(0.07));
    CHECK(protocol_best(tr, va, te) == doctest::Approx(0.5).epsilon(0.07));
}

TEST_CASE("protocols are pure functions of their inputs") {
    Rng rng(71);
    auto draw = [&](int64_t rows) {
        std::vector<std::vector<double>> probs(2);
        std::vector<int32_t> labels;
        for (int64_t i = 0; i < rows; ++i) labels.push_back(static_cast<int32_t>(rng.uniform_below(2)));
        for (auto& p : probs)
            for (int64_t i = 0; i < rows; ++i) p.push_back(rng.uniform());
        return make_outputs(probs, labels);
    };
    FrozenOutputs tr = draw(120), va = draw(80), te = draw(300);
    double l2_a = -1.0, l2_b = -1.0;
    double a = protocol_ensemble(tr, va, te, kDefaultL2Grid, &l2_a);
    double b = protocol_ensemble(tr, va, te, kDefaultL2Grid, &l2_b);
    CHECK(a == b);
    CHECK(l2_a == l2_b);
    CHECK(protocol_linear(tr, va, te) == protocol_linear(tr, va, te));
}

TEST_CASE("protocol inputs are validated") {
    std::vector<int32_t> y{0, 1};
    FrozenOutputs two = make_outputs({{0.1, 0.9}, {0.2, 0.8}}, y);
    FrozenOutputs one = make_outputs({{0.1, 0.9}}, y);
    CHECK_THROWS_AS(protocol_best(two, one, two), InvalidArgument);
    FrozenOutputs empty;
    CHECK_THROWS_AS(protocol_best(empty, two, two), InvalidArgument);
    FrozenOutputs bad = two;
    bad.probs[0] = ad::Tensor::vector({0.5});
    CHECK_THROWS_AS(protocol_best(bad, bad, bad), InvalidArgument);
}

TEST_CASE("frozen outputs have the right shapes and stay in range") {
    data::RawDigits raw = testsup::make_synthetic_digits(600, 3);
    data::GeneratorConfig cfg;
    cfg.rng_seed = 5;
    data::ColoredDataset ds = data::make_cmnist_train(raw, cfg);
    nets::ModelCollection c = nets::init_collection(2, ds.input_dim(), 99);
    FrozenOutputs out = compute_frozen_outputs(c, ds);
    CHECK(out.n() == 2);
    CHECK(out.rows() == ds.size());
    CHECK(out.reps[0].dim(1) == nets::kReprDim);
    for (const ad::Tensor& p : out.probs)
        for (int64_t i = 0; i < p.dim(0); ++i) {
            CHECK(p[i] >= 0.0);
            CHECK(p[i] <= 1.0);
        }

    FrozenOutputs again = compute_frozen_outputs(c, ds);
    for (int j = 0; j < 2; ++j) {
        const ad::Tensor& a = out.reps[static_cast<size_t>(j)];
        const ad::Tensor& b = again.reps[static_cast<size_t>(j)];
        CHECK(fnv1a_bytes(a.data(), static_cast<size_t>(a.numel()) * sizeof(double)) ==
              fnv1a_bytes(b.data(), static_cast<size_t>(b.numel()) * sizeof(double)));
    }

    nets::ModelCollection wide = nets::init_collection(1, 588, 99);
    CHECK_THROWS_AS(compute_frozen_outputs(wide, ds), InvalidArgument);
}

TEST_CASE("zeroed classifier yields exactly even probabilities") {
    data::RawDigits raw = testsup::make_synthetic_digits(100, 21);
    data::GeneratorConfig cfg;
    data::ColoredDataset ds = data::make_cmnist_train(raw, cfg);
    nets::ModelCollection c = nets::init_collection(1, ds.input_dim(), 4);
    nets::LinearClassifier& cls = c.models[0].cls;
    for (int64_t i = 0; i < cls.out.w.numel(); ++i) cls.out.w[i] = 0.0;
    for (int64_t i = 0; i < cls.out.b.numel(); ++i) cls.out.b[i] = 0.0;
    FrozenOutputs out = compute_frozen_outputs(c, ds);
    for (int64_t i = 0; i < out.rows(); ++i) CHECK(out.probs[0][i] == 0.5);
}

TEST_CASE("full shifted pipeline evaluates end to end") {
    data::RawDigits raw = testsup::make_synthetic_digits(10000, 13);
    data::GeneratorConfig cfg;
    cfg.rng_seed = 81;
    cfg.shift = data::Shift::DigitOnly;
    data::ShiftedTestset shifted = data::make_shifted_testset(raw, cfg, data::Variant::CMnist);
    nets::ModelCollection c = nets::init_collection(2, shifted.adapt_train.input_dim(), 7);
    FrozenOutputs tr = compute_frozen_outputs(c, shifted.adapt_train);
    FrozenOutputs va = compute_frozen_outputs(c, shifted.adapt_val);
    FrozenOutputs te = compute_frozen_outputs(c, shifted.adapt_test);
    double l2 = -1.0;
    double lin = protocol_linear(tr, va, te, kDefaultL2Grid, &l2);
    CHECK(lin >= 0.35);
    CHECK(lin <= 1.0);
    CHECK(l2 >= 0.0);
    double ens = protocol_ensemble(tr, va, te);
    CHECK(ens >= 0.3);
    CHECK(ens <= 1.0);
    double best = protocol_best(tr, va, te);
    CHECK(best >= 0.3);
    CHECK(best <= 1.0);
}
