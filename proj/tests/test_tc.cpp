#include <doctest.h>

#include <cmath>

#include "ad/grad_check.hpp"
#include "support/estimator_fixtures.hpp"
#include "tc/estimators.hpp"
#include "tc/oracles.hpp"

using namespace tcdiv;

namespace {

// p(0,0)=p(1,1)=0.4, p(0,1)=p(1,0)=0.1 -> TC ~ 0.1927 nats.
tc::DiscreteJoint skewed_pair() { return tc::DiscreteJoint({2, 2}, {0.4, 0.1, 0.1, 0.4}); }

// Three perfectly tied uniform bits (X1, X2, Y).
tc::DiscreteJoint tied_triple() {
    return tc::DiscreteJoint({2, 2, 2}, {0.5, 0, 0, 0, 0, 0, 0, 0.5});
}

// Y uniform; X1 and X2 are independent copies of Y flipped w.p. 0.1.
tc::DiscreteJoint noisy_copies(double flip = 0.1) {
    std::vector<double> p(8, 0.0);
    for (int x1 = 0; x1 < 2; ++x1)
        for (int x2 = 0; x2 < 2; ++x2)
            for (int y = 0; y < 2; ++y)
                p[static_cast<size_t>(x1 * 4 + x2 * 2 + y)] =
                    0.5 * (x1 == y ? 1 - flip : flip) * (x2 == y ? 1 - flip : flip);
    return tc::DiscreteJoint({2, 2, 2}, std::move(p));
}

void zero_critic(nets::Critic& c) {
    for (ad::Tensor* p : nets::parameters(c))
        for (int64_t i = 0; i < p->numel(); ++i) (*p)[i] = 0.0;
}

}  // namespace

// --- oracles ------------------------------------------------------------

TEST_CASE("discrete joint validates its table") {
    CHECK_THROWS_AS(tc::DiscreteJoint({2, 2}, {0.5, 0.5, 0.5, 0.5}), InvalidArgument);
    CHECK_THROWS_AS(tc::DiscreteJoint({2, 2}, {1.2, -0.2, 0.0, 0.0}), InvalidArgument);
    CHECK_THROWS_AS(tc::DiscreteJoint({2, 2}, {0.5, 0.5}), InvalidArgument);
    CHECK_THROWS_AS(tc::DiscreteJoint({}, {}), InvalidArgument);
    CHECK_THROWS_AS(tc::DiscreteJoint({2, 0}, {}), InvalidArgument);
}

TEST_CASE("marginals and sampling agree with the table") {
    auto joint = skewed_pair();
    auto m0 = joint.marginal(0);
    CHECK(m0[0] == doctest::Approx(0.5));
    CHECK(m0[1] == doctest::Approx(0.5));

    Rng rng(5);
    int64_t hits = 0;
    const int64_t draws = 20000;
    for (int64_t i = 0; i < draws; ++i) {
        auto tup = joint.sample(rng);
        if (tup[0] == tup[1]) ++hits;
    }
    CHECK(static_cast<double>(hits) / static_cast<double>(draws) == doctest::Approx(0.8).epsilon(0.02));
}

TEST_CASE("total correlation of a product table is zero") {
    tc::DiscreteJoint joint({2, 2}, {0.3 * 0.45, 0.3 * 0.55, 0.7 * 0.45, 0.7 * 0.55});
    CHECK(std::fabs(tc::discrete_tc_oracle(joint)) < 1e-9);
}

TEST_CASE("total correlation of tied uniform bits is ln 2 per extra copy") {
    tc::DiscreteJoint pair({2, 2}, {0.5, 0.0, 0.0, 0.5});
    CHECK(tc::discrete_tc_oracle(pair) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(tc::discrete_tc_oracle(tied_triple()) ==
          doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("total correlation of the skewed pair matches the enumeration") {
    CHECK(tc::discrete_tc_oracle(skewed_pair()) == doctest::Approx(0.1927447570217573));
}

TEST_CASE("conditional oracle weights per-label tables") {
    // X1, X2 independent given Y but strongly dependent marginally.
    tc::DiscreteJoint given0({2, 2}, {0.81, 0.09, 0.09, 0.01});
    tc::DiscreteJoint given1({2, 2}, {0.01, 0.09, 0.09, 0.81});
    std::vector<tc::DiscreteJoint> tables{given0, given1};
    std::vector<double> py{0.5, 0.5};
    CHECK(std::fabs(tc::discrete_conditional_tc_oracle(tables, py)) < 1e-9);

    // The label-marginalized joint keeps the dependence.
    tc::DiscreteJoint mixed({2, 2}, {0.41, 0.09, 0.09, 0.41});
    CHECK(tc::discrete_tc_oracle(mixed) == doctest::Approx(0.2217536937498511));

    // Copies stay copies no matter the label.
    tc::DiscreteJoint copies({2, 2}, {0.5, 0.0, 0.0, 0.5});
    std::vector<tc::DiscreteJoint> copy_tables{copies, copies};
    CHECK(tc::discrete_conditional_tc_oracle(copy_tables, py) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));

    CHECK_THROWS_AS(tc::discrete_conditional_tc_oracle(tables, std::vector<double>{0.7, 0.7}),
                    InvalidArgument);
    std::vector<tc::DiscreteJoint> mismatched{given0, tied_triple()};
    CHECK_THROWS_AS(tc::discrete_conditional_tc_oracle(mismatched, py), InvalidArgument);
}

TEST_CASE("gaussian oracle is the closed form") {
    CHECK(tc::gaussian_mi_oracle(0.0) == 0.0);
    CHECK(tc::gaussian_mi_oracle(0.8) == doctest::Approx(0.5108256237659907));
    CHECK(tc::gaussian_mi_oracle(-0.8) == tc::gaussian_mi_oracle(0.8));
    CHECK_THROWS_AS(tc::gaussian_mi_oracle(1.0), InvalidArgument);
    CHECK_THROWS_AS(tc::gaussian_mi_oracle(-1.5), InvalidArgument);
}

// --- permutation plans ----------------------------------------------------

TEST_CASE("permutation plans are in range and reproducible") {
    auto plan = tc::make_permutation_plan(256, 3, 64, 99);
    CHECK(plan.m() == 64);
    CHECK(plan.indices.size() == 64 * 3);
    for (int32_t idx : plan.indices) {
        CHECK(idx >= 0);
        CHECK(idx < 256);
    }
    auto again = tc::make_permutation_plan(256, 3, 64, 99);
    CHECK(plan.indices == again.indices);
    auto other = tc::make_permutation_plan(256, 3, 64, 100);
    CHECK(plan.indices != other.indices);

    auto col = plan.column(1);
    CHECK(col.size() == 64);
    CHECK(col[0] == plan.indices[1]);

    CHECK_THROWS_AS(tc::make_permutation_plan(0, 3, 64, 1), InvalidArgument);
    CHECK_THROWS_AS(tc::make_permutation_plan(256, 0, 64, 1), InvalidArgument);
    CHECK_THROWS_AS(tc::make_permutation_plan(256, 3, 0, 1), InvalidArgument);
    CHECK_THROWS_AS(plan.column(3), InvalidArgument);
}

// --- estimator exactness ----------------------------------------------------

TEST_CASE("zeroed critic gives exactly zero estimates") {
    auto critic = nets::init_critic(2, 1, 8);
    zero_critic(critic);
    Rng rng(3);
    auto batch = testsup::sample_batch(noisy_copies(), 32, 2, 2, rng);

    ad::Tape t;
    auto bc = nets::bind_frozen(t, critic);
    std::vector<ad::NodeId> reps{t.constant(batch.reps[0]), t.constant(batch.reps[1])};
    auto f = tc::make_raw_scorer(bc);

    auto plan = tc::make_permutation_plan(32, 2, 8, 7);
    CHECK(t.value(tc::tc_nce_estimate(t, f, reps, plan)).item() == 0.0);
    CHECK(t.value(tc::conditional_tc_nce_estimate(t, f, reps, batch.labels, 8, 7)).item() == 0.0);
    double infonce = t.value(tc::infonce_estimate(t, f, reps[0], reps[1])).item();
    CHECK(std::fabs(infonce) < 1e-13);
}

TEST_CASE("constant scorers give zero estimates") {
    tc::Scorer constf = [](ad::Tape& t, std::span<const ad::NodeId> parts) {
        return t.constant(ad::Tensor::full({t.value(parts[0]).rows()}, 2.5));
    };
    Rng rng(4);
    auto batch = testsup::sample_batch(noisy_copies(), 48, 2, 2, rng);
    ad::Tape t;
    std::vector<ad::NodeId> reps{t.constant(batch.reps[0]), t.constant(batch.reps[1])};
    auto plan = tc::make_permutation_plan(48, 2, 16, 9);
    CHECK(std::fabs(t.value(tc::tc_nce_estimate(t, constf, reps, plan)).item()) < 1e-12);
    CHECK(std::fabs(
              t.value(tc::conditional_tc_nce_estimate(t, constf, reps, batch.labels, 16, 9)).item()) <
          1e-12);
    CHECK(std::fabs(t.value(tc::infonce_estimate(t, constf, reps[0], reps[1])).item()) < 1e-12);
}

TEST_CASE("estimates are invariant to adding a constant to the critic") {
    auto critic = nets::init_critic(2, 17, 16);
    auto shifted = critic;
    shifted.l3.b[0] += 3.21;  // shifts every score by the same constant

    Rng rng(6);
    auto batch = testsup::sample_batch(skewed_pair(), 64, 2, -1, rng);
    auto plan = tc::make_permutation_plan(64, 2, 16, 21);

    ad::Tape t;
    auto f1 = tc::make_raw_scorer(nets::bind_frozen(t, critic));
    auto f2 = tc::make_raw_scorer(nets::bind_frozen(t, shifted));
    std::vector<ad::NodeId> reps{t.constant(batch.reps[0]), t.constant(batch.reps[1])};

    double a = t.value(tc::tc_nce_estimate(t, f1, reps, plan)).item();
    double b = t.value(tc::tc_nce_estimate(t, f2, reps, plan)).item();
    CHECK(a == doctest::Approx(b).epsilon(1e-9));

    double ia = t.value(tc::infonce_estimate(t, f1, reps[0], reps[1])).item();
    double ib = t.value(tc::infonce_estimate(t, f2, reps[0], reps[1])).item();
    CHECK(ia == doctest::Approx(ib).epsilon(1e-9));
}

TEST_CASE("the contrastive bound never exceeds log K") {
    for (uint64_t seed = 0; seed < 10; ++seed) {
        auto critic = nets::init_critic(2, seed, 16);
        // Inflate the weights so the scores have real spread.
        for (ad::Tensor* p : nets::parameters(critic))
            for (int64_t i = 0; i < p->numel(); ++i) (*p)[i] *= 5.0;
        Rng rng(seed + 100);
        ad::Tensor x, y;
        testsup::sample_gaussian_pair(32, 0.8, rng, x, y);
        ad::Tape t;
        auto f = tc::make_raw_scorer(nets::bind_frozen(t, critic));
        double est = t.value(tc::infonce_estimate(t, f, t.constant(x), t.constant(y))).item();
        CHECK(est <= std::log(32.0) + 1e-12);
    }
}

TEST_CASE("a single all-labels group reproduces the unconditional path") {
    auto critic = nets::init_critic(2, 23, 16);
    Rng rng(8);
    auto batch = testsup::sample_batch(skewed_pair(), 40, 2, -1, rng);
    std::vector<int32_t> labels(40, 7);

    ad::Tape t;
    auto f = tc::make_raw_scorer(nets::bind_frozen(t, critic));
    std::vector<ad::NodeId> reps{t.constant(batch.reps[0]), t.constant(batch.reps[1])};
    const uint64_t seed = 31;
    double cond =
        t.value(tc::conditional_tc_nce_estimate(t, f, reps, labels, 16, seed)).item();
    auto plan = tc::make_permutation_plan(40, 2, 16, mix_seed(seed, 7));
    double uncond = t.value(tc::tc_nce_estimate(t, f, reps, plan)).item();
    CHECK(cond == uncond);
}

TEST_CASE("degenerate batches are rejected with a clear message") {
    auto critic = nets::init_critic(2, 2, 8);
    ad::Tape t;
    auto f = tc::make_raw_scorer(nets::bind_frozen(t, critic));
    ad::Tensor part({2, 1}, {1.0, -1.0});
    std::vector<ad::NodeId> reps{t.constant(part), t.constant(part)};
    std::vector<int32_t> labels{0, 1};  // two singleton groups
    CHECK_THROWS_WITH_AS(tc::conditional_tc_nce_estimate(t, f, reps, labels, 8, 1),
                         "batch has no label group of size >= 2", InvalidArgument);

    // One usable group alongside a skipped singleton is fine.
    ad::Tensor part3({3, 1}, {1.0, -1.0, 1.0});
    std::vector<ad::NodeId> reps3{t.constant(part3), t.constant(part3)};
    std::vector<int32_t> labels3{0, 0, 1};
    CHECK(std::isfinite(
        t.value(tc::conditional_tc_nce_estimate(t, f, reps3, labels3, 8, 1)).item()));
}

TEST_CASE("estimator inputs are validated") {
    auto critic = nets::init_critic(2, 2, 8);
    ad::Tape t;
    auto f = tc::make_raw_scorer(nets::bind_frozen(t, critic));
    ad::Tensor a({4, 1}), b({3, 1});
    std::vector<ad::NodeId> bad{t.constant(a), t.constant(b)};
    auto plan = tc::make_permutation_plan(4, 2, 2, 1);
    CHECK_THROWS_AS(tc::tc_nce_estimate(t, f, bad, plan), ShapeError);

    std::vector<ad::NodeId> ok{t.constant(a), t.constant(a)};
    auto wrong_vars = tc::make_permutation_plan(4, 3, 2, 1);
    CHECK_THROWS_AS(tc::tc_nce_estimate(t, f, ok, wrong_vars), InvalidArgument);
    auto wrong_batch = tc::make_permutation_plan(5, 2, 2, 1);
    CHECK_THROWS_AS(tc::tc_nce_estimate(t, f, ok, wrong_batch), InvalidArgument);

    std::vector<int32_t> short_labels{0, 0};
    CHECK_THROWS_AS(tc::conditional_tc_nce_estimate(t, f, ok, short_labels, 4, 1),
                    InvalidArgument);
    CHECK_THROWS_AS(tc::infonce_estimate(t, f, t.constant(a), t.constant(b)), ShapeError);
}

TEST_CASE("conditional estimates are deterministic in (critic, batch, seed)") {
    auto critic = nets::init_critic(2, 29, 16);
    Rng rng(9);
    auto batch = testsup::sample_batch(noisy_copies(), 64, 2, 2, rng);

    auto eval = [&](uint64_t seed) {
        ad::Tape t;
        auto bc = nets::bind_frozen(t, critic);
        return -t.value(tc::critic_loss_for_max(t, bc, batch, 16, seed)).item();
    };
    CHECK(eval(5) == eval(5));
    CHECK(eval(5) != eval(6));
}

// --- gradient structure -----------------------------------------------------

TEST_CASE("critic loss reaches only critic parameters") {
    auto critic = nets::init_critic(2, 37, 16);
    Rng rng(10);
    auto batch = testsup::sample_batch(noisy_copies(), 32, 2, 2, rng);

    ad::Tape t;
    std::vector<nets::ParamBinding> binds;
    auto bc = nets::bind_trainable(t, critic, binds);
    ad::NodeId loss = tc::critic_loss_for_max(t, bc, batch, 8, 55);
    auto grads = t.backward(loss);
    CHECK(grads.size() == binds.size());
    for (const auto& bind : binds) CHECK(grads.contains(bind.node));
}

TEST_CASE("one small critic step increases the estimate on the same batch") {
    auto critic = nets::init_critic(2, 41, 16);
    Rng rng(11);
    auto batch = testsup::sample_batch(noisy_copies(), 64, 2, 2, rng);
    const uint64_t plan_seed = 77;

    auto estimate = [&]() {
        ad::Tape t;
        auto bc = nets::bind_frozen(t, critic);
        return -t.value(tc::critic_loss_for_max(t, bc, batch, 16, plan_seed)).item();
    };

    double before = estimate();
    ad::Tape t;
    std::vector<nets::ParamBinding> binds;
    auto bc = nets::bind_trainable(t, critic, binds);
    auto grads = t.backward(tc::critic_loss_for_max(t, bc, batch, 16, plan_seed));
    for (const auto& bind : binds) {
        const ad::Tensor& g = grads.at(bind.node);
        for (int64_t i = 0; i < g.numel(); ++i) (*bind.tensor)[i] -= 1e-7 * g[i];
    }
    CHECK(estimate() > before);
}

TEST_CASE("critic loss gradients match finite differences") {
    auto critic = nets::init_critic(2, 47, 8);
    Rng rng(12);
    auto batch = testsup::sample_batch(noisy_copies(), 16, 2, 2, rng);

    auto make_fn = [&](int which) {
        return [&critic, &batch, which](ad::Tape& t, ad::NodeId p) {
            auto cn = [&](const ad::Tensor& v, int i) { return i == which ? p : t.constant(v); };
            nets::BoundCritic bc{{cn(critic.l1.w, 0), cn(critic.l1.b, 1)},
                                 {cn(critic.l2.w, 2), cn(critic.l2.b, 3)},
                                 {cn(critic.l3.w, 4), cn(critic.l3.b, 5)}};
            return tc::critic_loss_for_max(t, bc, batch, 4, 91);
        };
    };
    const ad::Tensor* blocks[6] = {&critic.l1.w, &critic.l1.b, &critic.l2.w,
                                   &critic.l2.b, &critic.l3.w, &critic.l3.b};
    for (int which = 0; which < 6; ++which) {
        double err = ad::grad_check(make_fn(which), *blocks[which], 1e-5);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("gradients flow into representations when they are trainable") {
    // The model update needs d(estimate)/d(reps); with leaf reps the
    // gradient map must cover them.
    auto critic = nets::init_critic(2, 53, 16);
    Rng rng(13);
    auto batch = testsup::sample_batch(noisy_copies(), 32, 2, 2, rng);

    ad::Tape t;
    auto bc = nets::bind_frozen(t, critic);
    ad::NodeId r0 = t.leaf(batch.reps[0]);
    ad::NodeId r1 = t.leaf(batch.reps[1]);
    std::vector<ad::NodeId> reps{r0, r1};
    auto f = tc::make_raw_scorer(bc);
    ad::NodeId est = tc::conditional_tc_nce_estimate(t, f, reps, batch.labels, 8, 3);
    auto grads = t.backward(est);
    CHECK(grads.contains(r0));
    CHECK(grads.contains(r1));
    CHECK(grads.size() == 2);
}

// --- trained-critic agreement -----------------------------------------------

TEST_CASE("trained critic tracks the enumeration oracle on the skewed pair") {
    auto joint = skewed_pair();
    testsup::CriticFitConfig cfg;
    cfg.batch = 128;
    auto critic = testsup::fit_critic(joint, 2, -1, cfg, 1);
    double est = testsup::average_estimate(critic, joint, 2, -1, cfg, 50, 1);
    CHECK(std::fabs(est - tc::discrete_tc_oracle(joint)) < 0.05);
}

TEST_CASE("trained critic stays near zero for a single variable") {
    tc::DiscreteJoint coin({2}, {0.5, 0.5});
    testsup::CriticFitConfig cfg;
    cfg.steps = 1000;
    cfg.batch = 128;
    auto critic = testsup::fit_critic(coin, 1, -1, cfg, 2);
    double est = testsup::average_estimate(critic, coin, 1, -1, cfg, 50, 2);
    CHECK(std::fabs(est) < 0.05);
}

TEST_CASE("perfect copies of the label separate the two estimators") {
    auto joint = tied_triple();
    testsup::CriticFitConfig cond;
    cond.conditional = true;
    cond.steps = 600;
    cond.batch = 128;
    auto cond_critic = testsup::fit_critic(joint, 2, 2, cond, 3);
    double cond_est = testsup::average_estimate(cond_critic, joint, 2, 2, cond, 50, 3);
    CHECK(std::fabs(cond_est) < 0.05);

    testsup::CriticFitConfig uncond;
    uncond.batch = 128;
    auto uncond_critic = testsup::fit_critic(joint, 2, -1, uncond, 3);
    double uncond_est = testsup::average_estimate(uncond_critic, joint, 2, -1, uncond, 50, 3);
    CHECK(uncond_est > 0.4);
}

TEST_CASE("conditionally independent variables estimate to zero given the label") {
    auto joint = noisy_copies();
    testsup::CriticFitConfig cfg;
    cfg.conditional = true;
    cfg.steps = 1000;
    cfg.batch = 128;
    auto critic = testsup::fit_critic(joint, 2, 2, cfg, 4);
    double est = testsup::average_estimate(critic, joint, 2, 2, cfg, 50, 4);
    CHECK(std::fabs(est) < 0.05);
}

TEST_CASE("trained bound recovers most of the gaussian mutual information") {
    testsup::InfonceFitConfig cfg;
    auto critic = testsup::fit_infonce_critic(cfg, 5);
    double est = testsup::average_infonce(critic, cfg, 100, 5);
    CHECK(est >= 0.35);
    CHECK(est <= tc::gaussian_mi_oracle(cfg.rho));
}
