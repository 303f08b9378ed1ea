#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "advlab/attacks.hpp"
#include "advlab/fuzz.hpp"
#include "support/linear.hpp"

using namespace advlab;
using namespace linear;

TEST(PgdConfig, ValidatesItsParameters) {
    PgdConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_DOUBLE_EQ(c.step(), c.epsilon / 10.0);
    c.epsilon = 1.5;
    EXPECT_THROW(c.validate(), ContractError);
    c.epsilon = 0.1;
    c.alpha = 0.2;
    EXPECT_THROW(c.validate(), ContractError);
    c.alpha = 0.0;
    EXPECT_THROW(c.validate(), ContractError);
    c.epsilon = 0.0;
    EXPECT_NO_THROW(c.validate());
    c.max_iters = 0;
    EXPECT_THROW(c.validate(), ContractError);
}

TEST(CwConfig, ValidatesItsParameters) {
    CwConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.kappa, 20.0);
    c.kappa = -1.0;
    EXPECT_THROW(c.validate(), ContractError);
    c.kappa = 0.0;
    c.step_size = 0.0;
    EXPECT_THROW(c.validate(), ContractError);
}

TEST(Pgd, EpsilonZeroReturnsTheInputUnchanged) {
    SplitMix64 rng(31);
    for (int i = 0; i < 50; ++i) {
        const TrainedModel m = random_model(rng, 6, {5}, 4);
        const Tensor x = random_unit_input(rng, 6);
        PgdConfig cfg;
        cfg.epsilon = 0.0;
        cfg.alpha = 0.0;
        cfg.max_iters = 5;
        const auto out = pgd_attack(m, x, m.predicted_class(x), cfg);
        EXPECT_EQ(out.adversarial, x);
        EXPECT_FALSE(out.success);
        EXPECT_EQ(out.perturbation_linf, 0.0);
    }
}

TEST(Pgd, FuzzedAttacksStayInTheBallAndTheBox) {
    SplitMix64 rng(32);
    for (int i = 0; i < 300; ++i) {
        const PgdFuzzCase c = random_pgd_case(rng);
        const auto out = pgd_attack(c.model, c.input, c.true_class, c.config);
        const auto problem = pgd_soundness_problem(c.input, out, c.config.epsilon);
        EXPECT_FALSE(problem) << "case " << i << ": " << problem.value_or("");
        EXPECT_LE(out.perturbation_linf, c.config.epsilon + 1e-12);
    }
}

TEST(Pgd, OneStepOnALinearModelFollowsTheGradientSign) {
    SplitMix64 rng(33);
    for (int i = 0; i < 100; ++i) {
        const LinearCase c = random_linear_case(rng, 2 + rng.below(5));
        const TrainedModel m = linear_model(c.w, c.b);
        PgdConfig cfg;
        cfg.epsilon = rng.uniform(0.01, 0.5);
        cfg.alpha = cfg.epsilon;
        cfg.max_iters = 1;
        const auto out = pgd_attack(m, c.x, c.k, cfg);
        const auto want = one_step_pgd(c, cfg.epsilon);
        for (std::size_t j = 0; j < c.x.size(); ++j) EXPECT_EQ(out.adversarial[j], want[j]) << "case " << i;
    }
}

TEST(Pgd, StopsAtTheFirstSuccessfulIterate) {
    SplitMix64 rng(34);
    int checked = 0;
    for (int i = 0; i < 100; ++i) {
        const TrainedModel m = random_model(rng, 8, {10}, 5);
        const Tensor x = random_unit_input(rng, 8);
        const std::size_t k = m.predicted_class(x);
        PgdConfig cfg;
        cfg.epsilon = 0.4;
        cfg.max_iters = 40;
        std::vector<std::size_t> preds;
        const auto out = pgd_attack(m, x, k, cfg, [&](int, const Tensor& adv) { preds.push_back(m.predicted_class(adv)); });
        ASSERT_EQ(static_cast<int>(preds.size()), out.iterations_used);
        if (!out.success) continue;
        ++checked;
        for (std::size_t n = 0; n + 1 < preds.size(); ++n) EXPECT_EQ(preds[n], k);
        EXPECT_NE(preds.back(), k);
        EXPECT_EQ(out.final_predicted_class, preds.back());
    }
    EXPECT_GT(checked, 20);
}

TEST(Pgd, TargetedAttackReachesTheTarget) {
    SplitMix64 rng(35);
    int successes = 0;
    for (int i = 0; i < 50; ++i) {
        const TrainedModel m = random_model(rng, 8, {10}, 4);
        const Tensor x = random_unit_input(rng, 8);
        const std::size_t k = m.predicted_class(x);
        PgdConfig cfg;
        cfg.epsilon = 0.5;
        cfg.max_iters = 60;
        cfg.mode = AttackMode::targeted_at((k + 1) % 4);
        const auto out = pgd_attack(m, x, k, cfg);
        if (out.success) {
            ++successes;
            EXPECT_EQ(out.final_predicted_class, (k + 1) % 4);
        }
    }
    EXPECT_GT(successes, 10);
}

TEST(Pgd, PreconditionsAreChecked) {
    SplitMix64 rng(36);
    const TrainedModel m = random_model(rng, 3, {}, 3);
    const Tensor x = Tensor::vector({0.2, 0.5, 0.7});
    const std::size_t k = m.predicted_class(x);
    EXPECT_THROW(pgd_attack(m, x, (k + 1) % 3, PgdConfig{}), ContractError);
    EXPECT_THROW(pgd_attack(m, Tensor::vector({0.2, 1.5, 0.7}), k, PgdConfig{}), ContractError);
    PgdConfig targeted;
    targeted.mode = AttackMode::targeted_at(k);
    EXPECT_THROW(pgd_attack(m, x, k, targeted), ContractError);
    targeted.mode = AttackMode::targeted_at(7);
    EXPECT_ANY_THROW(pgd_attack(m, x, k, targeted));
}

TEST(Pgd, NonFiniteGradientReportsTheIteration) {
    Tensor w = Tensor::matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
    const TrainedModel good = linear_model(w, Tensor::vector({0.0, 0.0}));
    const Tensor x = Tensor::vector({0.9, 0.1});
    w[1] = std::numeric_limits<double>::infinity();
    const TrainedModel bad = linear_model(w, Tensor::vector({0.0, 0.0}));
    ASSERT_EQ(good.predicted_class(x), 0u);
    try {
        pgd_attack(bad, x, bad.predicted_class(x), PgdConfig{});
        FAIL() << "expected AttackNumericError";
    } catch (const AttackNumericError& e) {
        EXPECT_EQ(e.iteration(), 1);
    }
}

TEST(MarginLoss, MatchesBruteForceAndSaturatesAtMinusKappa) {
    SplitMix64 rng(37);
    for (double kappa : {0.0, 1.0, 20.0}) {
        for (int i = 0; i < 300; ++i) {
            std::vector<double> z(2 + rng.below(8));
            for (double& v : z) v = 25.0 * rng.normal();
            const std::size_t c = rng.below(z.size());
            const double got = cw_loss(Tensor::vector(z), c, kappa);
            EXPECT_EQ(got, margin_loss_oracle(z, c, kappa));
            double runner = -INFINITY;
            for (std::size_t j = 0; j < z.size(); ++j)
                if (j != c) runner = std::max(runner, z[j]);
            if (z[c] - runner >= kappa) {
                EXPECT_EQ(got, -kappa);
            }
        }
    }
}

TEST(MarginLoss, SpecExamples) {
    const Tensor z = Tensor::vector({3.0, 1.0, 0.5});
    EXPECT_EQ(cw_loss(z, 0, 0.0), 0.0);
    EXPECT_EQ(cw_loss(z, 1, 0.0), 2.0);
    EXPECT_EQ(cw_loss(z, 0, 1.0), -1.0);
    EXPECT_EQ(cw_loss(z, 0, 20.0), -2.0);
    EXPECT_EQ(cw_loss_untargeted(z, 0, 1.0), 2.0);
    EXPECT_EQ(cw_loss_untargeted(z, 1, 1.0), -1.0);
    EXPECT_THROW(cw_loss(Tensor::vector({1.0}), 0, 0.0), ContractError);
}

TEST(Cw, BinaryLinearDistanceMatchesTheAnalyticMargin) {
    SplitMix64 rng(38);
    for (int i = 0; i < 50; ++i) {
        const LinearCase c = random_cw_case(rng);
        const double distance = boundary_distance(c, 1 - c.k);
        CwConfig cfg;
        cfg.kappa = 0.0;
        cfg.step_size = 2e-3;
        cfg.max_iters = 20000;
        const auto out = cw_attack(linear_model(c.w, c.b), c.x, c.k, cfg);
        ASSERT_TRUE(out.success) << "case " << i;
        EXPECT_GE(out.perturbation_l2, distance * (1 - 1e-9));
        EXPECT_LE(out.perturbation_l2, distance * 1.05) << "case " << i;
    }
}

TEST(Cw, OutputStaysInTheUnitBox) {
    SplitMix64 rng(39);
    for (int i = 0; i < 30; ++i) {
        const TrainedModel m = random_model(rng, 6, {8}, 4);
        Tensor x = random_unit_input(rng, 6);
        x[0] = 0.0;
        x[1] = 1.0;
        CwConfig cfg;
        cfg.max_iters = 200;
        cfg.step_size = 0.1;
        const auto out = cw_attack(m, x, m.predicted_class(x), cfg);
        for (double v : out.adversarial.data()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(AttackUntil, TraceAgreesWithDirectPredictions) {
    SplitMix64 rng(40);
    const TrainedModel source = random_model(rng, 8, {10}, 4, "source");
    const TrainedModel other = random_model(rng, 8, {6}, 4, "other");
    for (int i = 0; i < 20; ++i) {
        const Tensor x = random_unit_input(rng, 8);
        const std::size_t k = source.predicted_class(x);
        PgdConfig cfg;
        cfg.epsilon = 0.3;
        cfg.max_iters = 25;
        std::vector<Tensor> iterates;
        const auto direct = pgd_attack(source, x, k, cfg, [&](int, const Tensor& a) { iterates.push_back(a); });
        const auto trace = attack_until(source, x, k, AttackConfig::pgd(cfg), {&source, &other});
        EXPECT_EQ(trace.outcome.adversarial, direct.adversarial);
        ASSERT_EQ(trace.steps.size(), iterates.size());
        for (std::size_t n = 0; n < iterates.size(); ++n) {
            EXPECT_EQ(trace.steps[n].predicted_class, source.predicted_class(iterates[n]));
            EXPECT_EQ(trace.steps[n].success[1], other.predicted_class(iterates[n]) != k);
        }
        if (direct.success) {
            EXPECT_EQ(trace.first_success[0], direct.iterations_used);
        }
    }
    EXPECT_THROW(attack_until(source, random_unit_input(rng, 8), 0, AttackConfig::pgd({}), {}), ContractError);
}
