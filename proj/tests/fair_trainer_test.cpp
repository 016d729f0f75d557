/*
 * Copyright 2026 The FairFed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fairfed/fair_trainer.hpp"
#include "test_util.hpp"

namespace fairfed {
namespace {

using Vd = std::vector<double>;
using Vi = std::vector<int>;

FairnessConfig all_constraints(double lambda_max = 10.0) {
  FairnessConfig c;
  c.enabled = {true, true, true};
  c.lambda_max = lambda_max;
  return c;
}

ClientDataset random_client(std::size_t n, std::size_t d, std::size_t G,
                            std::mt19937_64& gen) {
  ClientDataset c;
  c.features = test::random_matrix(n, d, gen);
  c.group_count = G;
  for (std::size_t i = 0; i < n; ++i) {
    c.groups.push_back(static_cast<int>(i % G));
    // Labels depend on group so every constraint is violated at init.
    const double base = c.groups.back() == 0 ? 0.7 : 0.3;
    c.labels.push_back(std::uniform_real_distribution<double>(0, 1)(gen) < base);
  }
  return c;
}

// Solves -(log q + 3 log(q - 2/3)) / 4 = 1 for q in (2/3, 1) by bisection.
double solve_unit_base_loss() {
  double lo = 2.0 / 3.0 + 1e-12, hi = 1.0 - 1e-15;
  auto f = [](double q) {
    return -(std::log(q) + 3 * std::log(q - 2.0 / 3.0)) / 4 - 1.0;
  };
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

TEST(LagrangianLoss, ZeroMultiplierEqualsBaseLoss) {
  const Vd p{0.9, 0.2, 0.6, 0.4};
  const Vi y{1, 0, 0, 1}, a{0, 0, 1, 1};
  const auto cfg = all_constraints();
  const auto zero = LagrangeMultipliers::filled(cfg, 2, 0.0);
  const double base =
      -(std::log(0.9) + std::log(0.8) + std::log(0.4) + std::log(0.4)) / 4;
  EXPECT_DOUBLE_EQ(lagrangian_loss(p, y, a, 2, zero, cfg), base);
  FairnessConfig none;
  const auto empty = LagrangeMultipliers::filled(none, 2, 0.0);
  EXPECT_EQ(lagrangian_loss(p, y, a, 2, zero, cfg),
            lagrangian_loss(p, y, a, 2, empty, none));
}

TEST(LagrangianLoss, SatisfiedConstraintsLeaveBaseLoss) {
  // Identical predictions in every group: no violation of any constraint.
  const Vd p{0.3, 0.7, 0.3, 0.7};
  const Vi y{0, 1, 0, 1}, a{0, 0, 1, 1};
  const auto cfg = all_constraints();
  const auto lam = LagrangeMultipliers::filled(cfg, 2, cfg.lambda_max);
  const auto zero = LagrangeMultipliers::filled(cfg, 2, 0.0);
  EXPECT_EQ(lagrangian_loss(p, y, a, 2, lam, cfg),
            lagrangian_loss(p, y, a, 2, zero, cfg));
}

TEST(LagrangianLoss, UnitBasePlusTwiceHalfPenalty) {
  // One group-0 row at q and three group-1 rows at q - 2/3, all positive:
  // DemP violation 3/4 * 2/3 = 0.5 and mean cross-entropy 1.
  const double q = solve_unit_base_loss();
  const Vd p{q, q - 2.0 / 3.0, q - 2.0 / 3.0, q - 2.0 / 3.0};
  const Vi y{1, 1, 1, 1}, a{0, 1, 1, 1};
  FairnessConfig cfg;
  cfg.enabled = {true, false, false};
  const auto lam = LagrangeMultipliers::filled(cfg, 2, 2.0);
  const auto t = fairness_penalties(p, y, a, 2, cfg);
  EXPECT_NEAR(t.penalty[0][0], 0.5, 1e-12);
  EXPECT_NEAR(lagrangian_loss(p, y, a, 2, lam, cfg), 2.0, 1e-12);
}

TEST(LagrangianLoss, ThresholdActsAsSlack) {
  const Vd p{0.9, 0.9, 0.1, 0.1};
  const Vi y{1, 0, 1, 0}, a{0, 0, 1, 1};
  FairnessConfig cfg;
  cfg.enabled = {true, false, false};
  EXPECT_NEAR(fairness_penalties(p, y, a, 2, cfg).penalty[0][0], 0.4, 1e-15);
  cfg.threshold[0] = 0.1;
  EXPECT_NEAR(fairness_penalties(p, y, a, 2, cfg).penalty[0][0], 0.3, 1e-15);
  cfg.threshold[0] = 0.5;
  EXPECT_EQ(fairness_penalties(p, y, a, 2, cfg).penalty[0][0], 0.0);
}

TEST(LagrangianLoss, RejectsOutOfBoundMultipliers) {
  const auto cfg = all_constraints(1.0);
  const auto lam = LagrangeMultipliers::filled(cfg, 2, 1.5);
  EXPECT_THROW(lagrangian_loss(Vd{0.5, 0.5}, Vi{0, 1}, Vi{0, 1}, 2, lam, cfg),
               Error);
}

TEST(ProjectLambda, Examples) {
  FairnessConfig cfg;
  cfg.enabled = {true, true, true};
  LagrangeMultipliers l;
  l.values = {Vd{-0.1}, Vd{4.0}, Vd{2.5}};
  const auto p = project_lambda(l, 3.0);
  EXPECT_EQ(p.values[0][0], 0.0);
  EXPECT_EQ(p.values[1][0], 3.0);
  EXPECT_EQ(p.values[2][0], 2.5);
}

TEST(Multipliers, SlotCounts) {
  auto cfg = all_constraints();
  EXPECT_EQ(multiplier_slots(cfg, Constraint::kEO, 3), 1u);
  cfg.multipliers = MultiplierMode::kPerCell;
  EXPECT_EQ(multiplier_slots(cfg, Constraint::kDemP, 3), 3u);
  EXPECT_EQ(multiplier_slots(cfg, Constraint::kEO, 3), 6u);
  EXPECT_EQ(multiplier_slots(cfg, Constraint::kDI, 3), 1u);
  cfg.enabled[1] = false;
  EXPECT_EQ(multiplier_slots(cfg, Constraint::kEO, 3), 0u);
}

TEST(FairSgdStep, ZeroRatesLeaveStateUnchanged) {
  std::mt19937_64 gen(1);
  const auto d = random_client(40, 3, 2, gen);
  auto cfg = all_constraints();
  cfg.dual_lr = 0.0;
  FairTrainState s{test::random_model({3, 4, 1}, gen),
                   LagrangeMultipliers::filled(cfg, 2, 0.5), 0};
  const auto before = s;
  fair_sgd_step(s, full_batch(d), cfg, 0.0);
  EXPECT_EQ(s.theta, before.theta);
  EXPECT_EQ(s.lambda, before.lambda);
  EXPECT_EQ(s.step, 1u);
}

TEST(FairSgdStep, DualAscentFollowsPenalty) {
  std::mt19937_64 gen(2);
  const auto d = random_client(60, 3, 2, gen);
  const auto b = full_batch(d);
  auto cfg = all_constraints();
  cfg.multipliers = MultiplierMode::kPerCell;
  const auto theta = test::random_model({3, 5, 1}, gen);
  FairTrainState s{theta, LagrangeMultipliers::filled(cfg, 2, 1.0), 0};
  const auto pre = lagrangian_gradients(s.theta, s.lambda, b, cfg);
  fair_sgd_step(s, b, cfg, 0.05);
  std::size_t increased = 0;
  for (std::size_t k = 0; k < kConstraintCount; ++k) {
    for (std::size_t slot = 0; slot < s.lambda.values[k].size(); ++slot) {
      const double pen = pre.eval.penalties.penalty[k][slot];
      const double lam = s.lambda.values[k][slot];
      if (pen > 0) {
        EXPECT_GT(lam, 1.0);
        EXPECT_EQ(lam, 1.0 + cfg.dual_lr * pen);
        ++increased;
      } else {
        EXPECT_EQ(lam, 1.0);
      }
    }
  }
  EXPECT_GT(increased, 0u);
}

TEST(FairSgdStep, PrimalStepUsesPreStepMultipliers) {
  std::mt19937_64 gen(3);
  const auto d = random_client(30, 2, 2, gen);
  const auto b = full_batch(d);
  const auto cfg = all_constraints();
  FairTrainState s{test::random_model({2, 3, 1}, gen),
                   LagrangeMultipliers::filled(cfg, 2, 0.3), 0};
  const auto g = lagrangian_gradients(s.theta, s.lambda, b, cfg);
  const auto expected = apply_update(s.theta, g.theta_grad, 0.1);
  fair_sgd_step(s, b, cfg, 0.1);
  EXPECT_EQ(s.theta, expected);
}

TEST(FairSgdStep, MultipliersStayInBoundsEveryStep) {
  std::mt19937_64 gen(4);
  const auto d = random_client(80, 3, 3, gen);
  for (auto mode : {MultiplierMode::kPerConstraint, MultiplierMode::kPerCell}) {
    auto cfg = all_constraints(0.7);
    cfg.multipliers = mode;
    cfg.dual_lr = 0.5;
    FairTrainState s{test::random_model({3, 6, 1}, gen),
                     LagrangeMultipliers::filled(cfg, 3, 0.0), 0};
    BatchSampler sampler(d.size(), 16, 9);
    for (int t = 0; t < 200; ++t) {
      const auto before = s.lambda;
      fair_sgd_step(s, make_batch(d, sampler.next_batch()), cfg, 0.05);
      ASSERT_TRUE(s.lambda.within(cfg.lambda_max));
      for (std::size_t k = 0; k < kConstraintCount; ++k) {
        for (std::size_t j = 0; j < before.values[k].size(); ++j) {
          ASSERT_GE(s.lambda.values[k][j], before.values[k][j]);
        }
      }
    }
  }
}

TEST(FairSgdStep, EmptyBatchThrows) {
  const auto cfg = all_constraints();
  FairTrainState s{init_model({2, 3, 1}, 1),
                   LagrangeMultipliers::filled(cfg, 2, 1.0), 0};
  EXPECT_THROW(fair_sgd_step(s, Batch{Matrix(0, 2), {}, {}, 2}, cfg, 0.1),
               Error);
}

TEST(FairSgdStep, ConvexToyReducesLagrangian) {
  // Logistic regression on two features; labels follow feature 0 and group 1
  // is shifted so that the groups differ in base rate.
  std::mt19937_64 gen(5);
  std::normal_distribution<double> n01;
  ClientDataset d;
  d.group_count = 2;
  for (int i = 0; i < 200; ++i) {
    const int g = i % 2;
    const double x0 = n01(gen) + (g == 1 ? -0.8 : 0.8);
    d.features.append_row(Vd{x0, n01(gen)});
    d.labels.push_back(x0 > 0 ? 1 : 0);
    d.groups.push_back(g);
  }
  FairnessConfig cfg;
  cfg.enabled = {true, true, false};
  cfg.lambda_max = 1.0;
  ModelParams theta({DenseLayer(2, 1)});
  FairTrainState s{theta, LagrangeMultipliers::filled(cfg, 2, cfg.lambda_max),
                   0};
  const auto all = full_batch(d);
  auto value = [&](const FairTrainState& st) {
    return lagrangian_gradients(st.theta, st.lambda, all, cfg).eval.value;
  };
  const double initial = value(s);
  BatchSampler sampler(d.size(), 32, 1);
  for (int t = 0; t < 500; ++t) {
    fair_sgd_step(s, make_batch(d, sampler.next_batch()), cfg, 0.1);
  }
  EXPECT_LT(value(s), initial);
}

TEST(LagrangianGradient, MatchesFiniteDifferences) {
  std::mt19937_64 gen(6);
  int checked = 0;
  for (int t = 0; t < 200 && checked < 20; ++t) {
    auto cfg = all_constraints(2.0);
    cfg.multipliers =
        t % 2 ? MultiplierMode::kPerCell : MultiplierMode::kPerConstraint;
    const std::size_t G = 2 + t % 2;
    const auto d = random_client(12, 3, G, gen);
    const Batch b = full_batch(d);
    const auto m = test::random_model({3, 4, 3, 1}, gen);
    if (!test::far_from_kinks(m, b, cfg, 1e-3)) continue;
    auto lam = LagrangeMultipliers::filled(cfg, G, 0.0);
    for (auto& v : lam.values) {
      for (double& x : v) x = std::uniform_real_distribution<double>(0.5, 2)(gen);
    }
    const auto g = lagrangian_gradients(m, lam, b, cfg);
    const auto fd = test::numeric_gradient(m, [&](const ModelParams& p) {
      const auto probs = forward(p, b.x);
      return lagrangian_loss(probs, b.y, b.a, G, lam, cfg);
    });
    EXPECT_LT(test::max_relative_error(g.theta_grad.flatten(), fd), 1e-4)
        << "instance " << t;
    ++checked;
  }
  EXPECT_GE(checked, 10);
}

TEST(TrainFair, TraceLengthAndInitialMultipliers) {
  std::mt19937_64 gen(7);
  const auto d = random_client(50, 3, 2, gen);
  const auto cfg = all_constraints(3.0);
  const auto r = train_fair(d, init_model({3, 4, 1}, 1), cfg,
                            {.lr = 0.05, .batch_size = 16, .steps = 13}, 2);
  EXPECT_EQ(r.trace.size(), 13u);
  EXPECT_EQ(r.state.step, 13u);
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    EXPECT_EQ(r.trace[i].step, i + 1);
  }
  // Multipliers start at lambda_max and ascent cannot move them below it.
  EXPECT_EQ(r.state.lambda, LagrangeMultipliers::filled(cfg, 2, 3.0));
}

TEST(TrainFair, NoConstraintsIsBitIdenticalToPlainSgd) {
  std::mt19937_64 gen(8);
  const auto d = random_client(90, 4, 2, gen);
  const auto theta0 = init_model({4, 8, 8, 1}, 3);
  const TrainOptions opts{.lr = 0.1, .batch_size = 20, .steps = 37};
  const auto fair = train_fair(d, theta0, FairnessConfig{}, opts, 11);
  const auto plain = train_plain(d, theta0, opts, 11);
  EXPECT_EQ(fair.state.theta, plain);
}

TEST(TrainFair, DeterministicPerSeed) {
  std::mt19937_64 gen(9);
  const auto d = random_client(70, 3, 2, gen);
  const auto cfg = all_constraints(1.0);
  const TrainOptions opts{.lr = 0.1, .batch_size = 16, .steps = 25};
  const auto a = train_fair(d, init_model({3, 5, 1}, 4), cfg, opts, 5);
  const auto b = train_fair(d, init_model({3, 5, 1}, 4), cfg, opts, 5);
  EXPECT_EQ(a.state.theta, b.state.theta);
  const auto c = train_fair(d, init_model({3, 5, 1}, 4), cfg, opts, 6);
  EXPECT_NE(a.state.theta, c.state.theta);
}

TEST(TrainFair, RejectsZeroSteps) {
  std::mt19937_64 gen(10);
  const auto d = random_client(10, 2, 2, gen);
  EXPECT_THROW(train_fair(d, init_model({2, 3, 1}, 1), all_constraints(),
                          {.lr = 0.1, .batch_size = 4, .steps = 0}, 1),
               Error);
}

TEST(DualityGap, EmptyProbeBudgetGivesZero) {
  std::mt19937_64 gen(11);
  const auto d = random_client(30, 3, 2, gen);
  const auto cfg = all_constraints();
  const auto gap =
      estimate_duality_gap(test::random_model({3, 4, 1}, gen),
                           LagrangeMultipliers::filled(cfg, 2, 1.0), d, cfg, {});
  EXPECT_EQ(gap.nu, 0.0);
}

TEST(DualityGap, NeverNegative) {
  std::mt19937_64 gen(12);
  for (int t = 0; t < 10; ++t) {
    const auto d = random_client(40, 3, 2, gen);
    const auto cfg = all_constraints(2.0);
    const DualityProbe probe{.lambda_points = 5,
                             .theta_probes = 3,
                             .perturbation = 0.05,
                             .sgd_steps = 3,
                             .lr = 0.05,
                             .seed = static_cast<std::uint64_t>(t)};
    const auto gap = estimate_duality_gap(
        test::random_model({3, 4, 1}, gen),
        LagrangeMultipliers::filled(cfg, 2, 1.0), d, cfg, probe);
    EXPECT_GE(gap.nu, 0.0);
    EXPECT_GE(gap.best_dual, gap.at_point);
    EXPECT_LE(gap.best_primal, gap.at_point);
  }
}

TEST(DualityGap, SmallAtAnalyticSaddleOfConvexToy) {
  // Feature = group indicator, so z = w * [a = 1] + b. Base rates 0.2 and 0.6.
  // With lambda = 2 the DemP hinge slope at w = 0 exceeds the cross-entropy
  // slope (0.1 vs 2 * 0.24 / 2), so the saddle is w = 0, b = logit(0.4),
  // where every constraint holds and L is flat in lambda.
  ClientDataset d;
  d.group_count = 2;
  for (int g = 0; g < 2; ++g) {
    for (int i = 0; i < 10; ++i) {
      d.features.append_row(Vd{static_cast<double>(g)});
      d.groups.push_back(g);
      d.labels.push_back(i < (g == 0 ? 2 : 6) ? 1 : 0);
    }
  }
  FairnessConfig cfg;
  cfg.enabled = {true, false, false};
  cfg.lambda_max = 2.0;
  ModelParams saddle({DenseLayer(1, 1)});
  saddle.layers[0].bias[0] = std::log(0.4 / 0.6);
  const DualityProbe probe{.lambda_points = 11,
                           .theta_probes = 20,
                           .perturbation = 0.01,
                           .sgd_steps = 5,
                           .lr = 0.1,
                           .seed = 3};
  const auto gap = estimate_duality_gap(
      saddle, LagrangeMultipliers::filled(cfg, 2, 2.0), d, cfg, probe);
  EXPECT_LE(gap.nu, 1e-3);
  EXPECT_GE(gap.nu, 0.0);
}

}  // namespace
}  // namespace fairfed
