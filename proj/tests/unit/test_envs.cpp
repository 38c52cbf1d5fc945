// Copyright 2026 The robust-rmab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "rrmab/envs.hpp"

namespace rrmab {
namespace {

void expect_row(const std::vector<double>& got, const std::vector<double>& want, double tol = 1e-12) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << "entry " << i;
}

TEST(Synthetic, TransitionRows) {
  for (double p : {0.0, 0.3, 1.0}) {
    expect_row(synthetic_transition(0, 0, p), {0.5, 0.5});
    expect_row(synthetic_transition(1, 0, p), {1.0, 0.0});
  }
  expect_row(synthetic_transition(1, 1, 0.95), {0.05, 0.95});
  EXPECT_THROW(synthetic_transition(1, 1, 1.5), ParameterError);
  EXPECT_THROW(synthetic_transition(1, 1, -0.1), ParameterError);
}

TEST(Synthetic, EqualThirdsAndOptimisticW) {
  auto env = make_synthetic(6, 2.0);
  EXPECT_EQ(env.arm_types, (std::vector<int>{0, 0, 1, 1, 2, 2}));
  Rng rng = make_rng(1);
  auto w = sample_omega(env.intervals, OmegaMode::optimistic, rng);
  EXPECT_DOUBLE_EQ(w.values[5][0], 0.95);
  auto m = sample_omega(env.intervals, OmegaMode::pessimistic, rng);
  EXPECT_DOUBLE_EQ(m.values[5][0], 0.10);
  EXPECT_DOUBLE_EQ(m.values[0][0], 0.0);
}

TEST(Armman, TransitionRows) {
  ArmmanParams p{0.3, 0.2, 0.6, 0.5, 0.5, 0.85};
  expect_row(armman_transition(0, 0, p, ArmmanType::A), {0.3, 0.7, 0.0});
  expect_row(armman_transition(1, 1, p, ArmmanType::A), {0.5, 0.5, 0.0});
  expect_row(armman_transition(2, 1, p, ArmmanType::A), {0.0, 0.15, 0.85});
  ArmmanParams bad = p;
  bad.p110 = 0.4;  // below type A's lower bound 0.5
  EXPECT_THROW(armman_transition(1, 1, bad, ArmmanType::A), ParameterError);
  EXPECT_NO_THROW(armman_transition(1, 1, bad, ArmmanType::C));
}

TEST(Armman, TypeSplitAndRanges) {
  auto env = make_armman(10, 2.0);
  EXPECT_EQ(env.arm_types, (std::vector<int>{0, 1, 2, 2, 2, 0, 1, 2, 2, 2}));
  const auto c = armman_intervals(ArmmanType::C);
  EXPECT_DOUBLE_EQ(c[3].lo, 0.0);
  EXPECT_DOUBLE_EQ(c[3].hi, 0.5);
  const auto b = armman_intervals(ArmmanType::B);
  EXPECT_DOUBLE_EQ(b[3].lo, 0.15);
  EXPECT_DOUBLE_EQ(b[3].hi, 0.65);
}

TEST(Armman, StructuralZerosHoldAcrossRange) {
  Rng rng = make_rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto type = static_cast<ArmmanType>(trial % 3);
    UncertaintyIntervals iv{{armman_intervals(type)}};
    auto w = sample_omega(iv, OmegaMode::uniform, rng);
    auto p = ArmmanParams::from_span(w.values[0]);
    for (int a = 0; a < 2; ++a) {
      EXPECT_EQ(armman_transition(0, a, p, type)[2], 0.0);
      EXPECT_EQ(armman_transition(2, a, p, type)[0], 0.0);
    }
  }
}

// Independent enumeration of the two binomial outcomes for N_p = 2,
// kappa = 2, r = 0.5, one infected (one susceptible):
//   p_inf = 1 - (1 - 0.5 * 1/2)^2 = 0.4375, recovery 0.2.
//   next = 1 - x + y with x ~ Bern(0.4375), y ~ Bern(0.2).
TEST(Sis, HandComputedConvolution) {
  SisParams p{2, 2.0, 0.5, 1.0, 1.0, 0.2};
  const double pinf = 1.0 - std::pow(1.0 - 0.5 * 1.0 / 2.0, 2.0);
  EXPECT_DOUBLE_EQ(pinf, 0.4375);
  std::vector<double> oracle(3, 0.0);
  for (int x = 0; x <= 1; ++x)
    for (int y = 0; y <= 1; ++y)
      oracle[1 - x + y] += (x ? pinf : 1 - pinf) * (y ? 0.2 : 0.8);
  // Frozen values.
  expect_row(oracle, {0.35, 0.5375, 0.1125}, 1e-15);
  expect_row(sis_transition(1, 0, p), oracle, 1e-12);
}

TEST(Sis, AllSusceptibleIsPointMass) {
  SisParams p{10, 5.0, 0.9, 2.0, 2.0, 0.2};
  for (int a = 0; a < 3; ++a) {
    auto row = sis_transition(10, a, p);
    EXPECT_NEAR(row[10], 1.0, 1e-15);
  }
}

TEST(Sis, DivideByOneIsIdentity) {
  SisParams p{8, 4.0, 0.7, 1.0, 1.0, 0.2};
  for (int s = 0; s <= 8; ++s) {
    expect_row(sis_transition(s, 1, p), sis_transition(s, 0, p), 0.0);
    expect_row(sis_transition(s, 2, p), sis_transition(s, 0, p), 0.0);
  }
}

TEST(Sis, RejectsOutOfRangeParams) {
  EXPECT_THROW(sis_transition(1, 0, SisParams{4, 0.5, 0.7, 1, 1, 0.2}), ParameterError);
  EXPECT_THROW(sis_transition(1, 0, SisParams{4, 2.0, 0.3, 1, 1, 0.2}), ParameterError);
  EXPECT_THROW(sis_transition(1, 0, SisParams{4, 2.0, 0.7, 11, 1, 0.2}), ParameterError);
  EXPECT_THROW(sis_transition(1, 0, SisParams{4, 2.0, 0.7, 1, 1, 0.0}), ParameterError);
}

TEST(Sis, ActionTwoStochasticallyDominatesPassive) {
  Rng rng = make_rng(11);
  UncertaintyIntervals iv{{sis_intervals()}};
  for (int trial = 0; trial < 200; ++trial) {
    const int np = uniform_int(rng, 1, 20);
    auto w = sample_omega(iv, OmegaMode::uniform, rng).values[0];
    SisParams p{np, w[0], w[1], w[2], std::max(w[3], 1.01), 0.2};
    const int s = uniform_int(rng, 0, np);
    auto r0 = sis_transition(s, 0, p), r2 = sis_transition(s, 2, p);
    double c0 = 0.0, c2 = 0.0;
    for (int k = 0; k <= np; ++k) {
      c0 += r0[k];
      c2 += r2[k];
      EXPECT_LE(c2, c0 + 1e-12) << "np=" << np << " s=" << s << " k=" << k;
    }
  }
}

TEST(Transitions, RowsSumToOneOverRandomSamples) {
  Rng rng = make_rng(5);
  const auto envs = {make_synthetic(3, 1.0), make_armman(5, 1.0), make_sis(3, 12, 2.0)};
  for (const auto& env : envs) {
    for (int i = 0; i < 4000; ++i) {
      auto w = sample_omega(env.intervals, OmegaMode::uniform, rng);
      const int arm = uniform_int(rng, 0, env.n_arms() - 1);
      const int s = uniform_int(rng, 0, env.n_states() - 1);
      const int a = uniform_int(rng, 0, env.n_actions() - 1);
      auto row = env.transition(arm, s, a, w.values[arm]);
      const double total = std::accumulate(row.begin(), row.end(), 0.0);
      ASSERT_NEAR(total, 1.0, 1e-9) << domain_name(env.domain);
      for (double x : row) ASSERT_GE(x, 0.0);
    }
  }
}

TEST(Simulate, RewardsOnPreTransitionState) {
  auto syn = make_synthetic(3, 1.0);
  Rng rng = make_rng(2);
  auto w = sample_omega(syn.intervals, OmegaMode::mean, rng);
  auto tables = syn.tables(w);
  const int passive[] = {0, 0, 0};
  auto step = simulate(syn.instance, tables, JointState{0, 0, 0}, passive, rng);
  EXPECT_EQ(step.rewards, (std::vector<double>{0.0, 0.0, 0.0}));

  auto arm = make_armman(5, 1.0);
  auto wa = sample_omega(arm.intervals, OmegaMode::mean, rng);
  const int idle[] = {0, 0, 0, 0, 0};
  auto sa = simulate(arm, wa, JointState{1, 0, 2, 1, 1}, idle, rng);
  EXPECT_DOUBLE_EQ(sa.rewards[0], 0.5);
  EXPECT_DOUBLE_EQ(sa.rewards[1], 1.0);
  EXPECT_DOUBLE_EQ(sa.rewards[2], 0.0);

  auto sis = make_sis(2, 6, 2.0);
  auto ws = sample_omega(sis.intervals, OmegaMode::mean, rng);
  const int none[] = {0, 0};
  auto ss = simulate(sis, ws, JointState{6, 3}, none, rng);
  EXPECT_DOUBLE_EQ(ss.rewards[0], 1.0);
  EXPECT_DOUBLE_EQ(ss.rewards[1], 0.5);
}

TEST(Simulate, FixedSeedIsBitwiseReproducible) {
  auto env = make_sis(3, 10, 2.0);
  Rng wr = make_rng(9);
  auto w = sample_omega(env.intervals, OmegaMode::uniform, wr);
  auto tables = env.tables(w);
  auto run = [&] {
    Rng rng = make_rng(42, {1, 2});
    JointState s = env.canonical_state();
    std::vector<int> trace;
    for (int t = 0; t < 200; ++t) {
      const int a[] = {t % 3, (t + 1) % 3, 0};
      s = simulate(env.instance, tables, s, a, rng).next_state;
      trace.insert(trace.end(), s.begin(), s.end());
    }
    return trace;
  };
  EXPECT_EQ(run(), run());
}

TEST(Simulate, TableAndOnTheFlyPathsAgree) {
  auto env = make_armman(5, 1.0);
  Rng wr = make_rng(4);
  auto w = sample_omega(env.intervals, OmegaMode::uniform, wr);
  auto tables = env.tables(w);
  Rng r1 = make_rng(8), r2 = make_rng(8);
  JointState s1 = {0, 1, 2, 1, 0}, s2 = s1;
  for (int t = 0; t < 100; ++t) {
    const int a[] = {1, 0, 0, 1, 0};
    s1 = simulate(env.instance, tables, s1, a, r1).next_state;
    s2 = simulate(env, w, s2, a, r2).next_state;
    ASSERT_EQ(s1, s2);
  }
}

TEST(SampleOmega, MidpointAndDegenerate) {
  UncertaintyIntervals iv{{{{"p", 0.1, 0.9, Direction::higher_is_better}},
                           {{"q", 0.3, 0.3, Direction::higher_is_worse}}}};
  Rng rng = make_rng(0);
  EXPECT_NEAR(sample_omega(iv, OmegaMode::mean, rng).values[0][0], 0.5, 1e-15);
  for (auto mode : {OmegaMode::pessimistic, OmegaMode::mean, OmegaMode::optimistic, OmegaMode::uniform})
    EXPECT_DOUBLE_EQ(sample_omega(iv, mode, rng).values[1][0], 0.3);
}

TEST(SampleOmega, SisDirections) {
  UncertaintyIntervals iv{{sis_intervals()}};
  Rng rng = make_rng(0);
  auto pes = sample_omega(iv, OmegaMode::pessimistic, rng).values[0];
  EXPECT_EQ(pes, (std::vector<double>{10.0, 0.99, 1.0, 1.0}));
  auto opt = sample_omega(iv, OmegaMode::optimistic, rng).values[0];
  EXPECT_EQ(opt, (std::vector<double>{1.0, 0.5, 10.0, 10.0}));
}

TEST(EnvironmentJson, RoundTripWithArmTypes) {
  auto env = make_armman(5, 1.0);
  auto j = environment_to_json(env);
  j["arm_types"] = std::vector<int>{2, 2, 2, 0, 1};
  j.erase("intervals");
  auto back = environment_from_json(j);
  EXPECT_EQ(back.arm_types, (std::vector<int>{2, 2, 2, 0, 1}));
  EXPECT_DOUBLE_EQ(back.intervals.arms[3][3].lo, 0.5);  // type A p110
  auto sis = environment_from_json(environment_to_json(make_sis(3, 7, 2.0)));
  EXPECT_EQ(sis.n_states(), 8);
  EXPECT_EQ(sis.n_pop, 7);
}

}  // namespace
}  // namespace rrmab
