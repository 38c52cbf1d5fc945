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
#include <memory>
#include <vector>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "rrmab/nature.hpp"

namespace rrmab {
namespace {

Environment all_u_synthetic(int n, double budget) {
  Environment env = make_synthetic(n, budget);
  for (int i = 0; i < n; ++i) {
    env.arm_types[i] = 0;
    env.intervals.arms[i] = {synthetic_interval(SyntheticType::U)};
  }
  return env;
}

NatureConfig small_nature(int epochs) {
  NatureConfig c;
  c.agent.n_epochs = epochs;
  c.agent.lambda_freeze_epochs = epochs / 5;
  return c;
}

TEST(RegretReward, Arithmetic) {
  const std::vector<double> r{1.0, 0.5, 1.5};
  EXPECT_DOUBLE_EQ(regret_reward(r, 3.0), 0.0);
  EXPECT_DOUBLE_EQ(regret_reward(r, 1.2), 1.8);
  // Swapping the two estimates flips the sign.
  const std::vector<double> one{1.2};
  EXPECT_DOUBLE_EQ(regret_reward(one, 3.0), -regret_reward(r, 1.2));
}

TEST(TildeReturn, DeterministicPureStrategyIsExact) {
  auto env = all_u_synthetic(3, 1.0);
  ParamSetting w{{{1.0}, {1.0}, {1.0}}};
  auto mix = MixedStrategy<StrategyPtr>::pure(std::make_shared<HawkinsStrategy>(env, w));
  Rng rng(1);
  // From (1,1,1) the acted arm stays good and the two passive arms go bad.
  for (int i = 0; i < 20; ++i) EXPECT_EQ(estimate_tilde_return(env, {1, 1, 1}, mix, w, 1, rng), 1.0);
  EXPECT_EQ(estimate_tilde_return(env, {1, 1, 1}, mix, w, 25, rng), 1.0);
}

TEST(TildeReturn, ZeroRewardsGiveZero) {
  auto env = make_synthetic(3, 1.0);
  for (auto& r : env.instance.rewards) r = {0.0, 0.0};
  auto mix = MixedStrategy<StrategyPtr>::pure(std::make_shared<RandomStrategy>(env.instance));
  Rng rng(2);
  ParamSetting w{{{0.5}, {0.5}, {0.5}}};
  for (int i = 0; i < 10; ++i) EXPECT_EQ(estimate_tilde_return(env, env.random_state(rng), mix, w, 25, rng), 0.0);
}

TEST(TildeReturn, BernoulliMeanWithinFourSigma) {
  // From the bad state the next state is good with probability 1/2 whatever
  // the action.
  auto env = all_u_synthetic(1, 1.0);
  auto mix = MixedStrategy<StrategyPtr>::pure(std::make_shared<NoActionStrategy>(env.instance));
  ParamSetting w{{{0.3}}};
  Rng rng(3);
  const double mu = 0.5, sigma = 0.5, n = 25;
  for (int trial = 0; trial < 200; ++trial)
    EXPECT_NEAR(estimate_tilde_return(env, {0}, mix, w, 25, rng), mu, 4.0 * sigma / std::sqrt(n));
  EXPECT_THROW(estimate_tilde_return(env, {0}, mix, w, 0, rng), ParameterError);
}

TEST(TildeReturn, OneStepRegretMatchesExactEnumeration) {
  // One arm, H = 1, from the good state. Acting keeps it good w.p. p, passive
  // sends it bad, so the regret of always-passive is p.
  auto env = all_u_synthetic(1, 1.0);
  ParamSetting w{{{0.8}}};
  auto mix = MixedStrategy<StrategyPtr>::pure(std::make_shared<NoActionStrategy>(env.instance));
  const auto tab = env.tables(w);
  double exact_best = 0.0, exact_passive = 0.0;
  for (int a = 0; a < 2; ++a) {
    double v = 0.0;
    for (int s = 0; s < 2; ++s) v += tab.row(0, 1, a)[s] * env.instance.reward(0, s);
    exact_best = std::max(exact_best, v);
    if (a == 0) exact_passive = v;
  }
  const double exact_regret = exact_best - exact_passive;
  EXPECT_DOUBLE_EQ(exact_regret, 0.8);

  Rng rng(4);
  const int trials = 20000;
  double total = 0.0;
  for (int i = 0; i < trials; ++i) {
    const std::vector<int> act{1};  // exact-greedy player A
    const auto next = simulate(env, w, {1}, act, rng).next_state;
    const std::vector<double> r{env.instance.reward(0, next[0])};
    total += regret_reward(r, estimate_tilde_return(env, {1}, mix, w, 25, rng));
  }
  EXPECT_NEAR(total / trials, exact_regret, 4.0 * 0.4 / std::sqrt(trials));
}

TEST(NaturePolicyTest, CentralizedCriticWiring) {
  auto env = make_armman(5, 1.0);
  Rng rng(5);
  NaturePolicy nat(env, -0.5, rng);
  EXPECT_EQ(nat.dim(), 30);
  EXPECT_EQ(nat.critic_width(), 5 * 3 + 5 * 2);
  AgentPolicy a(env.instance, StateEncoder::for_env(env), nat.dim(), rng);
  EXPECT_EQ(a.critic_width(), 3 + 2 + 1 + 30);

  // Player A's critic responds to omega.
  std::vector<double> w0(30, 0.2), w1(30, 0.2);
  w1[7] = 0.9;
  EXPECT_NE(a.q_value(0, 1, 1, 0.5, w0), a.q_value(0, 1, 1, 0.5, w1));
  EXPECT_THROW(a.q_value(0, 1, 1, 0.5, std::vector<double>(29, 0.0)), DimensionError);

  // Player B's critic responds to the agent action.
  Eigen::RowVectorXd x0(nat.critic_width()), x1(nat.critic_width());
  nat.critic_input({0, 1, 2, 1, 0}, std::vector<int>{0, 0, 1, 0, 0}, x0);
  nat.critic_input({0, 1, 2, 1, 0}, std::vector<int>{0, 0, 0, 0, 1}, x1);
  EXPECT_NE(nat.critic().forward(x0)(0, 0), nat.critic().forward(x1)(0, 0));
}

TEST(NaturePolicyTest, EmittedOmegaInsideIntervals) {
  auto env = make_armman(5, 1.0);
  Rng rng(6);
  NaturePolicy nat(env, 0.0, rng);
  for (auto* p : nat.actor().parameters()) p->value *= 30.0;  // push means to the bounds
  for (int i = 0; i < 200; ++i) {
    const auto s = env.random_state(rng);
    const auto w = env.intervals.from_unit(NaturePolicy::clamp_unit(nat.sample_raw(s, rng)));
    EXPECT_TRUE(env.intervals.contains(w));
    EXPECT_TRUE(env.intervals.contains(nat.omega_at(env, s)));
  }
}

TEST(NaturePolicyTest, ActorLossMatchesFiniteDifferences) {
  auto env = make_synthetic(3, 1.0);
  Rng rng(7);
  NaturePolicy nat(env, -0.5, rng);
  const int T = 12;
  ad::Matrix states(T, nat.encoder().joint_width()), raw(T, 3), old_logp(T, 1), adv = ad::Matrix::Random(T, 1);
  for (int t = 0; t < T; ++t) {
    const auto s = env.random_state(rng);
    states.row(t) = nat.encoder().joint(s);
    raw.row(t) = nat.sample_raw(s, rng);
    old_logp(t, 0) = nn::DiagGaussian::logprob(nat.mean_unit(s), nat.log_std().value.row(0), raw.row(t)) +
                     0.2 * (uniform01(rng) - 0.5);
  }
  auto params = nat.actor().parameters();
  params.push_back(&nat.log_std());
  auto res = oracle::grad_check(params, [&](ad::Tape& t) {
    return nature_actor_loss(t, nat, states, raw, old_logp, adv, 2.0);
  });
  EXPECT_TRUE(res.ok()) << res.worst_entry;
}

TEST(MaDdlpo, FrozenNatureReducesToAgentOracle) {
  auto env = make_synthetic(3, 1.0);
  ParamSetting w{{{0.4}, {0.6}, {0.8}}};
  NatureConfig cfg = small_nature(8);
  cfg.agent.n_steps = 40;
  cfg.disable_nature = true;
  auto mix = MixedStrategy<StrategyPtr>::pure(std::make_shared<NoActionStrategy>(env.instance));
  auto ma = train_ma_ddlpo(env, mix, cfg, 31, &w);
  auto dd = train_ddlpo(env, MixedStrategy<ParamSetting>::pure(w), cfg.agent, 31);
  EXPECT_EQ(ma.agent.to_json(), dd.policy.to_json());
  EXPECT_EQ(ma.omega.values, w.values);
  EXPECT_THROW(train_ma_ddlpo(env, mix, cfg, 31), ParameterError);
}

TEST(MaDdlpo, TiedPoliciesGiveZeroNatureReward) {
  auto env = make_synthetic(3, 1.0);
  for (auto& r : env.instance.rewards) r = {0.0, 0.0};
  auto mix = MixedStrategy<StrategyPtr>::pure(std::make_shared<RandomStrategy>(env.instance));
  NatureConfig cfg = small_nature(5);
  cfg.agent.n_steps = 30;
  auto res = train_ma_ddlpo(env, mix, cfg, 32);
  ASSERT_EQ(res.curves.nature_reward.size(), 5u);
  for (double r : res.curves.nature_reward) EXPECT_EQ(r, 0.0);
  EXPECT_TRUE(env.intervals.contains(res.omega));
}

TEST(MaDdlpo, BestResponseHurtsOptimisticPlanner) {
  auto env = make_synthetic(3, 1.0);
  Rng unused(0);
  const auto opt = sample_omega(env.intervals, OmegaMode::optimistic, unused);
  auto ho = std::make_shared<HawkinsStrategy>(env, opt, "HO");
  auto res = train_ma_ddlpo(env, MixedStrategy<StrategyPtr>::pure(ho), NatureConfig{}, 33);
  ASSERT_TRUE(env.intervals.contains(res.omega));

  auto exact_regret = [&](const ParamSetting& w) {
    const auto tab = env.tables(w);
    const auto sol = joint_value_iteration(arm_kernels(env, w), env.instance.budget);
    Rng r(0);
    const double best = oracle::exact_finite_horizon_value(env.instance, tab, 10,
                                                           [&](const JointState& s) { return sol.action_for(s); });
    const double ho_v = oracle::exact_finite_horizon_value(env.instance, tab, 10,
                                                           [&](const JointState& s) { return ho->act(s, r).indices(); });
    return best - ho_v;
  };
  const double at_br = exact_regret(res.omega);
  const double at_opt = exact_regret(opt);
  EXPECT_GT(at_br, at_opt + 0.5) << "regret at best response " << at_br << ", at optimistic " << at_opt;
}

}  // namespace
}  // namespace rrmab
