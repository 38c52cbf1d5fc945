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
#include <vector>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "rrmab/ddlpo.hpp"

namespace rrmab {
namespace {

TrainConfig quick_config(int epochs = 100) {
  TrainConfig c;
  c.n_epochs = epochs;
  c.lambda_freeze_epochs = epochs / 5;
  return c;
}

// One synthetic arm with its active transition probability fixed at p.
Environment single_synthetic(SyntheticType type) {
  Environment env = make_synthetic(1, 1.0);
  env.arm_types = {static_cast<int>(type)};
  env.intervals.arms = {{synthetic_interval(type)}};
  return env;
}

TEST(EntropySchedule, PinnedValues) {
  TrainConfig c;  // 100 epochs, 4 subepochs, 20 frozen
  EXPECT_DOUBLE_EQ(entropy_coefficient(0, 0, c), 0.5);
  EXPECT_DOUBLE_EQ(entropy_coefficient(0, 3, c), 0.0);
  EXPECT_DOUBLE_EQ(entropy_coefficient(0, 1, c), 0.5 * 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(entropy_coefficient(40, 0, c), 0.5 * (1.0 - 40.0 / 80.0));
  for (int e = 80; e < 100; ++e)
    for (int k = 0; k < 4; ++k) EXPECT_EQ(entropy_coefficient(e, k, c), 0.0);
  for (int e = 1; e < 80; ++e) EXPECT_LT(entropy_coefficient(e, 0, c), entropy_coefficient(e - 1, 0, c));
}

TEST(TrainConfigTest, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.end_entropy = 0.6;
  EXPECT_THROW(c.validate(), ParameterError);
  c = {};
  c.actor_lr = 0.0;
  EXPECT_THROW(c.validate(), ParameterError);
  c = {};
  c.lambda_freeze_epochs = c.n_epochs;
  EXPECT_THROW(c.validate(), ParameterError);
  auto back = TrainConfig::from_json(TrainConfig{}.to_json());
  EXPECT_EQ(back.to_json(), TrainConfig{}.to_json());
}

TEST(LambdaSignal, ZeroCostsGiveBudgetTerm) {
  EXPECT_DOUBLE_EQ(lambda_signal({{0, 0, 0}, {0, 0}}, 1.0, 0.9), 10.0);
}

TEST(LambdaSignal, SpendAtBudgetRateIsFixedPoint) {
  // Spending B every step forever: the discounted sum equals B / (1 - beta).
  std::vector<double> c(4000, 1.0);
  EXPECT_NEAR(lambda_signal({c}, 1.0, 0.9), 0.0, 1e-12);
}

TEST(LambdaSignal, FiniteGeometricSum) {
  std::vector<double> c(200, 1.0);
  const double d = (1.0 - std::pow(0.9, 200)) / 0.1;
  EXPECT_NEAR(lambda_signal({c}, 1.0, 0.9), 10.0 - d, 1e-12);
  EXPECT_NEAR(lambda_signal({c, c}, 1.0, 0.9), 10.0 - 2.0 * d, 1e-12);
}

TEST(LambdaUpdate, PositiveSignalLowersLambda) {
  Rng rng(1);
  nn::Mlp net(4, 1, rng);
  Eigen::RowVectorXd enc(4);
  enc << 1, 0, 0, 1;
  nn::Adam opt(net.parameters(), {2e-3});
  auto lam = [&] { return ad::softplus_value(net.forward(enc)(0, 0)); };
  for (double g : {10.0, -10.0}) {
    const double before = lam();
    opt.zero_grad();
    ad::Tape t;
    t.backward(lambda_loss(t, net, enc, g));
    opt.step();
    if (g > 0)
      EXPECT_LT(lam(), before);
    else
      EXPECT_GT(lam(), before);
    EXPECT_GE(lam(), 0.0);
  }
  // Zero signal leaves the network untouched.
  const auto before = net.forward(enc);
  opt.zero_grad();
  ad::Tape t;
  t.backward(lambda_loss(t, net, enc, 0.0));
  for (auto* p : net.parameters()) EXPECT_TRUE(p->grad.isZero(0.0));
  EXPECT_EQ(net.forward(enc), before);
}

TEST(GreedyProba, SortOrderForced) {
  std::vector<std::vector<double>> p{{0.1, 0.9}, {0.8, 0.2}, {0.3, 0.7}};
  std::vector<double> c{0.0, 1.0};
  EXPECT_EQ(greedy_proba(p, c, 2.0).indices(), (std::vector<int>{1, 0, 1}));
  EXPECT_EQ(greedy_proba(p, c, 0.0).indices(), (std::vector<int>{0, 0, 0}));
}

TEST(GreedyProba, FallsBackToCheaperAction) {
  std::vector<double> c{0.0, 1.0, 2.0};
  // Arm 0 prefers the cost-2 action, arm 1 the cost-1 action.
  std::vector<std::vector<double>> p{{0.1, 0.2, 0.7}, {0.2, 0.6, 0.2}};
  EXPECT_EQ(greedy_proba(p, c, 3.0).indices(), (std::vector<int>{2, 1}));
  EXPECT_EQ(greedy_proba(p, c, 2.0).indices(), (std::vector<int>{2, 0}));
  EXPECT_EQ(greedy_proba(p, c, 1.0).indices(), (std::vector<int>{1, 0}));
}

TEST(DdlpoAct, ZeroBudgetAllPassive) {
  Rng rng(2);
  for (int A : {2, 3}) {
    RmabInstance inst;
    inst.n_arms = 4;
    inst.n_states = 3;
    inst.n_actions = A;
    inst.costs = A == 2 ? std::vector<double>{0, 1} : std::vector<double>{0, 1, 2};
    inst.budget = 0.0;
    inst.rewards.assign(4, {0.0, 0.5, 1.0});
    AgentPolicy pol(inst, {4, 3, false}, 0, rng);
    for (auto m : {ActMethod::greedy_proba, ActMethod::q_knapsack, ActMethod::whittle}) {
      if (m == ActMethod::whittle && A != 2) {
        EXPECT_THROW(ddlpo_act(pol, {0, 1, 2, 1}, m, inst, rng), ParameterError);
        continue;
      }
      for (int i = 0; i < 10; ++i) {
        JointState s{uniform_int(rng, 0, 2), uniform_int(rng, 0, 2), uniform_int(rng, 0, 2), uniform_int(rng, 0, 2)};
        EXPECT_EQ(ddlpo_act(pol, s, m, inst, rng).indices(), (std::vector<int>(4, 0)));
      }
    }
  }
}

TEST(DdlpoAct, QKnapsackMatchesBruteForce) {
  Rng rng(3);
  RmabInstance inst;
  inst.n_arms = 4;
  inst.n_states = 3;
  inst.n_actions = 3;
  inst.costs = {0, 1, 2};
  inst.rewards.assign(4, {0.0, 0.5, 1.0});
  for (double b : {1.0, 2.0, 3.0, 5.0}) {
    inst.budget = b;
    AgentPolicy pol(inst, {4, 3, false}, 0, rng);
    for (int trial = 0; trial < 10; ++trial) {
      JointState s{uniform_int(rng, 0, 2), uniform_int(rng, 0, 2), uniform_int(rng, 0, 2), uniform_int(rng, 0, 2)};
      const double lam = pol.lambda(s);
      std::vector<std::vector<double>> q(4, std::vector<double>(3));
      for (int n = 0; n < 4; ++n)
        for (int j = 0; j < 3; ++j) q[n][j] = pol.q_value(n, s[n], j, lam);
      auto a = ddlpo_act(pol, s, ActMethod::q_knapsack, inst, rng);
      double v = 0.0;
      for (int n = 0; n < 4; ++n) v += q[n][a.action(n)];
      EXPECT_NEAR(v, oracle::brute_force_knapsack(q, inst.costs, b), 1e-12);
    }
  }
}

TEST(AgentPolicyTest, LambdaNonnegativeAndWidths) {
  Rng rng(4);
  auto env = make_armman(5, 2.0);
  AgentPolicy pol(env.instance, StateEncoder::for_env(env), 0, rng);
  EXPECT_EQ(pol.actor_width(), 4);
  EXPECT_EQ(pol.critic_width(), 3 + 2 + 1);
  AgentPolicy aux(env.instance, StateEncoder::for_env(env), env.intervals.n_params(), rng);
  EXPECT_EQ(aux.critic_width(), 6 + 30);
  EXPECT_THROW(aux.q_value(0, 0, 0, 1.0), InvariantViolation);
  for (auto* p : pol.lambda_net().parameters()) p->value *= 25.0;
  for (int i = 0; i < 200; ++i) EXPECT_GE(pol.lambda(env.random_state(rng)), 0.0);
}

TEST(AgentPolicyTest, CheckpointRoundTrip) {
  Rng rng(5);
  auto env = make_synthetic(3, 1.0);
  AgentPolicy pol(env.instance, StateEncoder::for_env(env), 0, rng);
  auto back = AgentPolicy::from_json(nlohmann::json::parse(pol.to_json().dump()), env.instance);
  for (int n = 0; n < 3; ++n)
    for (int s = 0; s < 2; ++s) {
      EXPECT_EQ(pol.action_probs(n, s, 0.7), back.action_probs(n, s, 0.7));
      EXPECT_EQ(pol.q_value(n, s, 1, 0.7), back.q_value(n, s, 1, 0.7));
    }
  EXPECT_EQ(pol.lambda({0, 1, 1}), back.lambda({0, 1, 1}));
  auto other = make_synthetic(4, 1.0);
  EXPECT_THROW(AgentPolicy::from_json(pol.to_json(), other.instance), DimensionError);
}

TEST(Ppo, ZeroAdvantageHasNoSurrogateGradient) {
  Rng rng(6);
  nn::Mlp actor(3, 2, rng);
  ActorBatch b;
  b.inputs = ad::Matrix::Random(8, 3);
  b.actions = {0, 1, 1, 0, 1, 0, 0, 1};
  b.old_logp = ad::Matrix::Constant(8, 1, std::log(0.5));
  b.advantages = ad::Matrix::Zero(8, 1);
  for (auto* p : actor.parameters()) p->zero_grad();
  ad::Tape t;
  t.backward(ppo_actor_loss(t, actor, b, 2.0, 0.0));
  for (auto* p : actor.parameters()) EXPECT_TRUE(p->grad.isZero(0.0));
  ad::Tape t2;
  t2.backward(ppo_actor_loss(t2, actor, b, 2.0, 0.5));
  double total = 0.0;
  for (auto* p : actor.parameters()) total += p->grad.cwiseAbs().sum();
  EXPECT_GT(total, 0.0);
}

TEST(Ppo, BanditConvergesToRewardingAction) {
  Rng rng(7);
  nn::Mlp actor(2, 3, rng, 0.01);
  nn::Adam opt(actor.parameters(), {2e-2});
  ad::Matrix x(1, 2);
  x << 1.0, 0.0;
  const std::vector<double> reward{0.0, 1.0, 0.0};
  std::vector<double> p;
  for (int it = 0; it < 100; ++it) {
    p = nn::Categorical::probs(actor.forward(x).row(0));
    double baseline = 0.0;
    for (int j = 0; j < 3; ++j) baseline += p[j] * reward[j];
    ActorBatch b;
    const int T = 32;
    b.inputs = x.replicate(T, 1);
    b.old_logp.resize(T, 1);
    b.advantages.resize(T, 1);
    for (int t = 0; t < T; ++t) {
      const int a = sample_categorical(p, rng);
      b.actions.push_back(a);
      b.old_logp(t, 0) = std::log(p[a]);
      b.advantages(t, 0) = reward[a] - baseline;
    }
    opt.zero_grad();
    ad::Tape tape;
    tape.backward(ppo_actor_loss(tape, actor, b, 2.0, 0.0));
    opt.step();
  }
  p = nn::Categorical::probs(actor.forward(x).row(0));
  EXPECT_GT(p[1], 0.9);
}

TEST(Ppo, FullLossesMatchFiniteDifferences) {
  Rng rng(8);
  nn::Mlp actor(4, 3, rng, 0.5), critic(6, 1, rng), lam(5, 1, rng);
  ActorBatch b;
  b.inputs = ad::Matrix::Random(10, 4);
  for (int t = 0; t < 10; ++t) b.actions.push_back(t % 3);
  auto logp = ad::Matrix(actor.forward(b.inputs));
  b.old_logp.resize(10, 1);
  for (int t = 0; t < 10; ++t) {
    auto pr = nn::Categorical::probs(logp.row(t));
    b.old_logp(t, 0) = std::log(pr[b.actions[t]]) + 0.3 * (uniform01(rng) - 0.5);
  }
  b.advantages = ad::Matrix::Random(10, 1);
  auto r1 = oracle::grad_check(actor.parameters(),
                               [&](ad::Tape& t) { return ppo_actor_loss(t, actor, b, 2.0, 0.3); });
  EXPECT_TRUE(r1.ok()) << r1.worst_entry;
  ad::Matrix ci = ad::Matrix::Random(10, 6), ct = ad::Matrix::Random(10, 1);
  auto r2 = oracle::grad_check(critic.parameters(), [&](ad::Tape& t) { return value_loss(t, critic, ci, ct); });
  EXPECT_TRUE(r2.ok()) << r2.worst_entry;
  Eigen::RowVectorXd enc = Eigen::RowVectorXd::Random(5);
  auto r3 = oracle::grad_check(lam.parameters(), [&](ad::Tape& t) { return lambda_loss(t, lam, enc, -3.7); });
  EXPECT_TRUE(r3.ok()) << r3.worst_entry;
}

double greedy_spend_rate(const AgentPolicy& pol, const Environment& env, const ParamSetting& w, int steps,
                         std::uint64_t seed) {
  Rng rng(seed);
  auto tab = env.tables(w);
  JointState s = env.random_state(rng);
  double spend = 0.0;
  for (int t = 0; t < steps; ++t) {
    auto a = ddlpo_act(pol, s, ActMethod::greedy_proba, env.instance, rng);
    spend += a.total_cost(env.instance.costs);
    s = simulate(env.instance, tab, s, a, rng).next_state;
  }
  return spend / steps;
}

TEST(TrainDdlpo, DominatedActionLearnsPassive) {
  auto env = single_synthetic(SyntheticType::U);
  ParamSetting w{{{0.0}}};  // acting changes nothing
  auto res = train_ddlpo(env, MixedStrategy<ParamSetting>::pure(w), quick_config(), 11);
  for (double l : res.curves.lambda) EXPECT_GE(l, 0.0);
  for (int s = 0; s < 2; ++s) {
    auto p = res.policy.action_probs(0, s, res.policy.lambda({s}));
    EXPECT_EQ(nn::Categorical::greedy(p), 0) << "state " << s;
  }
  EXPECT_LT(greedy_spend_rate(res.policy, env, w, 2000, 5), 0.05 * env.instance.budget);
}

TEST(TrainDdlpo, SingleArmMatchesJointValueIteration) {
  auto env = single_synthetic(SyntheticType::W);
  ParamSetting w{{{0.95}}};
  auto res = train_ddlpo(env, MixedStrategy<ParamSetting>::pure(w), quick_config(), 12);
  auto kernels = arm_kernels(env, w);
  auto exact = joint_value_iteration(kernels, env.instance.budget);
  Rng rng(1);
  // At s = 0 both actions give the same next-state law; the exact tie-break is
  // passive, and any positive lambda makes the learned policy agree.
  for (int s = 0; s < 2; ++s)
    EXPECT_EQ(ddlpo_act(res.policy, {s}, ActMethod::greedy_proba, env.instance, rng).indices(),
              exact.action_for({s}))
        << "state " << s;
}

TEST(TrainDdlpo, TwoArmActsOnGoodArm) {
  Environment env = make_synthetic(2, 1.0);
  env.arm_types = {0, 2};
  env.intervals.arms = {{synthetic_interval(SyntheticType::U)}, {synthetic_interval(SyntheticType::W)}};
  ParamSetting w{{{0.0}, {0.95}}};
  auto res = train_ddlpo(env, MixedStrategy<ParamSetting>::pure(w), quick_config(), 13);
  auto exact = joint_value_iteration(arm_kernels(env, w), 1.0);
  EXPECT_EQ(exact.action_for({1, 1}), (std::vector<int>{0, 1}));
  Rng rng(2);
  for (auto m : {ActMethod::greedy_proba, ActMethod::q_knapsack, ActMethod::whittle})
    EXPECT_EQ(ddlpo_act(res.policy, {1, 1}, m, env.instance, rng).indices(), (std::vector<int>{0, 1}))
        << act_method_name(m);
}

TEST(TrainDdlpo, FixedSeedIsBitwiseReproducible) {
  auto env = make_synthetic(3, 1.0);
  ParamSetting w{{{0.5}, {0.5}, {0.5}}};
  auto cfg = quick_config(6);
  cfg.n_steps = 30;
  auto a = train_ddlpo(env, MixedStrategy<ParamSetting>::pure(w), cfg, 21);
  auto b = train_ddlpo(env, MixedStrategy<ParamSetting>::pure(w), cfg, 21);
  EXPECT_EQ(a.policy.to_json(), b.policy.to_json());
  EXPECT_EQ(a.curves.to_json(), b.curves.to_json());
  auto c = train_ddlpo(env, MixedStrategy<ParamSetting>::pure(w), cfg, 22);
  EXPECT_NE(a.policy.to_json(), c.policy.to_json());
}

TEST(TrainDdlpo, RejectsOmegaOutsideIntervals) {
  auto env = make_synthetic(3, 1.0);
  ParamSetting w{{{0.5}, {0.5}, {0.99}}};
  EXPECT_THROW(train_ddlpo(env, MixedStrategy<ParamSetting>::pure(w), quick_config(5), 1), ParameterError);
}

TEST(TrainDdlpo, ActionsAlwaysFeasible) {
  auto env = make_armman(5, 2.0);
  Rng rng(3);
  auto w = sample_omega(env.intervals, OmegaMode::uniform, rng);
  auto cfg = quick_config(10);
  cfg.n_steps = 40;
  auto res = train_ddlpo(env, MixedStrategy<ParamSetting>::pure(w), cfg, 14);
  for (int i = 0; i < 200; ++i) {
    auto s = env.random_state(rng);
    for (auto m : {ActMethod::greedy_proba, ActMethod::q_knapsack, ActMethod::whittle})
      EXPECT_TRUE(is_feasible(ddlpo_act(res.policy, s, m, env.instance, rng), env.instance));
  }
}

TEST(ExactLambda, IterationConvergesToGridMinimizer) {
  // Two W-type arms at p = 0.9 and 0.6, one unit of budget.
  Environment env = make_synthetic(2, 1.0);
  ParamSetting w{{{0.9}, {0.6}}};
  auto arms = arm_kernels(env, w);
  for (JointState s : {JointState{1, 1}, JointState{1, 0}, JointState{0, 0}}) {
    double best = 0.0, best_val = std::numeric_limits<double>::infinity();
    for (double l = 0.0; l <= 3.0; l += 1e-4) {
      const double v = lagrange_objective(arms, s, l, 1.0, {1e-10, 100000});
      if (v < best_val - 1e-12) {
        best_val = v;
        best = l;
      }
    }
    auto it = exact_lambda_iteration(arms, s, 1.0, 1.0, 0.5, 4000);
    EXPECT_NEAR(it.lambda, best, 1e-3) << "state " << s[0] << s[1];
  }
}

TEST(ExactQPolicyTest, WhittleAndKnapsackAgreeOnBinaryInstance) {
  Environment env = make_synthetic(4, 2.0);
  ParamSetting w{{{0.3}, {0.5}, {0.7}, {0.9}}};
  ExactQPolicy pol(arm_kernels(env, w), 2.0);
  Rng rng(4);
  auto a = ddlpo_act(pol, {1, 1, 1, 1}, ActMethod::whittle, env.instance, rng);
  EXPECT_EQ(a.indices(), (std::vector<int>{0, 0, 1, 1}));
  auto b = ddlpo_act(pol, {1, 1, 1, 1}, ActMethod::q_knapsack, env.instance, rng);
  EXPECT_EQ(b.total_cost(env.instance.costs), 2.0);
}

}  // namespace
}  // namespace rrmab
