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

// Nature oracle. Player A is a reward-maximizing agent with the same
// structure as the agent oracle, except that its critics also see omega.
// Player B picks omega from a Gaussian policy over the unit cube and is paid
// the one-step regret of the agent's mixed strategy:
//
//   r_B = sum_n R_n(s'_n) - mean_y sum_n R_n(s'_{n,y}),
//
// where s' follows player A's action and each s'_y follows a pure strategy
// sampled from the mixture. Both use next-state rewards: with pre-transition
// rewards the two terms share R(s) and the difference is identically zero.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "rrmab/autodiff.hpp"
#include "rrmab/ddlpo.hpp"
#include "rrmab/envs.hpp"
#include "rrmab/model.hpp"
#include "rrmab/nn.hpp"
#include "rrmab/rng.hpp"
#include "rrmab/strategies.hpp"

namespace rrmab {

struct NatureConfig {
  TrainConfig agent = [] {
    TrainConfig c;
    c.actor_lr = 1e-3;
    c.critic_lr = 1e-3;
    return c;
  }();
  double nature_actor_lr = 5e-3;
  double nature_critic_lr = 5e-3;
  int n_sims = 25;
  double log_std_init = -0.5;
  double log_std_min = -4.0;
  double log_std_max = 0.0;
  // Freezes player B and steps the environment with `frozen_omega`; player A
  // then follows exactly the agent-oracle code path.
  bool disable_nature = false;

  void validate() const {
    agent.validate();
    if (!(nature_actor_lr > 0.0) || !(nature_critic_lr > 0.0))
      throw ParameterError("NatureConfig: learning rates must be positive");
    if (n_sims < 1) throw ParameterError("NatureConfig: n_sims must be >= 1");
    if (!(log_std_min <= log_std_init && log_std_init <= log_std_max))
      throw ParameterError("NatureConfig: log_std_init outside [log_std_min, log_std_max]");
  }

  nlohmann::json to_json() const {
    return {{"agent", agent.to_json()},       {"nature_actor_lr", nature_actor_lr},
            {"nature_critic_lr", nature_critic_lr}, {"n_sims", n_sims},
            {"log_std_init", log_std_init}};
  }

  static NatureConfig from_json(const nlohmann::json& j) {
    NatureConfig c;
    if (j.contains("agent")) c.agent = TrainConfig::from_json(j.at("agent"), c.agent);
    c.nature_actor_lr = j.value("nature_actor_lr", c.nature_actor_lr);
    c.nature_critic_lr = j.value("nature_critic_lr", c.nature_critic_lr);
    c.n_sims = j.value("n_sims", c.n_sims);
    c.log_std_init = j.value("log_std_init", c.log_std_init);
    c.validate();
    return c;
  }
};

inline double regret_reward(std::span<const double> r_agent, double r_tilde) {
  double s = 0.0;
  for (double x : r_agent) s += x;
  return s - r_tilde;
}

// Mean over n_sims one-step rollouts from s under omega of the summed
// next-state reward, each with an independently sampled pure strategy.
inline double estimate_tilde_return(const Environment& env, const JointState& s,
                                    const MixedStrategy<StrategyPtr>& mix, const ParamSetting& omega,
                                    int n_sims, Rng& rng) {
  if (n_sims < 1) throw ParameterError("estimate_tilde_return: n_sims must be >= 1");
  double total = 0.0;
  for (int y = 0; y < n_sims; ++y) {
    const auto& pi = mix.items()[mix.sample_index(rng)];
    const auto a = pi->act(s, rng);
    if (!is_feasible(a, env.instance)) throw InvariantViolation("estimate_tilde_return: infeasible action");
    const auto idx = a.indices();
    const auto next = simulate(env, omega, s, idx, rng).next_state;
    for (int n = 0; n < env.n_arms(); ++n) total += env.instance.reward(n, next[n]);
  }
  return total / n_sims;
}

// Player B: mean(s) = sigmoid(actor(s)) in the unit cube, free log std.
class NaturePolicy {
 public:
  NaturePolicy() = default;
  NaturePolicy(const Environment& env, double log_std_init, Rng& rng)
      : encoder_(StateEncoder::for_env(env)), dim_(env.intervals.n_params()), n_arms_(env.n_arms()),
        n_actions_(env.n_actions()) {
    actor_ = nn::Mlp(encoder_.joint_width(), dim_, rng, 0.01, "nature_actor");
    critic_ = nn::Mlp(critic_width(), 1, rng, 1.0, "nature_critic");
    log_std_ = ad::Parameter("nature_log_std", ad::Matrix::Constant(1, dim_, log_std_init));
  }

  int dim() const { return dim_; }
  int critic_width() const { return encoder_.joint_width() + n_arms_ * n_actions_; }
  const StateEncoder& encoder() const { return encoder_; }
  nn::Mlp& actor() { return actor_; }
  nn::Mlp& critic() { return critic_; }
  ad::Parameter& log_std() { return log_std_; }
  const ad::Parameter& log_std() const { return log_std_; }

  Eigen::RowVectorXd mean_unit(const JointState& s) const {
    Eigen::RowVectorXd m = actor_.forward(encoder_.joint(s)).row(0);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = ad::sigmoid_value(m(i));
    return m;
  }

  // Raw Gaussian draw; the environment sees it clamped to [0, 1].
  Eigen::RowVectorXd sample_raw(const JointState& s, Rng& rng) const {
    return nn::DiagGaussian::sample(mean_unit(s), log_std_.value.row(0), rng);
  }

  static std::vector<double> clamp_unit(const Eigen::RowVectorXd& x) {
    std::vector<double> u(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) u[i] = std::clamp(x(i), 0.0, 1.0);
    return u;
  }

  void critic_input(const JointState& s, std::span<const int> agent_action, RowRef row) const {
    row.setZero();
    encoder_.joint(s, row.head(encoder_.joint_width()));
    for (int n = 0; n < n_arms_; ++n) row(encoder_.joint_width() + n * n_actions_ + agent_action[n]) = 1.0;
  }

  // Deterministic omega at a given state (Gaussian mean).
  ParamSetting omega_at(const Environment& env, const JointState& s) const {
    const auto m = mean_unit(s);
    return env.intervals.from_unit(std::vector<double>(m.data(), m.data() + m.size()));
  }

  std::vector<ad::Parameter*> parameters() {
    auto p = actor_.parameters();
    for (auto* q : critic_.parameters()) p.push_back(q);
    p.push_back(&log_std_);
    return p;
  }

  std::vector<const ad::Parameter*> parameters() const {
    auto p = actor_.parameters();
    for (const auto* q : critic_.parameters()) p.push_back(q);
    p.push_back(&log_std_);
    return p;
  }

  nlohmann::json to_json() const {
    auto j = nn::parameters_to_json(parameters());
    j["kind"] = "nature_policy";
    j["dim"] = dim_;
    return j;
  }

 private:
  StateEncoder encoder_;
  int dim_ = 0, n_arms_ = 0, n_actions_ = 0;
  nn::Mlp actor_, critic_;
  ad::Parameter log_std_;
};

// PPO loss for player B on raw (pre-clamp) Gaussian samples.
inline ad::Var nature_actor_loss(ad::Tape& tape, NaturePolicy& pol, const ad::Matrix& states,
                                 const ad::Matrix& raw, const ad::Matrix& old_logp, const ad::Matrix& adv,
                                 double clip) {
  ad::Var mean = ad::sigmoid(pol.actor().forward(tape, tape.constant(states)));
  ad::Var logp = nn::DiagGaussian::logprob(mean, tape.param(pol.log_std()), raw);
  ad::Var ratio = ad::exp(ad::sub(logp, tape.constant(old_logp)));
  ad::Var a = tape.constant(adv);
  ad::Var surr = ad::minimum(ad::mul(ratio, a), ad::mul(ad::clip(ratio, 1.0 - clip, 1.0 + clip), a));
  return ad::scale(ad::mean(surr), -1.0);
}

struct NatureCurves {
  std::vector<double> nature_reward;  // mean r_B per step
  std::vector<double> agent_reward;   // mean summed reward per step (player A)
  std::vector<double> lambda;

  nlohmann::json to_json() const {
    return {{"nature_reward", nature_reward}, {"agent_reward", agent_reward}, {"lambda", lambda}};
  }
};

struct NatureResult {
  ParamSetting omega;  // collapsed pure strategy
  NaturePolicy policy;
  AgentPolicy agent;   // player A
  NatureCurves curves;
};

// Trains both players. With disable_nature, omega stays at frozen_omega.
inline NatureResult train_ma_ddlpo(const Environment& env, const MixedStrategy<StrategyPtr>& mix,
                                   const NatureConfig& cfg, std::uint64_t seed,
                                   const ParamSetting* frozen_omega = nullptr) {
  cfg.validate();
  for (const auto& p : mix.items())
    if (!p) throw ParameterError("train_ma_ddlpo: null agent strategy");
  if (cfg.disable_nature && !frozen_omega)
    throw ParameterError("train_ma_ddlpo: disable_nature needs a frozen omega");
  const auto& inst = env.instance;
  const TrainConfig& tc = cfg.agent;
  const int N = inst.n_arms;

  // Streams 0 and 1 match train_ddlpo so the frozen variant is identical.
  Rng init = make_rng(seed, {0});
  Rng rng = make_rng(seed, {1});
  Rng nrng = make_rng(seed, {2});
  const int omega_width = cfg.disable_nature ? 0 : env.intervals.n_params();
  AgentTrainer trainer(inst, StateEncoder::for_env(env), omega_width, tc, {tc.actor_lr, tc.critic_lr, tc.lambda_lr},
                       init);
  Rng ninit = make_rng(seed, {3});
  NaturePolicy nature(env, cfg.log_std_init, ninit);
  auto actor_params = nature.actor().parameters();
  actor_params.push_back(&nature.log_std());
  nn::Adam actor_opt(actor_params, nn::AdamConfig{cfg.nature_actor_lr});
  nn::Adam critic_opt(nature.critic().parameters(), nn::AdamConfig{cfg.nature_critic_lr});

  TransitionTables frozen_tables;
  if (cfg.disable_nature) frozen_tables = env.tables(*frozen_omega);

  NatureCurves curves;
  const int enc_w = nature.encoder().joint_width(), cw = nature.critic_width(), d = nature.dim();
  for (int epoch = 0; epoch < tc.n_epochs; ++epoch) {
    trainer.begin_epoch(rng);
    // The agent oracle draws its epoch's omega here.
    if (cfg.disable_nature) uniform01(rng);
    std::vector<Eigen::RowVectorXd> b_state, b_raw, b_crit, b_crit_next;
    std::vector<double> b_logp, b_reward;
    double epoch_agent = 0.0;
    long steps = 0;

    AgentTrainer::StepFn step = [&](const JointState& s, const std::vector<int>& a) -> AgentStep {
      if (cfg.disable_nature) return AgentStep{simulate(inst, frozen_tables, s, a, rng), {}};
      const auto mean = nature.mean_unit(s);
      const Eigen::RowVectorXd raw = nn::DiagGaussian::sample(mean, nature.log_std().value.row(0), nrng);
      auto unit = NaturePolicy::clamp_unit(raw);
      const ParamSetting omega = env.intervals.from_unit(unit);
      AgentStep out{simulate(env, omega, s, a, rng), unit};
      std::vector<double> r_next(N);
      for (int n = 0; n < N; ++n) r_next[n] = inst.reward(n, out.env.next_state[n]);
      const double r_tilde = estimate_tilde_return(env, s, mix, omega, cfg.n_sims, nrng);
      // Player A's next action for the critic bootstrap, from its current
      // sampling distribution.
      const auto& probs = trainer.prob_tables();
      std::vector<int> a_next(N);
      for (int n = 0; n < N; ++n) a_next[n] = sample_categorical(probs[n][out.env.next_state[n]], nrng);
      b_state.push_back(nature.encoder().joint(s));
      b_raw.push_back(raw);
      b_logp.push_back(nn::DiagGaussian::logprob(mean, nature.log_std().value.row(0), raw));
      b_reward.push_back(regret_reward(r_next, r_tilde));
      Eigen::RowVectorXd c(cw), cn(cw);
      nature.critic_input(s, a, c);
      nature.critic_input(out.env.next_state, a_next, cn);
      b_crit.push_back(std::move(c));
      b_crit_next.push_back(std::move(cn));
      for (double r : out.env.rewards) epoch_agent += r;
      ++steps;
      return out;
    };

    std::vector<std::vector<double>> costs;
    for (int sub = 0; sub < tc.n_subepochs; ++sub) costs = trainer.run_subepoch(epoch, sub, step, rng);
    trainer.end_epoch(epoch, costs);
    curves.lambda.push_back(trainer.current_lambda());
    curves.agent_reward.push_back(trainer.curves().mean_reward.back());
    if (cfg.disable_nature) {
      curves.nature_reward.push_back(0.0);
      continue;
    }

    // Player B update, once per epoch on the epoch's samples.
    const int T = static_cast<int>(b_reward.size());
    ad::Matrix states(T, enc_w), raw(T, d), old_logp(T, 1), crit(T, cw), crit_next(T, cw), adv(T, 1),
        target(T, 1);
    for (int t = 0; t < T; ++t) {
      states.row(t) = b_state[t];
      raw.row(t) = b_raw[t];
      old_logp(t, 0) = b_logp[t];
      crit.row(t) = b_crit[t];
      crit_next.row(t) = b_crit_next[t];
    }
    const ad::Matrix v = nature.critic().forward(crit), v_next = nature.critic().forward(crit_next);
    double mean_r = 0.0;
    for (int t = 0; t < T; ++t) {
      target(t, 0) = b_reward[t] + tc.discount * v_next(t, 0);
      adv(t, 0) = target(t, 0) - v(t, 0);
      mean_r += b_reward[t];
    }
    curves.nature_reward.push_back(T ? mean_r / T : 0.0);
    if (!adv.allFinite()) throw TrainingError("nature advantages are not finite at epoch " + std::to_string(epoch));
    for (int i = 0; i < tc.trains_per_epoch; ++i) {
      actor_opt.zero_grad();
      ad::Tape tape;
      auto loss = nature_actor_loss(tape, nature, states, raw, old_logp, adv, tc.clip_ratio);
      if (!std::isfinite(loss.scalar()))
        throw TrainingError("nature actor loss diverged at epoch " + std::to_string(epoch));
      tape.backward(loss);
      actor_opt.step();
      auto& ls = nature.log_std().value;
      ls = ls.cwiseMax(cfg.log_std_min).cwiseMin(cfg.log_std_max);
    }
    for (int i = 0; i < tc.trains_per_epoch; ++i) {
      critic_opt.zero_grad();
      ad::Tape tape;
      auto loss = value_loss(tape, nature.critic(), crit, target);
      if (!std::isfinite(loss.scalar()))
        throw TrainingError("nature critic loss diverged at epoch " + std::to_string(epoch));
      tape.backward(loss);
      critic_opt.step();
    }
  }

  NatureResult res;
  res.omega = cfg.disable_nature ? *frozen_omega : nature.omega_at(env, env.canonical_state());
  res.policy = nature;
  res.agent = trainer.policy();
  res.curves = curves;
  return res;
}

}  // namespace rrmab
