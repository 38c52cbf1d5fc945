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

// Agent oracle. Each arm gets an actor pi_n(a | s_n, lambda) and a critic
// Q_n(s_n, a, lambda); a lambda-network predicts the multiplier for the whole
// joint state. Training alternates PPO on the lambda-penalized arm MDPs with
// a dual step on the lambda-network driven by sampled discounted spend.
//
// Budgets are not enforced while training. ddlpo_act() enforces them at test
// time.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "rrmab/autodiff.hpp"
#include "rrmab/envs.hpp"
#include "rrmab/exact.hpp"
#include "rrmab/model.hpp"
#include "rrmab/nn.hpp"
#include "rrmab/rng.hpp"

namespace rrmab {

struct TrainConfig {
  int n_epochs = 100;
  int n_subepochs = 4;
  int n_steps = 100;  // rollout steps per subepoch
  int trains_per_epoch = 20;
  double clip_ratio = 2.0;
  double actor_lr = 2e-3;
  double critic_lr = 2e-3;
  double lambda_lr = 2e-3;
  double start_entropy = 0.5;
  double end_entropy = 0.0;
  int lambda_freeze_epochs = 20;
  double discount = 0.9;

  void validate() const {
    if (n_epochs < 1 || n_subepochs < 1 || n_steps < 1 || trains_per_epoch < 1)
      throw ParameterError("TrainConfig: counts must be positive");
    if (!(clip_ratio > 0.0) || !(actor_lr > 0.0) || !(critic_lr > 0.0) || !(lambda_lr > 0.0))
      throw ParameterError("TrainConfig: clip ratio and learning rates must be positive");
    if (start_entropy < 0.0 || end_entropy < 0.0 || end_entropy > start_entropy)
      throw ParameterError("TrainConfig: need 0 <= end entropy <= start entropy");
    if (lambda_freeze_epochs < 0 || lambda_freeze_epochs >= n_epochs)
      throw ParameterError("TrainConfig: lambda_freeze_epochs must lie in [0, n_epochs)");
    if (!(discount >= 0.0 && discount < 1.0)) throw ParameterError("TrainConfig: discount in [0, 1)");
  }

  nlohmann::json to_json() const {
    return {{"n_epochs", n_epochs},       {"n_subepochs", n_subepochs},
            {"n_steps", n_steps},         {"trains_per_epoch", trains_per_epoch},
            {"clip_ratio", clip_ratio},   {"actor_lr", actor_lr},
            {"critic_lr", critic_lr},     {"lambda_lr", lambda_lr},
            {"start_entropy", start_entropy}, {"end_entropy", end_entropy},
            {"lambda_freeze_epochs", lambda_freeze_epochs}, {"discount", discount}};
  }

  static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig()); }

  static TrainConfig from_json(const nlohmann::json& j, TrainConfig c) {
    c.n_epochs = j.value("n_epochs", c.n_epochs);
    c.n_subepochs = j.value("n_subepochs", c.n_subepochs);
    c.n_steps = j.value("n_steps", c.n_steps);
    c.trains_per_epoch = j.value("trains_per_epoch", c.trains_per_epoch);
    c.clip_ratio = j.value("clip_ratio", c.clip_ratio);
    c.actor_lr = j.value("actor_lr", c.actor_lr);
    c.critic_lr = j.value("critic_lr", c.critic_lr);
    c.lambda_lr = j.value("lambda_lr", c.lambda_lr);
    c.start_entropy = j.value("start_entropy", c.start_entropy);
    c.end_entropy = j.value("end_entropy", c.end_entropy);
    c.lambda_freeze_epochs = j.value("lambda_freeze_epochs", c.lambda_freeze_epochs);
    c.discount = j.value("discount", c.discount);
    c.validate();
    return c;
  }
};

// Epochs and subepochs are 0-based. The outer term decays linearly from
// start to end over the non-frozen epochs; inside an epoch it decays to 0 by
// the last subepoch. Frozen epochs train without entropy.
inline double entropy_coefficient(int epoch, int subepoch, const TrainConfig& c) {
  const int active = c.n_epochs - c.lambda_freeze_epochs;
  if (epoch >= active) return 0.0;
  const double tau = c.start_entropy + (c.end_entropy - c.start_entropy) * epoch / active;
  if (c.n_subepochs == 1) return 0.0;
  return tau * static_cast<double>(c.n_subepochs - 1 - subepoch) / (c.n_subepochs - 1);
}

// A matrix row or a row vector.
using RowRef = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

// Fixed-width encodings of arm and joint states.
struct StateEncoder {
  int n_arms = 0;
  int n_states = 0;
  bool fractional = false;  // SIS: susceptible fraction per arm instead of one-hot

  static StateEncoder for_env(const Environment& env) {
    return {env.n_arms(), env.n_states(), env.domain == Domain::sis};
  }

  int joint_width() const { return fractional ? n_arms : n_arms * n_states; }

  void joint(const JointState& s, RowRef out) const {
    out.setZero();
    for (int n = 0; n < n_arms; ++n) {
      if (fractional)
        out(n) = n_states > 1 ? static_cast<double>(s[n]) / (n_states - 1) : 0.0;
      else
        out(n * n_states + s[n]) = 1.0;
    }
  }

  Eigen::RowVectorXd joint(const JointState& s) const {
    Eigen::RowVectorXd v(joint_width());
    joint(s, v);
    return v;
  }
};

// ---------------------------------------------------------------------------
// Test-time action selection works against any source of lambda, action
// probabilities and Q-values.

class LagrangePolicyView {
 public:
  virtual ~LagrangePolicyView() = default;
  virtual int n_arms() const = 0;
  virtual int n_actions() const = 0;
  virtual double lambda(const JointState& s) const = 0;
  virtual std::vector<double> action_probs(int arm, int s, double lambda) const = 0;
  virtual double q_value(int arm, int s, int a, double lambda) const = 0;
};

enum class ActMethod { greedy_proba, q_knapsack, whittle };

inline const char* act_method_name(ActMethod m) {
  switch (m) {
    case ActMethod::greedy_proba: return "GreedyProba";
    case ActMethod::q_knapsack: return "QKnapsack";
    case ActMethod::whittle: return "Whittle";
  }
  return "?";
}

inline ActMethod parse_act_method(const std::string& s) {
  if (s == "GreedyProba") return ActMethod::greedy_proba;
  if (s == "QKnapsack") return ActMethod::q_knapsack;
  if (s == "Whittle") return ActMethod::whittle;
  throw ParameterError("unknown action method '" + s + "'");
}

// Arms are visited in descending order of their largest non-passive
// probability. An arm whose most likely action is passive stays passive;
// otherwise it takes its most likely non-passive action, or the next most
// likely cheaper non-passive action that still fits, or passive.
inline ActionMatrix greedy_proba(const std::vector<std::vector<double>>& probs,
                                 std::span<const double> costs, double budget) {
  const int N = static_cast<int>(probs.size()), A = static_cast<int>(costs.size());
  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);
  auto best_active = [&](int n) {
    return *std::max_element(probs[n].begin() + 1, probs[n].end());
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return best_active(a) > best_active(b); });
  std::vector<int> act(N, 0);
  double remaining = budget;
  for (int n : order) {
    const auto& p = probs[n];
    const int top = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    if (top == 0) continue;
    std::vector<int> cand;
    for (int j = 1; j < A; ++j) cand.push_back(j);
    std::stable_sort(cand.begin(), cand.end(), [&](int a, int b) { return p[a] > p[b]; });
    const double first_cost = costs[cand.front()];
    for (int j : cand) {
      if (j != cand.front() && costs[j] >= first_cost) continue;  // fall back only to cheaper
      if (costs[j] <= remaining + kBudgetSlack) {
        act[n] = j;
        remaining -= costs[j];
        break;
      }
    }
  }
  return ActionMatrix::from_indices(act, A);
}

inline ActionMatrix ddlpo_act(const LagrangePolicyView& view, const JointState& s, ActMethod method,
                              const RmabInstance& inst, Rng& rng, double whittle_eps = 1e-4) {
  const int N = view.n_arms(), A = view.n_actions();
  if (static_cast<int>(s.size()) != N) throw DimensionError("ddlpo_act: state length != n_arms");
  ActionMatrix out;
  switch (method) {
    case ActMethod::greedy_proba: {
      const double lambda = view.lambda(s);
      std::vector<std::vector<double>> p;
      for (int n = 0; n < N; ++n) p.push_back(view.action_probs(n, s[n], lambda));
      out = greedy_proba(p, inst.costs, inst.budget);
      break;
    }
    case ActMethod::q_knapsack: {
      const double lambda = view.lambda(s);
      std::vector<std::vector<double>> q(N, std::vector<double>(A));
      for (int n = 0; n < N; ++n)
        for (int j = 0; j < A; ++j) q[n][j] = view.q_value(n, s[n], j, lambda);
      out = knapsack_select(q, inst.costs, inst.budget);
      break;
    }
    case ActMethod::whittle: {
      if (A != 2) throw ParameterError("ddlpo_act: Whittle selection needs binary actions");
      if (std::abs(inst.costs[1] - 1.0) > 1e-12)
        throw ParameterError("ddlpo_act: Whittle selection needs unit active cost");
      auto qfn = [&](int n, double l) {
        return std::pair<double, double>{view.q_value(n, s[n], 0, l), view.q_value(n, s[n], 1, l)};
      };
      const int b = static_cast<int>(std::floor(inst.budget + kBudgetSlack));
      out = whittle_binary_search(N, b, qfn, whittle_eps, rng);
      break;
    }
  }
  if (!is_feasible(out, inst)) throw InvariantViolation("ddlpo_act: selected action is infeasible");
  return out;
}

// ---------------------------------------------------------------------------
// Networks.

class AgentPolicy : public LagrangePolicyView {
 public:
  AgentPolicy() = default;

  // omega_width > 0 adds nature's (unit-scaled) parameters to every critic
  // input, as the auxiliary player in the nature oracle requires.
  AgentPolicy(const RmabInstance& inst, StateEncoder enc, int omega_width, Rng& rng)
      : n_arms_(inst.n_arms), n_states_(inst.n_states), n_actions_(inst.n_actions),
        omega_width_(omega_width), encoder_(enc) {
    for (int n = 0; n < n_arms_; ++n) {
      const std::string id = std::to_string(n);
      actors_.emplace_back(actor_width(), n_actions_, rng, 0.01, "actor" + id);
      critics_.emplace_back(critic_width(), 1, rng, 1.0, "critic" + id);
    }
    lambda_net_ = nn::Mlp(encoder_.joint_width(), 1, rng, 1.0, "lambda");
  }

  int n_arms() const override { return n_arms_; }
  int n_actions() const override { return n_actions_; }
  int n_states() const { return n_states_; }
  int omega_width() const { return omega_width_; }
  const StateEncoder& encoder() const { return encoder_; }

  int actor_width() const { return n_states_ + 1; }
  int critic_width() const { return n_states_ + n_actions_ + 1 + omega_width_; }

  nn::Mlp& actor(int n) { return actors_[n]; }
  nn::Mlp& critic(int n) { return critics_[n]; }
  nn::Mlp& lambda_net() { return lambda_net_; }
  const nn::Mlp& actor(int n) const { return actors_[n]; }
  const nn::Mlp& critic(int n) const { return critics_[n]; }
  const nn::Mlp& lambda_net() const { return lambda_net_; }

  void actor_input(int s, double lambda, RowRef row) const {
    row.setZero();
    row(s) = 1.0;
    row(n_states_) = lambda;
  }

  void critic_input(int s, int a, double lambda, std::span<const double> omega,
                    RowRef row) const {
    if (static_cast<int>(omega.size()) != omega_width_)
      throw DimensionError("critic_input: omega width mismatch");
    row.setZero();
    row(s) = 1.0;
    row(n_states_ + a) = 1.0;
    row(n_states_ + n_actions_) = lambda;
    for (int k = 0; k < omega_width_; ++k) row(n_states_ + n_actions_ + 1 + k) = omega[k];
  }

  // Softplus keeps the multiplier nonnegative while leaving a gradient at 0.
  double lambda(const JointState& s) const override {
    return ad::softplus_value(lambda_net_.forward(encoder_.joint(s))(0, 0));
  }

  std::vector<double> action_probs(int arm, int s, double lambda) const override {
    Eigen::RowVectorXd x(actor_width());
    actor_input(s, lambda, x);
    return nn::Categorical::probs(actors_[arm].forward(x).row(0));
  }

  double q_value(int arm, int s, int a, double lambda) const override {
    if (omega_width_ != 0) throw InvariantViolation("q_value: critic needs nature parameters");
    return q_value(arm, s, a, lambda, {});
  }

  double q_value(int arm, int s, int a, double lambda, std::span<const double> omega) const {
    Eigen::RowVectorXd x(critic_width());
    critic_input(s, a, lambda, omega, x);
    return critics_[arm].forward(x)(0, 0);
  }

  std::vector<ad::Parameter*> all_parameters() {
    std::vector<ad::Parameter*> out;
    for (auto& m : actors_)
      for (auto* p : m.parameters()) out.push_back(p);
    for (auto& m : critics_)
      for (auto* p : m.parameters()) out.push_back(p);
    for (auto* p : lambda_net_.parameters()) out.push_back(p);
    return out;
  }

  std::vector<const ad::Parameter*> all_parameters() const {
    std::vector<const ad::Parameter*> out;
    for (const auto& m : actors_)
      for (const auto* p : m.parameters()) out.push_back(p);
    for (const auto& m : critics_)
      for (const auto* p : m.parameters()) out.push_back(p);
    for (const auto* p : lambda_net_.parameters()) out.push_back(p);
    return out;
  }

  nlohmann::json to_json() const {
    auto j = nn::parameters_to_json(all_parameters());
    j["kind"] = "agent_policy";
    j["n_arms"] = n_arms_;
    j["n_states"] = n_states_;
    j["n_actions"] = n_actions_;
    j["omega_width"] = omega_width_;
    j["fractional"] = encoder_.fractional;
    return j;
  }

  static AgentPolicy from_json(const nlohmann::json& j, const RmabInstance& inst) {
    if (j.at("n_arms").get<int>() != inst.n_arms || j.at("n_states").get<int>() != inst.n_states ||
        j.at("n_actions").get<int>() != inst.n_actions)
      throw DimensionError("AgentPolicy checkpoint does not match the instance");
    Rng rng(0);
    StateEncoder enc{inst.n_arms, inst.n_states, j.at("fractional").get<bool>()};
    AgentPolicy p(inst, enc, j.at("omega_width").get<int>(), rng);
    nn::parameters_from_json(j, p.all_parameters());
    return p;
  }

 private:
  int n_arms_ = 0, n_states_ = 0, n_actions_ = 0, omega_width_ = 0;
  StateEncoder encoder_;
  std::vector<nn::Mlp> actors_, critics_;
  nn::Mlp lambda_net_;
};

// ---------------------------------------------------------------------------
// Losses. Each builds a scalar on the tape so the same graph serves training
// and gradient checks.

struct ActorBatch {
  ad::Matrix inputs;          // (T, S + 1)
  std::vector<int> actions;   // T
  ad::Matrix old_logp;        // (T, 1)
  ad::Matrix advantages;      // (T, 1)
};

// -mean(min(r A, clip(r, 1 - c, 1 + c) A)) - tau mean(H).
inline ad::Var ppo_actor_loss(ad::Tape& tape, nn::Mlp& actor, const ActorBatch& b, double clip,
                              double entropy_coeff) {
  ad::Var logits = actor.forward(tape, tape.constant(b.inputs));
  ad::Var logp = nn::Categorical::logprob(logits, b.actions);
  ad::Var ratio = ad::exp(ad::sub(logp, tape.constant(b.old_logp)));
  ad::Var adv = tape.constant(b.advantages);
  ad::Var surr = ad::minimum(ad::mul(ratio, adv), ad::mul(ad::clip(ratio, 1.0 - clip, 1.0 + clip), adv));
  ad::Var loss = ad::scale(ad::mean(surr), -1.0);
  if (entropy_coeff != 0.0)
    loss = ad::sub(loss, ad::scale(ad::mean(nn::Categorical::entropy(logits)), entropy_coeff));
  return loss;
}

// mean((f(x) - y)^2).
inline ad::Var value_loss(ad::Tape& tape, nn::Mlp& critic, const ad::Matrix& inputs,
                          const ad::Matrix& targets) {
  ad::Var q = critic.forward(tape, tape.constant(inputs));
  return ad::mean(ad::square(ad::sub(q, tape.constant(targets))));
}

// signal * softplus(Lambda(s)); its gradient is the dual step direction.
inline ad::Var lambda_loss(ad::Tape& tape, nn::Mlp& net, const Eigen::RowVectorXd& enc, double signal) {
  ad::Var lam = ad::softplus(net.forward(tape, tape.constant(enc)));
  return ad::scale(lam, signal);
}

// B / (1 - beta) + sum_n D_n with D_n = -sum_k beta^k c_n^k.
inline double lambda_signal(const std::vector<std::vector<double>>& arm_costs, double budget, double beta) {
  double g = budget / (1.0 - beta);
  for (const auto& c : arm_costs) {
    double w = 1.0, d = 0.0;
    for (double x : c) {
      d -= w * x;
      w *= beta;
    }
    g += d;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Training.

struct TrainCurves {
  std::vector<double> mean_reward;    // per-step summed reward over the epoch
  std::vector<double> lambda;         // lambda used in the epoch
  std::vector<double> spend;          // per-step summed cost in the final subepoch
  std::vector<double> lambda_signal;  // budget signal g of the epoch

  nlohmann::json to_json() const {
    return {{"mean_reward", mean_reward}, {"lambda", lambda}, {"spend", spend}, {"lambda_signal", lambda_signal}};
  }
};

struct AgentLearningRates {
  double actor = 2e-3;
  double critic = 2e-3;
  double lambda = 2e-3;
};

// One environment transition as seen by the agent trainer. `omega_unit` is
// filled only when the critics are conditioned on nature's parameters.
struct AgentStep {
  EnvStep env;
  std::vector<double> omega_unit;
};

// The epoch/subepoch skeleton shared by the agent oracle and the auxiliary
// player of the nature oracle.
class AgentTrainer {
 public:
  using StepFn = std::function<AgentStep(const JointState&, const std::vector<int>&)>;

  AgentTrainer(const RmabInstance& inst, StateEncoder enc, int omega_width, const TrainConfig& cfg,
               AgentLearningRates lr, Rng& init_rng)
      : inst_(inst), cfg_(cfg), policy_(inst, enc, omega_width, init_rng) {
    cfg_.validate();
    for (int n = 0; n < inst.n_arms; ++n) {
      actor_opt_.emplace_back(policy_.actor(n).parameters(), nn::AdamConfig{lr.actor});
      critic_opt_.emplace_back(policy_.critic(n).parameters(), nn::AdamConfig{lr.critic});
    }
    lambda_opt_ = nn::Adam(policy_.lambda_net().parameters(), nn::AdamConfig{lr.lambda});
  }

  // The optimizers hold pointers into policy_.
  AgentTrainer(const AgentTrainer&) = delete;
  AgentTrainer& operator=(const AgentTrainer&) = delete;

  AgentPolicy& policy() { return policy_; }
  const TrainCurves& curves() const { return curves_; }
  double current_lambda() const { return lambda_; }
  const JointState& epoch_state() const { return s0_; }

  // Samples the epoch's start state uniformly and fixes lambda = Lambda(s).
  void begin_epoch(Rng& rng) {
    s0_.assign(inst_.n_arms, 0);
    for (auto& x : s0_) x = uniform_int(rng, 0, inst_.n_states - 1);
    lambda_ = policy_.lambda(s0_);
    if (!std::isfinite(lambda_)) throw TrainingError("lambda-network output is not finite");
    epoch_reward_ = 0.0;
    epoch_steps_ = 0;
  }

  // Runs one subepoch from the epoch's start state and PPO-updates every arm.
  // Returns the per-arm costs of the subepoch (used for the dual step).
  std::vector<std::vector<double>> run_subepoch(int epoch, int subepoch, const StepFn& step, Rng& rng) {
    const int N = inst_.n_arms, S = inst_.n_states, A = inst_.n_actions, T = cfg_.n_steps;
    refresh_probs();
    std::vector<std::vector<int>> st(N, std::vector<int>(T)), at(N, std::vector<int>(T)),
        nt(N, std::vector<int>(T));
    std::vector<std::vector<double>> rt(N, std::vector<double>(T)), ct(N, std::vector<double>(T));
    std::vector<std::vector<double>> omegas;
    JointState s = s0_;
    std::vector<int> a(N);
    for (int t = 0; t < T; ++t) {
      for (int n = 0; n < N; ++n) a[n] = sample_categorical(probs_[n][s[n]], rng);
      AgentStep out = step(s, a);
      for (int n = 0; n < N; ++n) {
        st[n][t] = s[n];
        at[n][t] = a[n];
        nt[n][t] = out.env.next_state[n];
        ct[n][t] = inst_.costs[a[n]];
        rt[n][t] = out.env.rewards[n] - lambda_ * inst_.costs[a[n]];
        epoch_reward_ += out.env.rewards[n];
      }
      if (policy_.omega_width() > 0) {
        if (static_cast<int>(out.omega_unit.size()) != policy_.omega_width())
          throw DimensionError("run_subepoch: step returned wrong omega width");
        omegas.push_back(std::move(out.omega_unit));
      }
      ++epoch_steps_;
      s = std::move(out.env.next_state);
    }
    const double tau = entropy_coefficient(epoch, subepoch, cfg_);
    for (int n = 0; n < N; ++n) update_arm(n, st[n], at[n], rt[n], nt[n], omegas, tau, epoch);
    (void)S;
    (void)A;
    return ct;
  }

  // Dual step on the lambda-network (skipped in the freeze window).
  void end_epoch(int epoch, const std::vector<std::vector<double>>& final_costs) {
    const double g = lambda_signal(final_costs, inst_.budget, cfg_.discount);
    double spend = 0.0;
    for (const auto& c : final_costs) spend += std::accumulate(c.begin(), c.end(), 0.0);
    curves_.mean_reward.push_back(epoch_steps_ ? epoch_reward_ / epoch_steps_ : 0.0);
    curves_.lambda.push_back(lambda_);
    curves_.spend.push_back(final_costs.empty() || final_costs[0].empty()
                                ? 0.0
                                : spend / static_cast<double>(final_costs[0].size()));
    curves_.lambda_signal.push_back(g);
    if (epoch >= cfg_.n_epochs - cfg_.lambda_freeze_epochs) return;
    lambda_opt_.zero_grad();
    ad::Tape tape;
    auto loss = lambda_loss(tape, policy_.lambda_net(), policy_.encoder().joint(s0_), g);
    tape.backward(loss);
    lambda_opt_.step();
  }

  const std::vector<std::vector<std::vector<double>>>& prob_tables() const { return probs_; }

 private:
  void refresh_probs() {
    probs_.assign(inst_.n_arms, {});
    for (int n = 0; n < inst_.n_arms; ++n)
      for (int s = 0; s < inst_.n_states; ++s) probs_[n].push_back(policy_.action_probs(n, s, lambda_));
  }

  void update_arm(int n, const std::vector<int>& s, const std::vector<int>& a, const std::vector<double>& r,
                  const std::vector<int>& s_next, const std::vector<std::vector<double>>& omegas, double tau,
                  int epoch) {
    const int T = static_cast<int>(s.size()), A = inst_.n_actions;
    const double beta = cfg_.discount;
    static const std::vector<double> kEmpty;
    auto omega_at = [&](int t) -> std::span<const double> {
      return omegas.empty() ? std::span<const double>(kEmpty) : std::span<const double>(omegas[t]);
    };

    // Critic inputs for (s, a), every (s, a'') and every (s', a').
    ad::Matrix q_in(T, policy_.critic_width()), cur_in(T * A, policy_.critic_width()),
        next_in(T * A, policy_.critic_width());
    for (int t = 0; t < T; ++t) {
      policy_.critic_input(s[t], a[t], lambda_, omega_at(t), q_in.row(t));
      for (int j = 0; j < A; ++j) {
        policy_.critic_input(s[t], j, lambda_, omega_at(t), cur_in.row(t * A + j));
        policy_.critic_input(s_next[t], j, lambda_, omega_at(t), next_in.row(t * A + j));
      }
    }
    const ad::Matrix q_cur = policy_.critic(n).forward(cur_in);
    const ad::Matrix q_next = policy_.critic(n).forward(next_in);
    ad::Matrix targets(T, 1);
    ActorBatch batch;
    batch.inputs.resize(T, policy_.actor_width());
    batch.actions = a;
    batch.old_logp.resize(T, 1);
    batch.advantages.resize(T, 1);
    for (int t = 0; t < T; ++t) {
      const auto& pn = probs_[n][s_next[t]];
      const auto& pc = probs_[n][s[t]];
      double v_next = 0.0, v_cur = 0.0;
      for (int j = 0; j < A; ++j) {
        v_next += pn[j] * q_next(t * A + j, 0);
        v_cur += pc[j] * q_cur(t * A + j, 0);
      }
      targets(t, 0) = r[t] + beta * v_next;
      batch.advantages(t, 0) = targets(t, 0) - v_cur;
      policy_.actor_input(s[t], lambda_, batch.inputs.row(t));
      batch.old_logp(t, 0) = std::log(probs_[n][s[t]][a[t]]);
    }
    if (!targets.allFinite() || !batch.advantages.allFinite())
      throw TrainingError("non-finite TD targets for arm " + std::to_string(n) + " at epoch " +
                          std::to_string(epoch));

    for (int i = 0; i < cfg_.trains_per_epoch; ++i) {
      actor_opt_[n].zero_grad();
      ad::Tape tape;
      auto loss = ppo_actor_loss(tape, policy_.actor(n), batch, cfg_.clip_ratio, tau);
      if (!std::isfinite(loss.scalar()))
        throw TrainingError("actor loss diverged for arm " + std::to_string(n) + " at epoch " +
                            std::to_string(epoch));
      tape.backward(loss);
      actor_opt_[n].step();
    }
    for (int i = 0; i < cfg_.trains_per_epoch; ++i) {
      critic_opt_[n].zero_grad();
      ad::Tape tape;
      auto loss = value_loss(tape, policy_.critic(n), q_in, targets);
      if (!std::isfinite(loss.scalar()))
        throw TrainingError("critic loss diverged for arm " + std::to_string(n) + " at epoch " +
                            std::to_string(epoch));
      tape.backward(loss);
      critic_opt_[n].step();
    }
  }

  const RmabInstance& inst_;
  TrainConfig cfg_;
  AgentPolicy policy_;
  std::vector<nn::Adam> actor_opt_, critic_opt_;
  nn::Adam lambda_opt_;
  TrainCurves curves_;
  JointState s0_;
  double lambda_ = 0.0;
  double epoch_reward_ = 0.0;
  long epoch_steps_ = 0;
  std::vector<std::vector<std::vector<double>>> probs_;  // [arm][state][action]
};

struct DdlpoResult {
  AgentPolicy policy;
  TrainCurves curves;
};

// Trains against a mixture of transition kernels; one kernel is drawn per
// epoch.
inline DdlpoResult train_ddlpo(const RmabInstance& inst, StateEncoder enc,
                               const MixedStrategy<TransitionTables>& nature, const TrainConfig& cfg,
                               std::uint64_t seed) {
  inst.validate();
  for (const auto& t : nature.items())
    if (t.n_arms() != inst.n_arms || t.n_states() != inst.n_states || t.n_actions() != inst.n_actions)
      throw DimensionError("train_ddlpo: transition tables do not match the instance");
  Rng init = make_rng(seed, {0});
  Rng rng = make_rng(seed, {1});
  AgentTrainer trainer(inst, enc, 0, cfg, {cfg.actor_lr, cfg.critic_lr, cfg.lambda_lr}, init);
  for (int epoch = 0; epoch < cfg.n_epochs; ++epoch) {
    trainer.begin_epoch(rng);
    const auto& tab = nature.items()[nature.sample_index(rng)];
    AgentTrainer::StepFn step = [&](const JointState& s, const std::vector<int>& a) {
      return AgentStep{simulate(inst, tab, s, a, rng), {}};
    };
    std::vector<std::vector<double>> costs;
    for (int sub = 0; sub < cfg.n_subepochs; ++sub) costs = trainer.run_subepoch(epoch, sub, step, rng);
    trainer.end_epoch(epoch, costs);
  }
  return {trainer.policy(), trainer.curves()};
}

inline DdlpoResult train_ddlpo(const Environment& env, const MixedStrategy<ParamSetting>& nature,
                               const TrainConfig& cfg, std::uint64_t seed) {
  std::vector<TransitionTables> tables;
  for (const auto& w : nature.items()) {
    if (!env.intervals.contains(w, 1e-9)) throw ParameterError("train_ddlpo: omega outside the intervals");
    tables.push_back(env.tables(w));
  }
  return train_ddlpo(env.instance, StateEncoder::for_env(env),
                     MixedStrategy<TransitionTables>(std::move(tables), nature.weights()), cfg, seed);
}

// ---------------------------------------------------------------------------
// Exact-Q adapter: per-arm value iteration at the queried lambda, with
// lambda(s) from the golden-section minimizer. Probabilities are one-hot on
// the greedy action.

class ExactQPolicy : public LagrangePolicyView {
 public:
  ExactQPolicy(std::vector<ArmKernel> arms, double budget, ValueIterationOptions opt = {1e-9, 100000})
      : arms_(std::move(arms)), budget_(budget), opt_(opt) {}

  int n_arms() const override { return static_cast<int>(arms_.size()); }
  int n_actions() const override { return arms_.front().n_actions; }

  double lambda(const JointState& s) const override {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = lambda_cache_.find(s);
    if (it != lambda_cache_.end()) return it->second;
    const double l = solve_lambda_star(arms_, s, budget_, 1e-7, opt_).lambda_star;
    lambda_cache_.emplace(s, l);
    return l;
  }

  std::vector<double> action_probs(int arm, int s, double lambda) const override {
    const QTable& q = table(arm, lambda);
    std::vector<double> p(q.n_actions, 0.0);
    p[q.greedy(s)] = 1.0;
    return p;
  }

  double q_value(int arm, int s, int a, double lambda) const override { return table(arm, lambda).at(s, a); }

  const std::vector<ArmKernel>& arms() const { return arms_; }

 private:
  const QTable& table(int arm, double lambda) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto key = std::make_pair(arm, lambda);
    auto it = q_cache_.find(key);
    if (it == q_cache_.end()) it = q_cache_.emplace(key, per_arm_value_iteration(arms_[arm], lambda, opt_)).first;
    return it->second;
  }

  std::vector<ArmKernel> arms_;
  double budget_;
  ValueIterationOptions opt_;
  mutable std::mutex mu_;
  mutable std::map<JointState, double> lambda_cache_;
  mutable std::map<std::pair<int, double>, QTable> q_cache_;
};

// Scalar version of the dual update with exact expected spend:
//   lambda <- max(0, lambda - step_t (B / (1 - beta) + sum_n D_n(s_n, lambda))),
// step_t = step0 / (1 + t).
struct LambdaIterationResult {
  double lambda = 0.0;
  std::vector<double> trajectory;
};

inline LambdaIterationResult exact_lambda_iteration(std::span<const ArmKernel> arms, const JointState& s,
                                                    double budget, double lambda0, double step0, int iters,
                                                    const ValueIterationOptions& opt = {1e-10, 100000}) {
  LambdaIterationResult out;
  double lambda = lambda0;
  const double beta = arms.front().discount;
  for (int t = 0; t < iters; ++t) {
    double g = budget / (1.0 - beta);
    for (std::size_t n = 0; n < arms.size(); ++n) {
      auto q = per_arm_value_iteration(arms[n], lambda, opt);
      g -= discounted_cost_to_go(arms[n], q, opt)[s[n]];
    }
    lambda = std::max(0.0, lambda - step0 / (1.0 + t) * g);
    out.trajectory.push_back(lambda);
  }
  out.lambda = lambda;
  return out;
}

}  // namespace rrmab
