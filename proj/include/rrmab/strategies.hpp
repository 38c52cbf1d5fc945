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

// Pure agent strategies and their Monte-Carlo evaluation.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "rrmab/ddlpo.hpp"
#include "rrmab/envs.hpp"
#include "rrmab/exact.hpp"
#include "rrmab/model.hpp"
#include "rrmab/rng.hpp"

namespace rrmab {

// act() must be safe to call concurrently.
class AgentStrategy {
 public:
  virtual ~AgentStrategy() = default;
  virtual std::string name() const = 0;
  virtual ActionMatrix act(const JointState& s, Rng& rng) const = 0;
  virtual nlohmann::json describe() const { return {{"name", name()}}; }
};

using StrategyPtr = std::shared_ptr<const AgentStrategy>;

namespace detail {

// Thread-safe memo of deterministic per-state actions.
class ActionMemo {
 public:
  template <class F>
  ActionMatrix get(const JointState& s, F&& compute) const {
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = cache_.find(s);
      if (it != cache_.end()) return it->second;
    }
    ActionMatrix a = compute();
    std::lock_guard<std::mutex> lock(mu_);
    return cache_.emplace(s, std::move(a)).first->second;
  }

 private:
  mutable std::mutex mu_;
  mutable std::map<JointState, ActionMatrix> cache_;
};

}  // namespace detail

class NoActionStrategy : public AgentStrategy {
 public:
  explicit NoActionStrategy(const RmabInstance& inst) : n_(inst.n_arms), a_(inst.n_actions) {}
  std::string name() const override { return "NoAct"; }
  ActionMatrix act(const JointState&, Rng&) const override {
    return ActionMatrix::from_indices(std::vector<int>(n_, 0), a_);
  }

 private:
  int n_, a_;
};

// Visits arms in random order and gives each a uniformly random non-passive
// action among those that still fit, until nothing fits.
class RandomStrategy : public AgentStrategy {
 public:
  explicit RandomStrategy(const RmabInstance& inst) : inst_(inst) {}
  std::string name() const override { return "Rand"; }
  ActionMatrix act(const JointState& s, Rng& rng) const override {
    const int N = inst_.n_arms;
    std::vector<int> order(N), act(N, 0);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double remaining = inst_.budget;
    std::vector<int> fit;
    for (int n : order) {
      fit.clear();
      for (int j = 1; j < inst_.n_actions; ++j)
        if (inst_.costs[j] <= remaining + kBudgetSlack) fit.push_back(j);
      if (fit.empty()) continue;
      act[n] = fit[uniform_int(rng, 0, static_cast<int>(fit.size()) - 1)];
      remaining -= inst_.costs[act[n]];
    }
    (void)s;
    return ActionMatrix::from_indices(act, inst_.n_actions);
  }

 private:
  RmabInstance inst_;
};

// Exact Lagrange policy for a fixed omega: lambda*(s) by minimizing the
// relaxed objective, then a knapsack over Q(s_n, a, lambda*).
class HawkinsStrategy : public AgentStrategy {
 public:
  HawkinsStrategy(const Environment& env, ParamSetting omega, std::string name = "Hawkins")
      : inst_(env.instance), omega_(std::move(omega)), name_(std::move(name)),
        arms_(arm_kernels(env, omega_)) {}

  std::string name() const override { return name_; }
  const ParamSetting& omega() const { return omega_; }

  ActionMatrix act(const JointState& s, Rng&) const override {
    return memo_.get(s, [&] {
      const auto sol = solve_lambda_star(arms_, s, inst_.budget, 1e-6, {1e-8, 100000});
      std::vector<std::vector<double>> q(inst_.n_arms, std::vector<double>(inst_.n_actions));
      for (int n = 0; n < inst_.n_arms; ++n)
        for (int j = 0; j < inst_.n_actions; ++j) q[n][j] = sol.q[n].at(s[n], j);
      return knapsack_select(q, inst_.costs, inst_.budget);
    });
  }

  nlohmann::json describe() const override {
    return {{"name", name_}, {"kind", "hawkins"}, {"omega", param_setting_to_json(omega_)}};
  }

 private:
  RmabInstance inst_;
  ParamSetting omega_;
  std::string name_;
  std::vector<ArmKernel> arms_;
  detail::ActionMemo memo_;
};

// A trained agent policy plus its test-time action method. Whittle selection
// breaks ties at random, so it is not memoized.
class DdlpoStrategy : public AgentStrategy {
 public:
  DdlpoStrategy(std::shared_ptr<const AgentPolicy> policy, const RmabInstance& inst, ActMethod method,
                std::string name = "DDLPO")
      : policy_(std::move(policy)), inst_(inst), method_(method), name_(std::move(name)) {}

  std::string name() const override { return name_; }
  const AgentPolicy& policy() const { return *policy_; }
  ActMethod method() const { return method_; }

  ActionMatrix act(const JointState& s, Rng& rng) const override {
    if (method_ == ActMethod::whittle) return ddlpo_act(*policy_, s, method_, inst_, rng);
    return memo_.get(s, [&] { return ddlpo_act(*policy_, s, method_, inst_, rng); });
  }

  nlohmann::json describe() const override {
    return {{"name", name_}, {"kind", "ddlpo"}, {"method", act_method_name(method_)}};
  }

 private:
  std::shared_ptr<const AgentPolicy> policy_;
  RmabInstance inst_;
  ActMethod method_;
  std::string name_;
  detail::ActionMemo memo_;
};

// Optimal joint policy from exact value iteration (small instances only).
class ExactJointStrategy : public AgentStrategy {
 public:
  ExactJointStrategy(std::shared_ptr<const JointSolution> sol, int n_actions, std::string name = "ExactJoint")
      : sol_(std::move(sol)), n_actions_(n_actions), name_(std::move(name)) {}
  std::string name() const override { return name_; }
  ActionMatrix act(const JointState& s, Rng&) const override {
    return ActionMatrix::from_indices(sol_->action_for(s), n_actions_);
  }

 private:
  std::shared_ptr<const JointSolution> sol_;
  int n_actions_;
  std::string name_;
};

// ---------------------------------------------------------------------------
// Evaluation.

// Process-wide count of audited test-time actions.
struct FeasibilityAudit {
  std::atomic<long> checked{0};
  std::atomic<long> violations{0};

  void reset() {
    checked = 0;
    violations = 0;
  }
};

inline FeasibilityAudit& feasibility_audit() {
  static FeasibilityAudit audit;
  return audit;
}

struct EvalConfig {
  int horizon = 10;
  int n_sims = 25;
};

// Mean over simulations of sum_{t=1}^{H} beta^t sum_n R(s_{n,t}), starting
// from a uniformly random joint state. Each simulation draws its randomness
// from its own stream keyed by (seed, sim), so two strategies evaluated with
// the same seed see the same start states.
inline double evaluate_pair(const AgentStrategy& pi, const Environment& env, const ParamSetting& omega,
                            const EvalConfig& cfg, std::uint64_t seed) {
  if (cfg.horizon < 1 || cfg.n_sims < 1) throw ParameterError("evaluate_pair: horizon and n_sims must be >= 1");
  const auto tables = env.tables(omega);
  const auto& inst = env.instance;
  auto& audit = feasibility_audit();
  double total = 0.0;
  std::vector<double> rewards(cfg.horizon);
  for (int sim = 0; sim < cfg.n_sims; ++sim) {
    Rng start = make_rng(seed, {static_cast<std::uint64_t>(sim), 0});
    Rng dyn = make_rng(seed, {static_cast<std::uint64_t>(sim), 1});
    Rng act_rng = make_rng(seed, {static_cast<std::uint64_t>(sim), 2});
    JointState s = env.random_state(start);
    for (int t = 0; t < cfg.horizon; ++t) {
      const ActionMatrix a = pi.act(s, act_rng);
      ++audit.checked;
      if (!is_feasible(a, inst)) ++audit.violations;
      const auto idx = a.indices();
      s = simulate(inst, tables, s, idx, dyn).next_state;
      double r = 0.0;
      for (int n = 0; n < inst.n_arms; ++n) r += inst.reward(n, s[n]);
      rewards[t] = r;
    }
    total += discounted_return(rewards, inst.discount);
  }
  return total / cfg.n_sims;
}

// Runs f(i) for i in [0, n) on up to `workers` threads.
inline void parallel_for(int n, int workers, const std::function<void(int)>& f) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < std::min(workers, n); ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace rrmab
