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

// Small instances with hand-checkable answers.

#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "rrmab/envs.hpp"
#include "rrmab/model.hpp"

namespace rrmab::oracle {

// Two arms that both start bad, one unit of budget, one step. Acting on arm n
// makes it good with probability p_n; passive arms stay bad. Arm A pays
// reward_a when good, arm B pays reward_b.
struct BadGoodGame {
  RmabInstance instance;

  BadGoodGame(double reward_a, double reward_b) {
    instance.n_arms = 2;
    instance.n_states = 2;
    instance.n_actions = 2;
    instance.costs = {0.0, 1.0};
    instance.budget = 1.0;
    instance.horizon = 1;
    instance.rewards = {{0.0, reward_a}, {0.0, reward_b}};
    instance.validate();
  }

  TransitionTables tables(double p_a, double p_b) const {
    TransitionTables t(2, 2, 2);
    const double p[2] = {p_a, p_b};
    for (int n = 0; n < 2; ++n) {
      auto set = [&](int s, int a, double bad, double good) {
        auto r = t.row(n, s, a);
        r[0] = bad;
        r[1] = good;
      };
      set(0, 0, 1.0, 0.0);
      set(0, 1, 1.0 - p[n], p[n]);
      set(1, 0, 0.0, 1.0);
      set(1, 1, 0.0, 1.0);
    }
    return t;
  }

  // Exact expected summed reward after one step from (bad, bad).
  double expected_return(const std::vector<int>& action, double p_a, double p_b) const {
    const auto t = tables(p_a, p_b);
    double v = 0.0;
    for (int n = 0; n < 2; ++n) {
      const auto row = t.row(n, 0, action[n]);
      for (int s = 0; s < 2; ++s) v += row[s] * instance.reward(n, s);
    }
    return v;
  }

  // Rows: act on A, act on B. Columns: (p_a, p_b) on the corners of [0, 1]^2.
  Eigen::MatrixXd return_matrix() const {
    const std::vector<std::vector<int>> rows{{1, 0}, {0, 1}};
    const double corners[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    Eigen::MatrixXd G(2, 4);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 4; ++j) G(i, j) = expected_return(rows[i], corners[j][0], corners[j][1]);
    return G;
  }
};

// Exact sum_{t=1}^{H} beta^t sum_n R(s_t) under a deterministic joint policy,
// averaged over a uniform start state.
inline double exact_finite_horizon_value(const RmabInstance& inst, const TransitionTables& tables, int horizon,
                                         const std::function<std::vector<int>(const JointState&)>& policy) {
  const int N = inst.n_arms, S = inst.n_states;
  std::size_t total = 1;
  for (int n = 0; n < N; ++n) total *= S;
  auto state_at = [&](std::size_t idx) {
    JointState s(N);
    for (int n = N - 1; n >= 0; --n) {
      s[n] = static_cast<int>(idx % S);
      idx /= S;
    }
    return s;
  };
  std::vector<double> w(total, 0.0), next(total);
  for (int k = 1; k <= horizon; ++k) {
    for (std::size_t i = 0; i < total; ++i) {
      const JointState s = state_at(i);
      const auto a = policy(s);
      double v = 0.0;
      for (std::size_t j = 0; j < total; ++j) {
        const JointState t = state_at(j);
        double p = 1.0, r = 0.0;
        for (int n = 0; n < N; ++n) {
          p *= tables.row(n, s[n], a[n])[t[n]];
          r += inst.reward(n, t[n]);
        }
        if (p > 0.0) v += p * inst.discount * (r + w[j]);
      }
      next[i] = v;
    }
    w.swap(next);
  }
  double mean = 0.0;
  for (double x : w) mean += x;
  return mean / static_cast<double>(total);
}

}  // namespace rrmab::oracle
