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

// Exact solvers for small instances. These are the reference oracles for
// every learning component:
//   - per-arm value iteration of the lambda-penalized arm MDP,
//   - the Lagrange objective and its minimizing multiplier,
//   - knapsack action selection over Q-values,
//   - binary search for the Whittle charge,
//   - joint value iteration over the full S^N state space,
//   - a dense simplex solver for zero-sum matrix games.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "rrmab/envs.hpp"
#include "rrmab/model.hpp"
#include "rrmab/rng.hpp"

namespace rrmab {

// One arm's MDP at a fixed parameter setting.
struct ArmKernel {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> probs;    // [s][a][s']
  std::vector<double> rewards;  // [s]
  std::vector<double> costs;    // [a]
  double discount = 0.9;

  std::span<const double> row(int s, int a) const {
    return {probs.data() + (static_cast<std::size_t>(s) * n_actions + a) * n_states,
            static_cast<std::size_t>(n_states)};
  }
};

inline ArmKernel arm_kernel(const RmabInstance& inst, const TransitionTables& tables, int arm) {
  ArmKernel k;
  k.n_states = inst.n_states;
  k.n_actions = inst.n_actions;
  k.rewards = inst.rewards[arm];
  k.costs = inst.costs;
  k.discount = inst.discount;
  k.probs.reserve(static_cast<std::size_t>(k.n_states) * k.n_actions * k.n_states);
  for (int s = 0; s < k.n_states; ++s)
    for (int a = 0; a < k.n_actions; ++a) {
      auto r = tables.row(arm, s, a);
      k.probs.insert(k.probs.end(), r.begin(), r.end());
    }
  return k;
}

inline std::vector<ArmKernel> arm_kernels(const Environment& env, const ParamSetting& w) {
  const auto tables = env.tables(w);
  std::vector<ArmKernel> out;
  for (int n = 0; n < env.n_arms(); ++n) out.push_back(arm_kernel(env.instance, tables, n));
  return out;
}

// Q_n(s, a, lambda) for one arm at one lambda.
struct QTable {
  int n_states = 0;
  int n_actions = 0;
  double lambda = 0.0;
  std::vector<double> q;  // [s][a]

  double at(int s, int a) const { return q[static_cast<std::size_t>(s) * n_actions + a]; }

  // Lowest-index maximizer.
  int greedy(int s) const {
    int best = 0;
    for (int a = 1; a < n_actions; ++a)
      if (at(s, a) > at(s, best)) best = a;
    return best;
  }

  double value(int s) const { return at(s, greedy(s)); }
};

struct ValueIterationOptions {
  double tol = 1e-6;        // sup-norm distance to the fixed point
  int max_sweeps = 100000;
};

namespace detail {

// Sweep-change threshold guaranteeing sup-norm error <= tol.
inline double stopping_threshold(double tol, double beta) {
  return beta > 0.0 ? tol * (1.0 - beta) / beta : std::numeric_limits<double>::infinity();
}

}  // namespace detail

// Fixed point of Q(s,a) = R(s) - lambda c_a + beta E[max_a' Q(s',a')].
inline QTable per_arm_value_iteration(const ArmKernel& k, double lambda,
                                      const ValueIterationOptions& opt = {}) {
  if (!(lambda >= 0.0)) throw ParameterError("per_arm_value_iteration: lambda must be >= 0");
  const int S = k.n_states, A = k.n_actions;
  const double beta = k.discount;
  const double threshold = detail::stopping_threshold(opt.tol, beta);
  std::vector<double> v(S, 0.0), v_next(S);
  QTable out{S, A, lambda, std::vector<double>(static_cast<std::size_t>(S) * A)};

  auto backup = [&](const std::vector<double>& value) {
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        const auto row = k.row(s, a);
        double ev = 0.0;
        for (int t = 0; t < S; ++t) ev += row[t] * value[t];
        out.q[static_cast<std::size_t>(s) * A + a] = k.rewards[s] - lambda * k.costs[a] + beta * ev;
      }
  };

  bool converged = false;
  for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    backup(v);
    double delta = 0.0;
    for (int s = 0; s < S; ++s) {
      v_next[s] = out.value(s);
      delta = std::max(delta, std::abs(v_next[s] - v[s]));
    }
    v.swap(v_next);
    if (delta <= threshold) {
      converged = true;
      break;
    }
  }
  if (!converged) throw NumericError("per_arm_value_iteration: no convergence");
  backup(v);
  return out;
}

// Expected discounted action cost sum_{t>=0} beta^t c_t of the greedy policy
// of q, for every start state.
inline std::vector<double> discounted_cost_to_go(const ArmKernel& k, const QTable& q,
                                                 const ValueIterationOptions& opt = {}) {
  const int S = k.n_states;
  const double threshold = detail::stopping_threshold(opt.tol, k.discount);
  std::vector<double> c(S, 0.0), c_next(S);
  for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    double delta = 0.0;
    for (int s = 0; s < S; ++s) {
      const int a = q.greedy(s);
      const auto row = k.row(s, a);
      double ev = 0.0;
      for (int t = 0; t < S; ++t) ev += row[t] * c[t];
      c_next[s] = k.costs[a] + k.discount * ev;
      delta = std::max(delta, std::abs(c_next[s] - c[s]));
    }
    c.swap(c_next);
    if (delta <= threshold) return c;
  }
  throw NumericError("discounted_cost_to_go: no convergence");
}

// lambda B / (1 - beta) + sum_n max_j Q_n(s_n, j, lambda).
inline double lagrange_objective(std::span<const ArmKernel> arms, const JointState& s,
                                 double lambda, double budget,
                                 const ValueIterationOptions& opt = {}) {
  if (arms.size() != s.size()) throw DimensionError("lagrange_objective: state length != arms");
  const double beta = arms.front().discount;
  double total = lambda * budget / (1.0 - beta);
  for (std::size_t n = 0; n < arms.size(); ++n)
    total += per_arm_value_iteration(arms[n], lambda, opt).value(s[n]);
  return total;
}

struct LagrangeSolution {
  double lambda_star = 0.0;
  double objective = 0.0;
  std::vector<QTable> q;  // per arm, at lambda_star
};

// Upper end of the multiplier search bracket; past it no arm ever pays to act.
inline double lambda_upper_bound(std::span<const ArmKernel> arms) {
  double max_r = 0.0, min_c = 0.0;
  for (const auto& k : arms) {
    for (double r : k.rewards) max_r = std::max(max_r, std::abs(r));
    for (double c : k.costs)
      if (c > 0.0 && (min_c == 0.0 || c < min_c)) min_c = c;
  }
  if (min_c == 0.0) return 0.0;
  return max_r / (1.0 - arms.front().discount) / min_c + 1.0;
}

// Minimizes the (convex) Lagrange objective in lambda by golden-section search.
inline LagrangeSolution solve_lambda_star(std::span<const ArmKernel> arms, const JointState& s,
                                          double budget, double tol = 1e-6,
                                          const ValueIterationOptions& opt = {}) {
  if (arms.empty()) throw DimensionError("solve_lambda_star: no arms");
  auto f = [&](double l) { return lagrange_objective(arms, s, l, budget, opt); };
  double lo = 0.0, hi = lambda_upper_bound(arms);
  double best = 0.0;
  if (hi > 0.0) {
    if (!std::isfinite(hi)) throw NumericError("solve_lambda_star: bracket failure");
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    while (hi - lo > tol) {
      if (f1 <= f2) {
        hi = x2;
        x2 = x1;
        f2 = f1;
        x1 = hi - inv_phi * (hi - lo);
        f1 = f(x1);
      } else {
        lo = x1;
        x1 = x2;
        f1 = f2;
        x2 = lo + inv_phi * (hi - lo);
        f2 = f(x2);
      }
    }
    best = 0.5 * (lo + hi);
    // A minimizer at the boundary is reported exactly.
    if (f(0.0) <= f(best)) best = 0.0;
  }
  LagrangeSolution sol;
  sol.lambda_star = best;
  sol.objective = best * budget / (1.0 - arms.front().discount);
  for (std::size_t n = 0; n < arms.size(); ++n) {
    sol.q.push_back(per_arm_value_iteration(arms[n], best, opt));
    sol.objective += sol.q.back().value(s[n]);
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Knapsack action selection: maximize sum_n q[n][j_n] s.t. sum_n c[j_n] <= B.

namespace detail {

inline bool all_integral(std::span<const double> v) {
  for (double x : v)
    if (std::abs(x - std::round(x)) > 1e-9) return false;
  return true;
}

inline ActionMatrix knapsack_brute_force(const std::vector<std::vector<double>>& q,
                                         std::span<const double> costs, double budget) {
  const int N = static_cast<int>(q.size()), A = static_cast<int>(costs.size());
  std::vector<int> cur(N, 0), best;
  double best_value = -std::numeric_limits<double>::infinity();
  while (true) {
    double cost = 0.0, value = 0.0;
    for (int n = 0; n < N; ++n) {
      cost += costs[cur[n]];
      value += q[n][cur[n]];
    }
    if (cost <= budget + kBudgetSlack && value > best_value) {
      best_value = value;
      best = cur;
    }
    int n = N - 1;
    while (n >= 0 && ++cur[n] == A) cur[n--] = 0;
    if (n < 0) break;
  }
  if (best.empty()) throw InvariantViolation("knapsack: no feasible assignment");
  return ActionMatrix::from_indices(best, A);
}

}  // namespace detail

inline ActionMatrix knapsack_select(const std::vector<std::vector<double>>& q,
                                    std::span<const double> costs, double budget) {
  const int N = static_cast<int>(q.size()), A = static_cast<int>(costs.size());
  for (const auto& row : q)
    if (static_cast<int>(row.size()) != A) throw DimensionError("knapsack_select: q row width != |A|");
  const double budget_arr[1] = {budget};
  if (!detail::all_integral(costs) || !detail::all_integral(budget_arr)) {
    if (N <= 6) return detail::knapsack_brute_force(q, costs, budget);
    throw ParameterError("knapsack_select: non-integer costs need N <= 6");
  }
  std::vector<int> c(A);
  int max_c = 0;
  for (int j = 0; j < A; ++j) {
    c[j] = static_cast<int>(std::lround(costs[j]));
    max_c = std::max(max_c, c[j]);
  }
  const int B = std::min(static_cast<int>(std::floor(budget + 1e-9)), N * max_c);
  const double neg_inf = -std::numeric_limits<double>::infinity();
  // best[n][b]: best value of arms [0, n) spending at most b.
  std::vector<std::vector<double>> best(N + 1, std::vector<double>(B + 1, neg_inf));
  std::vector<std::vector<int>> choice(N + 1, std::vector<int>(B + 1, -1));
  std::fill(best[0].begin(), best[0].end(), 0.0);
  for (int n = 0; n < N; ++n)
    for (int b = 0; b <= B; ++b)
      for (int j = 0; j < A; ++j) {
        if (c[j] > b || best[n][b - c[j]] == neg_inf) continue;
        const double v = best[n][b - c[j]] + q[n][j];
        if (v > best[n + 1][b]) {
          best[n + 1][b] = v;
          choice[n + 1][b] = j;
        }
      }
  if (best[N][B] == neg_inf) throw InvariantViolation("knapsack: no feasible assignment");
  std::vector<int> actions(N);
  int b = B;
  for (int n = N; n >= 1; --n) {
    const int j = choice[n][b];
    actions[n - 1] = j;
    b -= c[j];
  }
  return ActionMatrix::from_indices(actions, A);
}

// ---------------------------------------------------------------------------
// Binary search for a charge lambda at which exactly `budget` arms strictly
// prefer the active action. `q(n, lambda)` returns {Q(s_n,0,lambda),
// Q(s_n,1,lambda)}. When the bracket collapses below eps without an exact
// split, ties are broken uniformly at random to select exactly `budget` arms.
template <class QFn>
ActionMatrix whittle_binary_search(int n_arms, int budget, QFn&& q, double eps, Rng& rng) {
  if (budget < 0) throw ParameterError("whittle_binary_search: negative budget");
  budget = std::min(budget, n_arms);
  std::vector<std::pair<double, double>> cur(n_arms);
  double ub = -std::numeric_limits<double>::infinity();
  for (int n = 0; n < n_arms; ++n) {
    cur[n] = q(n, 0.0);
    ub = std::max({ub, cur[n].first, cur[n].second});
  }
  double lb = 0.0;
  auto n_active = [&] {
    int count = 0;
    for (const auto& [q0, q1] : cur) count += q1 > q0;
    return count;
  };
  while (ub - lb > eps) {
    const double lambda = 0.5 * (ub + lb);
    for (int n = 0; n < n_arms; ++n) cur[n] = q(n, lambda);
    const int k = n_active();
    if (k < budget) {
      ub = lambda;  // charging too much
    } else if (k > budget) {
      lb = lambda;  // can charge more
    } else {
      break;
    }
  }
  std::vector<int> act(n_arms, 0);
  for (int n = 0; n < n_arms; ++n) act[n] = cur[n].second > cur[n].first ? 1 : 0;
  if (ub - lb <= eps) {
    std::vector<int> on, off;
    for (int n = 0; n < n_arms; ++n) (act[n] ? on : off).push_back(n);
    while (static_cast<int>(on.size()) > budget) {
      const int i = uniform_int(rng, 0, static_cast<int>(on.size()) - 1);
      act[on[i]] = 0;
      on.erase(on.begin() + i);
    }
    while (static_cast<int>(on.size()) < budget) {
      const int i = uniform_int(rng, 0, static_cast<int>(off.size()) - 1);
      act[off[i]] = 1;
      on.push_back(off[i]);
      off.erase(off.begin() + i);
    }
  }
  return ActionMatrix::from_indices(act, 2);
}

// ---------------------------------------------------------------------------
// Joint value iteration over the S^N product space with budget-feasible joint
// actions. Arm 0 is the most significant digit of the joint state index.

struct JointSolution {
  int n_arms = 0;
  int n_states = 0;
  std::vector<std::vector<int>> feasible_actions;
  std::vector<double> value;  // J(s) = sum_n R(s_n) + beta E[J(s')]
  std::vector<int> policy;    // index into feasible_actions

  std::size_t state_index(const JointState& s) const {
    std::size_t idx = 0;
    for (int x : s) idx = idx * n_states + x;
    return idx;
  }

  JointState state_at(std::size_t idx) const {
    JointState s(n_arms);
    for (int n = n_arms - 1; n >= 0; --n) {
      s[n] = static_cast<int>(idx % n_states);
      idx /= n_states;
    }
    return s;
  }

  const std::vector<int>& action_for(const JointState& s) const {
    return feasible_actions[policy[state_index(s)]];
  }
};

inline std::vector<std::vector<int>> enumerate_feasible_actions(int n_arms,
                                                                std::span<const double> costs,
                                                                double budget) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(n_arms, 0);
  std::function<void(int, double)> rec = [&](int n, double spent) {
    if (n == n_arms) {
      out.push_back(cur);
      return;
    }
    for (std::size_t j = 0; j < costs.size(); ++j) {
      if (spent + costs[j] > budget + kBudgetSlack) continue;
      cur[n] = static_cast<int>(j);
      rec(n + 1, spent + costs[j]);
    }
    cur[n] = 0;
  };
  rec(0, 0.0);
  return out;
}

inline JointSolution joint_value_iteration(std::span<const ArmKernel> arms, double budget,
                                           const ValueIterationOptions& opt = {},
                                           double max_pairs = 1e6) {
  if (arms.empty()) throw DimensionError("joint_value_iteration: no arms");
  JointSolution sol;
  sol.n_arms = static_cast<int>(arms.size());
  sol.n_states = arms.front().n_states;
  const int N = sol.n_arms, S = sol.n_states;
  const double beta = arms.front().discount;
  sol.feasible_actions = enumerate_feasible_actions(N, arms.front().costs, budget);
  double n_joint = std::pow(static_cast<double>(S), N);
  if (n_joint * static_cast<double>(sol.feasible_actions.size()) > max_pairs)
    throw CapacityError("joint_value_iteration: state-action space exceeds the size guard");
  const std::size_t J = static_cast<std::size_t>(n_joint);

  std::vector<double> base_reward(J, 0.0);
  for (std::size_t i = 0; i < J; ++i) {
    const auto s = sol.state_at(i);
    for (int n = 0; n < N; ++n) base_reward[i] += arms[n].rewards[s[n]];
  }

  // E[value(s') | s, a] by contracting one arm dimension at a time, least
  // significant first.
  std::vector<double> buf_a(J), buf_b(J);
  auto expectation = [&](const JointState& s, const std::vector<int>& a,
                         const std::vector<double>& value) {
    std::copy(value.begin(), value.end(), buf_a.begin());
    std::size_t len = J;
    for (int n = N - 1; n >= 0; --n) {
      const auto row = arms[n].row(s[n], a[n]);
      const std::size_t out_len = len / S;
      for (std::size_t i = 0; i < out_len; ++i) {
        double acc = 0.0;
        for (int k = 0; k < S; ++k) acc += row[k] * buf_a[i * S + k];
        buf_b[i] = acc;
      }
      std::swap(buf_a, buf_b);
      len = out_len;
    }
    return buf_a[0];
  };

  std::vector<double> v(J, 0.0), v_next(J);
  sol.policy.assign(J, 0);
  const double threshold = detail::stopping_threshold(opt.tol, beta);
  bool converged = false;
  for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    double delta = 0.0;
    for (std::size_t i = 0; i < J; ++i) {
      const auto s = sol.state_at(i);
      double best = -std::numeric_limits<double>::infinity();
      int best_a = 0;
      for (std::size_t ai = 0; ai < sol.feasible_actions.size(); ++ai) {
        const double q = base_reward[i] + beta * expectation(s, sol.feasible_actions[ai], v);
        if (q > best) {
          best = q;
          best_a = static_cast<int>(ai);
        }
      }
      v_next[i] = best;
      sol.policy[i] = best_a;
      delta = std::max(delta, std::abs(best - v[i]));
    }
    v.swap(v_next);
    if (delta <= threshold) {
      converged = true;
      break;
    }
  }
  if (!converged) throw NumericError("joint_value_iteration: no convergence");
  sol.value = std::move(v);
  return sol;
}

// ---------------------------------------------------------------------------
// Zero-sum matrix games. The row player maximizes x^T M y.

struct NashResult {
  std::vector<double> row;
  std::vector<double> col;
  double value = 0.0;
};

// Solves max_y 1^T y s.t. (M + shift) y <= 1, y >= 0 with a dense tableau and
// Bland's rule; the row strategy is read off the slack reduced costs.
inline NashResult zero_sum_nash(const Eigen::MatrixXd& M) {
  const int m = static_cast<int>(M.rows()), n = static_cast<int>(M.cols());
  if (m == 0 || n == 0) throw DimensionError("zero_sum_nash: empty matrix");
  if (!M.allFinite()) throw NumericError("zero_sum_nash: non-finite payoff");
  const double shift = 1.0 - M.minCoeff();
  const int width = n + m + 1, rhs = n + m;
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m + 1, width);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) T(i, j) = M(i, j) + shift;
    T(i, n + i) = 1.0;
    T(i, rhs) = 1.0;
  }
  for (int j = 0; j < n; ++j) T(m, j) = -1.0;
  std::vector<int> basis(m);
  std::iota(basis.begin(), basis.end(), n);

  constexpr double kPivotTol = 1e-12;
  for (int iter = 0;; ++iter) {
    if (iter > 100000) throw NumericError("zero_sum_nash: simplex iteration limit");
    int enter = -1;
    for (int j = 0; j < n + m; ++j)
      if (T(m, j) < -kPivotTol) {
        enter = j;
        break;
      }
    if (enter < 0) break;
    int leave = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      if (T(i, enter) <= kPivotTol) continue;
      const double ratio = T(i, rhs) / T(i, enter);
      if (ratio < best_ratio - kPivotTol ||
          (std::abs(ratio - best_ratio) <= kPivotTol && basis[i] < basis[leave])) {
        best_ratio = ratio;
        leave = i;
      }
    }
    if (leave < 0) throw NumericError("zero_sum_nash: unbounded program");
    T.row(leave) /= T(leave, enter);
    for (int i = 0; i <= m; ++i)
      if (i != leave && T(i, enter) != 0.0) T.row(i) -= T(i, enter) * T.row(leave);
    basis[leave] = enter;
  }

  std::vector<double> y(n, 0.0), x(m, 0.0);
  for (int i = 0; i < m; ++i)
    if (basis[i] < n) y[basis[i]] = std::max(0.0, T(i, rhs));
  for (int i = 0; i < m; ++i) x[i] = std::max(0.0, T(m, n + i));
  const double sy = std::accumulate(y.begin(), y.end(), 0.0);
  const double sx = std::accumulate(x.begin(), x.end(), 0.0);
  if (!(sy > 0.0) || !(sx > 0.0)) throw NumericError("zero_sum_nash: degenerate solution");
  NashResult out;
  for (double v : x) out.row.push_back(v / sx);
  for (double v : y) out.col.push_back(v / sy);
  out.value = 1.0 / sy - shift;
  return out;
}

// Pure-deviation gains; both are <= ~0 at an equilibrium.
inline std::pair<double, double> nash_deviation_gains(const Eigen::MatrixXd& M,
                                                      const NashResult& r) {
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(r.row.data(), r.row.size());
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(r.col.data(), r.col.size());
  const double v = x.dot(M * y);
  const double row_gain = (M * y).maxCoeff() - v;
  const double col_gain = v - (M.transpose() * x).minCoeff();
  return {row_gain, col_gain};
}

}  // namespace rrmab
