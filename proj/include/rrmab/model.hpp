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

// Core domain types for robust restless multi-armed bandits: the planning
// instance, nature's interval uncertainty set, joint states, one-hot action
// matrices and mixed strategies.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "rrmab/rng.hpp"

namespace rrmab {

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CapacityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvariantViolation : std::logic_error {
  using std::logic_error::logic_error;
};
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The planning problem. Every arm shares the state count, action set and
// cost vector; rewards are stored per arm so heterogeneous reward functions
// remain expressible.
struct RmabInstance {
  int n_arms = 0;
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> costs;                 // costs[0] == 0 is the passive action
  double budget = 0.0;
  double discount = 0.9;
  int horizon = 10;
  std::vector<std::vector<double>> rewards;  // [arm][state]

  double reward(int arm, int state) const { return rewards[arm][state]; }

  void validate() const {
    if (n_arms < 1 || n_states < 1 || n_actions < 1)
      throw ParameterError("RmabInstance: counts must be positive");
    if (static_cast<int>(costs.size()) != n_actions)
      throw DimensionError("RmabInstance: costs length != n_actions");
    if (costs[0] != 0.0) throw ParameterError("RmabInstance: costs[0] must be 0 (passive action)");
    for (double c : costs)
      if (c < 0.0 || !std::isfinite(c)) throw ParameterError("RmabInstance: negative cost");
    if (!(discount >= 0.0 && discount < 1.0))
      throw ParameterError("RmabInstance: discount must lie in [0, 1)");
    if (!(budget >= 0.0)) throw ParameterError("RmabInstance: budget must be >= 0");
    if (horizon < 1) throw ParameterError("RmabInstance: horizon must be >= 1");
    if (static_cast<int>(rewards.size()) != n_arms)
      throw DimensionError("RmabInstance: rewards must have one row per arm");
    for (const auto& r : rewards)
      if (static_cast<int>(r.size()) != n_states)
        throw DimensionError("RmabInstance: reward row length != n_states");
  }

  double max_abs_reward() const {
    double m = 0.0;
    for (const auto& row : rewards)
      for (double r : row) m = std::max(m, std::abs(r));
    return m;
  }

  double min_positive_cost() const {
    double m = 0.0;
    for (double c : costs)
      if (c > 0.0 && (m == 0.0 || c < m)) m = c;
    return m;
  }

  double max_cost() const {
    double m = 0.0;
    for (double c : costs) m = std::max(m, c);
    return m;
  }
};

// Which end of an interval is good for the planner. Used to define the
// pessimistic / optimistic point estimates.
enum class Direction { higher_is_better, higher_is_worse };

struct ParamInterval {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;
  Direction direction = Direction::higher_is_better;

  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  double pessimistic() const { return direction == Direction::higher_is_better ? lo : hi; }
  double optimistic() const { return direction == Direction::higher_is_better ? hi : lo; }
};

// A point in nature's strategy space: one vector of parameter values per arm.
struct ParamSetting {
  std::vector<std::vector<double>> values;

  std::vector<double> flat() const {
    std::vector<double> out;
    for (const auto& v : values) out.insert(out.end(), v.begin(), v.end());
    return out;
  }

  bool nearly_equal(const ParamSetting& other, double tol = 1e-9) const {
    if (values.size() != other.values.size()) return false;
    for (std::size_t n = 0; n < values.size(); ++n) {
      if (values[n].size() != other.values[n].size()) return false;
      for (std::size_t k = 0; k < values[n].size(); ++k)
        if (std::abs(values[n][k] - other.values[n][k]) > tol) return false;
    }
    return true;
  }

  std::uint64_t hash() const {
    std::uint64_t h = 0x84222325cbf29ce4ULL;
    for (double v : flat()) {
      std::uint64_t bits;
      static_assert(sizeof(bits) == sizeof(v));
      std::memcpy(&bits, &v, sizeof(v));
      h = splitmix64(h ^ bits);
    }
    return h;
  }
};

// Nature's strategy space: per-arm list of named intervals.
struct UncertaintyIntervals {
  std::vector<std::vector<ParamInterval>> arms;

  int n_arms() const { return static_cast<int>(arms.size()); }

  int n_params() const {
    int total = 0;
    for (const auto& a : arms) total += static_cast<int>(a.size());
    return total;
  }

  void validate() const {
    for (const auto& arm : arms)
      for (const auto& p : arm)
        if (!(p.lo <= p.hi)) throw ParameterError("interval '" + p.name + "' has lo > hi");
  }

  bool contains(const ParamSetting& w, double tol = 1e-12) const {
    if (w.values.size() != arms.size()) return false;
    for (std::size_t n = 0; n < arms.size(); ++n) {
      if (w.values[n].size() != arms[n].size()) return false;
      for (std::size_t k = 0; k < arms[n].size(); ++k)
        if (w.values[n][k] < arms[n][k].lo - tol || w.values[n][k] > arms[n][k].hi + tol)
          return false;
    }
    return true;
  }

  // Shrinks (factor < 1) or keeps each interval about its midpoint.
  UncertaintyIntervals scaled(double factor) const {
    if (factor < 0.0) throw ParameterError("interval scale must be >= 0");
    UncertaintyIntervals out = *this;
    for (auto& arm : out.arms)
      for (auto& p : arm) {
        double mid = p.mid(), half = 0.5 * p.width() * factor;
        p.lo = mid - half;
        p.hi = mid + half;
      }
    return out;
  }

  // Maps a flat vector in [0,1]^d onto the intervals.
  ParamSetting from_unit(std::span<const double> unit) const {
    if (static_cast<int>(unit.size()) != n_params())
      throw DimensionError("from_unit: width mismatch");
    ParamSetting w;
    std::size_t k = 0;
    for (const auto& arm : arms) {
      std::vector<double> v;
      for (const auto& p : arm) {
        double u = std::clamp(unit[k++], 0.0, 1.0);
        v.push_back(p.lo + u * p.width());
      }
      w.values.push_back(std::move(v));
    }
    return w;
  }

  std::vector<double> to_unit(const ParamSetting& w) const {
    std::vector<double> out;
    for (std::size_t n = 0; n < arms.size(); ++n)
      for (std::size_t k = 0; k < arms[n].size(); ++k) {
        const auto& p = arms[n][k];
        out.push_back(p.width() > 0.0 ? (w.values[n][k] - p.lo) / p.width() : 0.5);
      }
    return out;
  }
};

using JointState = std::vector<int>;

// N x |A| one-hot decision matrix.
class ActionMatrix {
 public:
  ActionMatrix() = default;
  ActionMatrix(int n_arms, int n_actions)
      : n_arms_(n_arms), n_actions_(n_actions),
        cells_(static_cast<std::size_t>(n_arms) * n_actions, 0) {
    for (int n = 0; n < n_arms; ++n) set(n, 0);
  }

  static ActionMatrix from_indices(std::span<const int> actions, int n_actions) {
    ActionMatrix m(static_cast<int>(actions.size()), n_actions);
    for (std::size_t n = 0; n < actions.size(); ++n) {
      if (actions[n] < 0 || actions[n] >= n_actions)
        throw DimensionError("ActionMatrix: action index out of range");
      m.set(static_cast<int>(n), actions[n]);
    }
    return m;
  }

  int n_arms() const { return n_arms_; }
  int n_actions() const { return n_actions_; }

  std::uint8_t at(int n, int j) const { return cells_[index(n, j)]; }
  std::uint8_t& at(int n, int j) { return cells_[index(n, j)]; }

  // Makes row n select action j.
  void set(int n, int j) {
    for (int k = 0; k < n_actions_; ++k) cells_[index(n, k)] = 0;
    cells_[index(n, j)] = 1;
  }

  bool row_one_hot(int n) const {
    int ones = 0;
    for (int j = 0; j < n_actions_; ++j) {
      if (at(n, j) > 1) return false;
      ones += at(n, j);
    }
    return ones == 1;
  }

  // Selected action of arm n; only meaningful for one-hot rows.
  int action(int n) const {
    for (int j = 0; j < n_actions_; ++j)
      if (at(n, j)) return j;
    return -1;
  }

  std::vector<int> indices() const {
    std::vector<int> out(n_arms_);
    for (int n = 0; n < n_arms_; ++n) out[n] = action(n);
    return out;
  }

  double total_cost(std::span<const double> costs) const {
    double total = 0.0;
    for (int n = 0; n < n_arms_; ++n)
      for (int j = 0; j < n_actions_; ++j) total += at(n, j) * costs[j];
    return total;
  }

  bool operator==(const ActionMatrix&) const = default;

 private:
  std::size_t index(int n, int j) const { return static_cast<std::size_t>(n) * n_actions_ + j; }

  int n_arms_ = 0;
  int n_actions_ = 0;
  std::vector<std::uint8_t> cells_;
};

// Rounding slack for real-valued budgets.
inline constexpr double kBudgetSlack = 1e-9;

inline bool is_feasible(const ActionMatrix& action, const RmabInstance& instance) {
  if (action.n_arms() != instance.n_arms || action.n_actions() != instance.n_actions)
    throw DimensionError("is_feasible: action matrix shape does not match instance");
  for (int n = 0; n < action.n_arms(); ++n)
    if (!action.row_one_hot(n)) return false;
  return action.total_cost(instance.costs) <= instance.budget + kBudgetSlack;
}

// Discounted sum with the first reward weighted by beta^1:
//   sum_{t=1..T} beta^t r_t.
// Note the exponent starts at one, not zero.
inline double discounted_return(std::span<const double> rewards, double beta) {
  double total = 0.0, w = beta;
  for (double r : rewards) {
    total += w * r;
    w *= beta;
  }
  return total;
}

// Probability distribution over pure strategies of type T.
template <class T>
class MixedStrategy {
 public:
  MixedStrategy() = default;
  MixedStrategy(std::vector<T> items, std::vector<double> weights)
      : items_(std::move(items)), weights_(std::move(weights)) {
    validate();
  }

  static MixedStrategy pure(T item) { return MixedStrategy({std::move(item)}, {1.0}); }

  const std::vector<T>& items() const { return items_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t size() const { return items_.size(); }

  // Always consumes exactly one uniform draw.
  std::size_t sample_index(Rng& rng) const {
    double u = uniform01(rng), acc = 0.0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      if (weights_[i] <= 0.0) continue;
      last = i;
      acc += weights_[i];
      if (u < acc) return i;
    }
    return last;
  }

  const T& sample(Rng& rng) const { return items_[sample_index(rng)]; }

 private:
  void validate() const {
    if (items_.empty() || items_.size() != weights_.size())
      throw DimensionError("MixedStrategy: items and weights must be non-empty and equal length");
    double total = 0.0;
    for (double w : weights_) {
      if (w < 0.0) throw ParameterError("MixedStrategy: negative weight");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ParameterError("MixedStrategy: weights must sum to 1");
  }

  std::vector<T> items_;
  std::vector<double> weights_;
};

// ---------------------------------------------------------------------------
// JSON document for instances and intervals:
//   { n_arms, n_states, n_actions, costs, budget, discount, horizon, rewards,
//     intervals: [ {name: [lo, hi], ...} per arm ],
//     directions: {name: "higher_is_better" | "higher_is_worse"} }

inline const char* direction_name(Direction d) {
  return d == Direction::higher_is_better ? "higher_is_better" : "higher_is_worse";
}

inline Direction parse_direction(const std::string& s) {
  if (s == "higher_is_better") return Direction::higher_is_better;
  if (s == "higher_is_worse") return Direction::higher_is_worse;
  throw ParameterError("unknown interval direction '" + s + "'");
}

inline nlohmann::json instance_to_json(const RmabInstance& inst,
                                       const UncertaintyIntervals& intervals) {
  nlohmann::json j;
  j["n_arms"] = inst.n_arms;
  j["n_states"] = inst.n_states;
  j["n_actions"] = inst.n_actions;
  j["costs"] = inst.costs;
  j["budget"] = inst.budget;
  j["discount"] = inst.discount;
  j["horizon"] = inst.horizon;
  j["rewards"] = inst.rewards;
  nlohmann::json arms = nlohmann::json::array();
  nlohmann::json dirs = nlohmann::json::object();
  nlohmann::json order = nlohmann::json::array();
  for (const auto& arm : intervals.arms) {
    nlohmann::json a = nlohmann::json::object();
    nlohmann::json names = nlohmann::json::array();
    for (const auto& p : arm) {
      a[p.name] = {p.lo, p.hi};
      dirs[p.name] = direction_name(p.direction);
      names.push_back(p.name);
    }
    arms.push_back(a);
    order.push_back(names);
  }
  j["intervals"] = arms;
  j["interval_order"] = order;
  j["directions"] = dirs;
  return j;
}

inline void instance_from_json(const nlohmann::json& j, RmabInstance& inst,
                               UncertaintyIntervals& intervals) {
  inst.n_arms = j.at("n_arms").get<int>();
  inst.n_states = j.at("n_states").get<int>();
  inst.costs = j.at("costs").get<std::vector<double>>();
  inst.n_actions = j.value("n_actions", static_cast<int>(inst.costs.size()));
  inst.budget = j.at("budget").get<double>();
  inst.discount = j.at("discount").get<double>();
  inst.horizon = j.at("horizon").get<int>();
  if (j.contains("rewards")) inst.rewards = j.at("rewards").get<std::vector<std::vector<double>>>();
  intervals.arms.clear();
  const auto& arms = j.at("intervals");
  for (std::size_t n = 0; n < arms.size(); ++n) {
    std::vector<std::string> names;
    if (j.contains("interval_order")) {
      names = j["interval_order"][n].get<std::vector<std::string>>();
    } else {
      for (auto it = arms[n].begin(); it != arms[n].end(); ++it) names.push_back(it.key());
    }
    std::vector<ParamInterval> arm;
    for (const auto& name : names) {
      const auto& lohi = arms[n].at(name);
      ParamInterval p;
      p.name = name;
      p.lo = lohi.at(0).get<double>();
      p.hi = lohi.at(1).get<double>();
      if (j.contains("directions") && j["directions"].contains(name))
        p.direction = parse_direction(j["directions"][name].get<std::string>());
      arm.push_back(p);
    }
    intervals.arms.push_back(std::move(arm));
  }
  intervals.validate();
}

inline nlohmann::json param_setting_to_json(const ParamSetting& w) { return w.values; }

inline ParamSetting param_setting_from_json(const nlohmann::json& j) {
  return ParamSetting{j.get<std::vector<std::vector<double>>>()};
}

}  // namespace rrmab
