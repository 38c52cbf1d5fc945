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

// Experimental domains (synthetic U/V/W arms, ARMMAN engagement model, SIS
// epidemic model) and the shared simulation interface.

#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "rrmab/model.hpp"
#include "rrmab/rng.hpp"

namespace rrmab {

enum class Domain { synthetic, armman, sis };

inline const char* domain_name(Domain d) {
  switch (d) {
    case Domain::synthetic: return "synthetic";
    case Domain::armman: return "armman";
    case Domain::sis: return "sis";
  }
  return "?";
}

inline Domain parse_domain(const std::string& s) {
  if (s == "synthetic") return Domain::synthetic;
  if (s == "armman") return Domain::armman;
  if (s == "sis") return Domain::sis;
  throw ParameterError("unknown domain '" + s + "'");
}

inline constexpr double kRangeSlack = 1e-12;

// ---------------------------------------------------------------------------
// Synthetic: two states, binary action, R(s) = s.

enum class SyntheticType { U = 0, V = 1, W = 2 };

inline ParamInterval synthetic_interval(SyntheticType t) {
  switch (t) {
    case SyntheticType::U: return {"p", 0.00, 1.00, Direction::higher_is_better};
    case SyntheticType::V: return {"p", 0.05, 0.90, Direction::higher_is_better};
    case SyntheticType::W: return {"p", 0.10, 0.95, Direction::higher_is_better};
  }
  return {};
}

inline std::vector<double> synthetic_transition(int state, int action, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("synthetic_transition: p outside [0, 1]");
  if (state < 0 || state > 1 || action < 0 || action > 1)
    throw DimensionError("synthetic_transition: state/action out of range");
  if (state == 0) return {0.5, 0.5};
  if (action == 0) return {1.0, 0.0};
  return {1.0 - p, p};
}

// ---------------------------------------------------------------------------
// ARMMAN: three ordered engagement levels, binary action; beneficiaries move
// at most one level per step.

enum class ArmmanType { A = 0, B = 1, C = 2 };

struct ArmmanParams {
  double p000 = 0.0, p010 = 0.0, p102 = 0.0, p110 = 0.0, p202 = 0.0, p212 = 0.0;

  static ArmmanParams from_span(std::span<const double> v) {
    if (v.size() != 6) throw DimensionError("ArmmanParams: expected 6 values");
    return {v[0], v[1], v[2], v[3], v[4], v[5]};
  }
  std::array<double, 6> as_array() const { return {p000, p010, p102, p110, p202, p212}; }
};

inline const std::array<const char*, 6>& armman_param_names() {
  static const std::array<const char*, 6> names = {"p000", "p010", "p102", "p110", "p202", "p212"};
  return names;
}

// Parameter ranges per beneficiary type, in armman_param_names() order.
inline std::vector<ParamInterval> armman_intervals(ArmmanType t) {
  static const double lo[3][6] = {{0.00, 0.00, 0.50, 0.50, 0.35, 0.35},
                                  {0.00, 0.00, 0.35, 0.15, 0.35, 0.35},
                                  {0.00, 0.00, 0.35, 0.00, 0.35, 0.35}};
  static const double hi[3][6] = {{1.00, 1.00, 1.00, 1.00, 0.85, 0.85},
                                  {1.00, 1.00, 0.85, 0.65, 0.85, 0.85},
                                  {1.00, 1.00, 0.85, 0.50, 0.85, 0.85}};
  // State 0 is the rewarding state: staying there or returning to it is good,
  // drifting to state 2 is bad.
  static const Direction dir[6] = {Direction::higher_is_better, Direction::higher_is_better,
                                   Direction::higher_is_worse,  Direction::higher_is_better,
                                   Direction::higher_is_worse,  Direction::higher_is_worse};
  const int k = static_cast<int>(t);
  std::vector<ParamInterval> out;
  for (int i = 0; i < 6; ++i) out.push_back({armman_param_names()[i], lo[k][i], hi[k][i], dir[i]});
  return out;
}

inline std::vector<double> armman_transition(int state, int action, const ArmmanParams& p,
                                             ArmmanType type) {
  if (state < 0 || state > 2 || action < 0 || action > 1)
    throw DimensionError("armman_transition: state/action out of range");
  const auto ranges = armman_intervals(type);
  const auto values = p.as_array();
  for (int i = 0; i < 6; ++i)
    if (values[i] < ranges[i].lo - kRangeSlack || values[i] > ranges[i].hi + kRangeSlack)
      throw ParameterError(std::string("armman_transition: ") + ranges[i].name +
                           " outside its range");
  switch (state * 2 + action) {
    case 0: return {p.p000, 1.0 - p.p000, 0.0};
    case 1: return {p.p010, 1.0 - p.p010, 0.0};
    case 2: return {0.0, 1.0 - p.p102, p.p102};
    case 3: return {p.p110, 1.0 - p.p110, 0.0};
    case 4: return {0.0, 1.0 - p.p202, p.p202};
    default: return {0.0, 1.0 - p.p212, p.p212};
  }
}

// ---------------------------------------------------------------------------
// SIS: the arm state is the susceptible count in a population of n_pop.

struct SisParams {
  int n_pop = 10;
  double kappa = 1.0;      // contacts per round
  double r_infect = 0.5;   // infection probability per infected contact
  double a_eff_1 = 1.0;    // divides kappa under action 1
  double a_eff_2 = 1.0;    // divides r_infect under action 2
  double recovery = 0.2;   // per-infected recovery probability, held fixed

  void validate() const {
    auto in = [](double v, double lo, double hi) {
      return v >= lo - kRangeSlack && v <= hi + kRangeSlack;
    };
    if (n_pop < 1) throw ParameterError("SisParams: n_pop must be >= 1");
    if (!in(kappa, 1.0, 10.0)) throw ParameterError("SisParams: kappa outside [1, 10]");
    if (!in(r_infect, 0.5, 0.99)) throw ParameterError("SisParams: r_infect outside [0.5, 0.99]");
    if (!in(a_eff_1, 1.0, 10.0) || !in(a_eff_2, 1.0, 10.0))
      throw ParameterError("SisParams: action effect outside [1, 10]");
    if (!(recovery > 0.0 && recovery <= 1.0))
      throw ParameterError("SisParams: recovery outside (0, 1]");
  }
};

inline std::vector<ParamInterval> sis_intervals() {
  return {{"kappa", 1.0, 10.0, Direction::higher_is_worse},
          {"r_infect", 0.5, 0.99, Direction::higher_is_worse},
          {"a_eff_1", 1.0, 10.0, Direction::higher_is_better},
          {"a_eff_2", 1.0, 10.0, Direction::higher_is_better}};
}

inline std::vector<double> binomial_pmf(int n, double p) {
  std::vector<double> out(n + 1, 0.0);
  if (p <= 0.0) {
    out[0] = 1.0;
    return out;
  }
  if (p >= 1.0) {
    out[n] = 1.0;
    return out;
  }
  const double lp = std::log(p), lq = std::log1p(-p);
  const double lgn = std::lgamma(n + 1.0);
  for (int k = 0; k <= n; ++k)
    out[k] = std::exp(lgn - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * lp + (n - k) * lq);
  return out;
}

// Per-susceptible infection probability for one round.
inline double sis_infection_probability(int n_susceptible, int action, const SisParams& p) {
  const int infected = p.n_pop - n_susceptible;
  const double contacts = action == 1 ? p.kappa / p.a_eff_1 : p.kappa;
  const double r = action == 2 ? p.r_infect / p.a_eff_2 : p.r_infect;
  const double per_contact = r * static_cast<double>(infected) / p.n_pop;
  return 1.0 - std::pow(1.0 - per_contact, contacts);
}

inline std::vector<double> sis_transition(int n_susceptible, int action, const SisParams& p) {
  p.validate();
  if (n_susceptible < 0 || n_susceptible > p.n_pop || action < 0 || action > 2)
    throw DimensionError("sis_transition: state/action out of range");
  const int infected = p.n_pop - n_susceptible;
  const auto infections = binomial_pmf(n_susceptible, sis_infection_probability(n_susceptible, action, p));
  const auto recoveries = binomial_pmf(infected, p.recovery);
  std::vector<double> out(p.n_pop + 1, 0.0);
  for (int x = 0; x <= n_susceptible; ++x)
    for (int y = 0; y <= infected; ++y) out[n_susceptible - x + y] += infections[x] * recoveries[y];
  return out;
}

// ---------------------------------------------------------------------------

// Dense per-arm transition tensor [arm][s][a][s'] for one parameter setting.
class TransitionTables {
 public:
  TransitionTables() = default;
  TransitionTables(int n_arms, int n_states, int n_actions)
      : n_arms_(n_arms), n_states_(n_states), n_actions_(n_actions),
        p_(static_cast<std::size_t>(n_arms) * n_states * n_actions * n_states, 0.0) {}

  int n_arms() const { return n_arms_; }
  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }

  std::span<const double> row(int arm, int s, int a) const {
    return {p_.data() + offset(arm, s, a), static_cast<std::size_t>(n_states_)};
  }
  std::span<double> row(int arm, int s, int a) {
    return {p_.data() + offset(arm, s, a), static_cast<std::size_t>(n_states_)};
  }

 private:
  std::size_t offset(int arm, int s, int a) const {
    return ((static_cast<std::size_t>(arm) * n_states_ + s) * n_actions_ + a) * n_states_;
  }

  int n_arms_ = 0, n_states_ = 0, n_actions_ = 0;
  std::vector<double> p_;
};

struct EnvStep {
  JointState next_state;
  std::vector<double> rewards;  // R(s_n) of the pre-transition state
};

enum class OmegaMode { pessimistic, mean, optimistic, uniform };

inline OmegaMode parse_omega_mode(const std::string& s) {
  if (s == "pessimistic") return OmegaMode::pessimistic;
  if (s == "mean") return OmegaMode::mean;
  if (s == "optimistic") return OmegaMode::optimistic;
  if (s == "uniform") return OmegaMode::uniform;
  throw ParameterError("unknown omega mode '" + s + "'");
}

inline ParamSetting sample_omega(const UncertaintyIntervals& intervals, OmegaMode mode, Rng& rng) {
  intervals.validate();
  ParamSetting w;
  for (const auto& arm : intervals.arms) {
    std::vector<double> v;
    for (const auto& p : arm) {
      switch (mode) {
        case OmegaMode::pessimistic: v.push_back(p.pessimistic()); break;
        case OmegaMode::mean: v.push_back(p.mid()); break;
        case OmegaMode::optimistic: v.push_back(p.optimistic()); break;
        case OmegaMode::uniform: v.push_back(p.lo + uniform01(rng) * p.width()); break;
      }
    }
    w.values.push_back(std::move(v));
  }
  return w;
}

// A domain instance: the RMAB plus nature's interval set and whatever the
// kernels need beyond the uncertain parameters.
class Environment {
 public:
  Domain domain = Domain::synthetic;
  RmabInstance instance;
  UncertaintyIntervals intervals;
  std::vector<int> arm_types;  // SyntheticType / ArmmanType index; unused for SIS
  int n_pop = 0;               // SIS only
  double sis_recovery = 0.2;   // SIS only

  int n_arms() const { return instance.n_arms; }
  int n_states() const { return instance.n_states; }
  int n_actions() const { return instance.n_actions; }

  std::vector<double> transition(int arm, int s, int a, std::span<const double> w) const {
    switch (domain) {
      case Domain::synthetic: return synthetic_transition(s, a, w[0]);
      case Domain::armman:
        return armman_transition(s, a, ArmmanParams::from_span(w),
                                 static_cast<ArmmanType>(arm_types[arm]));
      case Domain::sis: return sis_transition(s, a, sis_params(w));
    }
    throw ParameterError("unknown domain");
  }

  SisParams sis_params(std::span<const double> w) const {
    if (w.size() != 4) throw DimensionError("SIS expects 4 parameters per arm");
    return SisParams{n_pop, w[0], w[1], w[2], w[3], sis_recovery};
  }

  TransitionTables tables(const ParamSetting& w) const {
    if (static_cast<int>(w.values.size()) != n_arms())
      throw DimensionError("tables: parameter setting has wrong arm count");
    TransitionTables t(n_arms(), n_states(), n_actions());
    for (int n = 0; n < n_arms(); ++n)
      for (int s = 0; s < n_states(); ++s)
        for (int a = 0; a < n_actions(); ++a) {
          auto src = transition(n, s, a, w.values[n]);
          auto dst = t.row(n, s, a);
          std::copy(src.begin(), src.end(), dst.begin());
        }
    return t;
  }

  // The state at which state-dependent nature policies are collapsed to a
  // single parameter setting.
  JointState canonical_state() const { return JointState(n_arms(), n_states() / 2); }

  JointState random_state(Rng& rng) const {
    JointState s(n_arms());
    for (auto& x : s) x = uniform_int(rng, 0, n_states() - 1);
    return s;
  }

  std::string arm_type_name(int arm) const {
    static const char* syn[] = {"U", "V", "W"};
    static const char* arm_names[] = {"A", "B", "C"};
    switch (domain) {
      case Domain::synthetic: return syn[arm_types[arm]];
      case Domain::armman: return arm_names[arm_types[arm]];
      case Domain::sis: return "SIS";
    }
    return "?";
  }
};

inline int sample_next_state(std::span<const double> row, Rng& rng) {
  double u = uniform01(rng);
  int last = 0;
  for (std::size_t k = 0; k < row.size(); ++k) {
    if (row[k] <= 0.0) continue;
    last = static_cast<int>(k);
    if (u < row[k]) return last;
    u -= row[k];
  }
  return last;
}

// Steps every arm independently. Consumes exactly one uniform per arm.
inline EnvStep simulate(const RmabInstance& inst, const TransitionTables& tables,
                        const JointState& s, std::span<const int> actions, Rng& rng) {
  EnvStep out;
  out.next_state.resize(s.size());
  out.rewards.resize(s.size());
  for (std::size_t n = 0; n < s.size(); ++n) {
    const int arm = static_cast<int>(n);
    out.rewards[n] = inst.reward(arm, s[n]);
    out.next_state[n] = sample_next_state(tables.row(arm, s[n], actions[n]), rng);
  }
  return out;
}

inline EnvStep simulate(const RmabInstance& inst, const TransitionTables& tables,
                        const JointState& s, const ActionMatrix& action, Rng& rng) {
  for (int n = 0; n < action.n_arms(); ++n)
    if (!action.row_one_hot(n)) throw DimensionError("simulate: action rows must be one-hot");
  const auto idx = action.indices();
  return simulate(inst, tables, s, idx, rng);
}

// Same as above but builds only the needed kernel rows from a parameter
// setting; used when nature changes the parameters every step.
inline EnvStep simulate(const Environment& env, const ParamSetting& w, const JointState& s,
                        std::span<const int> actions, Rng& rng) {
  EnvStep out;
  out.next_state.resize(s.size());
  out.rewards.resize(s.size());
  for (std::size_t n = 0; n < s.size(); ++n) {
    const int arm = static_cast<int>(n);
    out.rewards[n] = env.instance.reward(arm, s[n]);
    const auto row = env.transition(arm, s[n], actions[n], w.values[n]);
    out.next_state[n] = sample_next_state(row, rng);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Factories.

inline Environment make_synthetic(int n_arms, double budget, int horizon = 10,
                                  double discount = 0.9) {
  if (n_arms < 1) throw ParameterError("make_synthetic: n_arms must be >= 1");
  Environment env;
  env.domain = Domain::synthetic;
  auto& inst = env.instance;
  inst.n_arms = n_arms;
  inst.n_states = 2;
  inst.n_actions = 2;
  inst.costs = {0.0, 1.0};
  inst.budget = budget;
  inst.discount = discount;
  inst.horizon = horizon;
  // Equal thirds: U arms first, then V, then W.
  for (int n = 0; n < n_arms; ++n) {
    const int type = std::min(2, n * 3 / n_arms);
    env.arm_types.push_back(type);
    env.intervals.arms.push_back({synthetic_interval(static_cast<SyntheticType>(type))});
    inst.rewards.push_back({0.0, 1.0});
  }
  inst.validate();
  return env;
}

inline Environment make_armman(int n_arms, double budget, int horizon = 10,
                               double discount = 0.9) {
  if (n_arms < 1) throw ParameterError("make_armman: n_arms must be >= 1");
  Environment env;
  env.domain = Domain::armman;
  auto& inst = env.instance;
  inst.n_arms = n_arms;
  inst.n_states = 3;
  inst.n_actions = 2;
  inst.costs = {0.0, 1.0};
  inst.budget = budget;
  inst.discount = discount;
  inst.horizon = horizon;
  // 1:1:3 split repeated every five arms.
  static const int pattern[5] = {0, 1, 2, 2, 2};
  for (int n = 0; n < n_arms; ++n) {
    const int type = pattern[n % 5];
    env.arm_types.push_back(type);
    env.intervals.arms.push_back(armman_intervals(static_cast<ArmmanType>(type)));
    inst.rewards.push_back({1.0, 0.5, 0.0});
  }
  inst.validate();
  return env;
}

inline Environment make_sis(int n_arms, int n_pop, double budget, int horizon = 10,
                            double discount = 0.9, double recovery = 0.2) {
  if (n_arms < 1 || n_pop < 1) throw ParameterError("make_sis: n_arms and n_pop must be >= 1");
  Environment env;
  env.domain = Domain::sis;
  env.n_pop = n_pop;
  env.sis_recovery = recovery;
  auto& inst = env.instance;
  inst.n_arms = n_arms;
  inst.n_states = n_pop + 1;
  inst.n_actions = 3;
  inst.costs = {0.0, 1.0, 2.0};
  inst.budget = budget;
  inst.discount = discount;
  inst.horizon = horizon;
  std::vector<double> r(n_pop + 1);
  for (int k = 0; k <= n_pop; ++k) r[k] = static_cast<double>(k) / n_pop;
  for (int n = 0; n < n_arms; ++n) {
    env.arm_types.push_back(0);
    env.intervals.arms.push_back(sis_intervals());
    inst.rewards.push_back(r);
  }
  inst.validate();
  return env;
}

struct DomainOptions {
  int n_pop = 10;  // SIS population size (S = n_pop + 1)
  int horizon = 10;
  double discount = 0.9;
  double sis_recovery = 0.2;
};

inline Environment make_environment(Domain d, int n_arms, double budget,
                                    const DomainOptions& opt = {}) {
  switch (d) {
    case Domain::synthetic: return make_synthetic(n_arms, budget, opt.horizon, opt.discount);
    case Domain::armman: return make_armman(n_arms, budget, opt.horizon, opt.discount);
    case Domain::sis:
      return make_sis(n_arms, opt.n_pop, budget, opt.horizon, opt.discount, opt.sis_recovery);
  }
  throw ParameterError("unknown domain");
}

inline nlohmann::json environment_to_json(const Environment& env) {
  auto j = instance_to_json(env.instance, env.intervals);
  j["domain"] = domain_name(env.domain);
  j["arm_types"] = env.arm_types;
  if (env.domain == Domain::sis) {
    j["n_pop"] = env.n_pop;
    j["sis_recovery"] = env.sis_recovery;
  }
  return j;
}

inline Environment environment_from_json(const nlohmann::json& j) {
  const Domain d = parse_domain(j.at("domain").get<std::string>());
  DomainOptions opt;
  opt.n_pop = j.value("n_pop", 10);
  opt.sis_recovery = j.value("sis_recovery", 0.2);
  opt.horizon = j.value("horizon", 10);
  opt.discount = j.value("discount", 0.9);
  Environment env = make_environment(d, j.at("n_arms").get<int>(), j.at("budget").get<double>(), opt);
  if (j.contains("arm_types") && d != Domain::sis) {
    env.arm_types = j["arm_types"].get<std::vector<int>>();
    if (static_cast<int>(env.arm_types.size()) != env.n_arms())
      throw DimensionError("arm_types length != n_arms");
    for (int n = 0; n < env.n_arms(); ++n) {
      const int t = env.arm_types[n];
      if (t < 0 || t > 2) throw ParameterError("arm type index out of range");
      env.intervals.arms[n] = d == Domain::synthetic
                                  ? std::vector<ParamInterval>{synthetic_interval(static_cast<SyntheticType>(t))}
                                  : armman_intervals(static_cast<ArmmanType>(t));
    }
  }
  if (j.contains("intervals")) {
    RmabInstance inst;
    UncertaintyIntervals iv;
    auto copy = j;
    if (!copy.contains("rewards")) copy["rewards"] = env.instance.rewards;
    instance_from_json(copy, inst, iv);
    if (iv.n_arms() != env.n_arms()) throw DimensionError("intervals arm count != n_arms");
    env.intervals = iv;
    env.instance.rewards = inst.rewards;
  }
  env.instance.validate();
  return env;
}

}  // namespace rrmab
