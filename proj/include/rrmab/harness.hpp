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

// Experiment drivers, baselines, and result files.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "rrmab/ddlpo.hpp"
#include "rrmab/doubleoracle.hpp"
#include "rrmab/envs.hpp"
#include "rrmab/exact.hpp"
#include "rrmab/model.hpp"
#include "rrmab/nature.hpp"
#include "rrmab/rng.hpp"
#include "rrmab/strategies.hpp"

namespace rrmab {

struct ExperimentConfig {
  Domain domain = Domain::synthetic;
  int n_arms = 3;
  double budget = 1.0;
  DomainOptions domain_options;
  int n_seeds = 10;
  std::uint64_t master_seed = 0;
  double interval_scale = 1.0;
  RrDpoConfig rr;  // oracle, evaluation and loop settings
  std::string out_dir;
  int workers = 1;

  void validate() const {
    if (n_arms < 1) throw ParameterError("n_arms must be >= 1");
    if (domain == Domain::synthetic && n_arms % 3 != 0)
      throw ParameterError("Synthetic needs n_arms divisible by 3");
    if (domain == Domain::armman && n_arms % 5 != 0) throw ParameterError("ARMMAN needs n_arms divisible by 5");
    if (!(budget >= 0.0)) throw ParameterError("budget must be >= 0");
    if (n_seeds < 1) throw ParameterError("seeds must be >= 1");
    if (workers < 1) throw ParameterError("workers must be >= 1");
    if (!(interval_scale >= 0.0 && interval_scale <= 1.0)) throw ParameterError("interval_scale must lie in [0, 1]");
    if (domain_options.horizon < 1) throw ParameterError("horizon must be >= 1");
    rr.agent.validate();
    rr.nature.validate();
  }

  nlohmann::json to_json() const {
    return {{"domain", domain_name(domain)},
            {"n_arms", n_arms},
            {"budget", budget},
            {"n_pop", domain_options.n_pop},
            {"horizon", domain_options.horizon},
            {"discount", domain_options.discount},
            {"seeds", n_seeds},
            {"master_seed", master_seed},
            {"interval_scale", interval_scale},
            {"double_oracle", rr.to_json()},
            {"workers", workers}};
  }

  // Keys absent from j keep their current values.
  void merge_json(const nlohmann::json& j) {
    if (j.contains("domain")) domain = parse_domain(j.at("domain").get<std::string>());
    n_arms = j.value("n_arms", n_arms);
    budget = j.value("budget", budget);
    domain_options.n_pop = j.value("n_pop", domain_options.n_pop);
    domain_options.horizon = j.value("horizon", domain_options.horizon);
    domain_options.discount = j.value("discount", domain_options.discount);
    n_seeds = j.value("seeds", n_seeds);
    master_seed = j.value("master_seed", master_seed);
    interval_scale = j.value("interval_scale", interval_scale);
    if (j.contains("double_oracle")) rr = RrDpoConfig::from_json(j.at("double_oracle"));
    workers = j.value("workers", workers);
  }

  Environment environment() const {
    Environment env = make_environment(domain, n_arms, budget, domain_options);
    if (interval_scale != 1.0) env.intervals = env.intervals.scaled(interval_scale);
    return env;
  }

  std::uint64_t seed_for(int s) const { return derive_seed(master_seed, {static_cast<std::uint64_t>(s)}); }
};

struct ResultRow {
  std::string setting;
  std::string method;
  int seed = 0;
  std::string metric;
  double value = 0.0;
  double wall_seconds = 0.0;

  bool operator==(const ResultRow&) const = default;
};

inline constexpr const char* kCsvHeader = "setting,method,seed,metric,value,wall_seconds";

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void write_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << kCsvHeader << "\n";
  for (const auto& r : rows)
    os << r.setting << "," << r.method << "," << r.seed << "," << r.metric << "," << format_double(r.value) << ","
       << format_double(r.wall_seconds) << "\n";
}

inline std::vector<ResultRow> read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader) throw ParameterError("results CSV: bad header");
  std::vector<ResultRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 6) throw ParameterError("results CSV: expected 6 fields in '" + line + "'");
    ResultRow r;
    r.setting = f[0];
    r.method = f[1];
    r.seed = std::stoi(f[2]);
    r.metric = f[3];
    r.value = std::stod(f[4]);
    r.wall_seconds = std::stod(f[5]);
    rows.push_back(std::move(r));
  }
  return rows;
}

// mean and 95% normal-approximation half width per (setting, method, metric).
struct AggregateRow {
  std::string setting, method, metric;
  int n = 0;
  double mean = 0.0;
  double ci95 = 0.0;
};

inline std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows) {
  std::map<std::tuple<std::string, std::string, std::string>, std::vector<double>> groups;
  for (const auto& r : rows) groups[{r.setting, r.method, r.metric}].push_back(r.value);
  std::vector<AggregateRow> out;
  for (const auto& [key, v] : groups) {
    AggregateRow a;
    std::tie(a.setting, a.method, a.metric) = key;
    a.n = static_cast<int>(v.size());
    for (double x : v) a.mean += x;
    a.mean /= a.n;
    if (a.n > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - a.mean) * (x - a.mean);
      a.ci95 = 1.96 * std::sqrt(ss / (a.n - 1)) / std::sqrt(static_cast<double>(a.n));
    }
    out.push_back(a);
  }
  return out;
}

inline void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRow>& rows) {
  os << "setting,method,metric,n,mean,ci95\n";
  for (const auto& a : rows)
    os << a.setting << "," << a.method << "," << a.metric << "," << a.n << "," << format_double(a.mean) << ","
       << format_double(a.ci95) << "\n";
}

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Baselines.

// Three agent-oracle policies trained at the mean omega perturbed by up to 1%
// of each interval width.
inline Baseline make_rlvmid(const Environment& env, const RrDpoConfig& cfg, std::uint64_t seed) {
  Baseline b{"RLvMid", {}};
  Rng rng = make_rng(seed, {300});
  for (int m = 0; m < 3; ++m) {
    ParamSetting w;
    for (const auto& arm : env.intervals.arms) {
      std::vector<double> v;
      for (const auto& p : arm)
        v.push_back(std::clamp(p.mid() + 0.01 * p.width() * (2.0 * uniform01(rng) - 1.0), p.lo, p.hi));
      w.values.push_back(std::move(v));
    }
    auto r = train_ddlpo(env, MixedStrategy<ParamSetting>::pure(w), cfg.agent,
                         derive_seed(seed, {301, static_cast<std::uint64_t>(m)}));
    b.members.push_back(std::make_shared<DdlpoStrategy>(std::make_shared<AgentPolicy>(std::move(r.policy)),
                                                        env.instance, cfg.method, "RLvMid-" + std::to_string(m)));
  }
  return b;
}

inline std::vector<Baseline> make_baselines(const Environment& env, const RrDpoResult& dpo, const RrDpoConfig& cfg,
                                            std::uint64_t seed) {
  std::vector<Baseline> out;
  for (const auto& p : dpo.initial_agents) out.push_back({p->name(), {p}});
  out.push_back(make_rlvmid(env, cfg, seed));
  out.push_back({"Rand", {std::make_shared<RandomStrategy>(env.instance)}});
  return out;
}

// ---------------------------------------------------------------------------
// Experiments.

inline std::vector<ResultRow> run_agent_oracle_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const Environment env = cfg.environment();
  std::vector<std::vector<ResultRow>> per_seed(cfg.n_seeds);
  parallel_for(cfg.n_seeds, cfg.workers, [&](int s) {
    const std::uint64_t seed = cfg.seed_for(s);
    Rng rng = make_rng(seed, {1});
    const ParamSetting w = sample_omega(env.intervals, OmegaMode::uniform, rng);
    const std::uint64_t eval_seed = derive_seed(seed, {2, w.hash()});
    auto& rows = per_seed[s];

    auto t0 = std::chrono::steady_clock::now();
    auto trained = train_ddlpo(env, MixedStrategy<ParamSetting>::pure(w), cfg.rr.agent, derive_seed(seed, {3}));
    const double train_secs = detail::seconds_since(t0);
    auto policy = std::make_shared<AgentPolicy>(std::move(trained.policy));
    std::vector<StrategyPtr> methods{
        std::make_shared<DdlpoStrategy>(policy, env.instance, cfg.rr.method, "DDLPO"),
        std::make_shared<NoActionStrategy>(env.instance), std::make_shared<RandomStrategy>(env.instance),
        std::make_shared<HawkinsStrategy>(env, w, "Hawkins")};
    for (const auto& m : methods) {
      auto t1 = std::chrono::steady_clock::now();
      const double g = evaluate_pair(*m, env, w, cfg.rr.eval, eval_seed);
      double secs = detail::seconds_since(t1);
      if (m->name() == "DDLPO") secs += train_secs;
      rows.push_back({"", m->name(), s, "return", g, secs});
    }
    if (!cfg.out_dir.empty()) {
      const auto dir = std::filesystem::path(cfg.out_dir) / "agent-oracle" / ("seed" + std::to_string(s));
      detail::write_text(dir / "checkpoint.json", policy->to_json().dump());
      nlohmann::json meta = {{"omega", param_setting_to_json(w)}, {"curves", trained.curves.to_json()}};
      detail::write_text(dir / "training.json", meta.dump(1));
    }
  });
  std::vector<ResultRow> out;
  for (auto& v : per_seed) out.insert(out.end(), v.begin(), v.end());
  return out;
}

struct DoubleOracleSeedResult {
  RrDpoResult dpo;
  RegretReport report;
};

inline DoubleOracleSeedResult run_double_oracle_seed(const Environment& env, const RrDpoConfig& cfg,
                                                     std::uint64_t seed) {
  ReturnCache cache(env, cfg.eval, derive_seed(seed, {100}));
  auto dpo = rr_dpo(env, cfg, seed, &cache);
  auto baselines = make_baselines(env, dpo, cfg, seed);
  auto rep = regret_report(env, dpo, baselines, cfg, seed, cache);
  return {std::move(dpo), std::move(rep)};
}

inline std::vector<ResultRow> run_double_oracle_experiment(const ExperimentConfig& cfg,
                                                           const std::string& setting = "") {
  cfg.validate();
  const Environment env = cfg.environment();
  std::vector<std::vector<ResultRow>> per_seed(cfg.n_seeds);
  RrDpoConfig inner = cfg.rr;
  inner.loop.workers = 1;  // parallelism is across seeds
  parallel_for(cfg.n_seeds, cfg.workers, [&](int s) {
    auto t0 = std::chrono::steady_clock::now();
    auto res = run_double_oracle_seed(env, inner, cfg.seed_for(s));
    const double secs = detail::seconds_since(t0);
    for (const auto& [method, v] : res.report.max_regret) per_seed[s].push_back({setting, method, s, "max_regret", v, secs});
    per_seed[s].push_back({setting, "RR-DPO", s, "equilibrium_value", res.report.equilibrium_value, secs});
    per_seed[s].push_back({setting, "RR-DPO", s, "max_regret_all_columns", res.report.rr_dpo_all_columns, secs});
    if (!cfg.out_dir.empty()) {
      auto dir = std::filesystem::path(cfg.out_dir) / "double-oracle";
      if (!setting.empty()) dir /= setting;
      dir /= "seed" + std::to_string(s);
      nlohmann::json j = {{"rr_dpo", res.dpo.to_json()}, {"report", res.report.to_json()}};
      detail::write_text(dir / "game.json", j.dump(1));
      nlohmann::json manifest = nlohmann::json::array();
      for (std::size_t i = 0; i < res.dpo.agents.size(); ++i) {
        auto desc = res.dpo.agents[i]->describe();
        if (auto* d = dynamic_cast<const DdlpoStrategy*>(res.dpo.agents[i].get())) {
          const std::string file = "agent" + std::to_string(i) + ".json";
          detail::write_text(dir / "checkpoints" / file, d->policy().to_json().dump());
          desc["checkpoint"] = "checkpoints/" + file;
        }
        desc["weight"] = res.dpo.game.agent_mix[i];
        manifest.push_back(desc);
      }
      detail::write_text(dir / "manifest.json", manifest.dump(1));
    }
  });
  std::vector<ResultRow> out;
  for (auto& v : per_seed) out.insert(out.end(), v.begin(), v.end());
  return out;
}

enum class SensitivityAxis { horizon, interval_scale };

inline std::vector<ResultRow> run_sensitivity_experiment(const ExperimentConfig& cfg, SensitivityAxis axis,
                                                         const std::vector<double>& values) {
  std::vector<ResultRow> out;
  for (double v : values) {
    ExperimentConfig c = cfg;
    std::string label;
    if (axis == SensitivityAxis::horizon) {
      const int h = static_cast<int>(v);
      if (h != v || !(h == 10 || h == 25 || h == 50 || h == 100))
        throw ParameterError("horizon sensitivity values must be in {10, 25, 50, 100}");
      c.domain_options.horizon = h;
      c.rr.eval.horizon = h;
      label = "horizon=" + std::to_string(h);
    } else {
      if (!(v >= 0.0 && v <= 1.0)) throw ParameterError("interval scale values must lie in [0, 1]");
      c.interval_scale = v;
      label = "scale=" + format_double(v);
    }
    auto rows = run_double_oracle_experiment(c, label);
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

// Exact small-instance summary: optimal joint value, Lagrange bound and the
// exact Lagrange action at the canonical state.
inline nlohmann::json exact_solve_report(const Environment& env, const ParamSetting& w) {
  auto arms = arm_kernels(env, w);
  const JointState s = env.canonical_state();
  const auto lag = solve_lambda_star(arms, s, env.instance.budget);
  nlohmann::json j;
  j["omega"] = param_setting_to_json(w);
  j["state"] = s;
  j["lambda_star"] = lag.lambda_star;
  j["lagrange_bound"] = lagrange_objective(arms, s, lag.lambda_star, env.instance.budget);
  HawkinsStrategy h(env, w);
  Rng rng(0);
  j["lagrange_action"] = h.act(s, rng).indices();
  try {
    const auto sol = joint_value_iteration(arms, env.instance.budget);
    j["optimal_value"] = sol.value[sol.state_index(s)];
    j["optimal_action"] = sol.action_for(s);
  } catch (const CapacityError& e) {
    j["optimal_value"] = nullptr;
    j["joint_vi_skipped"] = e.what();
  }
  return j;
}

}  // namespace rrmab
