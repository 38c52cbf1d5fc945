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

// Minimax-regret double oracle. The agent (rows) minimizes and nature
// (columns) maximizes L[i][j] = best_j - G[i][j], where G holds evaluated
// returns and best_j is the best return any agent strategy achieves against
// column j.

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "rrmab/ddlpo.hpp"
#include "rrmab/envs.hpp"
#include "rrmab/exact.hpp"
#include "rrmab/model.hpp"
#include "rrmab/nature.hpp"
#include "rrmab/rng.hpp"
#include "rrmab/strategies.hpp"

namespace rrmab {

struct RegretGame {
  Eigen::MatrixXd returns;
  Eigen::MatrixXd regret;
  std::vector<double> agent_mix;
  std::vector<double> nature_mix;
  double value = 0.0;

  nlohmann::json to_json() const {
    auto rows = [](const Eigen::MatrixXd& m) {
      nlohmann::json out = nlohmann::json::array();
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> r(m.cols());
        for (Eigen::Index j = 0; j < m.cols(); ++j) r[j] = m(i, j);
        out.push_back(r);
      }
      return out;
    };
    return {{"returns", rows(returns)}, {"regret", rows(regret)}, {"agent_mix", agent_mix},
            {"nature_mix", nature_mix}, {"value", value}};
  }
};

// column_best, when given, supplies a known optimum per column that the row
// maximum is compared against.
inline Eigen::MatrixXd regret_matrix(const Eigen::MatrixXd& G, const std::vector<double>* column_best = nullptr) {
  if (G.rows() == 0 || G.cols() == 0) throw DimensionError("regret_matrix: empty return matrix");
  Eigen::MatrixXd L(G.rows(), G.cols());
  for (Eigen::Index j = 0; j < G.cols(); ++j) {
    double best = G.col(j).maxCoeff();
    if (column_best) best = std::max(best, (*column_best)[j]);
    L.col(j) = (best - G.col(j).array()).matrix();
  }
  return L;
}

inline RegretGame solve_regret_game(const Eigen::MatrixXd& G, const std::vector<double>* column_best = nullptr) {
  RegretGame g;
  g.returns = G;
  g.regret = regret_matrix(G, column_best);
  const auto nash = zero_sum_nash(-g.regret);
  g.agent_mix = nash.row;
  g.nature_mix = nash.col;
  g.value = -nash.value;
  return g;
}

// x^T L y with x, y zero-padded to the matrix size.
inline double mixed_regret(const Eigen::MatrixXd& L, const std::vector<double>& x, const std::vector<double>& y) {
  double v = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) v += x[i] * L(i, j) * y[j];
  return v;
}

inline double row_max_regret(const Eigen::MatrixXd& L, const std::vector<double>& x) {
  double worst = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < L.cols(); ++j) {
    double v = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) v += x[i] * L(i, j);
    worst = std::max(worst, v);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Generic loop.

template <class A, class N>
struct DoubleOracleProblem {
  std::function<double(const A&, const N&)> evaluate;
  std::function<A(const MixedStrategy<N>&, int epoch)> agent_oracle;
  std::function<N(const MixedStrategy<A>&, int epoch)> nature_oracle;
  std::function<bool(const A&, const A&)> same_agent;
  std::function<bool(const N&, const N&)> same_nature;
  std::function<double(const N&)> column_best;  // optional
};

struct DoubleOracleOptions {
  int max_epochs = 6;
  std::optional<double> epsilon;  // none: run to max_epochs
  int max_stale_epochs = 2;       // consecutive epochs where neither set grew
  int workers = 1;
};

struct DoEpochRecord {
  int epoch = 0;
  double value = 0.0;  // restricted game value the oracles responded to
  std::vector<double> agent_mix, nature_mix;
  double nature_br_regret = 0.0;  // L(pi~_e, omega_e)
  double agent_br_regret = 0.0;   // L(pi_e, omega~_e)
  bool agent_added = false, nature_added = false;
  int n_agents = 0, n_natures = 0;

  nlohmann::json to_json() const {
    return {{"epoch", epoch},
            {"value", value},
            {"agent_mix", agent_mix},
            {"nature_mix", nature_mix},
            {"nature_br_regret", nature_br_regret},
            {"agent_br_regret", agent_br_regret},
            {"agent_added", agent_added},
            {"nature_added", nature_added},
            {"n_agents", n_agents},
            {"n_natures", n_natures}};
  }
};

template <class A, class N>
struct DoubleOracleResult {
  std::vector<A> agents;
  std::vector<N> natures;
  RegretGame game;  // over the final sets
  std::vector<DoEpochRecord> history;
  std::string stop_reason;
};

template <class A, class N>
DoubleOracleResult<A, N> double_oracle(const DoubleOracleProblem<A, N>& prob, std::vector<A> agents,
                                       std::vector<N> natures, const DoubleOracleOptions& opt) {
  if (agents.empty() || natures.empty()) throw DimensionError("double_oracle: empty initial sets");
  if (opt.max_epochs < 1) throw ParameterError("double_oracle: max_epochs must be >= 1");
  Eigen::MatrixXd G(0, 0);
  std::vector<double> best;

  // Fills every cell outside the top-left (old_rows x old_cols) block.
  auto grow = [&](Eigen::Index old_rows, Eigen::Index old_cols) {
    const Eigen::Index R = agents.size(), C = natures.size();
    Eigen::MatrixXd H(R, C);
    H.topLeftCorner(old_rows, old_cols) = G.topLeftCorner(old_rows, old_cols);
    std::vector<std::pair<int, int>> cells;
    for (Eigen::Index i = 0; i < R; ++i)
      for (Eigen::Index j = 0; j < C; ++j)
        if (i >= old_rows || j >= old_cols) cells.emplace_back(static_cast<int>(i), static_cast<int>(j));
    parallel_for(static_cast<int>(cells.size()), opt.workers, [&](int k) {
      const auto [i, j] = cells[k];
      H(i, j) = prob.evaluate(agents[i], natures[j]);
    });
    G = std::move(H);
    if (prob.column_best)
      for (Eigen::Index j = old_cols; j < C; ++j) best.push_back(prob.column_best(natures[j]));
  };
  auto solve = [&] { return solve_regret_game(G, prob.column_best ? &best : nullptr); };

  grow(0, 0);
  DoubleOracleResult<A, N> res;
  std::optional<double> prev_value;
  int stale = 0;
  for (int e = 1; e <= opt.max_epochs; ++e) {
    const RegretGame game = solve();
    const A agent_br = prob.agent_oracle(MixedStrategy<N>(natures, game.nature_mix), e);
    const N nature_br = prob.nature_oracle(MixedStrategy<A>(agents, game.agent_mix), e);

    DoEpochRecord rec;
    rec.epoch = e;
    rec.value = game.value;
    rec.agent_mix = game.agent_mix;
    rec.nature_mix = game.nature_mix;
    std::size_t ia = agents.size(), jn = natures.size();
    for (std::size_t i = 0; i < agents.size(); ++i)
      if (prob.same_agent(agents[i], agent_br)) ia = i;
    for (std::size_t j = 0; j < natures.size(); ++j)
      if (prob.same_nature(natures[j], nature_br)) jn = j;
    rec.agent_added = ia == agents.size();
    rec.nature_added = jn == natures.size();
    const Eigen::Index old_rows = agents.size(), old_cols = natures.size();
    if (rec.agent_added) agents.push_back(agent_br);
    if (rec.nature_added) natures.push_back(nature_br);
    if (rec.agent_added || rec.nature_added) grow(old_rows, old_cols);
    rec.n_agents = static_cast<int>(agents.size());
    rec.n_natures = static_cast<int>(natures.size());

    const Eigen::MatrixXd L = regret_matrix(G, prob.column_best ? &best : nullptr);
    std::vector<double> e_n(natures.size(), 0.0), e_a(agents.size(), 0.0);
    e_n[jn] = 1.0;
    e_a[ia] = 1.0;
    rec.nature_br_regret = mixed_regret(L, game.agent_mix, e_n);
    rec.agent_br_regret = mixed_regret(L, e_a, game.nature_mix);
    res.history.push_back(rec);

    stale = (rec.agent_added || rec.nature_added) ? 0 : stale + 1;
    if (stale >= opt.max_stale_epochs) {
      res.stop_reason = "no new strategies";
      break;
    }
    // The first epoch has no previous equilibrium to compare against.
    if (opt.epsilon && prev_value && rec.nature_br_regret - *prev_value <= *opt.epsilon &&
        rec.agent_br_regret - *prev_value <= *opt.epsilon) {
      res.stop_reason = "converged";
      break;
    }
    prev_value = game.value;
  }
  if (res.stop_reason.empty()) res.stop_reason = "epoch cap";
  res.game = solve();
  res.agents = std::move(agents);
  res.natures = std::move(natures);
  return res;
}

// ---------------------------------------------------------------------------
// RR-DPO on an environment.

struct RrDpoConfig {
  DoubleOracleOptions loop;
  EvalConfig eval;
  TrainConfig agent;
  NatureConfig nature;
  ActMethod method = ActMethod::greedy_proba;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"max_epochs", loop.max_epochs},
                        {"eval_horizon", eval.horizon},
                        {"eval_sims", eval.n_sims},
                        {"agent", agent.to_json()},
                        {"nature", nature.to_json()},
                        {"method", act_method_name(method)},
                        {"workers", loop.workers}};
    if (loop.epsilon) j["epsilon"] = *loop.epsilon;
    return j;
  }

  static RrDpoConfig from_json(const nlohmann::json& j) {
    RrDpoConfig c;
    c.loop.max_epochs = j.value("max_epochs", c.loop.max_epochs);
    if (j.contains("epsilon") && !j.at("epsilon").is_null()) c.loop.epsilon = j.at("epsilon").get<double>();
    c.loop.workers = j.value("workers", c.loop.workers);
    c.eval.horizon = j.value("eval_horizon", c.eval.horizon);
    c.eval.n_sims = j.value("eval_sims", c.eval.n_sims);
    if (j.contains("agent")) c.agent = TrainConfig::from_json(j.at("agent"), c.agent);
    if (j.contains("nature")) c.nature = NatureConfig::from_json(j.at("nature"));
    if (j.contains("method")) c.method = parse_act_method(j.at("method").get<std::string>());
    return c;
  }
};

// Return cache keyed by (strategy identity, omega hash). Evaluation seeds
// depend only on the column, so rows share random numbers.
class ReturnCache {
 public:
  ReturnCache(const Environment& env, EvalConfig eval, std::uint64_t seed) : env_(env), eval_(eval), seed_(seed) {}

  double get(const StrategyPtr& pi, const ParamSetting& w) {
    const auto key = std::make_pair(pi.get(), w.hash());
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = cache_.find(key);
      if (it != cache_.end()) return it->second;
    }
    const double v = evaluate_pair(*pi, env_, w, eval_, derive_seed(seed_, {w.hash()}));
    std::lock_guard<std::mutex> lock(mu_);
    cache_.emplace(key, v);
    return v;
  }

 private:
  const Environment& env_;
  EvalConfig eval_;
  std::uint64_t seed_;
  std::mutex mu_;
  std::map<std::pair<const AgentStrategy*, std::uint64_t>, double> cache_;
};

inline ParamSetting corner_omega(const UncertaintyIntervals& iv, OmegaMode mode) {
  Rng unused(0);
  return sample_omega(iv, mode, unused);
}

struct RrDpoResult {
  std::vector<StrategyPtr> agents;
  std::vector<ParamSetting> natures;
  RegretGame game;
  std::vector<DoEpochRecord> history;
  std::string stop_reason;
  std::vector<StrategyPtr> initial_agents;  // HP, HM, HO

  MixedStrategy<StrategyPtr> agent_mixture() const { return {agents, game.agent_mix}; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["game"] = game.to_json();
    for (const auto& a : agents) j["agents"].push_back(a->describe());
    for (const auto& w : natures) j["natures"].push_back(param_setting_to_json(w));
    for (const auto& h : history) j["history"].push_back(h.to_json());
    j["stop_reason"] = stop_reason;
    return j;
  }
};

inline RrDpoResult rr_dpo(const Environment& env, const RrDpoConfig& cfg, std::uint64_t seed,
                          ReturnCache* cache = nullptr) {
  env.instance.validate();
  env.intervals.validate();
  std::optional<ReturnCache> own;
  if (!cache) cache = &own.emplace(env, cfg.eval, derive_seed(seed, {100}));

  std::vector<StrategyPtr> agents{
      std::make_shared<HawkinsStrategy>(env, corner_omega(env.intervals, OmegaMode::pessimistic), "HP"),
      std::make_shared<HawkinsStrategy>(env, corner_omega(env.intervals, OmegaMode::mean), "HM"),
      std::make_shared<HawkinsStrategy>(env, corner_omega(env.intervals, OmegaMode::optimistic), "HO")};
  std::vector<ParamSetting> natures;
  Rng init = make_rng(seed, {101});
  for (auto m : {OmegaMode::pessimistic, OmegaMode::mean, OmegaMode::optimistic, OmegaMode::uniform}) {
    auto w = sample_omega(env.intervals, m, init);
    bool dup = false;
    for (const auto& x : natures) dup = dup || x.nearly_equal(w);
    if (!dup) natures.push_back(std::move(w));
  }

  DoubleOracleProblem<StrategyPtr, ParamSetting> prob;
  prob.evaluate = [&](const StrategyPtr& pi, const ParamSetting& w) { return cache->get(pi, w); };
  prob.agent_oracle = [&](const MixedStrategy<ParamSetting>& mix, int e) -> StrategyPtr {
    try {
      auto r = train_ddlpo(env, mix, cfg.agent, derive_seed(seed, {static_cast<std::uint64_t>(e), 1}));
      return std::make_shared<DdlpoStrategy>(std::make_shared<AgentPolicy>(std::move(r.policy)), env.instance,
                                             cfg.method, "DDLPO-" + std::to_string(e));
    } catch (const std::exception& ex) {
      throw TrainingError("agent oracle failed at epoch " + std::to_string(e) + ": " + ex.what());
    }
  };
  prob.nature_oracle = [&](const MixedStrategy<StrategyPtr>& mix, int e) -> ParamSetting {
    try {
      return train_ma_ddlpo(env, mix, cfg.nature, derive_seed(seed, {static_cast<std::uint64_t>(e), 2})).omega;
    } catch (const std::exception& ex) {
      throw TrainingError("nature oracle failed at epoch " + std::to_string(e) + ": " + ex.what());
    }
  };
  prob.same_agent = [](const StrategyPtr& a, const StrategyPtr& b) { return a.get() == b.get(); };
  prob.same_nature = [](const ParamSetting& a, const ParamSetting& b) { return a.nearly_equal(b, 1e-9); };

  auto initial = agents;
  auto r = double_oracle(prob, std::move(agents), std::move(natures), cfg.loop);
  RrDpoResult out;
  out.agents = std::move(r.agents);
  out.natures = std::move(r.natures);
  out.game = std::move(r.game);
  out.history = std::move(r.history);
  out.stop_reason = std::move(r.stop_reason);
  out.initial_agents = std::move(initial);
  return out;
}

// ---------------------------------------------------------------------------
// Max-regret report for RR-DPO and baselines.

// A baseline with several members (RLvMid) reports its best member.
struct Baseline {
  std::string method;
  std::vector<StrategyPtr> members;
};

struct RegretReport {
  std::map<std::string, double> max_regret;  // includes "RR-DPO"
  double equilibrium_value = 0.0;            // restricted game value of the final DO game
  double rr_dpo_all_columns = 0.0;           // RR-DPO mixture against every column
  Eigen::MatrixXd returns;                   // rows: DO agents then extra baseline members
  std::vector<std::string> row_names;
  std::vector<ParamSetting> columns;         // Omega_final then best responses

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["max_regret"] = max_regret;
    j["equilibrium_value"] = equilibrium_value;
    j["rr_dpo_all_columns"] = rr_dpo_all_columns;
    j["row_names"] = row_names;
    for (const auto& w : columns) j["columns"].push_back(param_setting_to_json(w));
    return j;
  }
};

// Trains one nature best response per baseline member and one against the
// final RR-DPO mixture, then takes column maxima over every row. Baseline
// members are scored on Omega_final plus their own best response. RR-DPO is
// scored on Omega_final; its score over every column, including the baseline
// best responses and its own, is kept separately.
inline RegretReport regret_report(const Environment& env, const RrDpoResult& dpo, const std::vector<Baseline>& baselines,
                                  const RrDpoConfig& cfg, std::uint64_t seed, ReturnCache& cache) {
  std::vector<StrategyPtr> rows = dpo.agents;
  auto row_of = [&](const StrategyPtr& p) {
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (rows[i].get() == p.get()) return i;
    rows.push_back(p);
    return rows.size() - 1;
  };
  std::vector<ParamSetting> cols = dpo.natures;
  const std::size_t n_final = cols.size();

  std::uint64_t k = 0;
  auto best_response = [&](const MixedStrategy<StrategyPtr>& mix) {
    return train_ma_ddlpo(env, mix, cfg.nature, derive_seed(seed, {200, k++})).omega;
  };
  struct MemberCols {
    std::size_t row;
    std::size_t col;
  };
  std::vector<std::vector<MemberCols>> member_cols;
  for (const auto& b : baselines) {
    member_cols.emplace_back();
    for (const auto& m : b.members) {
      const std::size_t r = row_of(m);
      cols.push_back(best_response(MixedStrategy<StrategyPtr>::pure(m)));
      member_cols.back().push_back({r, cols.size() - 1});
    }
  }
  cols.push_back(best_response(dpo.agent_mixture()));

  Eigen::MatrixXd G(rows.size(), cols.size());
  std::vector<std::pair<int, int>> cells;
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) cells.emplace_back(static_cast<int>(i), static_cast<int>(j));
  parallel_for(static_cast<int>(cells.size()), cfg.loop.workers, [&](int c) {
    const auto [i, j] = cells[c];
    G(i, j) = cache.get(rows[i], cols[j]);
  });
  const Eigen::MatrixXd L = regret_matrix(G);

  RegretReport rep;
  rep.returns = G;
  rep.columns = cols;
  for (const auto& r : rows) rep.row_names.push_back(r->name());
  rep.max_regret["RR-DPO"] = row_max_regret(L.leftCols(n_final), dpo.game.agent_mix);
  rep.rr_dpo_all_columns = row_max_regret(L, dpo.game.agent_mix);
  rep.equilibrium_value = dpo.game.value;
  for (std::size_t b = 0; b < baselines.size(); ++b) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& mc : member_cols[b]) {
      double worst = L(mc.row, mc.col);
      for (std::size_t j = 0; j < n_final; ++j) worst = std::max(worst, L(mc.row, j));
      best = std::min(best, worst);
    }
    rep.max_regret[baselines[b].method] = best;
  }
  return rep;
}

}  // namespace rrmab
