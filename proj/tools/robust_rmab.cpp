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

// robust-rmab command line.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rrmab/rrmab.hpp"

namespace {

using namespace rrmab;
using nlohmann::json;
namespace fs = std::filesystem;

struct CommonFlags {
  std::optional<std::string> domain;
  std::optional<int> n_arms;
  std::optional<double> budget;
  std::optional<int> seeds;
  std::optional<int> epochs;
  std::optional<std::uint64_t> master_seed;
  std::optional<int> workers;
  std::string out;
  std::string config;
};

std::string default_out() {
  const char* env = std::getenv("RRMAB_OUT");
  return env && *env ? env : "results";
}

void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--domain", f.domain, "synthetic | armman | sis");
  sub->add_option("--n-arms", f.n_arms, "Number of arms");
  sub->add_option("--budget", f.budget, "Per-round budget");
  sub->add_option("--seeds", f.seeds, "Number of seeds");
  sub->add_option("--epochs", f.epochs, "Oracle training epochs");
  sub->add_option("--seed", f.master_seed, "Master seed");
  sub->add_option("--workers", f.workers, "Worker threads");
  sub->add_option("--out", f.out, "Output root (default $RRMAB_OUT or ./results)");
  sub->add_option("--config", f.config, "JSON config file; flags override it")->check(CLI::ExistingFile);
}

json read_json(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw std::runtime_error("cannot read " + p.string());
  return json::parse(f);
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

ExperimentConfig build_config(const CommonFlags& f) {
  ExperimentConfig c;
  if (!f.config.empty()) c.merge_json(read_json(f.config));
  if (f.domain) c.domain = parse_domain(*f.domain);
  if (f.n_arms) c.n_arms = *f.n_arms;
  if (f.budget) c.budget = *f.budget;
  if (f.seeds) c.n_seeds = *f.seeds;
  if (f.master_seed) c.master_seed = *f.master_seed;
  if (f.workers) c.workers = *f.workers;
  if (f.epochs) {
    for (TrainConfig* t : {&c.rr.agent, &c.rr.nature.agent}) {
      t->n_epochs = *f.epochs;
      if (t->lambda_freeze_epochs >= t->n_epochs) t->lambda_freeze_epochs = t->n_epochs / 5;
    }
  }
  c.out_dir = f.out.empty() ? default_out() : f.out;
  c.validate();
  return c;
}

std::string csv(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  write_csv(os, rows);
  return os.str();
}

std::string aggregate_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  write_aggregate_csv(os, aggregate(rows));
  return os.str();
}

json summary(const std::vector<ResultRow>& rows) {
  json j = json::array();
  for (const auto& a : aggregate(rows))
    j.push_back({{"setting", a.setting}, {"method", a.method}, {"metric", a.metric}, {"n", a.n}, {"mean", a.mean},
                 {"ci95", a.ci95}});
  return j;
}

// Agent strategies from a manifest: [{"kind"|"name", "weight", ...}, ...].
// Checkpoint paths are relative to the manifest.
MixedStrategy<StrategyPtr> load_manifest(const fs::path& path, const Environment& env) {
  const json m = read_json(path);
  if (!m.is_array() || m.empty()) throw ParameterError("manifest must be a non-empty array");
  std::vector<StrategyPtr> items;
  std::vector<double> weights;
  for (const auto& e : m) {
    const std::string kind = e.value("kind", e.value("name", std::string()));
    const std::string name = e.value("name", kind);
    if (kind == "hawkins") {
      items.push_back(std::make_shared<HawkinsStrategy>(env, param_setting_from_json(e.at("omega")), name));
    } else if (kind == "ddlpo") {
      const auto ckpt = path.parent_path() / e.at("checkpoint").get<std::string>();
      auto pol = std::make_shared<AgentPolicy>(AgentPolicy::from_json(read_json(ckpt), env.instance));
      items.push_back(std::make_shared<DdlpoStrategy>(pol, env.instance,
                                                      parse_act_method(e.value("method", "GreedyProba")), name));
    } else if (kind == "NoAct") {
      items.push_back(std::make_shared<NoActionStrategy>(env.instance));
    } else if (kind == "Rand") {
      items.push_back(std::make_shared<RandomStrategy>(env.instance));
    } else {
      throw ParameterError("manifest: unknown strategy kind '" + kind + "'");
    }
    weights.push_back(e.value("weight", 1.0));
  }
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw ParameterError("manifest: weights must sum to a positive value");
  for (double& w : weights) w /= total;
  return {items, weights};
}

void print(const json& j) { std::cout << j.dump(2) << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust restless bandit planning: agent and nature oracles, double oracle, exact solvers"};
  app.require_subcommand(1);

  CommonFlags agent_f, nature_f, do_f, exact_f, sens_f;
  auto* agent = app.add_subcommand("agent-oracle", "Train DDLPO against sampled omegas and compare baselines");
  add_common(agent, agent_f);

  auto* nature = app.add_subcommand("nature-oracle", "Best-response omega against an agent mixture");
  add_common(nature, nature_f);
  std::string manifest;
  nature->add_option("--manifest", manifest, "Agent strategy manifest JSON")->required()->check(CLI::ExistingFile);

  auto* dbl = app.add_subcommand("double-oracle", "Run RR-DPO and baseline max regrets");
  add_common(dbl, do_f);
  std::optional<int> do_epochs;
  dbl->add_option("--do-epochs", do_epochs, "Double-oracle epochs");

  auto* exact = app.add_subcommand("exact-solve", "Exact Lagrange and joint solutions for one omega");
  add_common(exact, exact_f);
  std::string omega_mode = "mean";
  std::string omega_file;
  exact->add_option("--omega", omega_mode, "pessimistic | mean | optimistic | uniform");
  exact->add_option("--omega-file", omega_file, "JSON array of per-arm parameter vectors")->check(CLI::ExistingFile);

  auto* sens = app.add_subcommand("sensitivity", "Double-oracle sweep over horizon or interval scale");
  add_common(sens, sens_f);
  std::string axis = "scale";
  std::vector<double> values{0.25, 0.5, 1.0};
  sens->add_option("--axis", axis, "horizon | scale")->check(CLI::IsMember({"horizon", "scale"}));
  sens->add_option("--values", values, "Axis values");

  auto* plot = app.add_subcommand("plot-data", "Aggregate result CSVs to mean and 95% CI rows");
  std::vector<std::string> inputs;
  std::string plot_out;
  plot->add_option("inputs", inputs, "Result CSV files")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", plot_out, "Output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", "usage"}, {"message", e.what()}}.dump() << std::endl;
    return 2;
  }

  try {
    if (*agent) {
      auto cfg = build_config(agent_f);
      auto rows = run_agent_oracle_experiment(cfg);
      const fs::path dir = fs::path(cfg.out_dir) / "agent-oracle";
      write_file(dir / "results.csv", csv(rows));
      write_file(dir / "config.json", cfg.to_json().dump(2));
      print({{"results", (dir / "results.csv").string()}, {"summary", summary(rows)}});
    } else if (*nature) {
      auto cfg = build_config(nature_f);
      const Environment env = cfg.environment();
      auto mix = load_manifest(manifest, env);
      auto res = train_ma_ddlpo(env, mix, cfg.rr.nature, cfg.seed_for(0));
      json out = {{"omega", param_setting_to_json(res.omega)}, {"curves", res.curves.to_json()}};
      const fs::path dir = fs::path(cfg.out_dir) / "nature-oracle";
      write_file(dir / "best_response.json", out.dump(1));
      write_file(dir / "nature_policy.json", res.policy.to_json().dump());
      print({{"omega", out["omega"]}, {"output", (dir / "best_response.json").string()}});
    } else if (*dbl) {
      auto cfg = build_config(do_f);
      if (do_epochs) cfg.rr.loop.max_epochs = *do_epochs;
      auto rows = run_double_oracle_experiment(cfg);
      const fs::path dir = fs::path(cfg.out_dir) / "double-oracle";
      write_file(dir / "results.csv", csv(rows));
      std::ostringstream br;
      br << "method,seed,max_regret\n";
      for (const auto& r : rows)
        if (r.metric == "max_regret") br << r.method << "," << r.seed << "," << format_double(r.value) << "\n";
      write_file(dir / "baseline_regret.csv", br.str());
      write_file(dir / "config.json", cfg.to_json().dump(2));
      print({{"results", (dir / "results.csv").string()}, {"summary", summary(rows)}});
    } else if (*exact) {
      auto cfg = build_config(exact_f);
      const Environment env = cfg.environment();
      Rng rng = make_rng(cfg.master_seed, {0});
      const ParamSetting w = omega_file.empty() ? sample_omega(env.intervals, parse_omega_mode(omega_mode), rng)
                                                : param_setting_from_json(read_json(omega_file));
      if (!env.intervals.contains(w)) throw ParameterError("omega lies outside the uncertainty intervals");
      print(exact_solve_report(env, w));
    } else if (*sens) {
      auto cfg = build_config(sens_f);
      const auto ax = axis == "horizon" ? SensitivityAxis::horizon : SensitivityAxis::interval_scale;
      cfg.out_dir = (fs::path(cfg.out_dir) / "sensitivity" / axis).string();
      auto rows = run_sensitivity_experiment(cfg, ax, values);
      write_file(fs::path(cfg.out_dir) / "results.csv", csv(rows));
      print({{"results", (fs::path(cfg.out_dir) / "results.csv").string()}, {"summary", summary(rows)}});
    } else if (*plot) {
      std::vector<ResultRow> rows;
      for (const auto& in : inputs) {
        std::ifstream f(in);
        auto part = read_csv(f);
        rows.insert(rows.end(), part.begin(), part.end());
      }
      if (plot_out.empty())
        std::cout << aggregate_csv(rows);
      else
        write_file(plot_out, aggregate_csv(rows));
    }
  } catch (const std::exception& e) {
    std::string kind = "error";
    if (dynamic_cast<const ParameterError*>(&e)) kind = "parameter";
    else if (dynamic_cast<const DimensionError*>(&e)) kind = "dimension";
    else if (dynamic_cast<const TrainingError*>(&e)) kind = "training";
    else if (dynamic_cast<const json::exception*>(&e)) kind = "json";
    std::cerr << json{{"error", kind}, {"message", e.what()}}.dump() << std::endl;
    return 1;
  }
  return 0;
}
