#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sear/algo.hpp"
#include "sear/config.hpp"
#include "sear/envs.hpp"
#include "sear/metrics.hpp"
#include "sear/train.hpp"
#include "verify.hpp"

namespace {

using namespace sear;

constexpr int kOk = 0;
constexpr int kFailedChecks = 1;
constexpr int kInvalidConfig = 2;

struct ConfigInputs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir, run_name;
  std::size_t chunk = 0;
  std::size_t receding_horizon = 0;
  std::uint64_t seed = 0;
  // presence trackers (CLI11 option pointers)
  CLI::Option* chunk_opt = nullptr;
  CLI::Option* k_opt = nullptr;
  CLI::Option* seed_opt = nullptr;

  // Wires the shared flags into one subcommand.
  void attach(CLI::App* cmd, bool with_seed = true) {
    cmd->add_option("-c,--config", config_path,
                    "JSON config file (defaults apply when omitted)");
    cmd->add_option("--set", sets,
                    "dotted.path=value override, repeatable");
    chunk_opt = cmd->add_option("--chunk-size", chunk,
                                "action chunk size N (overrides algo.chunk)");
    k_opt = cmd->add_option(
        "--receding-horizon", receding_horizon,
        "evaluation replanning interval k (overrides algo.receding_horizon)");
    cmd->add_option("--out", out_dir, "output root (overrides SEAR_OUT)");
    cmd->add_option("--name", run_name, "run name (subdirectory of the root)");
    if (with_seed) {
      seed_opt = cmd->add_option("--seed", seed,
                                 "train this single seed instead of the "
                                 "configured seed list");
    }
  }

  cfg::RunConfig resolve() const {
    nlohmann::json doc = nlohmann::json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) {
        throw cfg::ConfigError("cannot read config file: " + config_path);
      }
      try {
        in >> doc;
      } catch (const nlohmann::json::exception& e) {
        throw cfg::ConfigError("invalid JSON in " + config_path + ": " +
                               e.what());
      }
    }
    for (const std::string& s : sets) cfg::apply_override(doc, s);
    if (chunk_opt != nullptr && chunk_opt->count() > 0) {
      cfg::apply_override(doc, "algo.chunk=" + std::to_string(chunk));
    }
    if (k_opt != nullptr && k_opt->count() > 0) {
      cfg::apply_override(
          doc, "algo.receding_horizon=" + std::to_string(receding_horizon));
    }
    cfg::RunConfig c = cfg::load_config(doc);
    if (const char* env = std::getenv("SEAR_OUT"); env != nullptr && *env) {
      c.out_dir = env;
    }
    if (!out_dir.empty()) c.out_dir = out_dir;
    if (!run_name.empty()) c.run_name = run_name;
    if (seed_opt != nullptr && seed_opt->count() > 0) c.seeds = {seed};
    return c;
  }
};

int cmd_train(const cfg::RunConfig& c) {
  const std::string base = c.out_dir + "/" + c.run_name;
  std::vector<metrics::RunResult> runs;
  std::vector<double> finals;
  for (std::uint64_t seed : c.seeds) {
    const std::string dir = base + "/seed_" + std::to_string(seed);
    std::cout << "training seed " << seed << " -> " << dir << std::endl;
    algo::TrainResult r = algo::train(c, seed, dir);
    std::cout << "  " << r.steps_completed << " steps, final eval success "
              << r.final_success << std::endl;
    finals.push_back(r.final_success);
    runs.push_back(std::move(r.run));
  }
  if (runs.size() > 1) {
    metrics::emit_curves(runs, base + "/curves");
  }
  std::cout << "IQM of final success across " << finals.size()
            << " seed(s): " << metrics::iqm(finals) << std::endl;
  return kOk;
}

int cmd_eval(const std::string& checkpoint, std::size_t episodes,
             std::size_t k, bool k_given, std::uint64_t seed,
             const std::string& save_path) {
  algo::RestoredRun r = algo::restore_run(checkpoint);
  const std::size_t use_k = k_given ? k : r.config.receding_horizon;
  std::vector<envs::Episode> episodes_out;
  std::size_t wins = 0;
  double ret = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    envs::Episode ep = algo::receding_horizon_rollout(*r.env, *r.actor, use_k,
                                                      mix_seed(seed, e));
    if (envs::episode_success(*r.env, ep)) ++wins;
    for (const envs::Transition& t : ep) ret += t.reward;
    if (!save_path.empty()) episodes_out.push_back(std::move(ep));
  }
  if (!save_path.empty()) {
    envs::write_episodes_jsonl(save_path, episodes_out);
  }
  std::cout << "checkpoint: " << checkpoint << " (env_step " << r.env_step
            << ")\n"
            << "episodes: " << episodes << "  k: " << use_k << "\n"
            << "success: " << static_cast<double>(wins) / episodes << "\n"
            << "mean return: " << ret / episodes << std::endl;
  return kOk;
}

int cmd_sweep_k(const std::string& checkpoint, std::vector<std::size_t> ks,
                std::size_t episodes, std::uint64_t seed,
                const std::string& csv_path) {
  algo::RestoredRun r = algo::restore_run(checkpoint);
  if (ks.empty()) {
    for (std::size_t k = 1; k <= r.config.chunk; ++k) ks.push_back(k);
  }
  auto table =
      metrics::sweep_receding_horizon(*r.env, *r.actor, ks, episodes, seed);
  std::cout << "k,success\n";
  for (auto [k, s] : table) std::cout << k << ',' << s << '\n';
  if (!csv_path.empty()) {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + csv_path);
    out << "k,success\n";
    for (auto [k, s] : table) out << k << ',' << s << '\n';
    std::cout << "wrote " << csv_path << std::endl;
  }
  return kOk;
}

struct Arm {
  const char* name;
  bool multi_horizon, random_replanning, transformer_critic;
  bool single_step;  // chunk = 1 baseline
};

// The five ablation arms plus the single-step baseline.
constexpr Arm kArms[] = {
    {"sear", true, true, true, false},
    {"no-multi-horizon", false, true, true, false},
    {"mlp-critic", true, true, false, false},
    {"no-random-replanning", true, false, true, false},
    {"naive-chunking", false, false, false, false},
    {"sear-1", true, true, true, true},
};

cfg::RunConfig arm_config(const cfg::RunConfig& base, const Arm& arm) {
  cfg::RunConfig c = base;
  c.multi_horizon = arm.multi_horizon;
  c.random_replanning = arm.random_replanning;
  c.transformer_critic = arm.transformer_critic;
  if (arm.single_step) {
    c.chunk = 1;
    c.receding_horizon = 1;
  }
  return c;
}

int cmd_ablate(const cfg::RunConfig& base, std::size_t jobs, bool dry_run) {
  struct Job {
    const Arm* arm;
    std::uint64_t seed;
    std::string dir;
  };
  const std::string root = base.out_dir + "/" + base.run_name;
  std::vector<Job> plan;
  for (const Arm& arm : kArms) {
    for (std::uint64_t seed : base.seeds) {
      plan.push_back({&arm, seed,
                      root + "/" + arm.name + "/seed_" + std::to_string(seed)});
    }
  }

  if (dry_run) {
    std::cout << "planned runs (" << plan.size() << "):\n";
    for (const Job& j : plan) {
      std::cout << "  " << j.arm->name << "  seed " << j.seed << "  -> "
                << j.dir << '\n';
    }
    return kOk;
  }

  std::vector<std::optional<metrics::RunResult>> results(plan.size());
  std::vector<std::string> errors(plan.size());
  std::atomic<std::size_t> next{0};
  std::mutex io;

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= plan.size()) return;
      const Job& j = plan[i];
      {
        std::lock_guard<std::mutex> lock(io);
        std::cout << "running " << j.arm->name << " seed " << j.seed
                  << std::endl;
      }
      try {
        algo::TrainResult r =
            algo::train(arm_config(base, *j.arm), j.seed, j.dir);
        r.run.task = j.arm->name;  // aggregate curves per arm
        results[i] = std::move(r.run);
        std::lock_guard<std::mutex> lock(io);
        std::cout << "  " << j.arm->name << " seed " << j.seed
                  << " final success " << results[i]->checkpoints.back().success
                  << std::endl;
      } catch (const std::exception& e) {
        errors[i] = e.what();
        std::lock_guard<std::mutex> lock(io);
        std::cerr << "  " << j.arm->name << " seed " << j.seed
                  << " FAILED: " << e.what() << std::endl;
      }
    }
  };

  const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, plan.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();

  bool any_failed = false;
  for (const std::string& e : errors) any_failed = any_failed || !e.empty();

  // Comparison table over final success, IQM across seeds per arm.
  std::vector<metrics::RunResult> all_runs;
  std::cout << "\narm,seeds,iqm_final_success\n";
  std::ofstream table(root + "/ablation.csv", std::ios::binary);
  table << "arm,seeds,iqm_final_success\n";
  for (const Arm& arm : kArms) {
    std::vector<double> finals;
    for (std::size_t i = 0; i < plan.size(); ++i) {
      if (plan[i].arm == &arm && results[i].has_value()) {
        finals.push_back(results[i]->checkpoints.back().success);
        all_runs.push_back(*results[i]);
      }
    }
    if (finals.empty()) continue;
    char line[160];
    std::snprintf(line, sizeof(line), "%s,%zu,%.10g", arm.name, finals.size(),
                  metrics::iqm(finals));
    std::cout << line << '\n';
    table << line << '\n';
  }
  if (!all_runs.empty()) {
    metrics::emit_curves(all_runs, root + "/curves");
    std::cout << "curves written to " << root << "/curves" << std::endl;
  }
  return any_failed ? kFailedChecks : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "sear: off-policy maximum-entropy RL over action chunks with a causal "
      "multi-horizon critic"};
  app.require_subcommand(1);

  ConfigInputs train_in, ablate_in;

  CLI::App* train_cmd =
      app.add_subcommand("train", "train across the configured seeds");
  train_in.attach(train_cmd);

  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint deterministically");
  std::string eval_ckpt, eval_save;
  std::size_t eval_episodes = 100, eval_k = 0;
  std::uint64_t eval_seed = 0;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")
      ->required();
  eval_cmd->add_option("--episodes", eval_episodes, "episode count");
  CLI::Option* eval_k_opt = eval_cmd->add_option(
      "--receding-horizon", eval_k, "replanning interval k (default: from "
                                    "the checkpoint's config)");
  eval_cmd->add_option("--seed", eval_seed, "evaluation seed");
  eval_cmd->add_option("--save-episodes", eval_save,
                       "write evaluated episodes to this JSONL file");

  CLI::App* sweep_cmd = app.add_subcommand(
      "sweep-k", "evaluate one checkpoint across replanning intervals");
  std::string sweep_ckpt, sweep_csv;
  std::vector<std::size_t> sweep_ks;
  std::size_t sweep_episodes = 100;
  std::uint64_t sweep_seed = 0;
  sweep_cmd->add_option("--checkpoint", sweep_ckpt, "checkpoint file")
      ->required();
  sweep_cmd->add_option("--k", sweep_ks, "k values (default: 1..N)")
      ->delimiter(',');
  sweep_cmd->add_option("--episodes", sweep_episodes, "episodes per k");
  sweep_cmd->add_option("--seed", sweep_seed, "shared episode seed base");
  sweep_cmd->add_option("--csv", sweep_csv, "also write the table here");

  CLI::App* ablate_cmd = app.add_subcommand(
      "ablate", "run the ablation battery across the configured seeds");
  std::size_t jobs = 1;
  bool dry_run = false;
  ablate_in.attach(ablate_cmd, /*with_seed=*/true);
  ablate_cmd->add_option("--jobs", jobs, "parallel runs (default 1)");
  ablate_cmd->add_flag("--dry-run", dry_run,
                       "list planned runs without executing");

  CLI::App* verify_cmd = app.add_subcommand(
      "verify", "run the built-in fast verification suite");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(train_in.resolve());
    if (*eval_cmd) {
      return cmd_eval(eval_ckpt, eval_episodes, eval_k,
                      eval_k_opt->count() > 0, eval_seed, eval_save);
    }
    if (*sweep_cmd) {
      return cmd_sweep_k(sweep_ckpt, sweep_ks, sweep_episodes, sweep_seed,
                         sweep_csv);
    }
    if (*ablate_cmd) return cmd_ablate(ablate_in.resolve(), jobs, dry_run);
    if (*verify_cmd) return sear::tools::run_verify();
  } catch (const cfg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return kInvalidConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kFailedChecks;
  }
  return kOk;
}
