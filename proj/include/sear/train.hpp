#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sear/algo.hpp"
#include "sear/config.hpp"
#include "sear/metrics.hpp"

namespace sear::algo {

// One metrics.csv row, written at every evaluation checkpoint. Loss and
// entropy columns are means over the updates since the previous row (0 when
// no update has run yet).
struct MetricsRow {
  std::size_t env_step = 0;
  double loss_critic = 0.0;
  double loss_actor = 0.0;
  double alpha = 0.0;
  double chunk_entropy = 0.0;  // mean of -sum_i log pi over actor samples
  double eval_success = 0.0;
  double eval_return = 0.0;
};

struct TrainResult {
  metrics::RunResult run;        // task = env name; eval trace
  std::vector<MetricsRow> rows;  // one per checkpoint, same order
  std::string run_dir;
  double final_success = 0.0;    // last checkpoint's eval success
  std::size_t steps_completed = 0;
};

// Runs the full interleaved collect/update loop for one seed at
// update-to-data ratio 1: each stored environment step triggers one
// gradient update (once the warmup and one full batch are available), in
// the order critics -> actor -> temperature -> Polyak targets.
//
// Writes into run_dir: config.json (frozen resolved config), metrics.csv
// (append-only, one row per evaluation), checkpoints/step_*.ckpt,
// curves/ (this run's learning curve), timing.txt (wallclock; kept out of
// metrics.csv so the metric log stays byte-deterministic).
//
// A non-finite loss or parameter aborts training: diagnostics land in
// run_dir/abort.txt next to the last good checkpoint, then the error is
// rethrown.
TrainResult train(const cfg::RunConfig& config, std::uint64_t seed,
                  const std::string& run_dir);

// A checkpoint rehydrated into live objects. Checkpoints embed the full
// resolved config, so this needs nothing but the file.
struct RestoredRun {
  cfg::RunConfig config;
  std::uint64_t seed = 0;
  std::size_t env_step = 0;
  std::unique_ptr<envs::Env> env;
  std::unique_ptr<nets::Actor> actor;
  TwinCritics online, targets;
  double log_alpha = 0.0;
};

RestoredRun restore_run(const std::string& checkpoint_path);

}  // namespace sear::algo
