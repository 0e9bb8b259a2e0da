#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sear/envs.hpp"
#include "sear/nets.hpp"

namespace sear::metrics {

// Interquartile mean: sort, drop floor(n/4) values from each tail, average
// the rest. Equals the plain mean when all values are equal; invariant to
// input permutation. Throws std::invalid_argument on empty input.
double iqm(std::vector<double> values);

// Percentile bootstrap confidence interval of the IQM statistic.
//
// Exact procedure (tests replicate it independently): for each of the
// `resamples` rounds, draw n indices with Rng(seed).uniform_index(n) in
// order and record the IQM of the resample. Sort the estimates ascending
// into e[0..R-1]; with q = floor((1 - level) / 2 * R), the raw interval is
// (e[q], e[R-1-q]). The returned interval additionally includes the point
// estimate: (min(e[q], iqm(values)), max(e[R-1-q], iqm(values))), so the
// point estimate always lies inside. Deterministic under a fixed seed.
// Requires resamples >= 1000, level in (0, 1), non-empty values.
std::pair<double, double> bootstrap_ci(const std::vector<double>& values,
                                       std::size_t resamples, double level,
                                       std::uint64_t seed);

// One training run's evaluation trace.
struct CheckpointStat {
  std::size_t env_step = 0;
  double success = 0.0;      // fraction in [0, 1]
  double mean_return = 0.0;  // undiscounted
};

struct RunResult {
  std::string task;
  std::uint64_t seed = 0;
  std::vector<CheckpointStat> checkpoints;  // strictly increasing env_step
};

// Throws std::invalid_argument if success rates leave [0,1] or env_steps
// are not strictly increasing.
void validate(const RunResult& r);

// Evaluates one frozen policy at every replanning interval k in k_values,
// reusing the same episode seeds (mix_seed(base_seed, episode)) across all
// k so differences are attributable to k alone. Returns (k, success
// fraction) pairs in input order. Requires 1 <= k <= actor chunk.
std::vector<std::pair<std::size_t, double>> sweep_receding_horizon(
    envs::Env& env, const nets::Actor& actor,
    const std::vector<std::size_t>& k_values, std::size_t episodes,
    std::uint64_t base_seed);

// Writes learning-curve artifacts into `dir`:
//   raw.csv                     every (task, seed, env_step, success, return)
//   curve_<task>.csv / .svg     per-task IQM across seeds with 95% CI band
//   curve_aggregate.csv / .svg  IQM over pooled (task x seed) values
// Tasks whose seeds disagree on checkpoint steps aggregate over the
// intersection of env_steps. Output is deterministic: re-emission from equal
// inputs is byte-identical. Requires >= 1 result.
void emit_curves(const std::vector<RunResult>& results,
                 const std::string& dir);

}  // namespace sear::metrics
