// Metrics tests: IQM against an independent oracle, exact bootstrap-CI
// procedure replication, result validation, the replanning-interval sweep,
// and byte-deterministic curve artifacts.
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sear/algo.hpp"
#include "sear/envs.hpp"
#include "sear/metrics.hpp"
#include "sear/nets.hpp"
#include "sear/rng.hpp"

using namespace sear;

namespace {

// Independent IQM: sort descending, trim floor(n/4) per tail, average
// back-to-front (different traversal order than the implementation).
double oracle_iqm(std::vector<double> v) {
  std::sort(v.begin(), v.end(), std::greater<>());
  const std::size_t n = v.size();
  const std::size_t trim = n / 4;
  double acc = 0.0;
  for (std::size_t i = n - trim; i-- > trim;) acc += v[i];
  return acc / static_cast<double>(n - 2 * trim);
}

// Ascending-order IQM used by the bootstrap replication, where bitwise
// equality with the implementation is the point of the test.
double asc_iqm(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t trim = v.size() / 4;
  double acc = 0.0;
  for (std::size_t i = trim; i < v.size() - trim; ++i) acc += v[i];
  return acc / static_cast<double>(v.size() - 2 * trim);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CurveRow {
  std::size_t env_step;
  double iqm_success, ci_lo, ci_hi, iqm_return;
};

std::vector<CurveRow> parse_curve(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  REQUIRE(std::getline(in, line));
  REQUIRE(line == "env_step,iqm_success,ci_lo,ci_hi,iqm_return");
  std::vector<CurveRow> rows;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string cell;
    CurveRow r{};
    std::getline(ss, cell, ',');
    r.env_step = static_cast<std::size_t>(std::stoull(cell));
    std::getline(ss, cell, ',');
    r.iqm_success = std::stod(cell);
    std::getline(ss, cell, ',');
    r.ci_lo = std::stod(cell);
    std::getline(ss, cell, ',');
    r.ci_hi = std::stod(cell);
    std::getline(ss, cell, ',');
    r.iqm_return = std::stod(cell);
    rows.push_back(r);
  }
  return rows;
}

metrics::RunResult make_run(std::string task, std::uint64_t seed,
                            std::vector<metrics::CheckpointStat> cps) {
  metrics::RunResult r;
  r.task = std::move(task);
  r.seed = seed;
  r.checkpoints = std::move(cps);
  return r;
}

}  // namespace

TEST_CASE("iqm: hand values, permutation invariance, oracle agreement") {
  CHECK(metrics::iqm({0.0}) == 0.0);
  CHECK(metrics::iqm({0.7, 0.7, 0.7}) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(metrics::iqm({0.0, 0.4, 0.6, 1.0}) == 0.5);
  // Below 4 samples nothing is trimmed: plain mean.
  CHECK(metrics::iqm({1.0, 2.0, 3.0}) == 2.0);
  // Outliers beyond the quartiles do not move the statistic.
  CHECK(metrics::iqm({-1e9, 0.4, 0.6, 1e9}) == 0.5);

  CHECK(metrics::iqm({0.6, 1.0, 0.0, 0.4}) == metrics::iqm({0.0, 0.4, 0.6, 1.0}));

  Rng rng(11);
  for (int c = 0; c < 200; ++c) {
    const std::size_t n = 1 + rng.uniform_index(50);
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-5.0, 5.0);
    CHECK(metrics::iqm(v) == doctest::Approx(oracle_iqm(v)).epsilon(1e-12));
  }

  CHECK_THROWS_AS((void)metrics::iqm({}), std::invalid_argument);
}

TEST_CASE("bootstrap_ci replicates the documented procedure exactly") {
  Rng gen(21);
  for (int c = 0; c < 20; ++c) {
    const std::size_t n = 3 + gen.uniform_index(30);
    std::vector<double> values(n);
    for (double& x : values) x = gen.uniform(0.0, 1.0);
    const std::size_t resamples = 1000;
    const double level = 0.95;
    const std::uint64_t seed = gen.next_u64();

    const auto [lo, hi] = metrics::bootstrap_ci(values, resamples, level, seed);

    // Independent replication, draw for draw.
    Rng rng(seed);
    std::vector<double> estimates(resamples);
    std::vector<double> resample(n);
    for (std::size_t r = 0; r < resamples; ++r) {
      for (std::size_t i = 0; i < n; ++i) {
        resample[i] = values[rng.uniform_index(n)];
      }
      estimates[r] = asc_iqm(resample);
    }
    std::sort(estimates.begin(), estimates.end());
    const auto q = static_cast<std::size_t>(
        std::floor((1.0 - level) / 2.0 * static_cast<double>(resamples)));
    const double point = asc_iqm(values);
    CHECK(lo == std::min(estimates[q], point));
    CHECK(hi == std::max(estimates[resamples - 1 - q], point));
  }
}

TEST_CASE("bootstrap_ci: constant data, coverage of the point estimate") {
  const auto [lo, hi] = metrics::bootstrap_ci({0.3, 0.3, 0.3, 0.3}, 1000, 0.95, 9);
  CHECK(lo == 0.3);
  CHECK(hi == 0.3);

  Rng gen(22);
  for (int c = 0; c < 200; ++c) {
    const std::size_t n = 1 + gen.uniform_index(20);
    std::vector<double> values(n);
    for (double& x : values) x = gen.normal();
    const auto [l, h] = metrics::bootstrap_ci(values, 1000, 0.95, gen.next_u64());
    const double point = metrics::iqm(values);
    CHECK(l <= point);
    CHECK(point <= h);
  }
}

TEST_CASE("bootstrap_ci: width shrinks with sample size, deterministic") {
  Rng gen(23);
  std::vector<double> small(40), large(4000);
  for (double& x : small) x = gen.normal();
  for (double& x : large) x = gen.normal();
  const auto [sl, sh] = metrics::bootstrap_ci(small, 1000, 0.95, 7);
  const auto [ll, lh] = metrics::bootstrap_ci(large, 1000, 0.95, 7);
  CHECK(lh - ll < 0.5 * (sh - sl));  // ~1/10 expected; 1/2 is a safe bound

  const auto a = metrics::bootstrap_ci(small, 1000, 0.95, 99);
  const auto b = metrics::bootstrap_ci(small, 1000, 0.95, 99);
  CHECK(a == b);

  CHECK_THROWS_AS((void)metrics::bootstrap_ci({}, 1000, 0.95, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)metrics::bootstrap_ci({1.0}, 999, 0.95, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)metrics::bootstrap_ci({1.0}, 1000, 0.0, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)metrics::bootstrap_ci({1.0}, 1000, 1.0, 1),
                  std::invalid_argument);
}

TEST_CASE("run-result validation") {
  metrics::RunResult ok = make_run("t", 0, {{0, 0.0, -1.0}, {10, 1.0, 2.0}});
  CHECK_NOTHROW(metrics::validate(ok));
  CHECK_NOTHROW(metrics::validate(make_run("t", 0, {})));

  CHECK_THROWS_AS(metrics::validate(make_run("t", 0, {{0, 1.5, 0.0}})),
                  std::invalid_argument);
  CHECK_THROWS_AS(metrics::validate(make_run("t", 0, {{0, -0.1, 0.0}})),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      metrics::validate(make_run("t", 0, {{10, 0.5, 0.0}, {10, 0.5, 0.0}})),
      std::invalid_argument);
  CHECK_THROWS_AS(
      metrics::validate(make_run("t", 0, {{10, 0.5, 0.0}, {5, 0.5, 0.0}})),
      std::invalid_argument);
}

TEST_CASE("replanning sweep shares episode seeds across k") {
  const std::size_t N = 4;
  nets::ActorConfig acfg;
  acfg.state_dim = 2;
  acfg.action_dim = 2;
  acfg.chunk = N;
  acfg.width = 8;
  acfg.blocks = 1;
  Rng arng(31);
  nets::Actor actor(acfg, arng);

  envs::PointMassConfig pc;
  pc.max_steps = 12;
  pc.fixed_start = false;  // seed-dependent starts make seed reuse observable
  envs::PointMass env(pc);

  const auto table =
      metrics::sweep_receding_horizon(env, actor, {2, 2, 1, 4}, 8, 77);
  REQUIRE(table.size() == 4);
  CHECK(table[0].first == 2);
  CHECK(table[0].second == table[1].second);  // same k, same seeds

  // Manual replication of each entry.
  for (const auto& [k, success] : table) {
    std::size_t wins = 0;
    for (std::size_t e = 0; e < 8; ++e) {
      const envs::Episode ep =
          algo::receding_horizon_rollout(env, actor, k, mix_seed(77, e));
      if (envs::episode_success(env, ep)) ++wins;
    }
    CHECK(success == static_cast<double>(wins) / 8.0);
  }

  // An at-goal environment turns every episode into a success.
  envs::PointMassConfig win;
  win.start_pos = win.goal;
  win.max_steps = 3;
  envs::PointMass env_win(win);
  nets::ActorConfig tiny = acfg;
  Rng arng2(32);
  nets::Actor actor2(tiny, arng2);
  const auto sure = metrics::sweep_receding_horizon(env_win, actor2, {1, 4}, 5, 1);
  CHECK(sure[0].second == 1.0);
  CHECK(sure[1].second == 1.0);

  CHECK_THROWS_AS((void)metrics::sweep_receding_horizon(env, actor, {0}, 4, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)metrics::sweep_receding_horizon(env, actor, {5}, 4, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)metrics::sweep_receding_horizon(env, actor, {2}, 0, 1),
                  std::invalid_argument);
}

TEST_CASE("emit_curves writes exact raw bytes and coherent curves") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "sear_metrics_emit";
  fs::remove_all(dir);

  const std::vector<metrics::RunResult> results = {
      make_run("nav", 3, {{0, 0.0, -2.5}, {100, 0.5, -1.25}}),
      make_run("arm", 1, {{0, 1.0, 3.0}}),
  };
  metrics::emit_curves(results, dir.string());

  // Raw CSV: canonical (task, seed) order, %.10g floats.
  CHECK(read_file((dir / "raw.csv").string()) ==
        "task,seed,env_step,success,mean_return\n"
        "arm,1,0,1,3\n"
        "nav,3,0,0,-2.5\n"
        "nav,3,100,0.5,-1.25\n");

  // Per-task curve: single seed, so IQM equals the value and the CI is
  // degenerate at it.
  const auto nav = parse_curve((dir / "curve_nav.csv").string());
  REQUIRE(nav.size() == 2);
  CHECK(nav[0].env_step == 0);
  CHECK(nav[0].iqm_success == 0.0);
  CHECK(nav[0].ci_lo == 0.0);
  CHECK(nav[0].ci_hi == 0.0);
  CHECK(nav[1].env_step == 100);
  CHECK(nav[1].iqm_success == 0.5);
  CHECK(nav[1].iqm_return == -1.25);

  // Aggregate keeps only env_steps present in every run: step 0.
  const auto agg = parse_curve((dir / "curve_aggregate.csv").string());
  REQUIRE(agg.size() == 1);
  CHECK(agg[0].env_step == 0);
  CHECK(agg[0].iqm_success == 0.5);  // iqm({0, 1})
  CHECK(agg[0].ci_lo <= agg[0].iqm_success);
  CHECK(agg[0].ci_hi >= agg[0].iqm_success);

  // SVGs exist and are self-contained markup.
  CHECK(read_file((dir / "curve_nav.svg").string()).substr(0, 4) == "<svg");
  CHECK(read_file((dir / "curve_aggregate.svg").string()).substr(0, 4) ==
        "<svg");

  fs::remove_all(dir);
}

TEST_CASE("emit_curves: CI bands enclose the IQM line across seeds") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "sear_metrics_band";
  fs::remove_all(dir);

  Rng rng(41);
  std::vector<metrics::RunResult> results;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    std::vector<metrics::CheckpointStat> cps;
    for (std::size_t step = 0; step <= 400; step += 100) {
      metrics::CheckpointStat c;
      c.env_step = step;
      c.success = rng.uniform();
      c.mean_return = rng.uniform(-3.0, 3.0);
      cps.push_back(c);
    }
    results.push_back(make_run("task", seed, std::move(cps)));
  }
  metrics::emit_curves(results, dir.string());

  const auto curve = parse_curve((dir / "curve_task.csv").string());
  REQUIRE(curve.size() == 5);
  for (const CurveRow& r : curve) {
    CHECK(r.ci_lo <= r.iqm_success);
    CHECK(r.iqm_success <= r.ci_hi);
  }

  // Re-emission is byte-identical, file by file.
  const fs::path dir2 = fs::temp_directory_path() / "sear_metrics_band2";
  fs::remove_all(dir2);
  metrics::emit_curves(results, dir2.string());
  for (const char* f :
       {"raw.csv", "curve_task.csv", "curve_task.svg", "curve_aggregate.csv",
        "curve_aggregate.svg"}) {
    CHECK(read_file((dir / f).string()) == read_file((dir2 / f).string()));
  }

  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("emit_curves: ragged runs aggregate over the step intersection") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "sear_metrics_ragged";
  fs::remove_all(dir);

  const std::vector<metrics::RunResult> results = {
      make_run("t", 0, {{100, 0.2, 0.0}, {200, 0.4, 0.0}, {300, 0.6, 0.0}}),
      make_run("t", 1, {{100, 0.4, 0.0}, {300, 0.8, 0.0}}),
  };
  metrics::emit_curves(results, dir.string());
  const auto curve = parse_curve((dir / "curve_t.csv").string());
  REQUIRE(curve.size() == 2);
  CHECK(curve[0].env_step == 100);
  CHECK(curve[0].iqm_success == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(curve[1].env_step == 300);
  CHECK(curve[1].iqm_success == doctest::Approx(0.7).epsilon(1e-15));

  fs::remove_all(dir);

  CHECK_THROWS_AS(metrics::emit_curves({}, dir.string()),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      metrics::emit_curves({make_run("t", 0, {{0, 2.0, 0.0}})}, dir.string()),
      std::invalid_argument);
}
