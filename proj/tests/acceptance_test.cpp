// Acceptance gate: eleven criteria, one test case each, every case printing
// exactly one line
//
//   ACCEPT A<k> PASS|FAIL — <name>: <detail>
//
// and asserting the same verdict, so a red ctest row always corresponds to a
// FAIL line here. Tolerances and budgets are pinned in code next to each
// criterion. A6 is implemented faithfully and is expected to fail: a frozen
// squashed-Gaussian policy cannot reach the entropy target the criterion
// demands (per-dimension entropy is capped at log 2 < 1 nat), and iterating
// the temperature does not move the policy's entropy at all; the case
// documents the measured gap against the provable floor.
#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sear/algo.hpp"
#include "sear/config.hpp"
#include "sear/envs.hpp"
#include "sear/metrics.hpp"
#include "sear/nets.hpp"
#include "sear/optim.hpp"
#include "sear/replay.hpp"
#include "sear/rng.hpp"
#include "sear/tensor.hpp"
#include "sear/train.hpp"
#include "verify.hpp"

using namespace sear;
namespace fs = std::filesystem;

namespace {

void report(const char* id, const char* name, bool ok,
            const std::string& detail) {
  std::printf("ACCEPT %s %s — %s: %s\n", id, ok ? "PASS" : "FAIL", name,
              detail.c_str());
  std::fflush(stdout);
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

fs::path fresh_dir(const std::string& leaf) {
  const fs::path dir = fs::temp_directory_path() / "sear_acceptance" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

struct TinyStack {
  std::unique_ptr<nets::Actor> actor;
  algo::TwinCritics critics;
};

TinyStack make_stack(std::size_t S, std::size_t A, std::size_t N, Rng& rng,
                     std::size_t width = 8, std::size_t blocks = 1,
                     std::size_t heads = 2) {
  TinyStack st;
  nets::ActorConfig acfg;
  acfg.state_dim = S;
  acfg.action_dim = A;
  acfg.chunk = N;
  acfg.width = width;
  acfg.blocks = blocks;
  st.actor = std::make_unique<nets::Actor>(acfg, rng);
  nets::TransformerCriticConfig ccfg;
  ccfg.state_dim = S;
  ccfg.action_dim = A;
  ccfg.chunk = N;
  ccfg.width = width;
  ccfg.blocks = blocks;
  ccfg.heads = heads;
  st.critics.q1 = std::make_unique<nets::TransformerCritic>(ccfg, rng);
  st.critics.q2 = std::make_unique<nets::TransformerCritic>(ccfg, rng);
  return st;
}

// Shared small-but-real training configuration for the desk-scale runs
// (A8, A9): dense-reward point mass with random starts. gamma = 0.9 keeps
// the value scale small enough that the critic separates actions quickly.
cfg::RunConfig desk_config() {
  cfg::RunConfig c = cfg::load_config(nlohmann::json::object());
  c.env_name = "pointmass";
  c.env_params = {{"fixed_start", false}};
  c.chunk = 4;
  c.receding_horizon = 2;
  c.gamma = 0.9;
  c.lr = 7e-4;
  c.batch_size = 32;
  c.warmup_steps = 1000;
  c.tau = 0.05;
  c.total_timesteps = 12000;
  c.actor_width = 64;
  c.actor_blocks = 1;
  c.critic_width = 32;
  c.critic_blocks = 2;
  c.critic_heads = 4;
  c.eval_every = 1000;
  c.eval_episodes = 10;
  return c;
}

constexpr std::size_t kNever = std::numeric_limits<std::size_t>::max();

// First env_step at which the per-seed success values aggregate (IQM) to at
// least the threshold; rows must share one evaluation grid.
std::size_t iqm_crossing(const std::vector<algo::TrainResult>& runs,
                         double threshold) {
  const std::size_t n_rows = runs.front().rows.size();
  for (std::size_t i = 0; i < n_rows; ++i) {
    std::vector<double> succ;
    for (const algo::TrainResult& r : runs) {
      succ.push_back(r.rows.at(i).eval_success);
    }
    if (metrics::iqm(succ) >= threshold) return runs.front().rows[i].env_step;
  }
  return kNever;
}

std::size_t seed_crossing(const algo::TrainResult& run, double threshold) {
  for (const algo::MetricsRow& row : run.rows) {
    if (row.eval_success >= threshold) return row.env_step;
  }
  return kNever;
}

std::string step_str(std::size_t s) {
  return s == kNever ? "never" : std::to_string(s);
}

}  // namespace

// -----------------------------------------------------------------------
// A1 — analytic gradients of the critic, actor, and temperature objectives
// match central finite differences to 1e-4 relative error over 100 random
// parameter/input seeds, in under 60 seconds.
TEST_CASE("A1: gradient fidelity across objectives") {
  const auto t0 = std::chrono::steady_clock::now();
  const double kTol = 1e-4;
  double worst = 0.0;
  Rng pick(99);

  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const std::size_t S = 2 + seed % 2;
    const std::size_t A = 1 + seed % 2;
    const std::size_t N = 1 + seed % 3;
    const std::size_t B = 3;

    Rng init_rng(mix_seed(seed, 1));
    TinyStack st = make_stack(S, A, N, init_rng);

    Rng data_rng(mix_seed(seed, 2));
    std::vector<double> sdata(B * S), adata(B * N * A);
    for (double& v : sdata) v = data_rng.normal();
    for (double& v : adata) v = std::tanh(data_rng.normal());
    ad::Tensor states = ad::Tensor::from_data({B, S}, sdata);
    ad::Tensor actions = ad::Tensor::from_data({B, N, A}, adata);
    ad::Tensor noise = nets::make_noise(data_rng, B, N, A);
    const double alpha = data_rng.uniform(0.05, 0.6);
    const double gamma = data_rng.uniform(0.9, 0.99);

    algo::TargetBatch tb;
    tb.batch = B;
    tb.chunk = N;
    tb.valid.assign(B * N, 1);
    tb.g.assign(B * N, 0.0);
    for (double& v : tb.g) v = data_rng.normal();
    if (N > 1) {  // one masked horizon, as the replay window produces
      tb.valid[N - 1] = 0;
      tb.g[N - 1] = 0.0;
    }

    std::vector<ad::Tensor> all_params = st.actor->params();
    for (const ad::Tensor& p : st.critics.params()) all_params.push_back(p);

    auto critic_fn = [&]() {
      return algo::critic_loss(st.critics.q1->forward(states, actions), tb,
                               true);
    };
    // The actor objective treats critic parameters as constants (they are
    // frozen inside actor_loss), so fidelity is probed on actor parameters.
    auto actor_fn = [&]() {
      return algo::actor_loss(states, *st.actor, st.critics, alpha, gamma,
                              noise)
          .loss;
    };

    std::vector<ad::Tensor> critic_probes = st.critics.q1->params();
    std::vector<ad::Tensor> actor_probes = st.actor->params();
    for (int k = 0; k < 2; ++k) {
      const std::size_t ci = (seed * 3 + k * 7) % critic_probes.size();
      worst = std::max(worst,
                       tools::param_grad_error(critic_fn, all_params,
                                               critic_probes[ci], 1e-5, 4,
                                               pick));
      const std::size_t ai = (seed * 5 + k * 11) % actor_probes.size();
      worst = std::max(worst,
                       tools::param_grad_error(actor_fn, all_params,
                                               actor_probes[ai], 1e-5, 4,
                                               pick));
    }

    // Temperature objective: log-probs enter by value, log_alpha is the
    // only differentiable input.
    algo::Temperature temp = algo::make_temperature(
        std::exp(data_rng.uniform(-1.0, 1.0)),
        algo::default_target_entropy(N, A));
    std::vector<double> lpdata(B * N);
    for (double& v : lpdata) v = data_rng.normal() - 1.0;
    ad::Tensor lp = ad::Tensor::from_data({B, N}, lpdata);
    auto temp_fn = [&]() { return algo::temperature_loss(lp, temp); };
    worst = std::max(worst, tools::param_grad_error(
                                temp_fn, {temp.log_alpha}, temp.log_alpha,
                                1e-5, 1, pick));
  }

  const double secs = seconds_since(t0);
  const bool ok = worst <= kTol && secs < 60.0;
  report("A1", "gradient fidelity", ok,
         "max rel err " + num(worst) + " (tol 1e-4) over 100 seeds x "
         "{critic, actor, temperature}, " + num(secs) + "s (budget 60s)");
  CHECK(worst <= kTol);
  CHECK(secs < 60.0);
}

// -----------------------------------------------------------------------
// A2 — causal masking: perturbing action index j (0-based) leaves Q^(n)
// bitwise unchanged for every horizon n <= j, over 10^4 random trials, and
// some later horizon must respond (so the check cannot pass vacuously).
TEST_CASE("A2: action causality is bitwise") {
  const std::size_t S = 3, A = 2;
  const std::size_t chunks[] = {1, 2, 4, 6};
  const std::size_t kTrialsPerChunk = 2500;
  std::size_t trials = 0;
  bool causal = true, sensitive = true;
  std::string first_violation;

  ad::NoGradGuard no_grad;
  for (std::size_t N : chunks) {
    Rng init_rng(mix_seed(7, N));
    nets::TransformerCriticConfig ccfg;
    ccfg.state_dim = S;
    ccfg.action_dim = A;
    ccfg.chunk = N;
    ccfg.width = 16;
    ccfg.blocks = 2;
    ccfg.heads = 4;
    nets::TransformerCritic critic(ccfg, init_rng);

    Rng rng(mix_seed(8, N));
    for (std::size_t t = 0; t < kTrialsPerChunk; ++t) {
      std::vector<double> sdata(S), adata(N * A);
      for (double& v : sdata) v = rng.normal();
      for (double& v : adata) v = std::tanh(rng.normal());
      ad::Tensor st = ad::Tensor::from_data({1, S}, sdata);
      const ad::Tensor base_t =
          critic.forward(st, ad::Tensor::from_data({1, N, A}, adata));
      const std::vector<double>& base = base_t.value();

      const std::size_t j = t % N;
      std::vector<double> pdata = adata;
      for (std::size_t d = 0; d < A; ++d) {
        pdata[j * A + d] += 0.3 + 0.2 * rng.uniform();
      }
      const ad::Tensor pert_t =
          critic.forward(st, ad::Tensor::from_data({1, N, A}, pdata));
      const std::vector<double>& pert = pert_t.value();

      for (std::size_t c = 0; c < j && causal; ++c) {
        if (std::memcmp(&base[c], &pert[c], sizeof(double)) != 0) {
          causal = false;
          first_violation = "horizon " + std::to_string(c + 1) +
                            " moved after perturbing action " +
                            std::to_string(j) + " (N=" + std::to_string(N) +
                            ")";
        }
      }
      bool later = false;
      for (std::size_t c = j; c < N; ++c) {
        later = later || std::memcmp(&base[c], &pert[c], sizeof(double)) != 0;
      }
      if (!later) {
        sensitive = false;
        if (first_violation.empty()) {
          first_violation = "no horizon responded to its own action (N=" +
                            std::to_string(N) + ", j=" + std::to_string(j) +
                            ")";
        }
      }
      ++trials;
    }
  }

  const bool ok = causal && sensitive && trials == 10000;
  report("A2", "action causality", ok,
         ok ? std::to_string(trials) +
                  " trials (N in {1,2,4,6}) bitwise-causal, later horizons "
                  "respond"
            : first_violation);
  CHECK(causal);
  CHECK(sensitive);
  CHECK(trials == 10000);
}

// -----------------------------------------------------------------------
// A3 — with N=1 the chunked machinery reduces to single-step SAC: targets,
// critic loss, and actor loss equal an independently coded SAC update on
// the same inputs to 1e-10.
TEST_CASE("A3: single-step reduction to SAC") {
  const double kTol = 1e-10;
  const double log2pi = std::log(2.0 * 3.14159265358979323846);
  double worst = 0.0;

  for (std::uint64_t cse = 0; cse < 20; ++cse) {
    const std::size_t S = 2 + cse % 3;
    const std::size_t A = 1 + cse % 3;
    const std::size_t N = 1;
    const std::size_t B = 3 + cse % 4;
    Rng init_rng(mix_seed(31, cse));
    TinyStack st = make_stack(S, A, N, init_rng);

    Rng data_rng(mix_seed(32, cse));
    const double gamma = data_rng.uniform(0.9, 0.995);
    const double alpha = data_rng.uniform(0.05, 0.5);

    replay::ChunkBatch cb;
    cb.batch = B;
    cb.chunk = N;
    cb.state_dim = S;
    cb.action_dim = A;
    cb.states.resize(B * S);
    cb.actions.resize(B * A);
    cb.rewards.resize(B);
    cb.next_states.resize(B * S);
    cb.valid.assign(B, 1);
    cb.terminal_within.assign(B, 0);
    for (double& v : cb.states) v = data_rng.normal();
    for (double& v : cb.actions) v = std::tanh(data_rng.normal());
    for (double& v : cb.rewards) v = data_rng.uniform(-1.0, 1.0);
    for (double& v : cb.next_states) v = data_rng.normal();
    for (std::size_t b = 0; b < B; ++b) {
      cb.terminal_within[b] = data_rng.uniform() < 0.3 ? 1 : 0;
    }

    Rng impl_rng(mix_seed(33, cse));
    Rng oracle_rng = impl_rng;  // identical stream for the oracle
    algo::TargetBatch tb =
        algo::compute_targets(cb, st.critics, *st.actor, alpha, gamma,
                              impl_rng);

    ad::NoGradGuard no_grad;
    // Independent single-step SAC target:
    //   y = r + gamma * (1 - terminal) * (min Q(s',a') - alpha log pi(a'|s'))
    // with log pi written in the direct atanh/log1p form.
    ad::Tensor ns = ad::Tensor::from_data({B, S}, cb.next_states);
    nets::ChunkDist dist = st.actor->forward(ns);
    ad::Tensor noise = nets::make_noise(oracle_rng, B, N, A);
    const std::vector<double>& mu = dist.means.value();
    const std::vector<double>& ls = dist.log_stds.value();
    const std::vector<double>& eps = noise.value();
    std::vector<double> aprime(B * A), logp(B, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t d = 0; d < A; ++d) {
        const std::size_t i = b * A + d;
        const double u = mu[i] + std::exp(ls[i]) * eps[i];
        const double a = std::tanh(u);
        aprime[i] = a;
        logp[b] += -0.5 * eps[i] * eps[i] - ls[i] - 0.5 * log2pi -
                   std::log1p(-a * a);
      }
    }
    ad::Tensor ap = ad::Tensor::from_data({B, N, A}, aprime);
    const ad::Tensor q1_t = st.critics.q1->forward(ns, ap);
    const ad::Tensor q2_t = st.critics.q2->forward(ns, ap);
    for (std::size_t b = 0; b < B; ++b) {
      const double boot =
          cb.terminal_within[b]
              ? 0.0
              : std::min(q1_t.value()[b], q2_t.value()[b]) - alpha * logp[b];
      const double y = cb.rewards[b] + gamma * boot;
      worst = std::max(worst, std::fabs(y - tb.g[b]));
    }

    // Critic loss == plain SAC MSE, sum (q - y)^2 / (2B).
    ad::Tensor states = ad::Tensor::from_data({B, S}, cb.states);
    ad::Tensor actions = ad::Tensor::from_data({B, N, A}, cb.actions);
    const ad::Tensor q = st.critics.q1->forward(states, actions);
    const double loss_impl = algo::critic_loss(q, tb, true).item();
    double loss_hand = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      const double d = q.value()[b] - tb.g[b];
      loss_hand += d * d;
    }
    loss_hand /= 2.0 * static_cast<double>(B);
    worst = std::max(worst, std::fabs(loss_impl - loss_hand));

    // Actor loss == mean(alpha log pi - min Q) on shared noise.
    Rng actor_rng(mix_seed(34, cse));
    Rng actor_oracle_rng = actor_rng;
    const double aloss_impl =
        algo::actor_loss(states, *st.actor, st.critics, alpha, gamma,
                         actor_rng)
            .loss.item();
    nets::ChunkDist d2 = st.actor->forward(states);
    ad::Tensor noise2 = nets::make_noise(actor_oracle_rng, B, N, A);
    std::vector<double> a2(B * A), lp2(B, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t dd = 0; dd < A; ++dd) {
        const std::size_t i = b * A + dd;
        const double u =
            d2.means.value()[i] + std::exp(d2.log_stds.value()[i]) *
                                      noise2.value()[i];
        a2[i] = std::tanh(u);
        lp2[b] += -0.5 * noise2.value()[i] * noise2.value()[i] -
                  d2.log_stds.value()[i] - 0.5 * log2pi -
                  std::log1p(-a2[i] * a2[i]);
      }
    }
    ad::Tensor a2t = ad::Tensor::from_data({B, N, A}, a2);
    const ad::Tensor oq1 = st.critics.q1->forward(states, a2t);
    const ad::Tensor oq2 = st.critics.q2->forward(states, a2t);
    double aloss_hand = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
      aloss_hand += alpha * lp2[b] - std::min(oq1.value()[b], oq2.value()[b]);
    }
    aloss_hand /= static_cast<double>(B);
    worst = std::max(worst, std::fabs(aloss_impl - aloss_hand));
  }

  const bool ok = worst <= kTol;
  report("A3", "single-step reduction", ok,
         "max |impl - SAC oracle| " + num(worst) +
             " (tol 1e-10) over 20 cases x {targets, critic loss, actor "
             "loss}");
  CHECK(worst <= kTol);
}

// -----------------------------------------------------------------------
// A4 — chain-task critic oracle: with a frozen random policy and alpha=0,
// critic-only training converges to the exact enumerated Q^(n) within 0.05
// for every horizon n <= 4 and every reachable (state, chunk) pair, in
// under 10 minutes on one core.
TEST_CASE("A4: learned multi-horizon Q matches the exact chain values") {
  const auto t0 = std::chrono::steady_clock::now();
  const double kTol = 0.05;
  const double err = tools::chain_critic_error(
      /*chunk=*/4, /*collect_steps=*/12000, /*updates=*/6000, /*batch=*/64,
      /*width=*/32, /*heads=*/4, /*lr=*/2e-3, /*tau=*/0.05, /*gamma=*/0.9,
      /*seed=*/5);
  const double secs = seconds_since(t0);
  const bool ok = err <= kTol && secs < 600.0;
  report("A4", "chain critic oracle", ok,
         "max |Q - exact| " + num(err) + " (tol 0.05) over 4 states x 3^4 "
         "move chunks x horizons 1..4, " + num(secs) + "s (budget 600s)");
  CHECK(err <= kTol);
  CHECK(secs < 600.0);
}

// -----------------------------------------------------------------------
// A5 — squashed-density normalization: trapezoid-free midpoint quadrature
// of exp(log_prob) over the open interval (-1, 1) integrates to 1 within
// 1e-3 for 50 random (mean, std) pairs.
TEST_CASE("A5: squashed log-density integrates to one") {
  const double kTol = 1e-3;
  const std::size_t grid = 200000;
  const double dx = 2.0 / static_cast<double>(grid);
  Rng rng(41);
  double worst = 0.0;
  ad::NoGradGuard no_grad;

  for (int pair = 0; pair < 50; ++pair) {
    const double mu = rng.uniform(-2.0, 2.0);
    const double log_std = rng.uniform(-2.0, 0.5);
    const double sigma = std::exp(log_std);
    std::vector<double> epsv(grid);
    for (std::size_t j = 0; j < grid; ++j) {
      const double a = -1.0 + (static_cast<double>(j) + 0.5) * dx;
      epsv[j] = (std::atanh(a) - mu) / sigma;
    }
    nets::ChunkDist dist;
    dist.means = ad::Tensor::full({grid, 1, 1}, mu);
    dist.log_stds = ad::Tensor::full({grid, 1, 1}, log_std);
    dist.batch = grid;
    dist.chunk = 1;
    dist.action_dim = 1;
    nets::SampledChunk sc =
        nets::sample_chunk(dist, ad::Tensor::from_data({grid, 1, 1}, epsv));
    const std::vector<double>& lp = sc.log_probs.value();
    double integral = 0.0;
    for (std::size_t j = 0; j < grid; ++j) integral += std::exp(lp[j]) * dx;
    worst = std::max(worst, std::fabs(integral - 1.0));
  }

  const bool ok = worst <= kTol;
  report("A5", "density normalization", ok,
         "max |integral - 1| " + num(worst) +
             " (tol 1e-3) over 50 pairs, mean in [-2,2], std in [e^-2, "
             "e^0.5]");
  CHECK(worst <= kTol);
}

// -----------------------------------------------------------------------
// A6 — temperature stationarity against a frozen actor. The criterion asks
// iterated temperature updates to drive |E[sum log pi] + N*dimA| below
// 0.05*N*dimA. That target is unreachable twice over: (1) E[sum log pi] is
// a property of the frozen policy, so temperature iterations cannot move
// it; (2) a tanh-squashed policy's entropy per action dimension is at most
// log 2, so |E[sum log pi] + N*dimA| >= (1 - log 2) * N * dimA ~= 0.307 *
// N * dimA for every possible actor. The case runs the procedure
// faithfully, checks the mechanism that IS controllable (alpha rises while
// entropy sits below target; updates are stationary at an attainable
// target), and reports the measured gap against the provable floor.
TEST_CASE("A6: temperature stationarity at the documented target") {
  const std::size_t S = 2, A = 2, N = 2, B = 256;
  const double target_sum = static_cast<double>(N * A);  // -H_target
  Rng init_rng(61);
  nets::ActorConfig acfg;
  acfg.state_dim = S;
  acfg.action_dim = A;
  acfg.chunk = N;
  acfg.width = 16;
  acfg.blocks = 1;
  nets::Actor actor(acfg, init_rng);  // frozen throughout

  Rng data_rng(62);
  std::vector<double> sdata(B * S);
  for (double& v : sdata) v = data_rng.normal();
  ad::Tensor states = ad::Tensor::from_data({B, S}, sdata);

  algo::Temperature temp =
      algo::make_temperature(1.0, algo::default_target_entropy(N, A));
  optim::AdamWConfig ocfg;
  ocfg.lr = 1e-2;
  ocfg.weight_decay = 0.0;
  optim::AdamW opt(std::vector<ad::Tensor>{temp.log_alpha}, ocfg);

  Rng noise_rng(63);
  const std::size_t kIters = 1500, kTail = 300;
  double tail_sum = 0.0;
  ad::NoGradGuard no_grad;
  for (std::size_t it = 0; it < kIters; ++it) {
    nets::ChunkDist dist = actor.forward(states);
    nets::SampledChunk sc =
        nets::sample_chunk(dist, nets::make_noise(noise_rng, B, N, A));
    algo::temperature_update(sc.log_probs, temp, opt);
    if (it + kTail >= kIters) {
      const std::vector<double>& lp = sc.log_probs.value();
      double m = 0.0;
      for (double x : lp) m += x;
      tail_sum += m / static_cast<double>(B);
    }
  }
  const double e_sum_logpi = tail_sum / static_cast<double>(kTail);
  const double gap = std::fabs(e_sum_logpi + target_sum);
  const double frac = gap / target_sum;
  const double floor_frac = 1.0 - std::log(2.0);  // ~0.3069

  // Controllable mechanics hold: entropy sits below target, so alpha rises.
  CHECK(temp.alpha() > 1.0);
  // Above the provable floor (sampling slack 0.05 relative).
  CHECK(frac > floor_frac - 0.05);

  // With an attainable target (the policy's own entropy), iterated updates
  // are stationary: log_alpha only jitters by sampling noise.
  algo::Temperature temp2 = algo::make_temperature(1.0, -e_sum_logpi);
  optim::AdamW opt2(std::vector<ad::Tensor>{temp2.log_alpha}, ocfg);
  for (std::size_t it = 0; it < 300; ++it) {
    nets::ChunkDist dist = actor.forward(states);
    nets::SampledChunk sc =
        nets::sample_chunk(dist, nets::make_noise(noise_rng, B, N, A));
    algo::temperature_update(sc.log_probs, temp2, opt2);
  }
  CHECK(std::fabs(std::log(temp2.alpha())) < 0.5);

  const bool ok = gap < 0.05 * target_sum;
  report("A6", "temperature stationarity", ok,
         "|E[sum log pi] + N*dimA| = " + num(gap) + " = " + num(frac) +
             "*N*dimA after 1500 iterations (criterion < 0.05); provable "
             "floor (1 - log 2) = " + num(floor_frac) +
             " for any tanh-squashed policy, and a frozen actor's entropy "
             "cannot move — criterion unattainable, kept red by design");
  CHECK(ok);
}

// -----------------------------------------------------------------------
// A7 — replanning-coverage reproduction: fixed-start point mass, N=4.
// Without random replanning every chunk is planned at an episode step that
// is 0 mod 4; with it, all four residues occur within 200 episodes.
TEST_CASE("A7: replanning residues cover all offsets only with random "
          "replanning") {
  auto run_residues = [](bool random_replanning) {
    auto env = envs::make_env("pointmass", nlohmann::json::object());
    Rng init_rng(71);
    nets::ActorConfig acfg;
    acfg.state_dim = env->spec().state_dim;
    acfg.action_dim = env->spec().action_dim;
    acfg.chunk = 4;
    acfg.width = 8;
    acfg.blocks = 1;
    nets::Actor actor(acfg, init_rng);

    algo::AblationSwitches sw;
    sw.chunk = 4;
    sw.eval_receding_horizon = 4;
    sw.random_replanning = random_replanning;
    algo::Collector collector(*env, actor, sw, 72);

    std::set<std::size_t> residues;
    std::size_t episodes = 0;
    std::size_t guard = 0;
    while (episodes < 200 && ++guard < 200000) {
      algo::Collector::ChunkResult chunk = collector.collect_chunk();
      residues.insert(chunk.replan_step % 4);
      if (chunk.episode_ended) ++episodes;
    }
    return residues;
  };

  const std::set<std::size_t> without = run_residues(false);
  const std::set<std::size_t> with_rr = run_residues(true);
  const std::set<std::size_t> all{0, 1, 2, 3};
  const std::set<std::size_t> zero{0};

  const bool ok = without == zero && with_rr == all;
  auto show = [](const std::set<std::size_t>& s) {
    std::string out = "{";
    for (std::size_t v : s) out += std::to_string(v) + ",";
    if (out.back() == ',') out.pop_back();
    return out + "}";
  };
  report("A7", "replan residues", ok,
         "200 episodes each: without random replanning " + show(without) +
             " (want {0}); with " + show(with_rr) + " (want {0,1,2,3})");
  CHECK(without == zero);
  CHECK(with_rr == all);
}

// -----------------------------------------------------------------------
// A8 — desk-scale learning: dense point mass, 3 seeds. The chunked learner
// (N=4, random replanning) must reach IQM eval success >= 0.9, no later
// (in env steps) than the N=1 baseline's median crossing, within a 12k-step
// budget per seed (well under the 200k/1h criterion budget).
TEST_CASE("A8: chunked learner reaches 0.9 success no later than the "
          "single-step baseline") {
  const fs::path root = fresh_dir("a8");
  const std::vector<std::uint64_t> seeds{0, 1, 2};

  cfg::RunConfig sear_cfg = desk_config();
  cfg::RunConfig base_cfg = desk_config();
  base_cfg.chunk = 1;
  base_cfg.receding_horizon = 1;

  std::vector<algo::TrainResult> sear_runs, base_runs;
  for (std::uint64_t s : seeds) {
    sear_runs.push_back(algo::train(
        sear_cfg, s, (root / ("sear_n4/seed_" + std::to_string(s))).string()));
  }
  for (std::uint64_t s : seeds) {
    base_runs.push_back(algo::train(
        base_cfg, s, (root / ("base_n1/seed_" + std::to_string(s))).string()));
  }

  const std::size_t sear_cross = iqm_crossing(sear_runs, 0.9);
  std::vector<std::size_t> base_crossings;
  for (const algo::TrainResult& r : base_runs) {
    base_crossings.push_back(seed_crossing(r, 0.9));
  }
  std::sort(base_crossings.begin(), base_crossings.end());
  const std::size_t base_median = base_crossings[1];

  std::vector<double> sear_final, base_final;
  for (const algo::TrainResult& r : sear_runs) {
    sear_final.push_back(r.final_success);
  }
  for (const algo::TrainResult& r : base_runs) {
    base_final.push_back(r.final_success);
  }

  const bool reached = sear_cross != kNever;
  const bool no_later = reached && sear_cross <= base_median;
  const bool ok = reached && no_later;
  report("A8", "desk-scale learning", ok,
         "IQM success >= 0.9 at " + step_str(sear_cross) +
             " steps (N=4) vs baseline median " + step_str(base_median) +
             " (N=1); final IQM " + num(metrics::iqm(sear_final)) + " vs " +
             num(metrics::iqm(base_final)) +
             "; 3 seeds, 12k steps/seed, dense point mass");
  CHECK(reached);
  CHECK(no_later);
}

// -----------------------------------------------------------------------
// A9 — receding-horizon directionality: train one N=8 policy, then sweep
// the replanning interval under shared evaluation seeds. Intermediate
// horizons k in {3,4,5} must do at least as well as both extremes (k=1
// re-planning every step, k=8 full open loop).
TEST_CASE("A9: intermediate replanning horizons are no worse than the "
          "extremes") {
  const fs::path root = fresh_dir("a9");
  cfg::RunConfig c = desk_config();
  c.chunk = 8;
  c.receding_horizon = 4;

  algo::TrainResult tr = algo::train(c, 0, (root / "n8/seed_0").string());
  algo::RestoredRun r = algo::restore_run(
      (root / "n8/seed_0/checkpoints/step_000012000.ckpt").string());

  const std::vector<std::size_t> ks{1, 3, 4, 5, 8};
  const auto table =
      metrics::sweep_receding_horizon(*r.env, *r.actor, ks, 200, 909);
  auto success_of = [&](std::size_t k) {
    for (const auto& [kk, s] : table) {
      if (kk == k) return s;
    }
    FAIL("k missing from sweep table");
    return 0.0;
  };

  const double s1 = success_of(1), s8 = success_of(8);
  bool mid_ok = true;
  for (std::size_t k : {std::size_t{3}, std::size_t{4}, std::size_t{5}}) {
    mid_ok = mid_ok && success_of(k) >= s8 && success_of(k) >= s1;
  }

  std::string tbl;
  for (const auto& [k, s] : table) {
    tbl += "k=" + std::to_string(k) + ":" + num(s) + " ";
  }
  const bool ok = mid_ok;
  report("A9", "receding-horizon sweep", ok,
         tbl + "(200 shared-seed episodes; trained N=8, final train success " +
             num(tr.final_success) + ")");
  CHECK(mid_ok);
}

// -----------------------------------------------------------------------
// A10 — IQM and bootstrap oracles: 1000 random inputs each. iqm must match
// an independent sort-trim-average within 1e-12; bootstrap_ci must equal an
// independent resampling implementation exactly under shared seeds.
TEST_CASE("A10: iqm and bootstrap match independent oracles") {
  Rng rng(101);
  double worst_iqm = 0.0;
  for (int c = 0; c < 1000; ++c) {
    const std::size_t n = 1 + rng.uniform_index(60);
    std::vector<double> vals(n);
    for (double& v : vals) v = rng.uniform();
    std::vector<double> sorted = vals;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t t = n / 4;
    double acc = 0.0;
    for (std::size_t i = t; i < n - t; ++i) acc += sorted[i];
    const double oracle = acc / static_cast<double>(n - 2 * t);
    worst_iqm = std::max(worst_iqm, std::fabs(metrics::iqm(vals) - oracle));
  }

  std::size_t interval_mismatches = 0;
  std::size_t coverage_violations = 0;
  for (int c = 0; c < 1000; ++c) {
    const std::size_t n = 2 + rng.uniform_index(40);
    std::vector<double> vals(n);
    for (double& v : vals) v = rng.uniform();
    const std::size_t R = 500;
    const double levels[] = {0.9, 0.95, 0.99};
    const double level = levels[c % 3];
    const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(c);

    const auto [lo, hi] = metrics::bootstrap_ci(vals, R, level, seed);

    Rng boot(seed);
    std::vector<double> est(R);
    std::vector<double> re(n);
    for (std::size_t rdx = 0; rdx < R; ++rdx) {
      for (std::size_t i = 0; i < n; ++i) {
        re[i] = vals[boot.uniform_index(n)];
      }
      std::vector<double> s = re;
      std::sort(s.begin(), s.end());
      const std::size_t t = n / 4;
      double acc = 0.0;
      for (std::size_t i = t; i < n - t; ++i) acc += s[i];
      est[rdx] = acc / static_cast<double>(n - 2 * t);
    }
    std::sort(est.begin(), est.end());
    const auto q = static_cast<std::size_t>(
        std::floor((1.0 - level) / 2.0 * static_cast<double>(R)));
    const double point = metrics::iqm(vals);
    const double olo = std::min(est[q], point);
    const double ohi = std::max(est[R - 1 - q], point);
    if (lo != olo || hi != ohi) ++interval_mismatches;
    if (!(lo <= point && point <= hi)) ++coverage_violations;
  }

  const bool ok =
      worst_iqm <= 1e-12 && interval_mismatches == 0 && coverage_violations == 0;
  report("A10", "iqm/bootstrap oracle", ok,
         "1000 iqm inputs max err " + num(worst_iqm) +
             " (tol 1e-12); 1000 bootstrap cases, " +
             std::to_string(interval_mismatches) + " interval mismatches, " +
             std::to_string(coverage_violations) + " coverage violations");
  CHECK(worst_iqm <= 1e-12);
  CHECK(interval_mismatches == 0);
  CHECK(coverage_violations == 0);
}

// -----------------------------------------------------------------------
// A11 — byte determinism of the training CLI: two cmd_train invocations
// with the same config file and seed write byte-identical metrics.csv.
TEST_CASE("A11: repeated training runs are byte-identical") {
  const fs::path root = fresh_dir("a11");
  const nlohmann::json doc = {
      {"env", {{"name", "pointmass"}, {"params", {{"fixed_start", false}}}}},
      {"algo",
       {{"chunk", 4},
        {"receding_horizon", 2},
        {"gamma", 0.9},
        {"lr", 7e-4},
        {"batch_size", 32},
        {"warmup_steps", 500},
        {"total_timesteps", 3000},
        {"seeds", {7}}}},
      {"nets",
       {{"actor_width", 64},
        {"actor_blocks", 1},
        {"critic_width", 32},
        {"critic_blocks", 2},
        {"critic_heads", 4}}},
      {"eval", {{"every", 500}, {"episodes", 5}}},
  };
  const fs::path cfg_path = root / "train.json";
  std::ofstream(cfg_path) << doc.dump(2) << '\n';

  auto run_once = [&](const std::string& name) {
    const std::string cmd = "env -u SEAR_OUT " SEAR_CLI_PATH " train -c '" +
                            cfg_path.string() + "' --out '" +
                            (root / name).string() + "' --name run > '" +
                            (root / (name + ".log")).string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };

  const int rc_a = run_once("a");
  const int rc_b = run_once("b");
  const fs::path csv_a = root / "a/run/seed_7/metrics.csv";
  const fs::path csv_b = root / "b/run/seed_7/metrics.csv";
  const bool exist = fs::exists(csv_a) && fs::exists(csv_b);
  std::string bytes_a, bytes_b;
  if (exist) {
    bytes_a = read_bytes(csv_a);
    bytes_b = read_bytes(csv_b);
  }
  const bool identical = exist && !bytes_a.empty() && bytes_a == bytes_b;
  const bool ok = rc_a == 0 && rc_b == 0 && identical;
  report("A11", "byte determinism", ok,
         ok ? "two cmd_train runs (3000 steps, seed 7): metrics.csv "
              "identical, " + std::to_string(bytes_a.size()) + " bytes"
            : "exit codes " + std::to_string(rc_a) + "/" +
                  std::to_string(rc_b) + ", files " +
                  (exist ? (identical ? "identical" : "DIFFER")
                         : "missing"));
  CHECK(rc_a == 0);
  CHECK(rc_b == 0);
  CHECK(identical);
}
