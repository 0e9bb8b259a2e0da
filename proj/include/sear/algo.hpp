#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "sear/envs.hpp"
#include "sear/nets.hpp"
#include "sear/optim.hpp"
#include "sear/replay.hpp"
#include "sear/rng.hpp"
#include "sear/tensor.hpp"

namespace sear::algo {

// Entropy temperature, optimized in log space so alpha = exp(log_alpha)
// stays positive. target_entropy defaults to -(N * action_dim): the
// negative convention, the only one a squashed-Gaussian policy can reach
// (its per-dimension entropy is capped at log 2 from above but unbounded
// below).
struct Temperature {
  ad::Tensor log_alpha;  // scalar parameter
  double target_entropy = 0.0;
  double alpha() const;
};

Temperature make_temperature(double alpha_init, double target_entropy);

inline double default_target_entropy(std::size_t chunk,
                                     std::size_t action_dim) {
  return -static_cast<double>(chunk * action_dim);
}

// Every ablation arm toggles here; chunk is N, eval_receding_horizon is k.
struct AblationSwitches {
  bool multi_horizon = true;
  bool random_replanning = true;
  bool transformer_critic = true;
  std::size_t chunk = 10;
  std::size_t eval_receding_horizon = 5;
};

// Throws std::invalid_argument unless 1 <= k <= N.
void validate(const AblationSwitches& sw);

// Two independently initialized critics of identical architecture.
struct TwinCritics {
  std::unique_ptr<nets::Critic> q1, q2;

  std::vector<ad::Tensor> params() const;  // q1's params then q2's
  TwinCritics clone_as_targets() const;    // deep copies, requires_grad off
};

// Regression targets G^(n) for n = 1..N, masked like ChunkBatch.valid.
// For rows where terminal_within[n-1] is set, the bootstrap term is zero.
struct TargetBatch {
  std::size_t batch = 0, chunk = 0;
  std::vector<double> g;             // [B, N]; zero where invalid
  std::vector<unsigned char> valid;  // [B, N]
};

// G^(n) = sum_{i<n} gamma^i r_{t+i}
//       + gamma^n * [not terminal] *
//         (min_j Q^(N)_{target j}(s_{t+n}, a~) - alpha * sum_{i<N} gamma^i
//          log pi(a~_i | s_{t+n}))
// with one fresh reparameterization-free chunk sample a~ per (row, horizon)
// bootstrap state. Consumes exactly one make_noise(rng, B*N, N, dimA) draw,
// so an oracle holding a copy of the rng sees identical samples. Outputs
// carry no gradient. Throws on gamma outside [0, 1) or chunk-size mismatch.
TargetBatch compute_targets(const replay::ChunkBatch& batch,
                            const TwinCritics& target_critics,
                            const nets::Actor& actor, double alpha,
                            double gamma, Rng& rng);

// Masked mean-squared error of Eq-style multi-horizon regression:
// (1 / (2 * |valid terms|)) * sum over valid (row, horizon) of (Q - G)^2.
// predictions are [B, H]: H == targets.chunk uses all horizons (or only the
// last when multi_horizon == false); H == 1 (MLP critic) always regresses
// horizon N only. Invalid terms contribute exactly zero, also in the
// gradient. Throws std::invalid_argument when no term is valid.
ad::Tensor critic_loss(const ad::Tensor& predictions,
                       const TargetBatch& targets, bool multi_horizon);

struct ActorLossResult {
  ad::Tensor loss;       // scalar: mean_b [ alpha * sum_i gamma^i log pi_i
                         //                  - min_j Q^(N)_j(s, a~) ]
  ad::Tensor log_probs;  // [B, N] per-action log-probs (graph-attached)
  double mean_sum_log_prob = 0.0;  // mean_b sum_i log pi_i (plain value)
};

// Reparameterized actor objective. Critic parameters are frozen for the
// duration of the forward pass, so no gradient reaches them. Consumes one
// make_noise(rng, B, N, dimA) draw.
ActorLossResult actor_loss(const ad::Tensor& states, const nets::Actor& actor,
                           const TwinCritics& online_critics, double alpha,
                           double gamma, Rng& rng);

// Same objective with caller-supplied noise [B, N, dimA]; repeatable, for
// gradient checks at fixed noise.
ActorLossResult actor_loss(const ad::Tensor& states, const nets::Actor& actor,
                           const TwinCritics& online_critics, double alpha,
                           double gamma, const ad::Tensor& noise);

// Temperature objective as a graph over temp.log_alpha:
//   L(log_alpha) = -exp(log_alpha) * (mean_b sum_i log pi_i + H_target).
// per_action_log_probs is [B, N] and enters by value only (no gradient
// flows back into the actor). Exposed so the gradient can be verified
// against finite differences.
ad::Tensor temperature_loss(const ad::Tensor& per_action_log_probs,
                            const Temperature& temp);

// One gradient step on log_alpha minimizing temperature_loss. With
// H_target = -(N * dimA): entropy below target raises alpha, above lowers
// it; the zero-gradient point is mean sum log pi == -H_target. Returns the
// new alpha.
double temperature_update(const ad::Tensor& per_action_log_probs,
                          Temperature& temp, optim::AdamW& opt);

// Collects experience by sampling a chunk from the actor at the current
// state and executing a prefix of it: a uniformly random length in {1..N}
// when random_replanning is set, the full chunk otherwise. Execution stops
// early at terminal/truncation; the env is then reset with a seed drawn
// from the collector's rng. The rng draw order per collect_chunk() call is:
// chunk noise, then prefix length (only if random_replanning), then reset
// seed (only if the episode ended).
class Collector {
 public:
  Collector(envs::Env& env, const nets::Actor& actor, AblationSwitches sw,
            std::uint64_t seed);

  struct ChunkResult {
    std::vector<envs::Transition> transitions;  // executed, in order
    std::size_t prefix_len = 0;    // drawn prefix length
    std::size_t replan_step = 0;   // episode-step index where planning happened
    bool episode_ended = false;
  };

  ChunkResult collect_chunk();

  // While set, actions come uniform from [-1, 1]^dimA instead of the actor
  // (warmup exploration); prefix/reset logic is unchanged.
  void set_uniform_random(bool on) { uniform_random_ = on; }

  const std::vector<double>& state() const { return state_; }

 private:
  envs::Env& env_;
  const nets::Actor& actor_;
  AblationSwitches sw_;
  Rng rng_;
  std::vector<double> state_;
  std::size_t episode_step_ = 0;
  bool uniform_random_ = false;
};

// Deterministic receding-horizon evaluation: predict N actions as
// tanh(mean), execute k, replan from the observed state; ends at
// terminal/truncation. k == N is full open-loop execution. Throws unless
// 1 <= k <= N.
envs::Episode receding_horizon_rollout(envs::Env& env,
                                       const nets::Actor& actor,
                                       std::size_t k, std::uint64_t seed);

}  // namespace sear::algo
