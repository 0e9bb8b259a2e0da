#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "sear/checkpoint.hpp"
#include "sear/rng.hpp"
#include "sear/tensor.hpp"

namespace sear::nets {

// Per-action Gaussian parameters for a whole chunk, predicted open-loop from
// a single state. Shapes: [B, N, dimA]; log_stds are already clamped.
struct ChunkDist {
  ad::Tensor means;
  ad::Tensor log_stds;
  std::size_t batch = 0, chunk = 0, action_dim = 0;
};

// actions = tanh(mean + std * noise) in (-1, 1)^dimA; log_probs[b][i] is the
// log-density of action i of the chunk, tanh-corrected and summed over
// action dimensions (per-action values stay separate so each can be
// discounted individually).
struct SampledChunk {
  ad::Tensor actions;    // [B, N, dimA]
  ad::Tensor log_probs;  // [B, N]
};

struct ActorConfig {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::size_t chunk = 1;  // N
  std::size_t width = 512;
  std::size_t blocks = 1;
  double log_std_min = -5.0;
  double log_std_max = 2.0;
};

// MLP policy: tanh trunk, two linear heads (means, log_stds) over all N
// actions at once. Head weights use small-gain init so the initial policy is
// near mean 0 / log_std 0.
class Actor {
 public:
  Actor(ActorConfig cfg, Rng& rng);

  // states: [B, state_dim] -> ChunkDist over [B, N, action_dim].
  ChunkDist forward(const ad::Tensor& states) const;

  const ActorConfig& config() const { return cfg_; }
  std::vector<ad::Tensor> params() const;
  std::vector<ckpt::NamedTensor> named_params(const std::string& prefix) const;

 private:
  ActorConfig cfg_;
  ad::Tensor w_in_, b_in_;
  std::vector<std::pair<ad::Tensor, ad::Tensor>> hidden_;
  ad::Tensor w_mean_, b_mean_, w_log_std_, b_log_std_;
};

// Draws the reparameterized actions and per-action log-probs for one chunk.
// noise must be [B, N, dimA] standard normal draws (no grad).
SampledChunk sample_chunk(const ChunkDist& dist, const ad::Tensor& noise);

// Convenience: [B, N, dimA] i.i.d. standard normal draws as a no-grad tensor.
ad::Tensor make_noise(Rng& rng, std::size_t batch, std::size_t chunk,
                      std::size_t action_dim);

// Critic interface shared by the causal transformer and the MLP ablation.
// forward returns [B, H] with H == horizons(): the transformer emits
// Q^(1)..Q^(N) (H = N), the MLP a single Q^(N) (H = 1).
class Critic {
 public:
  virtual ~Critic() = default;
  virtual ad::Tensor forward(const ad::Tensor& states,
                             const ad::Tensor& actions) const = 0;
  virtual std::size_t horizons() const = 0;
  virtual std::size_t chunk() const = 0;
  virtual std::vector<ad::Tensor> params() const = 0;
  virtual std::vector<ckpt::NamedTensor> named_params(
      const std::string& prefix) const = 0;
  // Deep copy with identical values (used to spawn target networks).
  virtual std::unique_ptr<Critic> clone() const = 0;
};

struct TransformerCriticConfig {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::size_t chunk = 1;  // N
  std::size_t width = 512;
  std::size_t blocks = 2;
  std::size_t heads = 16;
};

// Causal transformer over the token sequence [state, a_0, ..., a_{N-1}]
// (learned positional embeddings, pre-norm blocks). The scalar head at the
// token of action a_{n-1} emits Q^(n); the strictly-causal attention mask
// makes Q^(n) a function of the state and the first n actions only, exactly
// (masked positions receive zero attention weight bit-for-bit).
class TransformerCritic final : public Critic {
 public:
  TransformerCritic(TransformerCriticConfig cfg, Rng& rng);

  ad::Tensor forward(const ad::Tensor& states,
                     const ad::Tensor& actions) const override;
  std::size_t horizons() const override { return cfg_.chunk; }
  std::size_t chunk() const override { return cfg_.chunk; }
  std::vector<ad::Tensor> params() const override;
  std::vector<ckpt::NamedTensor> named_params(
      const std::string& prefix) const override;
  std::unique_ptr<Critic> clone() const override;

  const TransformerCriticConfig& config() const { return cfg_; }

 private:
  struct Block {
    ad::Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // attention
    ad::Tensor w1, b1, w2, b2;                  // feed-forward
  };
  TransformerCritic() = default;

  TransformerCriticConfig cfg_;
  ad::Tensor w_state_, b_state_;    // state token embedding
  ad::Tensor w_action_, b_action_;  // per-action token embedding
  ad::Tensor pos_;                  // [N+1, width] learned positions
  std::vector<Block> blocks_;
  ad::Tensor head_w_, head_b_;      // per-position scalar head
  std::vector<unsigned char> causal_mask_;  // [(N+1)*(N+1)], 1 = masked
};

struct MlpCriticConfig {
  std::size_t state_dim = 0;
  std::size_t action_dim = 0;
  std::size_t chunk = 1;  // N
  std::size_t width = 512;
  std::size_t blocks = 2;
};

// Ablation critic: flattened (state || chunk) through a tanh MLP to one
// scalar, interpreted as Q^(N).
class MlpCritic final : public Critic {
 public:
  MlpCritic(MlpCriticConfig cfg, Rng& rng);

  ad::Tensor forward(const ad::Tensor& states,
                     const ad::Tensor& actions) const override;
  std::size_t horizons() const override { return 1; }
  std::size_t chunk() const override { return cfg_.chunk; }
  std::vector<ad::Tensor> params() const override;
  std::vector<ckpt::NamedTensor> named_params(
      const std::string& prefix) const override;
  std::unique_ptr<Critic> clone() const override;

  const MlpCriticConfig& config() const { return cfg_; }

 private:
  MlpCritic() = default;

  MlpCriticConfig cfg_;
  ad::Tensor w_in_, b_in_;
  std::vector<std::pair<ad::Tensor, ad::Tensor>> hidden_;
  ad::Tensor head_w_, head_b_;
};

// target[i] = tau * online[i] + (1 - tau) * target[i], elementwise, in
// place. Throws on size/shape mismatch or tau outside [0, 1].
void polyak_update(std::vector<ad::Tensor>& target,
                   const std::vector<ad::Tensor>& online, double tau);

// Marks a parameter set requires_grad=false for the guard's lifetime and
// restores the previous flags afterwards; used to keep actor-loss gradients
// out of critic parameters.
class FreezeGuard {
 public:
  explicit FreezeGuard(std::vector<ad::Tensor> params);
  ~FreezeGuard();
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<ad::Tensor> params_;
  std::vector<bool> previous_;
};

}  // namespace sear::nets
