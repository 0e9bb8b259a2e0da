#include "sear/algo.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace sear::algo {

namespace {

void check_gamma(double gamma, const char* where) {
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw std::invalid_argument(std::string(where) +
                                ": gamma must lie in [0, 1), got " +
                                std::to_string(gamma));
  }
}

// gamma^i for i = 0..n-1.
std::vector<double> discount_powers(double gamma, std::size_t n) {
  std::vector<double> d(n);
  double g = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = g;
    g *= gamma;
  }
  return d;
}

// [B, H] -> [B]: the horizon-N column (H == 1 is already horizon N).
ad::Tensor last_horizon_column(const ad::Tensor& q) {
  const ad::Shape& s = q.shape();
  if (s.size() != 2) {
    throw ad::ShapeError("last_horizon_column: expected [B, H], got " +
                         ad::shape_str(s));
  }
  if (s[1] == 1) return ad::reshape(q, {s[0]});
  return ad::reshape(ad::slice_axis(q, 1, s[1] - 1, 1), {s[0]});
}

}  // namespace

double Temperature::alpha() const { return std::exp(log_alpha.item()); }

Temperature make_temperature(double alpha_init, double target_entropy) {
  if (!(alpha_init > 0.0) || !std::isfinite(alpha_init)) {
    throw std::invalid_argument("make_temperature: alpha_init must be > 0");
  }
  Temperature t;
  t.log_alpha = ad::Tensor::scalar(std::log(alpha_init), /*requires_grad=*/true);
  t.target_entropy = target_entropy;
  return t;
}

void validate(const AblationSwitches& sw) {
  if (sw.chunk == 0) {
    throw std::invalid_argument("ablation: chunk must be >= 1");
  }
  if (sw.eval_receding_horizon < 1 || sw.eval_receding_horizon > sw.chunk) {
    throw std::invalid_argument(
        "ablation: eval_receding_horizon must satisfy 1 <= k <= chunk (k=" +
        std::to_string(sw.eval_receding_horizon) + ", chunk=" +
        std::to_string(sw.chunk) + ")");
  }
}

std::vector<ad::Tensor> TwinCritics::params() const {
  std::vector<ad::Tensor> out = q1->params();
  std::vector<ad::Tensor> p2 = q2->params();
  out.insert(out.end(), p2.begin(), p2.end());
  return out;
}

TwinCritics TwinCritics::clone_as_targets() const {
  TwinCritics t;
  t.q1 = q1->clone();
  t.q2 = q2->clone();
  for (ad::Tensor& p : t.params()) p.set_requires_grad(false);
  return t;
}

TargetBatch compute_targets(const replay::ChunkBatch& batch,
                            const TwinCritics& target_critics,
                            const nets::Actor& actor, double alpha,
                            double gamma, Rng& rng) {
  check_gamma(gamma, "compute_targets");
  if (!std::isfinite(alpha) || alpha < 0.0) {
    throw std::invalid_argument("compute_targets: alpha must be finite, >= 0");
  }
  const std::size_t B = batch.batch, N = batch.chunk, S = batch.state_dim;
  const std::size_t A = batch.action_dim;
  if (B == 0 || N == 0) {
    throw std::invalid_argument("compute_targets: empty batch");
  }
  if (actor.config().chunk != N || target_critics.q1->chunk() != N ||
      target_critics.q2->chunk() != N) {
    throw std::invalid_argument(
        "compute_targets: actor/critic chunk size does not match the batch");
  }

  // One bootstrap row per (batch row, horizon): row b*N + c holds
  // s_{t+c+1}, the bootstrap state of horizon c+1. Invalid rows carry zero
  // states; their outputs are discarded below.
  ad::NoGradGuard no_grad;
  const std::size_t R = B * N;
  ad::Tensor boot_states = ad::Tensor::from_data({R, S}, batch.next_states);
  nets::ChunkDist dist = actor.forward(boot_states);
  ad::Tensor noise = nets::make_noise(rng, R, N, A);
  nets::SampledChunk sampled = nets::sample_chunk(dist, noise);
  const ad::Tensor q1_t = target_critics.q1->forward(boot_states, sampled.actions);
  const ad::Tensor q2_t = target_critics.q2->forward(boot_states, sampled.actions);
  const std::vector<double>& q1 = q1_t.value();
  const std::vector<double>& q2 = q2_t.value();
  const std::size_t h1 = target_critics.q1->horizons();
  const std::size_t h2 = target_critics.q2->horizons();
  const std::vector<double>& lp = sampled.log_probs.value();  // [R, N]

  const std::vector<double> disc = discount_powers(gamma, N);
  std::vector<double> v(R);  // entropy-corrected bootstrap value per row
  for (std::size_t r = 0; r < R; ++r) {
    double ent = 0.0;
    for (std::size_t i = 0; i < N; ++i) ent += disc[i] * lp[r * N + i];
    const double qmin =
        std::min(q1[r * h1 + (h1 - 1)], q2[r * h2 + (h2 - 1)]);
    v[r] = qmin - alpha * ent;
  }

  TargetBatch out;
  out.batch = B;
  out.chunk = N;
  out.valid = batch.valid;
  out.g.assign(B * N, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    double ret = 0.0;   // sum_{i<=c} gamma^i r_i while scanning c
    double gpow = 1.0;  // gamma^c
    for (std::size_t c = 0; c < N; ++c) {
      const std::size_t idx = b * N + c;
      if (!batch.valid[idx]) break;  // valid is prefix-closed
      ret += gpow * batch.rewards[idx];
      gpow *= gamma;  // now gamma^{c+1}
      const double boot = batch.terminal_within[idx] ? 0.0 : v[idx];
      out.g[idx] = ret + gpow * boot;
      if (!std::isfinite(out.g[idx])) {
        throw ad::NonFiniteError("compute_targets: non-finite target");
      }
    }
  }
  return out;
}

ad::Tensor critic_loss(const ad::Tensor& predictions,
                       const TargetBatch& targets, bool multi_horizon) {
  const ad::Shape& shp = predictions.shape();
  if (shp.size() != 2) {
    throw ad::ShapeError("critic_loss: predictions must be [B, H], got " +
                         ad::shape_str(shp));
  }
  const std::size_t B = shp[0], H = shp[1], N = targets.chunk;
  if (B != targets.batch) {
    throw ad::ShapeError("critic_loss: prediction/target batch mismatch");
  }
  if (H != N && H != 1) {
    throw ad::ShapeError(
        "critic_loss: prediction horizons must equal the chunk size or 1");
  }

  // Build the {0,1} mask and the masked target tensor. A masked-out term
  // contributes zero to the loss and its gradient is an exact zero (the
  // residual is multiplied by 0 before squaring).
  std::vector<double> mask(B * H, 0.0), g(B * H, 0.0);
  std::size_t count = 0;
  const bool last_only = (H == 1) || !multi_horizon;
  for (std::size_t b = 0; b < B; ++b) {
    if (last_only) {
      const std::size_t src = b * N + (N - 1);
      if (targets.valid[src]) {
        const std::size_t dst = b * H + (H - 1);
        mask[dst] = 1.0;
        g[dst] = targets.g[src];
        ++count;
      }
    } else {
      for (std::size_t c = 0; c < N; ++c) {
        if (targets.valid[b * N + c]) {
          mask[b * N + c] = 1.0;
          g[b * N + c] = targets.g[b * N + c];
          ++count;
        }
      }
    }
  }
  if (count == 0) {
    throw std::invalid_argument(
        "critic_loss: batch contains no valid (row, horizon) term");
  }
  ad::Tensor m = ad::Tensor::from_data({B, H}, std::move(mask));
  ad::Tensor gt = ad::Tensor::from_data({B, H}, std::move(g));
  ad::Tensor d = ad::mul(ad::sub(predictions, gt), m);
  return ad::affine(ad::sum_all(ad::mul(d, d)),
                    0.5 / static_cast<double>(count), 0.0);
}

ActorLossResult actor_loss(const ad::Tensor& states, const nets::Actor& actor,
                           const TwinCritics& online_critics, double alpha,
                           double gamma, Rng& rng) {
  if (states.rank() != 2) {
    throw ad::ShapeError("actor_loss: states must be [B, state_dim]");
  }
  ad::Tensor noise = nets::make_noise(rng, states.shape()[0],
                                      actor.config().chunk,
                                      actor.config().action_dim);
  return actor_loss(states, actor, online_critics, alpha, gamma, noise);
}

ActorLossResult actor_loss(const ad::Tensor& states, const nets::Actor& actor,
                           const TwinCritics& online_critics, double alpha,
                           double gamma, const ad::Tensor& noise) {
  check_gamma(gamma, "actor_loss");
  const ad::Shape& shp = states.shape();
  if (shp.size() != 2) {
    throw ad::ShapeError("actor_loss: states must be [B, state_dim]");
  }
  const std::size_t B = shp[0];
  const std::size_t N = actor.config().chunk;
  if (online_critics.q1->chunk() != N || online_critics.q2->chunk() != N) {
    throw std::invalid_argument("actor_loss: critic chunk != actor chunk");
  }

  // No gradient may flow into the critics here; only the actor learns.
  nets::FreezeGuard freeze(online_critics.params());

  nets::ChunkDist dist = actor.forward(states);
  nets::SampledChunk sampled = nets::sample_chunk(dist, noise);

  ad::Tensor qmin = ad::minimum(
      last_horizon_column(online_critics.q1->forward(states, sampled.actions)),
      last_horizon_column(
          online_critics.q2->forward(states, sampled.actions)));

  ad::Tensor discount = ad::Tensor::from_data({N}, discount_powers(gamma, N));
  ad::Tensor ent = ad::sum_last(ad::mul(sampled.log_probs, discount));  // [B]

  ActorLossResult out;
  out.loss = ad::mean_all(ad::sub(ad::affine(ent, alpha, 0.0), qmin));
  out.log_probs = sampled.log_probs;
  const std::vector<double>& lp = sampled.log_probs.value();
  double acc = 0.0;
  for (double x : lp) acc += x;
  out.mean_sum_log_prob = acc / static_cast<double>(B);
  return out;
}

ad::Tensor temperature_loss(const ad::Tensor& per_action_log_probs,
                            const Temperature& temp) {
  const ad::Shape& shp = per_action_log_probs.shape();
  if (shp.size() != 2) {
    throw ad::ShapeError("temperature_loss: log-probs must be [B, N]");
  }
  const std::size_t B = shp[0], N = shp[1];
  if (B == 0 || N == 0) {
    throw std::invalid_argument("temperature_loss: empty log-prob batch");
  }
  const std::vector<double>& lp = per_action_log_probs.value();
  double mean_sum = 0.0;
  for (double x : lp) mean_sum += x;
  mean_sum /= static_cast<double>(B);

  return ad::mul(ad::exp(temp.log_alpha),
                 ad::Tensor::scalar(-(mean_sum + temp.target_entropy)));
}

double temperature_update(const ad::Tensor& per_action_log_probs,
                          Temperature& temp, optim::AdamW& opt) {
  opt.zero_grad();
  ad::Tensor loss = temperature_loss(per_action_log_probs, temp);
  ad::backward(loss);
  opt.step();
  return temp.alpha();
}

Collector::Collector(envs::Env& env, const nets::Actor& actor,
                     AblationSwitches sw, std::uint64_t seed)
    : env_(env), actor_(actor), sw_(sw), rng_(seed) {
  validate(sw_);
  if (actor_.config().chunk != sw_.chunk) {
    throw std::invalid_argument("collector: actor chunk != switches chunk");
  }
  if (actor_.config().state_dim != env_.spec().state_dim ||
      actor_.config().action_dim != env_.spec().action_dim) {
    throw std::invalid_argument("collector: actor dims do not match env");
  }
  state_ = env_.reset(rng_.next_u64());
}

Collector::ChunkResult Collector::collect_chunk() {
  const std::size_t N = sw_.chunk;
  const std::size_t A = env_.spec().action_dim;

  ChunkResult out;
  out.replan_step = episode_step_;

  std::vector<double> chunk_actions;
  {
    ad::NoGradGuard no_grad;
    if (uniform_random_) {
      chunk_actions.resize(N * A);
      for (double& a : chunk_actions) a = rng_.uniform(-1.0, 1.0);
    } else {
      ad::Tensor st = ad::Tensor::from_data({1, state_.size()}, state_);
      nets::ChunkDist dist = actor_.forward(st);
      ad::Tensor noise = nets::make_noise(rng_, 1, N, A);
      nets::SampledChunk sampled = nets::sample_chunk(dist, noise);
      chunk_actions = sampled.actions.value();
    }
  }

  out.prefix_len = sw_.random_replanning ? rng_.uniform_int(1, N) : N;

  for (std::size_t i = 0; i < out.prefix_len; ++i) {
    std::vector<double> a(chunk_actions.begin() + i * A,
                          chunk_actions.begin() + (i + 1) * A);
    envs::StepResult sr = env_.step(a);
    out.transitions.push_back(envs::Transition{
        state_, std::move(a), sr.reward, sr.next_state, sr.terminal,
        sr.truncated});
    state_ = sr.next_state;
    ++episode_step_;
    if (sr.terminal || sr.truncated) {
      out.episode_ended = true;
      state_ = env_.reset(rng_.next_u64());
      episode_step_ = 0;
      break;
    }
  }
  return out;
}

envs::Episode receding_horizon_rollout(envs::Env& env,
                                       const nets::Actor& actor,
                                       std::size_t k, std::uint64_t seed) {
  const std::size_t N = actor.config().chunk;
  const std::size_t A = actor.config().action_dim;
  if (k < 1 || k > N) {
    throw std::invalid_argument(
        "receding_horizon_rollout: need 1 <= k <= chunk (k=" +
        std::to_string(k) + ", chunk=" + std::to_string(N) + ")");
  }
  if (actor.config().state_dim != env.spec().state_dim ||
      A != env.spec().action_dim) {
    throw std::invalid_argument(
        "receding_horizon_rollout: actor dims do not match env");
  }

  ad::NoGradGuard no_grad;
  envs::Episode ep;
  std::vector<double> state = env.reset(seed);
  bool done = false;
  while (!done) {
    ad::Tensor st = ad::Tensor::from_data({1, state.size()}, state);
    // Deterministic action chunk: the tanh-squashed distribution mode.
    const ad::Tensor mode = ad::tanh(actor.forward(st).means);
    const std::vector<double>& acts = mode.value();
    for (std::size_t i = 0; i < k && !done; ++i) {
      std::vector<double> a(acts.begin() + i * A, acts.begin() + (i + 1) * A);
      envs::StepResult sr = env.step(a);
      ep.push_back(envs::Transition{state, std::move(a), sr.reward,
                                    sr.next_state, sr.terminal, sr.truncated});
      state = sr.next_state;
      done = sr.terminal || sr.truncated;
    }
  }
  return ep;
}

}  // namespace sear::algo
