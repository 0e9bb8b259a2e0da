#include "sear/nets.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sear::nets {

namespace {

constexpr double kHeadGain = 0.01;  // small-gain init for output heads
constexpr double kPosStd = 0.02;
constexpr double kMaskValue = -1e30;  // finite stand-in for -inf; underflows
                                      // to exactly zero attention weight

ad::Tensor init_weight(Rng& rng, std::size_t fan_in, std::size_t fan_out,
                       double gain) {
  std::vector<double> w(fan_in * fan_out);
  const double s = gain / std::sqrt(static_cast<double>(fan_in));
  for (double& x : w) x = s * rng.normal();
  return ad::Tensor::from_data({fan_in, fan_out}, std::move(w), true);
}

ad::Tensor init_bias(std::size_t n) {
  return ad::Tensor::zeros({n}, true);
}

ad::Tensor deep_copy(const ad::Tensor& t) {
  return ad::Tensor::from_data(t.shape(), t.value(), t.requires_grad());
}

void check_states(const ad::Tensor& states, std::size_t state_dim,
                  const char* who) {
  if (!states.defined() || states.rank() != 2 ||
      states.shape()[1] != state_dim) {
    throw ad::ShapeError(std::string(who) +
                         ": states must be [batch, state_dim=" +
                         std::to_string(state_dim) + "]");
  }
}

void check_actions(const ad::Tensor& actions, std::size_t batch,
                   std::size_t chunk, std::size_t action_dim,
                   const char* who) {
  const ad::Shape want{batch, chunk, action_dim};
  if (!actions.defined() || actions.shape() != want) {
    throw ad::ShapeError(std::string(who) + ": actions must be " +
                         ad::shape_str(want));
  }
}

}  // namespace

// --- Actor -------------------------------------------------------------------

Actor::Actor(ActorConfig cfg, Rng& rng) : cfg_(cfg) {
  if (cfg_.state_dim == 0 || cfg_.action_dim == 0 || cfg_.chunk == 0 ||
      cfg_.width == 0) {
    throw std::invalid_argument("Actor: dimensions must be positive");
  }
  if (!(cfg_.log_std_min <= cfg_.log_std_max)) {
    throw std::invalid_argument("Actor: log_std_min must be <= log_std_max");
  }
  w_in_ = init_weight(rng, cfg_.state_dim, cfg_.width, 1.0);
  b_in_ = init_bias(cfg_.width);
  for (std::size_t i = 0; i + 1 < cfg_.blocks; ++i) {
    hidden_.emplace_back(init_weight(rng, cfg_.width, cfg_.width, 1.0),
                         init_bias(cfg_.width));
  }
  const std::size_t out = cfg_.chunk * cfg_.action_dim;
  w_mean_ = init_weight(rng, cfg_.width, out, kHeadGain);
  b_mean_ = init_bias(out);
  w_log_std_ = init_weight(rng, cfg_.width, out, kHeadGain);
  b_log_std_ = init_bias(out);
}

ChunkDist Actor::forward(const ad::Tensor& states) const {
  check_states(states, cfg_.state_dim, "Actor::forward");
  const std::size_t batch = states.shape()[0];

  ad::Tensor h = ad::tanh(ad::add(ad::matmul(states, w_in_), b_in_));
  for (const auto& [w, b] : hidden_) {
    h = ad::tanh(ad::add(ad::matmul(h, w), b));
  }
  ad::Tensor mean = ad::add(ad::matmul(h, w_mean_), b_mean_);
  ad::Tensor log_std = ad::clip(ad::add(ad::matmul(h, w_log_std_), b_log_std_),
                                cfg_.log_std_min, cfg_.log_std_max);
  ChunkDist dist;
  dist.means = ad::reshape(mean, {batch, cfg_.chunk, cfg_.action_dim});
  dist.log_stds = ad::reshape(log_std, {batch, cfg_.chunk, cfg_.action_dim});
  dist.batch = batch;
  dist.chunk = cfg_.chunk;
  dist.action_dim = cfg_.action_dim;
  return dist;
}

std::vector<ad::Tensor> Actor::params() const {
  std::vector<ad::Tensor> out;
  for (auto& nt : named_params("actor")) out.push_back(nt.tensor);
  return out;
}

std::vector<ckpt::NamedTensor> Actor::named_params(
    const std::string& prefix) const {
  std::vector<ckpt::NamedTensor> out;
  out.push_back({prefix + ".w_in", w_in_});
  out.push_back({prefix + ".b_in", b_in_});
  for (std::size_t i = 0; i < hidden_.size(); ++i) {
    out.push_back({prefix + ".h" + std::to_string(i) + ".w", hidden_[i].first});
    out.push_back(
        {prefix + ".h" + std::to_string(i) + ".b", hidden_[i].second});
  }
  out.push_back({prefix + ".w_mean", w_mean_});
  out.push_back({prefix + ".b_mean", b_mean_});
  out.push_back({prefix + ".w_log_std", w_log_std_});
  out.push_back({prefix + ".b_log_std", b_log_std_});
  return out;
}

// --- sampling -----------------------------------------------------------------

SampledChunk sample_chunk(const ChunkDist& dist, const ad::Tensor& noise) {
  if (!dist.means.defined() || !dist.log_stds.defined()) {
    throw ad::ShapeError("sample_chunk: undefined distribution");
  }
  if (!noise.defined() || noise.shape() != dist.means.shape()) {
    throw ad::ShapeError("sample_chunk: noise shape must match means " +
                         ad::shape_str(dist.means.shape()));
  }

  const ad::Tensor std_dev = ad::exp(dist.log_stds);
  const ad::Tensor u = ad::add(dist.means, ad::mul(std_dev, noise));
  const ad::Tensor actions = ad::tanh(u);

  // Per-dimension log-density, written in terms of the noise draw:
  //   log N(u | mean, std) = -noise^2/2 - log_std - log(2*pi)/2
  // minus the tanh change of variables
  //   log(1 - tanh(u)^2)   = 2*(log 2 - u - softplus(-2u)).
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const ad::Tensor gauss =
      ad::add(ad::affine(ad::mul(noise, noise), -0.5, -half_log_2pi),
              ad::neg(dist.log_stds));
  const ad::Tensor tanh_corr =
      ad::affine(ad::add(u, ad::softplus(ad::affine(u, -2.0, 0.0))), 2.0,
                 -2.0 * std::log(2.0));
  const ad::Tensor log_prob_dims = ad::add(gauss, tanh_corr);

  SampledChunk out;
  out.actions = actions;
  out.log_probs = ad::sum_last(log_prob_dims);  // [B, N]
  return out;
}

ad::Tensor make_noise(Rng& rng, std::size_t batch, std::size_t chunk,
                      std::size_t action_dim) {
  std::vector<double> z(batch * chunk * action_dim);
  for (double& x : z) x = rng.normal();
  return ad::Tensor::from_data({batch, chunk, action_dim}, std::move(z),
                               false);
}

// --- TransformerCritic ---------------------------------------------------------

TransformerCritic::TransformerCritic(TransformerCriticConfig cfg, Rng& rng)
    : cfg_(cfg) {
  if (cfg_.state_dim == 0 || cfg_.action_dim == 0 || cfg_.chunk == 0 ||
      cfg_.width == 0 || cfg_.blocks == 0 || cfg_.heads == 0) {
    throw std::invalid_argument(
        "TransformerCritic: dimensions must be positive");
  }
  if (cfg_.width % cfg_.heads != 0) {
    throw std::invalid_argument(
        "TransformerCritic: width must be divisible by heads");
  }
  const std::size_t W = cfg_.width;
  const std::size_t T = cfg_.chunk + 1;

  w_state_ = init_weight(rng, cfg_.state_dim, W, 1.0);
  b_state_ = init_bias(W);
  w_action_ = init_weight(rng, cfg_.action_dim, W, 1.0);
  b_action_ = init_bias(W);
  {
    std::vector<double> p(T * W);
    for (double& x : p) x = kPosStd * rng.normal();
    pos_ = ad::Tensor::from_data({T, W}, std::move(p), true);
  }
  blocks_.resize(cfg_.blocks);
  for (Block& blk : blocks_) {
    blk.wq = init_weight(rng, W, W, 1.0);
    blk.bq = init_bias(W);
    blk.wk = init_weight(rng, W, W, 1.0);
    blk.bk = init_bias(W);
    blk.wv = init_weight(rng, W, W, 1.0);
    blk.bv = init_bias(W);
    blk.wo = init_weight(rng, W, W, kHeadGain);  // residual branch: small gain
    blk.bo = init_bias(W);
    blk.w1 = init_weight(rng, W, 4 * W, 1.0);
    blk.b1 = init_bias(4 * W);
    blk.w2 = init_weight(rng, 4 * W, W, kHeadGain);
    blk.b2 = init_bias(W);
  }
  head_w_ = init_weight(rng, W, 1, kHeadGain);
  head_b_ = init_bias(1);

  // mask[i*T + j] == 1 forbids token i from attending to token j (j > i):
  // strictly lower-triangular-plus-diagonal visibility over
  // [state, a_0, ..., a_{N-1}].
  causal_mask_.assign(T * T, 0);
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t j = i + 1; j < T; ++j) causal_mask_[i * T + j] = 1;
  }
}

ad::Tensor TransformerCritic::forward(const ad::Tensor& states,
                                      const ad::Tensor& actions) const {
  check_states(states, cfg_.state_dim, "TransformerCritic::forward");
  const std::size_t B = states.shape()[0];
  check_actions(actions, B, cfg_.chunk, cfg_.action_dim,
                "TransformerCritic::forward");
  const std::size_t W = cfg_.width;
  const std::size_t H = cfg_.heads;
  const std::size_t Dh = W / H;
  const std::size_t N = cfg_.chunk;
  const std::size_t T = N + 1;

  ad::Tensor state_tok = ad::reshape(
      ad::add(ad::matmul(states, w_state_), b_state_), {B, 1, W});
  ad::Tensor act_tok = ad::add(ad::matmul(actions, w_action_), b_action_);
  ad::Tensor x = ad::concat_axis({state_tok, act_tok}, 1);  // [B, T, W]
  x = ad::add(x, pos_);

  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(Dh));
  for (const Block& blk : blocks_) {
    ad::Tensor xn = ad::layer_norm_last(x);
    ad::Tensor q = ad::add(ad::matmul(xn, blk.wq), blk.bq);
    ad::Tensor k = ad::add(ad::matmul(xn, blk.wk), blk.bk);
    ad::Tensor v = ad::add(ad::matmul(xn, blk.wv), blk.bv);
    ad::Tensor qh = ad::permute(ad::reshape(q, {B, T, H, Dh}), {0, 2, 1, 3});
    ad::Tensor kt = ad::permute(ad::reshape(k, {B, T, H, Dh}), {0, 2, 3, 1});
    ad::Tensor vh = ad::permute(ad::reshape(v, {B, T, H, Dh}), {0, 2, 1, 3});
    ad::Tensor scores =
        ad::affine(ad::matmul(qh, kt), inv_sqrt_dh, 0.0);  // [B, H, T, T]
    scores = ad::masked_fill_suffix(scores, causal_mask_, kMaskValue);
    ad::Tensor attn = ad::softmax_last(scores);
    ad::Tensor ctx = ad::matmul(attn, vh);  // [B, H, T, Dh]
    ctx = ad::reshape(ad::permute(ctx, {0, 2, 1, 3}), {B, T, W});
    x = ad::add(x, ad::add(ad::matmul(ctx, blk.wo), blk.bo));
    ad::Tensor xn2 = ad::layer_norm_last(x);
    ad::Tensor ff = ad::add(
        ad::matmul(ad::tanh(ad::add(ad::matmul(xn2, blk.w1), blk.b1)),
                   blk.w2),
        blk.b2);
    x = ad::add(x, ff);
  }
  x = ad::layer_norm_last(x);
  ad::Tensor q_tokens = ad::slice_axis(x, 1, 1, N);  // [B, N, W]
  ad::Tensor q = ad::add(ad::matmul(q_tokens, head_w_), head_b_);
  return ad::reshape(q, {B, N});
}

std::vector<ad::Tensor> TransformerCritic::params() const {
  std::vector<ad::Tensor> out;
  for (auto& nt : named_params("critic")) out.push_back(nt.tensor);
  return out;
}

std::vector<ckpt::NamedTensor> TransformerCritic::named_params(
    const std::string& prefix) const {
  std::vector<ckpt::NamedTensor> out;
  out.push_back({prefix + ".w_state", w_state_});
  out.push_back({prefix + ".b_state", b_state_});
  out.push_back({prefix + ".w_action", w_action_});
  out.push_back({prefix + ".b_action", b_action_});
  out.push_back({prefix + ".pos", pos_});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string bp = prefix + ".block" + std::to_string(i);
    const Block& blk = blocks_[i];
    out.push_back({bp + ".wq", blk.wq});
    out.push_back({bp + ".bq", blk.bq});
    out.push_back({bp + ".wk", blk.wk});
    out.push_back({bp + ".bk", blk.bk});
    out.push_back({bp + ".wv", blk.wv});
    out.push_back({bp + ".bv", blk.bv});
    out.push_back({bp + ".wo", blk.wo});
    out.push_back({bp + ".bo", blk.bo});
    out.push_back({bp + ".w1", blk.w1});
    out.push_back({bp + ".b1", blk.b1});
    out.push_back({bp + ".w2", blk.w2});
    out.push_back({bp + ".b2", blk.b2});
  }
  out.push_back({prefix + ".head_w", head_w_});
  out.push_back({prefix + ".head_b", head_b_});
  return out;
}

std::unique_ptr<Critic> TransformerCritic::clone() const {
  auto c = std::unique_ptr<TransformerCritic>(new TransformerCritic());
  c->cfg_ = cfg_;
  c->causal_mask_ = causal_mask_;
  c->w_state_ = deep_copy(w_state_);
  c->b_state_ = deep_copy(b_state_);
  c->w_action_ = deep_copy(w_action_);
  c->b_action_ = deep_copy(b_action_);
  c->pos_ = deep_copy(pos_);
  c->blocks_.resize(blocks_.size());
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Block& s = blocks_[i];
    Block& d = c->blocks_[i];
    d.wq = deep_copy(s.wq);
    d.bq = deep_copy(s.bq);
    d.wk = deep_copy(s.wk);
    d.bk = deep_copy(s.bk);
    d.wv = deep_copy(s.wv);
    d.bv = deep_copy(s.bv);
    d.wo = deep_copy(s.wo);
    d.bo = deep_copy(s.bo);
    d.w1 = deep_copy(s.w1);
    d.b1 = deep_copy(s.b1);
    d.w2 = deep_copy(s.w2);
    d.b2 = deep_copy(s.b2);
  }
  c->head_w_ = deep_copy(head_w_);
  c->head_b_ = deep_copy(head_b_);
  return c;
}

// --- MlpCritic -----------------------------------------------------------------

MlpCritic::MlpCritic(MlpCriticConfig cfg, Rng& rng) : cfg_(cfg) {
  if (cfg_.state_dim == 0 || cfg_.action_dim == 0 || cfg_.chunk == 0 ||
      cfg_.width == 0 || cfg_.blocks == 0) {
    throw std::invalid_argument("MlpCritic: dimensions must be positive");
  }
  const std::size_t in = cfg_.state_dim + cfg_.chunk * cfg_.action_dim;
  w_in_ = init_weight(rng, in, cfg_.width, 1.0);
  b_in_ = init_bias(cfg_.width);
  for (std::size_t i = 0; i + 1 < cfg_.blocks; ++i) {
    hidden_.emplace_back(init_weight(rng, cfg_.width, cfg_.width, 1.0),
                         init_bias(cfg_.width));
  }
  head_w_ = init_weight(rng, cfg_.width, 1, kHeadGain);
  head_b_ = init_bias(1);
}

ad::Tensor MlpCritic::forward(const ad::Tensor& states,
                              const ad::Tensor& actions) const {
  check_states(states, cfg_.state_dim, "MlpCritic::forward");
  const std::size_t B = states.shape()[0];
  check_actions(actions, B, cfg_.chunk, cfg_.action_dim,
                "MlpCritic::forward");
  ad::Tensor flat =
      ad::reshape(actions, {B, cfg_.chunk * cfg_.action_dim});
  ad::Tensor h = ad::concat_axis({states, flat}, 1);
  h = ad::tanh(ad::add(ad::matmul(h, w_in_), b_in_));
  for (const auto& [w, b] : hidden_) {
    h = ad::tanh(ad::add(ad::matmul(h, w), b));
  }
  return ad::add(ad::matmul(h, head_w_), head_b_);  // [B, 1]
}

std::vector<ad::Tensor> MlpCritic::params() const {
  std::vector<ad::Tensor> out;
  for (auto& nt : named_params("critic")) out.push_back(nt.tensor);
  return out;
}

std::vector<ckpt::NamedTensor> MlpCritic::named_params(
    const std::string& prefix) const {
  std::vector<ckpt::NamedTensor> out;
  out.push_back({prefix + ".w_in", w_in_});
  out.push_back({prefix + ".b_in", b_in_});
  for (std::size_t i = 0; i < hidden_.size(); ++i) {
    out.push_back({prefix + ".h" + std::to_string(i) + ".w", hidden_[i].first});
    out.push_back(
        {prefix + ".h" + std::to_string(i) + ".b", hidden_[i].second});
  }
  out.push_back({prefix + ".head_w", head_w_});
  out.push_back({prefix + ".head_b", head_b_});
  return out;
}

std::unique_ptr<Critic> MlpCritic::clone() const {
  auto c = std::unique_ptr<MlpCritic>(new MlpCritic());
  c->cfg_ = cfg_;
  c->w_in_ = deep_copy(w_in_);
  c->b_in_ = deep_copy(b_in_);
  for (const auto& [w, b] : hidden_) {
    c->hidden_.emplace_back(deep_copy(w), deep_copy(b));
  }
  c->head_w_ = deep_copy(head_w_);
  c->head_b_ = deep_copy(head_b_);
  return c;
}

// --- shared helpers -------------------------------------------------------------

void polyak_update(std::vector<ad::Tensor>& target,
                   const std::vector<ad::Tensor>& online, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw std::invalid_argument("polyak_update: tau must be in [0, 1]");
  }
  if (target.size() != online.size()) {
    throw ad::ShapeError("polyak_update: parameter count mismatch");
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i].shape() != online[i].shape()) {
      throw ad::ShapeError("polyak_update: shape mismatch at parameter " +
                           std::to_string(i));
    }
    std::vector<double>& t = target[i].raw_value();
    const std::vector<double>& o = online[i].value();
    for (std::size_t j = 0; j < t.size(); ++j) {
      t[j] = tau * o[j] + (1.0 - tau) * t[j];
    }
  }
}

FreezeGuard::FreezeGuard(std::vector<ad::Tensor> params)
    : params_(std::move(params)) {
  previous_.reserve(params_.size());
  for (ad::Tensor& p : params_) {
    previous_.push_back(p.requires_grad());
    p.set_requires_grad(false);
  }
}

FreezeGuard::~FreezeGuard() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    params_[i].set_requires_grad(previous_[i]);
  }
}

}  // namespace sear::nets
