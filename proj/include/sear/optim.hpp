#pragma once

#include <cstddef>
#include <vector>

#include "sear/tensor.hpp"

namespace sear::optim {

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// AdamW with decoupled weight decay: the decay term scales the parameter
// directly and never enters the moment estimates, so weight_decay == 0
// reduces exactly to Adam.
class AdamW {
 public:
  AdamW(std::vector<ad::Tensor> params, AdamWConfig cfg);

  // Applies one update from the gradients currently stored on the
  // parameters. Parameters whose gradient was never populated are treated
  // as having zero gradient. Throws ad::NonFiniteError on non-finite
  // gradients or if an update would produce non-finite parameters.
  void step();

  void zero_grad();

  std::size_t steps_taken() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }
  const std::vector<ad::Tensor>& params() const { return params_; }

  // Optimizer state, exposed for checkpointing. moments1/moments2 are laid
  // out per-parameter in construction order.
  std::vector<std::vector<double>>& moments1() { return m_; }
  std::vector<std::vector<double>>& moments2() { return v_; }
  void set_steps_taken(std::size_t t) { t_ = t; }

 private:
  std::vector<ad::Tensor> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::size_t t_ = 0;
};

}  // namespace sear::optim
