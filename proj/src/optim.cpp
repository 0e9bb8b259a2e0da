#include "sear/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "sear/kernels.hpp"

namespace sear::optim {

AdamW::AdamW(std::vector<ad::Tensor> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.lr > 0.0)) throw std::invalid_argument("AdamW: lr must be > 0");
  if (!(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0) ||
      !(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0)) {
    throw std::invalid_argument("AdamW: betas must lie in [0, 1)");
  }
  if (!(cfg_.eps > 0.0)) throw std::invalid_argument("AdamW: eps must be > 0");
  if (cfg_.weight_decay < 0.0) {
    throw std::invalid_argument("AdamW: weight_decay must be >= 0");
  }
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const ad::Tensor& p : params_) {
    if (!p.defined()) throw std::invalid_argument("AdamW: undefined parameter");
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    ad::Tensor& p = params_[pi];
    const std::size_t n = p.size();
    const bool has_grad = p.has_grad();
    if (has_grad &&
        !kernels::all_finite(p.grad().data(), n)) {
      throw ad::NonFiniteError("AdamW::step: non-finite gradient");
    }
    std::vector<double>& value = p.raw_value();
    std::vector<double>& m = m_[pi];
    std::vector<double>& v = v_[pi];
    const double* g = has_grad ? p.grad().data() : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g ? g[i] : 0.0;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      value[i] -= cfg_.lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps) +
                             cfg_.weight_decay * value[i]);
    }
    if (!kernels::all_finite(value.data(), n)) {
      throw ad::NonFiniteError("AdamW::step: update produced non-finite parameters");
    }
  }
}

void AdamW::zero_grad() {
  for (ad::Tensor& p : params_) {
    if (p.has_grad()) p.zero_grad();
  }
}

}  // namespace sear::optim
