#include "csf/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace csf {

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.lr > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0 && config_.beta2 >= 0.0 &&
        config_.beta2 < 1.0)) {
    throw std::invalid_argument("adam: betas must be in [0,1)");
  }
  if (!(config_.eps > 0.0)) throw std::invalid_argument("adam: eps must be positive");
  if (config_.weight_decay < 0.0) throw std::invalid_argument("adam: weight decay must be >= 0");
  for (const Tensor& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(p.size()), 0.0);
  }
}

void Adam::step() {
  // Validate every gradient before mutating anything, so a bad batch leaves
  // the parameters exactly as they were.
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const std::vector<double>& g = params_[i].grad();
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!std::isfinite(g[j])) {
        throw std::runtime_error("adam: non-finite gradient in parameter " + std::to_string(i) +
                                 " at element " + std::to_string(j) + "; step aborted");
      }
    }
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    const std::vector<double>& g = p.grad();
    std::vector<double>& m = m_[i];
    std::vector<double>& v = v_[i];
    double* pv = p.data();
    for (std::size_t j = 0; j < g.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      if (config_.weight_decay > 0.0) pv[j] -= config_.lr * config_.weight_decay * pv[j];
      pv[j] -= config_.lr * (m_hat / (std::sqrt(v_hat) + config_.eps));
    }
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace csf
