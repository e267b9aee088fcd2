#pragma once

#include <vector>

#include "csf/common.hpp"
#include "csf/tensor.hpp"

namespace csf {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled; 0 disables
};

// Adam with bias correction and decoupled weight decay. Moments follow the
// parameter order given at construction; that order is the checkpoint
// contract. A non-finite gradient aborts the step before any parameter is
// touched and raises.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  void step();
  void zero_grad();

  Index step_count() const { return step_; }
  const AdamConfig& config() const { return config_; }

  // Checkpoint plumbing: moments and step counter are restored verbatim.
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void set_step_count(Index step) { step_ = step; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  Index step_ = 0;
};

}  // namespace csf
