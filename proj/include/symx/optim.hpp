#pragma once

#include <cstdint>
#include <vector>

#include "symx/tensor.hpp"

namespace symx {

struct AdamConfig {
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed list of parameter tensors.
class Adam {
 public:
  Adam(AdamConfig cfg, const std::vector<Tensor>& params);
  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads);
  std::int64_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace symx
