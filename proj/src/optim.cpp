#include "symx/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace symx {

Adam::Adam(AdamConfig cfg, const std::vector<Tensor>& params) : cfg_(cfg) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor& p : params) {
    m_.push_back(Tensor::zeros_like(p));
    v_.push_back(Tensor::zeros_like(p));
  }
}

void Adam::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw std::invalid_argument("adam: parameter list changed size");
  ++t_;
  double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i].same_shape(grads[i])) throw std::invalid_argument("adam: gradient shape mismatch");
    auto p = params[i].flat();
    auto gv = grads[i].flat();
    auto m = m_[i].flat();
    auto v = v_[i].flat();
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * gv;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * gv.cwiseProduct(gv);
    p.array() -= cfg_.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.eps);
  }
}

}  // namespace symx
