#include "symx/tensor.hpp"

#include <numeric>
#include <stdexcept>

namespace symx {

Tensor Tensor::scalar(double v) {
  Tensor t;
  t.data_[0] = v;
  return t;
}

Tensor Tensor::zeros(const std::vector<int>& shape) {
  if (shape.size() > 2) throw std::invalid_argument("tensor rank above 2");
  Tensor t;
  t.shape_ = shape;
  long n = 1;
  for (int s : shape) {
    if (s < 0) throw std::invalid_argument("negative tensor dimension");
    n *= s;
  }
  t.data_ = Eigen::VectorXd::Zero(n);
  return t;
}

Tensor Tensor::from_list(std::initializer_list<double> v) {
  Tensor t = zeros({static_cast<int>(v.size())});
  int i = 0;
  for (double x : v) t.data_[i++] = x;
  return t;
}

Tensor Tensor::from_matrix(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  Tensor t = zeros({static_cast<int>(m.rows()), static_cast<int>(m.cols())});
  t.mat() = m;
  return t;
}

Tensor Tensor::from_vector(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Tensor t = zeros({static_cast<int>(v.size())});
  t.flat() = v;
  return t;
}

double Tensor::value() const {
  if (numel() != 1) throw std::logic_error("value() on a tensor with more than one entry");
  return data_[0];
}

Tensor Tensor::reshaped(const std::vector<int>& shape) const {
  Tensor t = zeros(shape);
  if (t.numel() != numel()) throw std::invalid_argument("reshape changes element count");
  t.data_ = data_;  // row-major order preserved
  return t;
}

}  // namespace symx
