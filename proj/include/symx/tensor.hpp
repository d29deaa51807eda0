#pragma once

#include <Eigen/Dense>
#include <initializer_list>
#include <vector>

namespace symx {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense 64-bit tensor of rank 0, 1 or 2 with row-major storage. Rank-1 tensors
// view as column vectors through mat().
class Tensor {
 public:
  Tensor() : data_(1) { data_[0] = 0.0; }  // rank-0 zero

  static Tensor scalar(double v);
  static Tensor zeros(const std::vector<int>& shape);
  static Tensor zeros_like(const Tensor& t) { return zeros(t.shape_); }
  static Tensor from_list(std::initializer_list<double> v);            // rank-1
  static Tensor from_matrix(const Eigen::Ref<const Eigen::MatrixXd>& m);
  static Tensor from_vector(const Eigen::Ref<const Eigen::VectorXd>& v);

  int rank() const { return static_cast<int>(shape_.size()); }
  const std::vector<int>& shape() const { return shape_; }
  int numel() const { return static_cast<int>(data_.size()); }
  int rows() const { return shape_.empty() ? 1 : shape_[0]; }
  int cols() const { return shape_.size() == 2 ? shape_[1] : 1; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double operator[](int i) const { return data_[i]; }
  double& operator[](int i) { return data_[i]; }
  double value() const;  // sole entry of a one-element tensor

  Eigen::Map<MatRM> mat() { return {data_.data(), rows(), cols()}; }
  Eigen::Map<const MatRM> mat() const { return {data_.data(), rows(), cols()}; }
  Eigen::Map<Eigen::VectorXd> flat() { return {data_.data(), numel()}; }
  Eigen::Map<const Eigen::VectorXd> flat() const { return {data_.data(), numel()}; }

  Tensor reshaped(const std::vector<int>& shape) const;
  bool all_finite() const { return data_.allFinite(); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  std::vector<int> shape_;  // empty = rank 0
  Eigen::VectorXd data_;    // always numel() entries (1 for rank 0)
};

}  // namespace symx
