#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace tdc {

// Dense row-major array of 64-bit floats. The single value carrier for
// images, depth maps, feature stacks and probability/cost volumes.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<double> values);

  static Tensor full(std::vector<int> shape, double value);
  static Tensor scalar(double value);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_[axis]; }
  int numel() const { return static_cast<int>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](int i) { return data_[i]; }
  double operator[](int i) const { return data_[i]; }

  // Row-major accessors for the ranks used in this codebase.
  double& at(int i, int j) { return data_[i * shape_[1] + j]; }
  const double& at(int i, int j) const { return data_[i * shape_[1] + j]; }
  double& at(int i, int j, int k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const double& at(int i, int j, int k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double& at(int i, int j, int k, int l) {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  const double& at(int i, int j, int k, int l) const {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  double min_value() const;
  double max_value() const;

  void fill(double value);
  std::string shape_str() const;  // e.g. "[3,4,5]" for error messages

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

int shape_numel(const std::vector<int>& shape);

}  // namespace tdc
