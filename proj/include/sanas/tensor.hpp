#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sanas/common.hpp"

namespace sanas {

std::size_t shape_size(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

// Dense row-major tensor of binary64 values. The whole training path runs in
// binary64; see Tensor::require_finite for the NaN/Inf policy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Scalar convenience: tensors of size 1.
  double item() const;

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool finite() const;
  // Throws NumericError naming `context` if any value is NaN/Inf.
  void require_finite(const std::string& context) const;

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

}  // namespace sanas
