#include "sanas/tensor.hpp"

#include <cmath>

namespace sanas {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                      " does not match shape " + shape_str(shape_));
  }
  for (std::size_t d : shape_) {
    if (d == 0) throw ConfigError("tensor shape has a zero dimension: " + shape_str(shape_));
  }
}

double Tensor::item() const {
  if (size() != 1) {
    throw ConfigError("item() on tensor of shape " + shape_str(shape_));
  }
  return data_[0];
}

bool Tensor::finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::require_finite(const std::string& context) const {
  if (!finite()) {
    throw NumericError("non-finite value in " + context);
  }
}

}  // namespace sanas
