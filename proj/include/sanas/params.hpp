#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sanas/tensor.hpp"

namespace sanas {

// Named parameter tensors plus their ADAM moment buffers. Registration order
// is preserved and defines the serialization order everywhere (checkpoints,
// gradient reduction, initialization).
class ParamStore {
 public:
  Tensor& create(const std::string& name, std::vector<std::size_t> shape, bool trainable = true);
  bool has(const std::string& name) const { return entries_.count(name) != 0; }
  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  bool trainable(const std::string& name) const;
  Tensor& adam_m(const std::string& name);
  Tensor& adam_v(const std::string& name);
  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }

 private:
  struct Entry {
    Tensor value, m, v;
    bool trainable = true;
  };
  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;

  std::vector<std::string> order_;
  std::map<std::string, Entry> entries_;
};

// Accumulated gradients keyed by parameter name. Accumulation is elementwise
// addition; callers are responsible for a deterministic accumulation order.
struct Gradients {
  std::map<std::string, Tensor> by_name;

  void accumulate(const std::string& name, const Tensor& g);
  void accumulate(const Gradients& other);
  void scale(double s);
  double global_norm() const;
  bool finite() const;
  bool empty() const { return by_name.empty(); }
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected ADAM update over every parameter in the store (t >= 1 is the
// 1-based step index). A parameter with no entry in `grads` is treated as
// having a zero gradient: its moments still decay. Trainable=false parameters
// are skipped. `grads` is cleared afterwards.
void adam_step(ParamStore& store, Gradients& grads, const AdamConfig& cfg, std::int64_t t);

// Central finite differences of f around theta0 against a caller-supplied
// analytic gradient. Returns max over coordinates of
// |analytic - numeric| / max(1, |analytic|, |numeric|).
// Throws NumericError if f evaluates non-finite.
double grad_check(const std::function<double(const Tensor&)>& f, const Tensor& analytic_grad,
                  const Tensor& theta0, double h = 1e-5);

}  // namespace sanas
