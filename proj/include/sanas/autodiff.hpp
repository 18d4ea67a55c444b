#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sanas/tensor.hpp"

namespace sanas {

struct Gradients;

// Handle into a Tape.
struct Var {
  static constexpr std::uint32_t kInvalid = 0xffffffffu;
  std::uint32_t id = kInvalid;
  bool valid() const { return id != kInvalid; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, which is a
// topological order by construction, so backward() is a single reverse sweep.
// All loops are sequential with fixed iteration order: identical inputs give
// bit-identical values and gradients.
class Tape {
 public:
  Var constant(Tensor value);
  // Parameter leaf. Binding the same name twice returns the same node, so a
  // parameter used at several timesteps accumulates one gradient.
  Var param(const std::string& name, const Tensor& value, bool trainable = true);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
  std::size_t size() const { return nodes_.size(); }

  Var add(Var a, Var b);
  Var add_n(const std::vector<Var>& xs);
  Var mul(Var a, Var b);                          // elementwise
  Var affine(Var x, double alpha, double beta);   // alpha*x + beta
  Var relu(Var x);
  Var sigmoid(Var x);
  Var tanh(Var x);
  Var flatten(Var x);
  Var sum(Var x);                                 // scalar
  Var matvec(Var W, Var x);                       // W:[m,n] x:[n] -> [m]
  Var linear(Var x, Var W, Var b);                // W x + b
  Var conv2d(Var x, Var K, Var b, std::size_t stride_f, std::size_t stride_t);
  // Numerically stable cross-entropy over logits; returns a scalar node whose
  // backward is softmax - onehot(target).
  Var softmax_xent(Var logits, std::size_t target);
  // sum_e h_e log g_e + (1-h_e) log(1-g_e) with g clamped to
  // [kProbEps, 1-kProbEps]; gradient is zero where the clamp binds.
  Var bernoulli_log_prob(Var gamma, const std::vector<std::uint8_t>& h);

  static constexpr double kProbEps = 1e-6;

  // Seeds are (node, weight) pairs on scalar nodes; gradient buffers are
  // zeroed, seeded, then propagated in one reverse sweep.
  void backward(const std::vector<std::pair<Var, double>>& seeds);

  // Adds every trainable parameter node's gradient into `out`, in tape order.
  void collect_param_grads(Gradients& out) const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&, const Node&)> back;  // null for leaves
    std::string param_name;
    bool trainable = false;
  };

  Var push(Tensor value, std::function<void(Tape&, const Node&)> back = nullptr);
  Tensor& grad_of(std::uint32_t id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
  std::map<std::string, Var> bound_params_;
};

// GRU parameter handles; see gru_cell for the convention.
struct GruVars {
  Var w_update, u_update, b_update;
  Var w_reset, u_reset, b_reset;
  Var w_cand, u_cand, b_cand;
};

// Standard GRU cell composed from tape primitives:
//   a = sigma(W_a u + U_a z + b_a)          update gate
//   r = sigma(W_r u + U_r z + b_r)          reset gate
//   c = tanh(W_c u + U_c (r o z) + b_c)     candidate
//   z' = (1 - a) o c + a o z
Var gru_cell(Tape& t, Var z_prev, Var u, const GruVars& g);

// Forward-only helpers (no tape).
Tensor softmax(const Tensor& logits);
std::size_t argmax(const Tensor& t);

}  // namespace sanas
