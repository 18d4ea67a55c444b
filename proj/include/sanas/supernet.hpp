#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sanas/autodiff.hpp"
#include "sanas/params.hpp"
#include "sanas/tensor.hpp"

namespace sanas {

enum class EdgeKind { kConv2d, kLinear, kFlattenLinear, kIdentity };

std::string edge_kind_name(EdgeKind k);

struct LayerSpec {
  std::string name;
  std::vector<std::size_t> shape;
};

struct EdgeSpec {
  std::size_t from = 0, to = 0;  // layer indices in topological order
  EdgeKind kind = EdgeKind::kIdentity;
  // conv2d hyperparameters (unused for other kinds)
  std::size_t out_channels = 0, kernel_f = 0, kernel_t = 0, stride_f = 1, stride_t = 1;
  // resolved linear dimensions (n_out x n_in), zero for identity
  std::size_t n_in = 0, n_out = 0;
  std::uint64_t flops = 0;
  std::string name;          // "<from>-><to>" with "#k" suffix for parallel edges
  std::string param_prefix;  // "edges/<name>"
};

// Number of FLOPs charged for one evaluation of an edge module. Convention:
// one multiply-accumulate counts as 2 FLOPs, bias adds are counted,
// activations are not. linear(n_in -> n_out) = 2*n_in*n_out + n_out;
// conv2d = F'*T'*C_out*(2*kF*kT*C_in) + F'*T'*C_out; identity = 0.
std::uint64_t edge_cost(const EdgeSpec& e);

// Validated super-network: a DAG of layers where every edge carries a small
// module and each layer sums its incoming edge outputs. Immutable after
// build(); shareable across threads.
class SuperNet {
 public:
  // Builds from the JSON graph description (see data/graphs/*.json for the
  // schema). Throws ConfigError naming the offending edge or cycle.
  static SuperNet build(const nlohmann::json& spec);
  static SuperNet build_from_string(const std::string& text);
  static SuperNet build_from_file(const std::string& path);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<EdgeSpec>& edges() const { return edges_; }
  std::size_t num_edges() const { return edges_.size(); }
  std::size_t input_layer() const { return 0; }
  std::size_t output_layer() const { return layers_.size() - 1; }
  std::size_t feature_layer() const { return feature_layer_; }
  std::size_t feature_dim_flat() const;
  std::size_t num_classes() const;
  const std::vector<std::size_t>& input_shape() const { return layers_.front().shape; }
  const std::string& name() const { return name_; }
  const nlohmann::json& spec_json() const { return spec_; }

  // Edge indices of the designated backbone chain (declared in the graph
  // file); used for the static baselines.
  const std::vector<std::size_t>& backbone_edges() const { return backbone_; }

 private:
  std::string name_;
  std::vector<LayerSpec> layers_;  // topological order, input first, output last
  std::vector<EdgeSpec> edges_;    // sorted by (from, to, declaration order)
  std::size_t feature_layer_ = 0;
  std::vector<std::size_t> backbone_;
  nlohmann::json spec_;
};

// Binary edge-selection mask, one entry per edge in SuperNet::edges() order.
// This is the paper's H matrix restricted to the support of E.
struct ArchSample {
  std::vector<std::uint8_t> h;

  bool operator==(const ArchSample& o) const { return h == o.h; }
  static ArchSample all_on(std::size_t n) { return ArchSample{std::vector<std::uint8_t>(n, 1)}; }
  static ArchSample all_off(std::size_t n) { return ArchSample{std::vector<std::uint8_t>(n, 0)}; }
};

// Independent Bernoulli draw per edge. gamma entries must lie in [0,1].
ArchSample sample_architecture(const Tensor& gamma, Rng& rng);

// Mode of the independent Bernoulli distribution: edge on iff gamma >= 0.5
// (ties at exactly 0.5 include the edge).
ArchSample most_probable_architecture(const Tensor& gamma);

// Edges lying on some input->output path of the H-selected subgraph; only
// these are evaluated and charged.
std::vector<std::uint8_t> active_subgraph(const SuperNet& net, const ArchSample& h);

// log P(H | gamma) with gamma clamped to [1e-6, 1-1e-6] (no tape).
double log_prob(const Tensor& gamma, const ArchSample& h);

struct ControllerDims {
  std::size_t state_dim = 64;
  std::size_t feature_dim = 64;
};

struct CostModel {
  std::vector<std::uint64_t> edge_flops;
  // Fixed per-timestep controller cost: GRU update, feature projection, the
  // gamma head and the per-edge sampling draws.
  std::uint64_t controller_flops = 0;

  std::uint64_t full_graph_flops() const;
  // Order of magnitude m of the full-graph cost: floor(log10(full)).
  int cost_magnitude() const;
};

CostModel make_cost_model(const SuperNet& net, const ControllerDims& dims);

// Sum of active edge costs plus the controller cost. With charge_inactive,
// every H-selected edge is charged whether or not it contributes (ablation).
std::uint64_t architecture_cost(const SuperNet& net, const CostModel& cm, const ArchSample& h,
                                bool charge_inactive = false);

// Seeded Glorot-uniform initialization of every edge-module parameter, in
// edge order. Controller parameters are created by the controller module.
void init_edge_params(const SuperNet& net, ParamStore& store, Rng& rng);

// Forward pass over the contributing edges on a tape.
struct SupernetForward {
  Var logits;                  // output-layer activation (or bias fallback)
  Var feature;                 // flattened feature-layer activation; invalid if unreachable
  bool output_reachable = false;
  bool feature_reachable = false;
};
SupernetForward supernet_forward(Tape& tape, const SuperNet& net, ParamStore& store,
                                 const std::vector<std::uint8_t>& contributing, Var x);

// Convenience evaluation without an external tape: returns (logits, phi) where
// phi is the raw flattened feature-layer activation (zeros if unreachable).
std::pair<Tensor, Tensor> evaluate(const SuperNet& net, ParamStore& store,
                                   const std::vector<std::uint8_t>& contributing,
                                   const Tensor& x);

// Built-in graph descriptions. resolve_graph accepts "builtin:<name>" or a
// filesystem path.
const std::string& builtin_graph_json(const std::string& name);
std::vector<std::string> builtin_graph_names();
SuperNet resolve_graph(const std::string& ref);

}  // namespace sanas
