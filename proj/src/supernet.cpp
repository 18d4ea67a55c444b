#include "sanas/supernet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace sanas {

namespace {

using nlohmann::json;

void require_keys(const json& obj, const std::set<std::string>& allowed,
                  const std::set<std::string>& required, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : obj.items()) {
    (void)v;
    if (!allowed.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
  }
  for (const auto& k : required) {
    if (!obj.count(k)) throw ConfigError(where + ": missing key '" + k + "'");
  }
}

std::vector<std::size_t> parse_shape(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": shape must be a non-empty array");
  std::vector<std::size_t> shape;
  for (const auto& v : j) {
    if (!v.is_number_unsigned() || v.get<std::uint64_t>() == 0) {
      throw ConfigError(where + ": shape entries must be positive integers");
    }
    shape.push_back(v.get<std::size_t>());
  }
  return shape;
}

EdgeKind parse_kind(const std::string& s, const std::string& where) {
  if (s == "conv2d") return EdgeKind::kConv2d;
  if (s == "linear") return EdgeKind::kLinear;
  if (s == "flatten_linear") return EdgeKind::kFlattenLinear;
  if (s == "identity") return EdgeKind::kIdentity;
  throw ConfigError(where + ": unknown edge kind '" + s + "'");
}

std::string find_cycle_string(const std::vector<std::string>& names,
                              const std::vector<std::vector<std::size_t>>& out,
                              const std::vector<bool>& in_cycle_set) {
  // DFS restricted to the nodes Kahn could not order; any back edge closes a
  // cycle we can report.
  const std::size_t n = names.size();
  std::vector<int> state(n, 0);
  std::vector<std::size_t> stack;
  std::string found;
  std::function<bool(std::size_t)> dfs = [&](std::size_t u) -> bool {
    state[u] = 1;
    stack.push_back(u);
    for (std::size_t v : out[u]) {
      if (!in_cycle_set[v]) continue;
      if (state[v] == 1) {
        auto it = std::find(stack.begin(), stack.end(), v);
        std::string s;
        for (; it != stack.end(); ++it) s += names[*it] + " -> ";
        found = s + names[v];
        return true;
      }
      if (state[v] == 0 && dfs(v)) return true;
    }
    state[u] = 2;
    stack.pop_back();
    return false;
  };
  for (std::size_t u = 0; u < n; ++u) {
    if (in_cycle_set[u] && state[u] == 0 && dfs(u)) return found;
  }
  return "(unidentified cycle)";
}

}  // namespace

std::string edge_kind_name(EdgeKind k) {
  switch (k) {
    case EdgeKind::kConv2d: return "conv2d";
    case EdgeKind::kLinear: return "linear";
    case EdgeKind::kFlattenLinear: return "flatten_linear";
    case EdgeKind::kIdentity: return "identity";
  }
  return "?";
}

std::uint64_t edge_cost(const EdgeSpec& e) {
  switch (e.kind) {
    case EdgeKind::kIdentity:
      return 0;
    case EdgeKind::kLinear:
    case EdgeKind::kFlattenLinear:
      return 2ull * e.n_in * e.n_out + e.n_out;
    case EdgeKind::kConv2d: {
      // n_out here is F'*T'*C_out (output element count), n_in is C_in.
      const std::uint64_t mac2 = 2ull * e.kernel_f * e.kernel_t * e.n_in;
      return static_cast<std::uint64_t>(e.n_out) * mac2 + e.n_out;
    }
  }
  return 0;
}

SuperNet SuperNet::build(const json& spec) {
  require_keys(spec, {"name", "layers", "edges", "feature_layer", "backbone"},
               {"layers", "edges", "feature_layer"}, "graph");
  SuperNet net;
  net.spec_ = spec;
  net.name_ = spec.value("name", "unnamed");

  // Layers, keyed by name, declaration order kept as the topo tie-break.
  if (!spec["layers"].is_array() || spec["layers"].size() < 2) {
    throw ConfigError("graph: needs at least an input and an output layer");
  }
  std::vector<LayerSpec> declared;
  std::map<std::string, std::size_t> layer_index;
  for (const auto& lj : spec["layers"]) {
    require_keys(lj, {"name", "shape"}, {"name", "shape"}, "layer");
    LayerSpec l;
    l.name = lj["name"].get<std::string>();
    l.shape = parse_shape(lj["shape"], "layer '" + l.name + "'");
    if (layer_index.count(l.name)) throw ConfigError("graph: duplicate layer '" + l.name + "'");
    layer_index[l.name] = declared.size();
    declared.push_back(std::move(l));
  }
  const std::size_t n = declared.size();

  // Raw edges against declaration indices.
  struct RawEdge {
    std::size_t from, to, decl;
    json j;
  };
  std::vector<RawEdge> raw;
  for (const auto& ej : spec["edges"]) {
    require_keys(ej, {"from", "to", "kind", "out_channels", "kernel", "stride"},
                 {"from", "to", "kind"}, "edge");
    const std::string fs = ej["from"].get<std::string>();
    const std::string ts = ej["to"].get<std::string>();
    if (!layer_index.count(fs)) throw ConfigError("edge " + fs + "->" + ts + ": unknown layer '" + fs + "'");
    if (!layer_index.count(ts)) throw ConfigError("edge " + fs + "->" + ts + ": unknown layer '" + ts + "'");
    raw.push_back({layer_index[fs], layer_index[ts], raw.size(), ej});
  }

  // Kahn topological sort with declaration-order tie-break; leftover nodes
  // indicate a cycle which we name in the error.
  std::vector<std::vector<std::size_t>> out_adj(n);
  std::vector<std::size_t> indeg(n, 0);
  for (const auto& e : raw) {
    if (e.from == e.to) {
      throw ConfigError("graph: cycle detected: " + declared[e.from].name + " -> " +
                        declared[e.to].name);
    }
    out_adj[e.from].push_back(e.to);
    ++indeg[e.to];
  }
  std::vector<std::size_t> topo;
  std::vector<std::size_t> indeg_work = indeg;
  std::vector<bool> placed(n, false);
  while (topo.size() < n) {
    bool progressed = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!placed[i] && indeg_work[i] == 0) {
        placed[i] = true;
        topo.push_back(i);
        for (std::size_t v : out_adj[i]) --indeg_work[v];
        progressed = true;
        break;
      }
    }
    if (!progressed) {
      std::vector<std::string> names(n);
      for (std::size_t i = 0; i < n; ++i) names[i] = declared[i].name;
      std::vector<bool> leftover(n);
      for (std::size_t i = 0; i < n; ++i) leftover[i] = !placed[i];
      throw ConfigError("graph: cycle detected: " + find_cycle_string(names, out_adj, leftover));
    }
  }

  std::vector<std::size_t> pos(n);  // declaration index -> topo position
  for (std::size_t p = 0; p < n; ++p) pos[topo[p]] = p;
  net.layers_.resize(n);
  for (std::size_t p = 0; p < n; ++p) net.layers_[p] = declared[topo[p]];

  // The input layer is the unique source; the output layer the unique sink.
  std::vector<std::size_t> n_in_edges(n, 0), n_out_edges(n, 0);
  for (const auto& e : raw) {
    ++n_out_edges[pos[e.from]];
    ++n_in_edges[pos[e.to]];
  }
  for (std::size_t p = 0; p < n; ++p) {
    if (p != 0 && n_in_edges[p] == 0) {
      throw ConfigError("graph: layer '" + net.layers_[p].name +
                        "' has no incoming edge but is not the input layer");
    }
    if (p + 1 != n && n_out_edges[p] == 0) {
      throw ConfigError("graph: layer '" + net.layers_[p].name +
                        "' has no outgoing edge but is not the output layer");
    }
  }
  if (net.layers_.back().shape.size() != 1) {
    throw ConfigError("graph: output layer must be a vector of class logits");
  }

  // Resolve and validate each edge module against its endpoint shapes.
  std::vector<EdgeSpec> edges;
  for (const auto& r : raw) {
    EdgeSpec e;
    e.from = pos[r.from];
    e.to = pos[r.to];
    e.name = declared[r.from].name + "->" + declared[r.to].name;
    e.kind = parse_kind(r.j["kind"].get<std::string>(), "edge " + e.name);
    const auto& fshape = net.layers_[e.from].shape;
    const auto& tshape = net.layers_[e.to].shape;
    switch (e.kind) {
      case EdgeKind::kIdentity:
        if (fshape != tshape) {
          throw ConfigError("edge " + e.name + ": identity endpoints disagree, " +
                            shape_str(fshape) + " vs " + shape_str(tshape));
        }
        break;
      case EdgeKind::kLinear:
        if (fshape.size() != 1 || tshape.size() != 1) {
          throw ConfigError("edge " + e.name + ": linear endpoints must be vectors, got " +
                            shape_str(fshape) + " -> " + shape_str(tshape));
        }
        e.n_in = fshape[0];
        e.n_out = tshape[0];
        break;
      case EdgeKind::kFlattenLinear:
        if (tshape.size() != 1) {
          throw ConfigError("edge " + e.name + ": flatten_linear target must be a vector");
        }
        e.n_in = shape_size(fshape);
        e.n_out = tshape[0];
        break;
      case EdgeKind::kConv2d: {
        require_keys(r.j, {"from", "to", "kind", "out_channels", "kernel", "stride"},
                     {"out_channels", "kernel", "stride"}, "edge " + e.name);
        if (fshape.size() != 3 || tshape.size() != 3) {
          throw ConfigError("edge " + e.name + ": conv2d endpoints must be (C,F,T), got " +
                            shape_str(fshape) + " -> " + shape_str(tshape));
        }
        e.out_channels = r.j["out_channels"].get<std::size_t>();
        const auto kern = parse_shape(r.j["kernel"], "edge " + e.name + " kernel");
        const auto stride = parse_shape(r.j["stride"], "edge " + e.name + " stride");
        if (kern.size() != 2 || stride.size() != 2) {
          throw ConfigError("edge " + e.name + ": kernel/stride must have two entries");
        }
        e.kernel_f = kern[0];
        e.kernel_t = kern[1];
        e.stride_f = stride[0];
        e.stride_t = stride[1];
        if (e.kernel_f > fshape[1] || e.kernel_t > fshape[2]) {
          throw ConfigError("edge " + e.name + ": kernel " + shape_str({e.kernel_f, e.kernel_t}) +
                            " larger than input " + shape_str(fshape));
        }
        const std::size_t f_out = (fshape[1] - e.kernel_f) / e.stride_f + 1;
        const std::size_t t_out = (fshape[2] - e.kernel_t) / e.stride_t + 1;
        const std::vector<std::size_t> oshape{e.out_channels, f_out, t_out};
        if (oshape != tshape) {
          throw ConfigError("edge " + e.name + ": conv2d produces " + shape_str(oshape) +
                            " but target layer is " + shape_str(tshape));
        }
        e.n_in = fshape[0];                         // C_in
        e.n_out = e.out_channels * f_out * t_out;   // output element count
        break;
      }
    }
    if (e.to <= e.from) {
      // Cannot happen after a successful topological sort, kept as a guard.
      throw ConfigError("edge " + e.name + ": not forward under the topological order");
    }
    e.flops = edge_cost(e);
    edges.push_back(std::move(e));
  }

  std::stable_sort(edges.begin(), edges.end(), [](const EdgeSpec& a, const EdgeSpec& b) {
    return a.from != b.from ? a.from < b.from : a.to < b.to;
  });
  // Parallel edges get a disambiguating suffix.
  for (std::size_t i = 0; i < edges.size(); ++i) {
    std::size_t dup = 0;
    for (std::size_t j = 0; j < i; ++j) {
      if (edges[j].from == edges[i].from && edges[j].to == edges[i].to) ++dup;
    }
    if (dup > 0) edges[i].name += "#" + std::to_string(dup + 1);
    edges[i].param_prefix = "edges/" + edges[i].name;
  }
  net.edges_ = std::move(edges);

  const std::string feat = spec["feature_layer"].get<std::string>();
  if (!layer_index.count(feat)) {
    throw ConfigError("graph: feature_layer '" + feat + "' is not a declared layer");
  }
  net.feature_layer_ = pos[layer_index[feat]];

  if (spec.count("backbone")) {
    for (const auto& bj : spec["backbone"]) {
      if (!bj.is_array() || bj.size() != 2) {
        throw ConfigError("graph: backbone entries must be [from, to] pairs");
      }
      const std::string fs = bj[0].get<std::string>();
      const std::string ts = bj[1].get<std::string>();
      bool found = false;
      for (std::size_t i = 0; i < net.edges_.size(); ++i) {
        if (net.layers_[net.edges_[i].from].name == fs &&
            net.layers_[net.edges_[i].to].name == ts) {
          net.backbone_.push_back(i);
          found = true;
          break;
        }
      }
      if (!found) throw ConfigError("graph: backbone edge " + fs + "->" + ts + " not found");
    }
  }
  return net;
}

SuperNet SuperNet::build_from_string(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw FormatError("graph: invalid JSON");
  return build(j);
}

SuperNet SuperNet::build_from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read graph file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return build_from_string(ss.str());
}

std::size_t SuperNet::feature_dim_flat() const {
  return shape_size(layers_[feature_layer_].shape);
}

std::size_t SuperNet::num_classes() const { return layers_.back().shape[0]; }

ArchSample sample_architecture(const Tensor& gamma, Rng& rng) {
  ArchSample s;
  s.h.resize(gamma.size());
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    const double g = gamma[i];
    if (!(g >= 0.0 && g <= 1.0)) {
      throw NumericError("sample_architecture: gamma[" + std::to_string(i) + "] = " +
                         std::to_string(g) + " outside [0,1]");
    }
    s.h[i] = rng.bernoulli(g) ? 1 : 0;
  }
  return s;
}

ArchSample most_probable_architecture(const Tensor& gamma) {
  ArchSample s;
  s.h.resize(gamma.size());
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    s.h[i] = gamma[i] >= 0.5 ? 1 : 0;  // ties at 0.5 include the edge
  }
  return s;
}

std::vector<std::uint8_t> active_subgraph(const SuperNet& net, const ArchSample& h) {
  if (h.h.size() != net.num_edges()) {
    throw ConfigError("active_subgraph: mask has " + std::to_string(h.h.size()) +
                      " entries for " + std::to_string(net.num_edges()) + " edges");
  }
  const std::size_t n = net.layers().size();
  std::vector<std::uint8_t> fwd(n, 0), bwd(n, 0);
  fwd[net.input_layer()] = 1;
  // Edges are sorted by (from, to), so one forward sweep settles reachability
  // from the input, and one reverse sweep reachability to the output.
  const auto& edges = net.edges();
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (h.h[i] && fwd[edges[i].from]) fwd[edges[i].to] = 1;
  }
  bwd[net.output_layer()] = 1;
  for (std::size_t i = edges.size(); i-- > 0;) {
    if (h.h[i] && bwd[edges[i].to]) bwd[edges[i].from] = 1;
  }
  std::vector<std::uint8_t> active(edges.size(), 0);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    active[i] = (h.h[i] && fwd[edges[i].from] && bwd[edges[i].to]) ? 1 : 0;
  }
  return active;
}

double log_prob(const Tensor& gamma, const ArchSample& h) {
  if (gamma.size() != h.h.size()) {
    throw ConfigError("log_prob: gamma size does not match mask size");
  }
  double lp = 0.0;
  for (std::size_t i = 0; i < h.h.size(); ++i) {
    const double g = std::clamp(gamma[i], Tape::kProbEps, 1.0 - Tape::kProbEps);
    lp += h.h[i] ? std::log(g) : std::log(1.0 - g);
  }
  return lp;
}

std::uint64_t CostModel::full_graph_flops() const {
  std::uint64_t s = controller_flops;
  for (std::uint64_t c : edge_flops) s += c;
  return s;
}

int CostModel::cost_magnitude() const {
  const std::uint64_t f = full_graph_flops();
  int m = 0;
  for (std::uint64_t v = f; v >= 10; v /= 10) ++m;
  return m;
}

CostModel make_cost_model(const SuperNet& net, const ControllerDims& dims) {
  CostModel cm;
  for (const auto& e : net.edges()) cm.edge_flops.push_back(e.flops);
  const std::uint64_t d = dims.state_dim;
  const std::uint64_t din = dims.feature_dim;
  const std::uint64_t ne = net.num_edges();
  const std::uint64_t gru = 3 * (2 * din * d + d) + 3 * (2 * d * d + d) + 6 * d;
  const std::uint64_t phi =
      2 * static_cast<std::uint64_t>(net.feature_dim_flat()) * din + din;
  const std::uint64_t head = 2 * d * ne + ne;
  cm.controller_flops = gru + phi + head + ne;  // +ne for the sampling draws
  return cm;
}

std::uint64_t architecture_cost(const SuperNet& net, const CostModel& cm, const ArchSample& h,
                                bool charge_inactive) {
  std::uint64_t total = cm.controller_flops;
  if (charge_inactive) {
    for (std::size_t i = 0; i < h.h.size(); ++i) {
      if (h.h[i]) total += cm.edge_flops[i];
    }
    return total;
  }
  const auto active = active_subgraph(net, h);
  for (std::size_t i = 0; i < active.size(); ++i) {
    if (active[i]) total += cm.edge_flops[i];
  }
  return total;
}

namespace {

Tensor glorot_uniform(const std::vector<std::size_t>& shape, std::size_t fan_in,
                      std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

}  // namespace

void init_edge_params(const SuperNet& net, ParamStore& store, Rng& rng) {
  for (const auto& e : net.edges()) {
    switch (e.kind) {
      case EdgeKind::kIdentity:
        break;
      case EdgeKind::kLinear:
      case EdgeKind::kFlattenLinear: {
        Tensor& w = store.create(e.param_prefix + "/W", {e.n_out, e.n_in});
        w = glorot_uniform(w.shape(), e.n_in, e.n_out, rng);
        store.create(e.param_prefix + "/b", {e.n_out});
        break;
      }
      case EdgeKind::kConv2d: {
        const std::size_t c_in = e.n_in;
        const std::size_t rf = e.kernel_f * e.kernel_t;
        Tensor& k = store.create(e.param_prefix + "/K", {e.out_channels, c_in, e.kernel_f, e.kernel_t});
        k = glorot_uniform(k.shape(), c_in * rf, e.out_channels * rf, rng);
        store.create(e.param_prefix + "/b", {e.out_channels});
        break;
      }
    }
  }
}

namespace {

Var edge_forward(Tape& tape, const SuperNet& net, ParamStore& store, const EdgeSpec& e, Var src) {
  switch (e.kind) {
    case EdgeKind::kIdentity:
      return src;
    case EdgeKind::kLinear: {
      Var w = tape.param(e.param_prefix + "/W", store.value(e.param_prefix + "/W"),
                         store.trainable(e.param_prefix + "/W"));
      Var b = tape.param(e.param_prefix + "/b", store.value(e.param_prefix + "/b"),
                         store.trainable(e.param_prefix + "/b"));
      return tape.linear(src, w, b);
    }
    case EdgeKind::kFlattenLinear: {
      Var w = tape.param(e.param_prefix + "/W", store.value(e.param_prefix + "/W"),
                         store.trainable(e.param_prefix + "/W"));
      Var b = tape.param(e.param_prefix + "/b", store.value(e.param_prefix + "/b"),
                         store.trainable(e.param_prefix + "/b"));
      return tape.linear(tape.flatten(src), w, b);
    }
    case EdgeKind::kConv2d: {
      Var k = tape.param(e.param_prefix + "/K", store.value(e.param_prefix + "/K"),
                         store.trainable(e.param_prefix + "/K"));
      Var b = tape.param(e.param_prefix + "/b", store.value(e.param_prefix + "/b"),
                         store.trainable(e.param_prefix + "/b"));
      Var y = tape.conv2d(src, k, b, e.stride_f, e.stride_t);
      return tape.relu(y);
    }
  }
  throw ConfigError("edge_forward: unreachable");
}

}  // namespace

SupernetForward supernet_forward(Tape& tape, const SuperNet& net, ParamStore& store,
                                 const std::vector<std::uint8_t>& contributing, Var x) {
  if (contributing.size() != net.num_edges()) {
    throw ConfigError("supernet_forward: active mask size mismatch");
  }
  const auto& xv = tape.value(x);
  if (xv.shape() != net.input_shape()) {
    throw ConfigError("supernet_forward: input shape " + shape_str(xv.shape()) +
                      " does not match graph input " + shape_str(net.input_shape()));
  }
  const std::size_t n = net.layers().size();
  std::vector<Var> layer_val(n);
  layer_val[net.input_layer()] = x;
  std::vector<bool> have(n, false);
  have[net.input_layer()] = true;

  const auto& edges = net.edges();
  for (std::size_t li = 1; li < n; ++li) {
    std::vector<Var> incoming;
    for (std::size_t ei = 0; ei < edges.size(); ++ei) {
      const auto& e = edges[ei];
      if (e.to != li || !contributing[ei]) continue;
      if (!have[e.from]) {
        throw ConfigError("supernet_forward: edge " + e.name +
                          " marked active but its source is unreachable");
      }
      Var y = edge_forward(tape, net, store, e, layer_val[e.from]);
      tape.value(y).require_finite("edge " + e.name);
      incoming.push_back(y);
    }
    if (!incoming.empty()) {
      layer_val[li] = tape.add_n(incoming);  // merge rule: elementwise sum
      have[li] = true;
    }
  }

  SupernetForward out;
  out.output_reachable = have[net.output_layer()];
  if (out.output_reachable) {
    out.logits = layer_val[net.output_layer()];
  } else {
    // Starved output: the classifier bias alone, so the prediction stays a
    // learnable constant.
    std::vector<Var> biases;
    for (const auto& e : edges) {
      if (e.to == net.output_layer() && e.kind != EdgeKind::kIdentity) {
        biases.push_back(tape.param(e.param_prefix + "/b", store.value(e.param_prefix + "/b"),
                                    store.trainable(e.param_prefix + "/b")));
      }
    }
    out.logits = biases.empty() ? tape.constant(Tensor({net.num_classes()}))
                                : tape.add_n(biases);
  }
  out.feature_reachable = have[net.feature_layer()];
  if (out.feature_reachable) {
    Var f = layer_val[net.feature_layer()];
    out.feature = tape.value(f).rank() == 1 ? f : tape.flatten(f);
  }
  return out;
}

std::pair<Tensor, Tensor> evaluate(const SuperNet& net, ParamStore& store,
                                   const std::vector<std::uint8_t>& contributing,
                                   const Tensor& x) {
  Tape tape;
  Var xv = tape.constant(x);
  auto fwd = supernet_forward(tape, net, store, contributing, xv);
  Tensor logits = tape.value(fwd.logits);
  Tensor phi = fwd.feature_reachable ? tape.value(fwd.feature)
                                     : Tensor({net.feature_dim_flat()});
  return {std::move(logits), std::move(phi)};
}

}  // namespace sanas
