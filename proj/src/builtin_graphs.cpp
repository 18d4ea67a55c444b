#include "sanas/supernet.hpp"
#include <map>
namespace sanas {
namespace {
const char* k_cnn_trad_fpool3_sanas = R"sanasjson({
  "name": "cnn-trad-fpool3-sanas",
  "layers": [
    {"name": "input", "shape": [1, 40, 98]},
    {"name": "conv1", "shape": [64, 7, 91]},
    {"name": "conv2", "shape": [64, 4, 82]},
    {"name": "lin1", "shape": [32]},
    {"name": "lin2", "shape": [128]},
    {"name": "classifier", "shape": [128]},
    {"name": "output", "shape": [12]}
  ],
  "edges": [
    {"from": "input", "to": "conv1", "kind": "conv2d", "out_channels": 64, "kernel": [20, 8], "stride": [3, 1]},
    {"from": "conv1", "to": "conv2", "kind": "conv2d", "out_channels": 64, "kernel": [4, 10], "stride": [1, 1]},
    {"from": "conv2", "to": "lin1", "kind": "flatten_linear"},
    {"from": "lin1", "to": "lin2", "kind": "linear"},
    {"from": "lin2", "to": "classifier", "kind": "identity"},
    {"from": "classifier", "to": "output", "kind": "linear"},
    {"from": "conv1", "to": "classifier", "kind": "flatten_linear"},
    {"from": "conv2", "to": "classifier", "kind": "flatten_linear"},
    {"from": "lin1", "to": "classifier", "kind": "linear"}
  ],
  "backbone": [
    ["input", "conv1"],
    ["conv1", "conv2"],
    ["conv2", "lin1"],
    ["lin1", "lin2"],
    ["lin2", "classifier"],
    ["classifier", "output"]
  ],
  "feature_layer": "classifier"
}
)sanasjson";
const char* k_toy = R"sanasjson({
  "name": "toy",
  "layers": [
    {"name": "input", "shape": [1, 40, 98]},
    {"name": "sense", "shape": [1, 1, 10]},
    {"name": "conv1", "shape": [4, 9, 12]},
    {"name": "big", "shape": [16, 17, 45]},
    {"name": "hidden", "shape": [32]},
    {"name": "features", "shape": [32]},
    {"name": "output", "shape": [12]}
  ],
  "edges": [
    {"from": "input", "to": "sense", "kind": "conv2d", "out_channels": 1, "kernel": [40, 8], "stride": [1, 10]},
    {"from": "input", "to": "conv1", "kind": "conv2d", "out_channels": 4, "kernel": [8, 10], "stride": [4, 8]},
    {"from": "input", "to": "big", "kind": "conv2d", "out_channels": 16, "kernel": [8, 10], "stride": [2, 2]},
    {"from": "sense", "to": "features", "kind": "flatten_linear"},
    {"from": "conv1", "to": "hidden", "kind": "flatten_linear"},
    {"from": "big", "to": "features", "kind": "flatten_linear"},
    {"from": "hidden", "to": "features", "kind": "identity"},
    {"from": "features", "to": "output", "kind": "linear"}
  ],
  "backbone": [
    ["input", "conv1"],
    ["conv1", "hidden"],
    ["hidden", "features"],
    ["features", "output"]
  ],
  "feature_layer": "features"
}
)sanasjson";
}  // namespace

const std::string& builtin_graph_json(const std::string& name) {
  static const std::map<std::string, std::string> graphs = {
      {"cnn-trad-fpool3-sanas", k_cnn_trad_fpool3_sanas},
      {"toy", k_toy},
  };
  auto it = graphs.find(name);
  if (it == graphs.end()) throw ConfigError("unknown builtin graph: " + name);
  return it->second;
}

std::vector<std::string> builtin_graph_names() {
  return {"cnn-trad-fpool3-sanas", "toy"};
}

SuperNet resolve_graph(const std::string& ref) {
  if (ref.rfind("builtin:", 0) == 0) {
    return SuperNet::build_from_string(builtin_graph_json(ref.substr(8)));
  }
  return SuperNet::build_from_file(ref);
}

}  // namespace sanas
