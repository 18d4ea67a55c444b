#include "sanas/controller.hpp"

#include <cmath>

namespace sanas {

namespace {

constexpr const char* kHeadW = "ctrl/head/W";
constexpr const char* kHeadB = "ctrl/head/b";
constexpr const char* kPhiW = "ctrl/phi/W";
constexpr const char* kPhiB = "ctrl/phi/b";

const char* kGruNames[9] = {"ctrl/gru/W_update", "ctrl/gru/U_update", "ctrl/gru/b_update",
                            "ctrl/gru/W_reset",  "ctrl/gru/U_reset",  "ctrl/gru/b_reset",
                            "ctrl/gru/W_cand",   "ctrl/gru/U_cand",   "ctrl/gru/b_cand"};

Tensor glorot(const std::vector<std::size_t>& shape, std::size_t fan_in, std::size_t fan_out,
              Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

Var bind(Tape& tape, ParamStore& store, const std::string& name) {
  return tape.param(name, store.value(name), store.trainable(name));
}

}  // namespace

ControllerState init_state(std::size_t state_dim) {
  return ControllerState{Tensor({state_dim})};
}

SanasModel::SanasModel(SuperNet net, ControllerDims dims, ModelFlags flags)
    : net_(std::move(net)), dims_(dims), cost_(make_cost_model(net_, dims)), flags_(flags) {
  if (dims_.state_dim == 0 || dims_.feature_dim == 0) {
    throw ConfigError("controller dimensions must be positive");
  }
}

void SanasModel::init_params(ParamStore& store, Rng& rng) const {
  init_edge_params(net_, store, rng);
  const std::size_t dz = dims_.state_dim;
  const std::size_t dphi = dims_.feature_dim;
  const std::size_t ne = net_.num_edges();
  const std::size_t feat = net_.feature_dim_flat();

  store.create(kHeadW, {ne, dz}) = glorot({ne, dz}, dz, ne, rng);
  store.create(kHeadB, {ne});  // zero bias: Gamma starts at 0.5 from the zero state

  const bool phi_trainable = !flags_.fixed_phi_projection;
  store.create(kPhiW, {dphi, feat}, phi_trainable) = glorot({dphi, feat}, feat, dphi, rng);
  store.create(kPhiB, {dphi}, phi_trainable);

  for (int g = 0; g < 3; ++g) {
    store.create(kGruNames[3 * g + 0], {dz, dphi}) = glorot({dz, dphi}, dphi, dz, rng);
    store.create(kGruNames[3 * g + 1], {dz, dz}) = glorot({dz, dz}, dz, dz, rng);
    store.create(kGruNames[3 * g + 2], {dz});
  }
}

Var gamma_from_state(Tape& tape, const SanasModel& model, ParamStore& store, Var z) {
  Var w = bind(tape, store, kHeadW);
  Var b = bind(tape, store, kHeadB);
  return tape.sigmoid(tape.linear(z, w, b));
}

Tensor gamma_from_state(const SanasModel& model, ParamStore& store, const Tensor& z) {
  Tape tape;
  Var zv = tape.constant(z);
  return tape.value(gamma_from_state(tape, model, store, zv));
}

TapeStep sanas_step_on_tape(Tape& tape, const SanasModel& model, ParamStore& store, Var z_prev,
                            const Tensor& x, int label, const SequenceMode& mode,
                            std::size_t step_index) {
  TapeStep ts;
  ts.out.arch.h.assign(model.net().num_edges(), 0);

  Var gamma;
  if (mode.mode == StepMode::kStatic) {
    if (mode.forced == nullptr || step_index >= mode.forced->size()) {
      throw ConfigError("static mode requires a forced architecture per step");
    }
    ts.out.arch = (*mode.forced)[step_index];
  } else {
    gamma = gamma_from_state(tape, model, store, z_prev);
    const Tensor& gv = tape.value(gamma);
    switch (mode.mode) {
      case StepMode::kSample:
        if (mode.rng == nullptr) throw ConfigError("sample mode requires an rng");
        ts.out.arch = sample_architecture(gv, *mode.rng);
        break;
      case StepMode::kArgmax:
        ts.out.arch = most_probable_architecture(gv);
        break;
      case StepMode::kForced:
        if (mode.forced == nullptr || step_index >= mode.forced->size()) {
          throw ConfigError("forced mode requires an architecture per step");
        }
        ts.out.arch = (*mode.forced)[step_index];
        break;
      default:
        break;
    }
  }
  if (ts.out.arch.h.size() != model.net().num_edges()) {
    throw ConfigError("architecture mask does not match the edge count");
  }

  const auto contributing = active_subgraph(model.net(), ts.out.arch);
  auto fwd = supernet_forward(tape, model.net(), store, contributing, tape.constant(x));
  ts.out.logits = tape.value(fwd.logits);

  if (mode.mode == StepMode::kStatic) {
    // Plain fixed-architecture network: no controller, so no controller cost.
    std::uint64_t cost = 0;
    for (std::size_t i = 0; i < contributing.size(); ++i) {
      if (contributing[i]) cost += model.cost_model().edge_flops[i];
    }
    ts.out.cost = cost;
    ts.out.phi = Tensor({model.dims().feature_dim});
    ts.out.z_next = Tensor({model.dims().state_dim});
  } else {
    ts.out.cost = architecture_cost(model.net(), model.cost_model(), ts.out.arch,
                                    model.flags().charge_inactive);
    ts.logp = tape.bernoulli_log_prob(gamma, ts.out.arch.h);
    ts.out.log_prob = tape.value(ts.logp).item();

    Var phi;
    if (fwd.feature_reachable) {
      phi = tape.linear(fwd.feature, bind(tape, store, kPhiW), bind(tape, store, kPhiB));
    } else {
      phi = tape.constant(Tensor({model.dims().feature_dim}));
    }
    ts.out.phi = tape.value(phi);

    GruVars g;
    g.w_update = bind(tape, store, kGruNames[0]);
    g.u_update = bind(tape, store, kGruNames[1]);
    g.b_update = bind(tape, store, kGruNames[2]);
    g.w_reset = bind(tape, store, kGruNames[3]);
    g.u_reset = bind(tape, store, kGruNames[4]);
    g.b_reset = bind(tape, store, kGruNames[5]);
    g.w_cand = bind(tape, store, kGruNames[6]);
    g.u_cand = bind(tape, store, kGruNames[7]);
    g.b_cand = bind(tape, store, kGruNames[8]);
    ts.z_next = gru_cell(tape, z_prev, phi, g);
    tape.value(ts.z_next).require_finite("controller state update");
    ts.out.z_next = tape.value(ts.z_next);
  }

  if (label >= 0) {
    if (static_cast<std::size_t>(label) >= model.net().num_classes()) {
      throw InputError("frame label " + std::to_string(label) + " out of range for " +
                       std::to_string(model.net().num_classes()) + " classes");
    }
    ts.delta = tape.softmax_xent(fwd.logits, static_cast<std::size_t>(label));
  }
  return ts;
}

StepOutput sanas_step(const SanasModel& model, ParamStore& store, const ControllerState& state,
                      const Tensor& x, const SequenceMode& mode) {
  Tape tape;
  Var z = tape.constant(state.z);
  return sanas_step_on_tape(tape, model, store, z, x, -1, mode, 0).out;
}

Episode run_sequence(const SanasModel& model, ParamStore& store, const std::vector<Frame>& frames,
                     const SequenceMode& mode) {
  if (frames.empty()) throw InputError("run_sequence: empty frame list");
  Episode ep;
  ep.mode = mode.mode;
  Var z = ep.tape.constant(Tensor({model.dims().state_dim}));  // z_1 = 0
  for (std::size_t t = 0; t < frames.size(); ++t) {
    TapeStep ts =
        sanas_step_on_tape(ep.tape, model, store, z, frames[t].features, frames[t].label, mode, t);
    ep.trace.log_probs.push_back(ts.out.log_prob);
    ep.trace.deltas.push_back(ts.delta.valid() ? ep.tape.value(ts.delta).item() : 0.0);
    ep.trace.costs.push_back(ts.out.cost);
    ep.delta_vars.push_back(ts.delta);
    ep.logp_vars.push_back(ts.logp);
    ep.steps.push_back(ts.out);
    if (ts.z_next.valid()) z = ts.z_next;
  }
  return ep;
}

void run_streaming(const SanasModel& model, ParamStore& store, const std::vector<Frame>& frames,
                   const SequenceMode& mode,
                   const std::function<void(std::size_t, const StepOutput&)>& callback) {
  if (frames.empty()) throw InputError("run_streaming: empty frame list");
  ControllerState state = init_state(model.dims().state_dim);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    Tape tape;
    Var z = tape.constant(state.z);
    TapeStep ts =
        sanas_step_on_tape(tape, model, store, z, frames[t].features, frames[t].label, mode, t);
    if (mode.mode != StepMode::kStatic) state.z = ts.out.z_next;
    callback(t, ts.out);
  }
}

std::pair<Tensor, Tensor> evaluate_architecture(const SanasModel& model, ParamStore& store,
                                                const ArchSample& h, const Tensor& x) {
  Tape tape;
  const auto contributing = active_subgraph(model.net(), h);
  auto fwd = supernet_forward(tape, model.net(), store, contributing, tape.constant(x));
  Tensor logits = tape.value(fwd.logits);
  Tensor phi({model.dims().feature_dim});
  if (fwd.feature_reachable) {
    Var p = tape.linear(fwd.feature, tape.param(kPhiW, store.value(kPhiW), false),
                        tape.param(kPhiB, store.value(kPhiB), false));
    phi = tape.value(p);
  }
  return {std::move(logits), std::move(phi)};
}

}  // namespace sanas
