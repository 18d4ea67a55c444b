#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "sanas/supernet.hpp"

namespace sanas {

struct ControllerState {
  Tensor z;
};

// z_1 is the zero vector.
ControllerState init_state(std::size_t state_dim);

struct ModelFlags {
  bool charge_inactive = false;      // charge every sampled edge, not just contributing ones
  bool fixed_phi_projection = false; // freeze the feature projection at its random init
};

// Structure bundle: the super-network, the controller dimensions, the cost
// model and the feature flags. Parameters live in a ParamStore owned by the
// caller; the model only describes how to create and use them.
class SanasModel {
 public:
  SanasModel(SuperNet net, ControllerDims dims, ModelFlags flags = {});

  const SuperNet& net() const { return net_; }
  const ControllerDims& dims() const { return dims_; }
  const CostModel& cost_model() const { return cost_; }
  const ModelFlags& flags() const { return flags_; }

  // Creates every parameter (edge modules first, then controller) with seeded
  // Glorot-uniform weights and zero biases.
  void init_params(ParamStore& store, Rng& rng) const;

 private:
  SuperNet net_;
  ControllerDims dims_;
  CostModel cost_;
  ModelFlags flags_;
};

// Gamma head: sigma(W_h z + b_h) over the edge support, on the tape.
Var gamma_from_state(Tape& tape, const SanasModel& model, ParamStore& store, Var z);
// Forward-only convenience.
Tensor gamma_from_state(const SanasModel& model, ParamStore& store, const Tensor& z);

enum class StepMode {
  kSample,  // H ~ Bernoulli(Gamma), training
  kArgmax,  // H = mode(Gamma), inference
  kForced,  // H supplied by the caller, controller still runs
  kStatic   // H supplied, no controller at all (plain fixed-architecture net)
};

struct SequenceMode {
  StepMode mode = StepMode::kArgmax;
  Rng* rng = nullptr;                               // required for kSample
  const std::vector<ArchSample>* forced = nullptr;  // required for kForced/kStatic
};

struct StepOutput {
  Tensor logits;
  ArchSample arch;
  double log_prob = 0.0;   // log P(H_t | z_t); 0 in static mode
  std::uint64_t cost = 0;  // FLOPs charged for this step
  Tensor phi;              // projected feature vector (zeros if unreachable)
  Tensor z_next;
};

// Per-timestep records needed to assemble the training gradient.
struct EpisodeTrace {
  std::vector<double> log_probs;
  std::vector<double> deltas;
  std::vector<std::uint64_t> costs;
  std::size_t length() const { return deltas.size(); }
};

struct Frame {
  double start = 0.0;
  Tensor features;  // graph input shape, e.g. (1,40,98)
  int label = -1;   // class index; -1 when unlabeled
};

// One recorded episode: the tape spans every timestep so gradients flow
// through the recurrence, plus the per-step scalar handles.
struct Episode {
  Tape tape;
  EpisodeTrace trace;
  std::vector<StepOutput> steps;
  std::vector<Var> delta_vars;  // invalid entries for unlabeled frames
  std::vector<Var> logp_vars;
  StepMode mode = StepMode::kArgmax;
};

// Tape-level single step; z_prev is a tape var, the returned handles live on
// the same tape.
struct TapeStep {
  StepOutput out;
  Var delta;  // invalid if no label
  Var logp;   // invalid in static mode
  Var z_next; // invalid in static mode
};
TapeStep sanas_step_on_tape(Tape& tape, const SanasModel& model, ParamStore& store, Var z_prev,
                            const Tensor& x, int label, const SequenceMode& mode,
                            std::size_t step_index);

// Spec-level single step on a scratch tape.
StepOutput sanas_step(const SanasModel& model, ParamStore& store, const ControllerState& state,
                      const Tensor& x, const SequenceMode& mode);

// Left-to-right recurrence from the zero state over a non-empty frame list,
// recorded on one tape.
Episode run_sequence(const SanasModel& model, ParamStore& store, const std::vector<Frame>& frames,
                     const SequenceMode& mode);

// Same recurrence with one scratch tape per step (O(1) memory); for long
// streams and inference. The callback sees each StepOutput in order.
void run_streaming(const SanasModel& model, ParamStore& store, const std::vector<Frame>& frames,
                   const SequenceMode& mode,
                   const std::function<void(std::size_t, const StepOutput&)>& callback);

// Evaluate one concrete architecture on one input: (logits, projected phi).
std::pair<Tensor, Tensor> evaluate_architecture(const SanasModel& model, ParamStore& store,
                                                const ArchSample& h, const Tensor& x);

}  // namespace sanas
