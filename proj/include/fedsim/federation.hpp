#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/datagen.hpp"
#include "fedsim/nn.hpp"

namespace fedsim::federation {

using vec::Vec;

enum class MsiKind { kGradient, kWeights, kLogitTable, kJacobianTable, kGpdGradient };

// One transmitted unit of model state information. Vector payloads carry
// gradients, weights, or GPD fit summaries; table payloads carry per-label
// logit or Jacobian means.
struct MsiMessage {
  int origin = 0;
  MsiKind kind = MsiKind::kGradient;
  int element_bits = 32;
  Vec values;
  nn::LabelTable table;

  std::size_t element_count() const;
};

struct RoundMsi {
  std::vector<MsiMessage> up;    // device transmissions
  std::vector<MsiMessage> down;  // helper transmissions (empty for d-d rounds)
};

// Applied to each message in flight (quantization, privacy noise). Receivers
// only ever see the transformed payload.
using MsiHook = std::function<void(MsiMessage&)>;

struct Hooks {
  MsiHook up;    // may be empty
  MsiHook down;  // may be empty
  int element_bits = 32;
};

// Local loss/gradient at a given parameter point, evaluated on the device's
// current batch. The batch is fixed by the caller for the duration of a round
// so variance-reduction terms cancel exactly.
using GradFn = std::function<std::pair<double, Vec>(int device, const Vec& at)>;

struct DeviceState {
  int id = 0;
  Vec params;
  std::vector<int> shard;
};

struct HyperParams {
  double eta = 0.05;
  int tau = 1;                  // checkpoint interval in epochs
  double alpha = 0.1;           // elastic pull toward the tracked average
  double beta = 0.9;            // tracked-average smoothing
  double rho = 1.0;             // consensus penalty
  double temperature = 1.0;     // distillation softmax temperature
  nn::RegKind reg_kind = nn::RegKind::kMse;
  int batch_size = 0;           // 0 = full shard
  int eta_decay_rounds = 0;     // 0 = constant rate
  int gadmm_inner_steps = 500;
  double gadmm_inner_tol = 1e-8;

  void validate() const;  // throws std::invalid_argument with the field name
  // eta_k = eta / (1 + (k-1)/eta_decay_rounds) for 1-based epoch k.
  double eta_at(int epoch) const;
};

struct MixingMatrix {
  int devices = 0;
  std::vector<double> w;  // devices x devices, row major

  double at(int i, int j) const { return w[static_cast<std::size_t>(i) * devices + j]; }
  double& at(int i, int j) { return w[static_cast<std::size_t>(i) * devices + j]; }
  void validate() const;

  static MixingMatrix identity(int devices);
  static MixingMatrix full(int devices);
  static MixingMatrix ring(int devices);
};

// --- Gradient / weight exchange rounds (helper-device split) ---------------

// Every device applies the same averaged gradient.
RoundMsi csgd_round(std::vector<DeviceState>& devices, const GradFn& grad, const HyperParams& hp,
                    int epoch, const Hooks& hooks = {});

// w <- (1-alpha) w - eta g(w) + alpha anchor; anchor tracks the mean weight.
struct EsgdState {
  Vec anchor;  // initialized to the common starting point
};
RoundMsi esgd_round(std::vector<DeviceState>& devices, EsgdState& state, const GradFn& grad,
                    const HyperParams& hp, int epoch, const Hooks& hooks = {});

// Averaged-gradient step at epochs k with k mod tau == 0 (1-based), local
// steps otherwise. tau = kNeverCheckpoint disables exchanges entirely.
inline constexpr int kNeverCheckpoint = 1 << 30;
RoundMsi favg_round(std::vector<DeviceState>& devices, const GradFn& grad, const HyperParams& hp,
                    int epoch, const Hooks& hooks = {});

// Variance-reduced checkpoint step around a tracked global weight. `full_grad`
// evaluates the device's gradient on its whole shard; `grad` uses the round's
// batch for the correction pair.
struct FsvrgState {
  Vec anchor;
};
RoundMsi fsvrg_round(std::vector<DeviceState>& devices, FsvrgState& state, const GradFn& grad,
                     const GradFn& full_grad, const HyperParams& hp, int epoch,
                     const Hooks& hooks = {});

// --- Distillation rounds ----------------------------------------------------

// Shared data context for the distillation protocols.
struct DistillContext {
  const nn::ModelSpec* spec = nullptr;
  const datagen::Dataset* data = nullptr;
  // Per-device sample indices forming this round's batch.
  const std::vector<std::vector<int>>* batches = nullptr;
};

// Weight exchange at checkpoints; the downloaded average acts as a teacher
// whose per-sample outputs regularize the checkpoint step.
struct CdState {
  std::vector<Vec> teacher;
  std::vector<bool> has_teacher;
};
RoundMsi cd_round(std::vector<DeviceState>& devices, CdState& state, const DistillContext& ctx,
                  const HyperParams& hp, int epoch, const Hooks& hooks = {});

// Per-label mean logit (or Jacobian) tables accumulate between checkpoints and
// are exchanged at them; the checkpoint step is regularized against the global
// table row matching each sample's label. The global table for device i
// averages the other devices' tables row by row, skipping absent rows.
struct FdState {
  std::vector<nn::LabelTable> accum;
  std::vector<nn::LabelTable> global;
  std::vector<bool> has_global;
};
RoundMsi fd_round(std::vector<DeviceState>& devices, FdState& state, const DistillContext& ctx,
                  const HyperParams& hp, int epoch, const Hooks& hooks = {});
RoundMsi fjd_round(std::vector<DeviceState>& devices, FdState& state, const DistillContext& ctx,
                   const HyperParams& hp, int epoch, const Hooks& hooks = {});

// Exclusive per-row mean of the other devices' tables (rows absent everywhere
// stay absent). Exposed for tests.
nn::LabelTable exclusive_mean_table(const std::vector<nn::LabelTable>& tables, int self);

// --- Device-to-device rounds ------------------------------------------------

// w_i <- (row-normalized neighbor average) - eta g(w_i); weights travel only
// along nonzero links.
RoundMsi dsgd_round(std::vector<DeviceState>& devices, const MixingMatrix& mixing,
                    const GradFn& grad, const HyperParams& hp, int epoch,
                    const Hooks& hooks = {});

// Local objective for consensus rounds. When `is_quadratic`, loss(w) =
// 0.5 * sum_j quad_a[j] * (w[j] - quad_c[j])^2 and the penalized subproblem is
// solved in closed form; otherwise gradient descent runs to tolerance.
struct LocalObjective {
  std::function<std::pair<double, Vec>(const Vec&)> loss_grad;
  bool is_quadratic = false;
  Vec quad_a;
  Vec quad_c;
};

// Chain topology; odd 1-based positions are heads, even are tails. Heads solve
// their penalized subproblems in parallel and broadcast, tails follow with the
// fresh head values, then every edge dual takes lambda += rho (w_i - w_{i+1}).
struct GadmmState {
  std::vector<Vec> duals;  // one per chain edge (device i, device i+1)
  std::vector<double> last_residual_norms;
};
RoundMsi gadmm_round(std::vector<DeviceState>& devices, GadmmState& state,
                     const std::vector<LocalObjective>& objectives, const HyperParams& hp,
                     const Hooks& hooks = {});

}  // namespace fedsim::federation
