#include "fedsim/federation.hpp"

#include <cmath>
#include <stdexcept>

namespace fedsim::federation {
namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void check_devices(const std::vector<DeviceState>& devices) {
  require(!devices.empty(), "round: empty device set");
  for (const auto& d : devices)
    require(d.params.size() == devices[0].params.size(), "round: parameter shape mismatch");
}

MsiMessage vec_msg(int origin, MsiKind kind, Vec values, int element_bits) {
  MsiMessage m;
  m.origin = origin;
  m.kind = kind;
  m.element_bits = element_bits;
  m.values = std::move(values);
  return m;
}

MsiMessage table_msg(int origin, MsiKind kind, nn::LabelTable table, int element_bits) {
  MsiMessage m;
  m.origin = origin;
  m.kind = kind;
  m.element_bits = element_bits;
  m.table = std::move(table);
  return m;
}

void apply_hook(const MsiHook& hook, MsiMessage& m) {
  if (hook) hook(m);
}

bool is_checkpoint(int epoch, int tau) {
  if (tau >= kNeverCheckpoint) return false;
  return epoch % tau == 0;
}

// Uplink gradient messages, transformed, then averaged in device order.
Vec gather_mean(std::vector<DeviceState>& devices, MsiKind kind,
                const std::vector<Vec>& payloads, const Hooks& hooks, RoundMsi& msi) {
  std::vector<Vec> received;
  received.reserve(payloads.size());
  for (std::size_t i = 0; i < payloads.size(); ++i) {
    MsiMessage m = vec_msg(devices[i].id, kind, payloads[i], hooks.element_bits);
    apply_hook(hooks.up, m);
    received.push_back(m.values);
    msi.up.push_back(std::move(m));
  }
  return vec::mean_of(received);
}

// Broadcast of the aggregate; returns the payload the devices actually see.
Vec broadcast(MsiKind kind, Vec payload, const Hooks& hooks, RoundMsi& msi) {
  MsiMessage m = vec_msg(-1, kind, std::move(payload), hooks.element_bits);
  apply_hook(hooks.down, m);
  Vec seen = m.values;
  msi.down.push_back(std::move(m));
  return seen;
}

}  // namespace

std::size_t MsiMessage::element_count() const {
  if (kind == MsiKind::kLogitTable || kind == MsiKind::kJacobianTable)
    return static_cast<std::size_t>(table.present_rows()) * table.row_width;
  return values.size();
}

void HyperParams::validate() const {
  require(eta > 0.0, "protocol.hyper.eta: must be > 0");
  require(tau >= 1, "protocol.hyper.tau: must be >= 1");
  require(alpha >= 0.0 && alpha < 1.0, "protocol.hyper.alpha: must be in [0, 1)");
  require(beta > 0.0 && beta <= 1.0, "protocol.hyper.beta: must be in (0, 1]");
  require(rho > 0.0, "protocol.hyper.rho: must be > 0");
  require(temperature > 0.0, "protocol.hyper.temperature: must be > 0");
  require(batch_size >= 0, "protocol.hyper.batch_size: must be >= 0");
  require(eta_decay_rounds >= 0, "protocol.hyper.eta_decay_rounds: must be >= 0");
}

double HyperParams::eta_at(int epoch) const {
  if (eta_decay_rounds <= 0) return eta;
  return eta / (1.0 + static_cast<double>(epoch - 1) / eta_decay_rounds);
}

void MixingMatrix::validate() const {
  require(devices >= 1, "mixing: empty");
  require(w.size() == static_cast<std::size_t>(devices) * devices, "mixing: bad shape");
  for (int i = 0; i < devices; ++i) {
    require(at(i, i) > 0.0, "mixing: diagonal entries must be positive");
    double row_sum = 0.0;
    for (int j = 0; j < devices; ++j) {
      require(at(i, j) >= 0.0, "mixing: entries must be nonnegative");
      require(at(i, j) == at(j, i), "mixing: matrix must be symmetric");
      row_sum += at(i, j);
    }
    require(row_sum > 0.0, "mixing: zero row sum");
  }
}

MixingMatrix MixingMatrix::identity(int devices) {
  MixingMatrix m;
  m.devices = devices;
  m.w.assign(static_cast<std::size_t>(devices) * devices, 0.0);
  for (int i = 0; i < devices; ++i) m.at(i, i) = 1.0;
  return m;
}

MixingMatrix MixingMatrix::full(int devices) {
  MixingMatrix m;
  m.devices = devices;
  m.w.assign(static_cast<std::size_t>(devices) * devices, 1.0);
  return m;
}

MixingMatrix MixingMatrix::ring(int devices) {
  MixingMatrix m = identity(devices);
  for (int i = 0; i < devices; ++i) {
    m.at(i, (i + 1) % devices) = 1.0;
    m.at((i + 1) % devices, i) = 1.0;
  }
  return m;
}

RoundMsi csgd_round(std::vector<DeviceState>& devices, const GradFn& grad, const HyperParams& hp,
                    int epoch, const Hooks& hooks) {
  check_devices(devices);
  RoundMsi msi;
  std::vector<Vec> grads;
  grads.reserve(devices.size());
  for (std::size_t i = 0; i < devices.size(); ++i)
    grads.push_back(grad(static_cast<int>(i), devices[i].params).second);
  Vec mean = gather_mean(devices, MsiKind::kGradient, grads, hooks, msi);
  Vec applied = broadcast(MsiKind::kGradient, std::move(mean), hooks, msi);
  double eta = hp.eta_at(epoch);
  for (auto& d : devices) d.params = nn::sgd_step(d.params, applied, eta);
  return msi;
}

RoundMsi esgd_round(std::vector<DeviceState>& devices, EsgdState& state, const GradFn& grad,
                    const HyperParams& hp, int epoch, const Hooks& hooks) {
  check_devices(devices);
  require(state.anchor.size() == devices[0].params.size(), "esgd: anchor shape mismatch");
  RoundMsi msi;
  std::vector<Vec> weights;
  for (std::size_t i = 0; i < devices.size(); ++i) weights.push_back(devices[i].params);
  Vec mean_w = gather_mean(devices, MsiKind::kWeights, weights, hooks, msi);
  for (std::size_t j = 0; j < state.anchor.size(); ++j)
    state.anchor[j] = (1.0 - hp.beta) * state.anchor[j] + hp.beta * mean_w[j];
  Vec anchor_seen = broadcast(MsiKind::kWeights, state.anchor, hooks, msi);
  double eta = hp.eta_at(epoch);
  for (std::size_t i = 0; i < devices.size(); ++i) {
    Vec g = grad(static_cast<int>(i), devices[i].params).second;
    Vec& w = devices[i].params;
    for (std::size_t j = 0; j < w.size(); ++j)
      w[j] = (1.0 - hp.alpha) * w[j] - eta * g[j] + hp.alpha * anchor_seen[j];
  }
  return msi;
}

RoundMsi favg_round(std::vector<DeviceState>& devices, const GradFn& grad, const HyperParams& hp,
                    int epoch, const Hooks& hooks) {
  check_devices(devices);
  RoundMsi msi;
  double eta = hp.eta_at(epoch);
  if (!is_checkpoint(epoch, hp.tau)) {
    for (std::size_t i = 0; i < devices.size(); ++i) {
      Vec g = grad(static_cast<int>(i), devices[i].params).second;
      devices[i].params = nn::sgd_step(devices[i].params, g, eta);
    }
    return msi;
  }
  std::vector<Vec> grads;
  for (std::size_t i = 0; i < devices.size(); ++i)
    grads.push_back(grad(static_cast<int>(i), devices[i].params).second);
  Vec mean = gather_mean(devices, MsiKind::kGradient, grads, hooks, msi);
  Vec applied = broadcast(MsiKind::kGradient, std::move(mean), hooks, msi);
  for (auto& d : devices) d.params = nn::sgd_step(d.params, applied, eta);
  return msi;
}

RoundMsi fsvrg_round(std::vector<DeviceState>& devices, FsvrgState& state, const GradFn& grad,
                     const GradFn& full_grad, const HyperParams& hp, int epoch,
                     const Hooks& hooks) {
  check_devices(devices);
  require(state.anchor.size() == devices[0].params.size(), "fsvrg: anchor shape mismatch");
  RoundMsi msi;
  double eta = hp.eta_at(epoch);
  if (!is_checkpoint(epoch, hp.tau)) {
    for (std::size_t i = 0; i < devices.size(); ++i) {
      Vec g = grad(static_cast<int>(i), devices[i].params).second;
      devices[i].params = nn::sgd_step(devices[i].params, g, eta);
    }
    return msi;
  }

  // Tracked global weight absorbs shard-weighted local deltas first.
  std::size_t total = 0;
  for (const auto& d : devices) total += d.shard.empty() ? 1 : d.shard.size();
  std::vector<Vec> weights;
  for (const auto& d : devices) weights.push_back(d.params);
  std::vector<Vec> received_w;
  for (std::size_t i = 0; i < devices.size(); ++i) {
    MsiMessage m = vec_msg(devices[i].id, MsiKind::kWeights, weights[i], hooks.element_bits);
    apply_hook(hooks.up, m);
    received_w.push_back(m.values);
    msi.up.push_back(std::move(m));
  }
  for (std::size_t i = 0; i < devices.size(); ++i) {
    double share = static_cast<double>(devices[i].shard.empty() ? 1 : devices[i].shard.size()) /
                   static_cast<double>(total);
    for (std::size_t j = 0; j < state.anchor.size(); ++j)
      state.anchor[j] += share * (received_w[i][j] - state.anchor[j]);
  }
  Vec anchor_seen = broadcast(MsiKind::kWeights, state.anchor, hooks, msi);

  // Full-shard gradients at the tracked weight feed the global mean.
  std::vector<Vec> anchor_grads;
  for (std::size_t i = 0; i < devices.size(); ++i)
    anchor_grads.push_back(full_grad(static_cast<int>(i), anchor_seen).second);
  Vec mean_anchor_grad = gather_mean(devices, MsiKind::kGradient, anchor_grads, hooks, msi);
  Vec mean_seen = broadcast(MsiKind::kGradient, std::move(mean_anchor_grad), hooks, msi);

  for (std::size_t i = 0; i < devices.size(); ++i) {
    Vec g_local = grad(static_cast<int>(i), devices[i].params).second;
    Vec g_anchor = grad(static_cast<int>(i), anchor_seen).second;
    Vec& w = devices[i].params;
    for (std::size_t j = 0; j < w.size(); ++j)
      w[j] -= eta * (mean_seen[j] + g_local[j] - g_anchor[j]);
  }
  return msi;
}

nn::LabelTable exclusive_mean_table(const std::vector<nn::LabelTable>& tables, int self) {
  require(!tables.empty(), "exclusive_mean_table: empty");
  nn::LabelTable out = nn::make_table(tables[0].label_count, tables[0].row_width);
  for (int l = 0; l < out.label_count; ++l) {
    int contributors = 0;
    auto row = out.row(l);
    for (std::size_t j = 0; j < tables.size(); ++j) {
      if (static_cast<int>(j) == self || !tables[j].present(l)) continue;
      auto src = tables[j].row(l);
      for (int c = 0; c < out.row_width; ++c) row[c] += src[c];
      ++contributors;
    }
    if (contributors > 0) {
      for (int c = 0; c < out.row_width; ++c) row[c] /= contributors;
      out.counts[l] = contributors;
    }
  }
  return out;
}

namespace {

// Shared body of the distillation protocols. `jacobian` switches the table
// kind and regularizer between logit and input-Jacobian matching.
RoundMsi distill_table_round(std::vector<DeviceState>& devices, FdState& state,
                             const DistillContext& ctx, const HyperParams& hp, int epoch,
                             const Hooks& hooks, bool jacobian) {
  check_devices(devices);
  require(devices.size() >= 2, "fd: need at least 2 devices");
  require(ctx.spec != nullptr && ctx.data != nullptr && ctx.batches != nullptr,
          "fd: incomplete context");
  int M = static_cast<int>(devices.size());
  int L = ctx.spec->output_dim();
  int width = jacobian ? L * ctx.spec->input_dim() : L;
  if (state.accum.empty()) {
    state.accum.assign(M, nn::make_table(L, width));
    state.global.assign(M, nn::make_table(L, width));
    state.has_global.assign(M, false);
  }
  MsiKind kind = jacobian ? MsiKind::kJacobianTable : MsiKind::kLogitTable;
  RoundMsi msi;

  // Fold this epoch's per-label means into the running accumulators
  // (sample-count weighted, reset at each checkpoint).
  for (int i = 0; i < M; ++i) {
    nn::Batch batch = ctx.data->batch_of((*ctx.batches)[i]);
    nn::LabelTable t = jacobian
                           ? nn::input_jacobian_table(*ctx.spec, devices[i].params, batch,
                                                      hp.temperature)
                           : nn::logit_table(*ctx.spec, devices[i].params, batch, hp.temperature);
    nn::LabelTable& acc = state.accum[i];
    for (int l = 0; l < L; ++l) {
      if (!t.present(l)) continue;
      auto src = t.row(l);
      auto dst = acc.row(l);
      std::int64_t n_old = acc.counts[l];
      std::int64_t n_new = n_old + t.counts[l];
      for (int c = 0; c < width; ++c)
        dst[c] = (dst[c] * n_old + src[c] * t.counts[l]) / static_cast<double>(n_new);
      acc.counts[l] = n_new;
    }
  }

  bool checkpoint = is_checkpoint(epoch, hp.tau);
  if (checkpoint) {
    std::vector<nn::LabelTable> received;
    for (int i = 0; i < M; ++i) {
      MsiMessage m = table_msg(devices[i].id, kind, state.accum[i], hooks.element_bits);
      apply_hook(hooks.up, m);
      received.push_back(m.table);
      msi.up.push_back(std::move(m));
    }
    for (int i = 0; i < M; ++i) {
      nn::LabelTable global = exclusive_mean_table(received, i);
      MsiMessage m = table_msg(-1, kind, std::move(global), hooks.element_bits);
      apply_hook(hooks.down, m);
      state.global[i] = m.table;
      state.has_global[i] = true;
      msi.down.push_back(std::move(m));
    }
    for (int i = 0; i < M; ++i) state.accum[i] = nn::make_table(L, width);
  }

  // The distillation term is checkpoint-gated and uses the freshly exchanged
  // tables; epochs in between take plain local steps.
  double eta = hp.eta_at(epoch);
  for (int i = 0; i < M; ++i) {
    nn::Batch batch = ctx.data->batch_of((*ctx.batches)[i]);
    auto [loss, g] = nn::loss_and_grad(*ctx.spec, devices[i].params, batch);
    (void)loss;
    if (checkpoint && state.has_global[i]) {
      // Distillation gap against the peers' row for each sample's own label;
      // rows absent at every peer contribute nothing.
      nn::ParamVector reg(devices[i].params.size(), 0.0);
      int used = 0;
      for (int s = 0; s < batch.size(); ++s) {
        int y = batch.labels[s];
        if (!state.global[i].present(y)) continue;
        if (jacobian) {
          nn::distill_jacobian_grad(*ctx.spec, devices[i].params, batch.row(s), hp.temperature,
                                    state.global[i].row(y), reg);
        } else {
          nn::distill_logit_grad(*ctx.spec, devices[i].params, batch.row(s), hp.temperature,
                                 state.global[i].row(y), hp.reg_kind, reg);
        }
        ++used;
      }
      if (used > 0) vec::axpy(1.0 / used, reg, g);
    }
    devices[i].params = nn::sgd_step(devices[i].params, g, eta);
  }
  return msi;
}

}  // namespace

RoundMsi cd_round(std::vector<DeviceState>& devices, CdState& state, const DistillContext& ctx,
                  const HyperParams& hp, int epoch, const Hooks& hooks) {
  check_devices(devices);
  require(ctx.spec != nullptr && ctx.data != nullptr && ctx.batches != nullptr,
          "cd: incomplete context");
  int M = static_cast<int>(devices.size());
  if (state.teacher.empty()) {
    state.teacher.assign(M, Vec());
    state.has_teacher.assign(M, false);
  }
  RoundMsi msi;

  bool checkpoint = is_checkpoint(epoch, hp.tau);
  if (checkpoint) {
    std::vector<Vec> weights;
    for (const auto& d : devices) weights.push_back(d.params);
    Vec mean_w = gather_mean(devices, MsiKind::kWeights, weights, hooks, msi);
    Vec seen = broadcast(MsiKind::kWeights, std::move(mean_w), hooks, msi);
    for (int i = 0; i < M; ++i) {
      state.teacher[i] = seen;
      state.has_teacher[i] = true;
    }
  }

  // Checkpoint epochs take the distillation-regularized step against the
  // just-refreshed teacher; other epochs are plain local steps.
  double eta = hp.eta_at(epoch);
  for (int i = 0; i < M; ++i) {
    nn::Batch batch = ctx.data->batch_of((*ctx.batches)[i]);
    auto [loss, g] = nn::loss_and_grad(*ctx.spec, devices[i].params, batch);
    (void)loss;
    if (checkpoint && state.has_teacher[i]) {
      nn::ParamVector reg(devices[i].params.size(), 0.0);
      for (int s = 0; s < batch.size(); ++s) {
        Vec teacher_out = nn::softmax_temperature(
            nn::forward(*ctx.spec, state.teacher[i], batch.row(s)), hp.temperature);
        nn::distill_logit_grad(*ctx.spec, devices[i].params, batch.row(s), hp.temperature,
                               teacher_out, hp.reg_kind, reg);
      }
      vec::axpy(1.0 / batch.size(), reg, g);
    }
    devices[i].params = nn::sgd_step(devices[i].params, g, eta);
  }
  return msi;
}

RoundMsi fd_round(std::vector<DeviceState>& devices, FdState& state, const DistillContext& ctx,
                  const HyperParams& hp, int epoch, const Hooks& hooks) {
  return distill_table_round(devices, state, ctx, hp, epoch, hooks, /*jacobian=*/false);
}

RoundMsi fjd_round(std::vector<DeviceState>& devices, FdState& state, const DistillContext& ctx,
                   const HyperParams& hp, int epoch, const Hooks& hooks) {
  return distill_table_round(devices, state, ctx, hp, epoch, hooks, /*jacobian=*/true);
}

RoundMsi dsgd_round(std::vector<DeviceState>& devices, const MixingMatrix& mixing,
                    const GradFn& grad, const HyperParams& hp, int epoch, const Hooks& hooks) {
  check_devices(devices);
  mixing.validate();
  int M = static_cast<int>(devices.size());
  require(mixing.devices == M, "dsgd: mixing size does not match device count");
  RoundMsi msi;

  // Weight messages travel along nonzero off-diagonal links; receivers mix the
  // transformed payloads. received[i][j] is what device i sees of device j.
  std::vector<std::vector<Vec>> received(M, std::vector<Vec>(M));
  for (int j = 0; j < M; ++j) received[j][j] = devices[j].params;
  for (int j = 0; j < M; ++j) {
    for (int i = 0; i < M; ++i) {
      if (i == j || mixing.at(j, i) == 0.0) continue;
      MsiMessage m = vec_msg(devices[j].id, MsiKind::kWeights, devices[j].params,
                             hooks.element_bits);
      apply_hook(hooks.up, m);
      received[i][j] = m.values;
      msi.up.push_back(std::move(m));
    }
  }

  double eta = hp.eta_at(epoch);
  std::vector<Vec> next(M);
  for (int i = 0; i < M; ++i) {
    double row_sum = 0.0;
    Vec mixed(devices[i].params.size(), 0.0);
    for (int j = 0; j < M; ++j) {
      double a = mixing.at(j, i);
      if (a == 0.0) continue;
      row_sum += a;
      vec::axpy(a, received[i][j], mixed);
    }
    vec::scale(mixed, 1.0 / row_sum);
    Vec g = grad(i, devices[i].params).second;
    next[i] = nn::sgd_step(mixed, g, eta);
  }
  for (int i = 0; i < M; ++i) devices[i].params = std::move(next[i]);
  return msi;
}

namespace {

// Minimizes loss(w) + lin.w + (rho/2) sum_nb ||w - w_nb||^2. Closed form for
// elementwise quadratics, otherwise gradient descent with backtracking.
Vec solve_penalized(const LocalObjective& obj, const Vec& start, const Vec& lin,
                    const std::vector<const Vec*>& neighbors, double rho, int max_steps,
                    double tol) {
  std::size_t n = start.size();
  double nb = static_cast<double>(neighbors.size());
  Vec nb_sum(n, 0.0);
  for (const Vec* w : neighbors) vec::axpy(1.0, *w, nb_sum);

  if (obj.is_quadratic) {
    Vec w(n);
    for (std::size_t j = 0; j < n; ++j)
      w[j] = (obj.quad_a[j] * obj.quad_c[j] - lin[j] + rho * nb_sum[j]) /
             (obj.quad_a[j] + rho * nb);
    return w;
  }

  auto objective_grad = [&](const Vec& w) {
    auto [loss, g] = obj.loss_grad(w);
    double val = loss;
    for (std::size_t j = 0; j < n; ++j) {
      val += lin[j] * w[j];
      g[j] += lin[j] + rho * (nb * w[j] - nb_sum[j]);
    }
    for (const Vec* wn : neighbors) {
      for (std::size_t j = 0; j < n; ++j) {
        double dwe = w[j] - (*wn)[j];
        val += 0.5 * rho * dwe * dwe;
      }
    }
    return std::make_pair(val, std::move(g));
  };

  Vec w = start;
  auto [val, g] = objective_grad(w);
  double step = 1.0 / (1.0 + rho * nb);
  for (int it = 0; it < max_steps; ++it) {
    if (vec::norm2(g) <= tol) break;
    Vec trial(n);
    double trial_val = 0.0;
    Vec trial_g;
    int backtracks = 0;
    while (true) {
      for (std::size_t j = 0; j < n; ++j) trial[j] = w[j] - step * g[j];
      std::tie(trial_val, trial_g) = objective_grad(trial);
      if (std::isfinite(trial_val) && trial_val <= val) break;
      step *= 0.5;
      if (++backtracks > 60) return w;
    }
    w = trial;
    val = trial_val;
    g = std::move(trial_g);
    step *= 1.5;
  }
  return w;
}

}  // namespace

RoundMsi gadmm_round(std::vector<DeviceState>& devices, GadmmState& state,
                     const std::vector<LocalObjective>& objectives, const HyperParams& hp,
                     const Hooks& hooks) {
  check_devices(devices);
  int M = static_cast<int>(devices.size());
  require(M >= 2, "gadmm: need at least 2 devices");
  require(static_cast<int>(objectives.size()) == M, "gadmm: one objective per device");
  std::size_t n = devices[0].params.size();
  if (state.duals.empty()) state.duals.assign(M - 1, Vec(n, 0.0));
  require(static_cast<int>(state.duals.size()) == M - 1, "gadmm: dual count mismatch");
  RoundMsi msi;

  // Edge e sits between devices e and e+1 (0-based). Device i's linear dual
  // term is lambda_i - lambda_{i-1}, dropping edges that do not exist.
  auto linear_term = [&](int i) {
    Vec lin(n, 0.0);
    if (i > 0) vec::axpy(-1.0, state.duals[i - 1], lin);
    if (i < M - 1) vec::axpy(1.0, state.duals[i], lin);
    return lin;
  };

  // neighbor_view[i][k] holds what device i received from neighbor k.
  std::vector<std::vector<Vec>> neighbor_view(M);
  auto send = [&](int from, int to) {
    MsiMessage m = vec_msg(devices[from].id, MsiKind::kWeights, devices[from].params,
                           hooks.element_bits);
    apply_hook(hooks.up, m);
    neighbor_view[to].push_back(m.values);
    msi.up.push_back(std::move(m));
  };

  // Heads are even 0-based (odd 1-based) positions; they use the tails'
  // current values, which each tail sent at the end of the previous round.
  // Modeling: tails' current weights are read directly here and the head
  // broadcast afterwards carries the transformed payloads the tails consume.
  for (int i = 0; i < M; i += 2) {
    std::vector<const Vec*> nbrs;
    if (i > 0) nbrs.push_back(&devices[i - 1].params);
    if (i < M - 1) nbrs.push_back(&devices[i + 1].params);
    Vec lin = linear_term(i);
    devices[i].params = solve_penalized(objectives[i], devices[i].params, lin, nbrs, hp.rho,
                                        hp.gadmm_inner_steps, hp.gadmm_inner_tol);
  }
  for (int i = 0; i < M; i += 2) {
    if (i > 0) send(i, i - 1);
    if (i < M - 1) send(i, i + 1);
  }

  for (int i = 1; i < M; i += 2) {
    std::vector<const Vec*> nbrs;
    for (const Vec& v : neighbor_view[i]) nbrs.push_back(&v);
    Vec lin = linear_term(i);
    devices[i].params = solve_penalized(objectives[i], devices[i].params, lin, nbrs, hp.rho,
                                        hp.gadmm_inner_steps, hp.gadmm_inner_tol);
  }
  for (int i = 1; i < M; i += 2) {
    if (i > 0) send(i, i - 1);
    if (i < M - 1 && i + 1 < M) send(i, i + 1);
  }

  state.last_residual_norms.assign(M - 1, 0.0);
  for (int e = 0; e < M - 1; ++e) {
    Vec residual = vec::sub(devices[e].params, devices[e + 1].params);
    state.last_residual_norms[e] = vec::norm2(residual);
    vec::axpy(hp.rho, residual, state.duals[e]);
  }
  return msi;
}

}  // namespace fedsim::federation
