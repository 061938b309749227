#include "fedsim/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedsim::nn {
namespace {

double act_value(Activation a, double z) {
  if (a == Activation::kRelu) return z > 0.0 ? z : 0.0;
  return 1.0 / (1.0 + std::exp(-z));
}

double act_deriv(Activation a, double z) {
  if (a == Activation::kRelu) return z > 0.0 ? 1.0 : 0.0;
  double s = 1.0 / (1.0 + std::exp(-z));
  return s * (1.0 - s);
}

double act_second_deriv(Activation a, double z) {
  if (a == Activation::kRelu) return 0.0;
  double s = 1.0 / (1.0 + std::exp(-z));
  return s * (1.0 - s) * (1.0 - 2.0 * s);
}

// Offset of layer t's weight block; biases follow the weights.
struct Layout {
  std::vector<std::size_t> weight_off;
  std::vector<std::size_t> bias_off;
};

Layout layout_of(const ModelSpec& spec) {
  Layout l;
  std::size_t off = 0;
  for (int t = 0; t < spec.layer_count(); ++t) {
    std::size_t in = spec.layer_widths[t];
    std::size_t out = spec.layer_widths[t + 1];
    l.weight_off.push_back(off);
    l.bias_off.push_back(off + in * out);
    off += in * out + out;
  }
  return l;
}

struct Trace {
  std::vector<Vec> acts;     // acts[0] = input, acts[t] = output of layer t-1
  std::vector<Vec> preacts;  // preacts[t] = z of layer t
};

Trace forward_trace(const ModelSpec& spec, const ParamVector& params, std::span<const double> x) {
  if (static_cast<int>(x.size()) != spec.input_dim())
    throw std::invalid_argument("forward: input length does not match model input width");
  if (params.size() != spec.param_count())
    throw std::invalid_argument("forward: parameter vector length mismatch");
  Layout lay = layout_of(spec);
  Trace tr;
  tr.acts.emplace_back(x.begin(), x.end());
  tr.preacts.resize(spec.layer_count());
  for (int t = 0; t < spec.layer_count(); ++t) {
    int in = spec.layer_widths[t];
    int out = spec.layer_widths[t + 1];
    const double* w = params.data() + lay.weight_off[t];
    const double* b = params.data() + lay.bias_off[t];
    const Vec& a = tr.acts[t];
    Vec z(out);
    for (int o = 0; o < out; ++o) {
      double s = b[o];
      const double* wrow = w + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) s += wrow[i] * a[i];
      z[o] = s;
    }
    tr.preacts[t] = z;
    if (t + 1 < spec.layer_count()) {
      Vec a_next(out);
      for (int o = 0; o < out; ++o) a_next[o] = act_value(spec.activation, z[o]);
      tr.acts.push_back(std::move(a_next));
    } else {
      tr.acts.push_back(std::move(z));  // logits pass through unchanged
    }
  }
  return tr;
}

// Reverse pass from d(loss)/d(logits); accumulates into grad when non-null and
// writes d(loss)/d(input) into dx when non-null.
void backprop(const ModelSpec& spec, const ParamVector& params, const Trace& tr,
              const Vec& dlogits, ParamVector* grad, Vec* dx) {
  Layout lay = layout_of(spec);
  Vec delta = dlogits;
  for (int t = spec.layer_count() - 1; t >= 0; --t) {
    int in = spec.layer_widths[t];
    int out = spec.layer_widths[t + 1];
    const double* w = params.data() + lay.weight_off[t];
    const Vec& a = tr.acts[t];
    if (grad != nullptr) {
      double* gw = grad->data() + lay.weight_off[t];
      double* gb = grad->data() + lay.bias_off[t];
      for (int o = 0; o < out; ++o) {
        double* gwrow = gw + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) gwrow[i] += delta[o] * a[i];
        gb[o] += delta[o];
      }
    }
    Vec da(in, 0.0);
    for (int o = 0; o < out; ++o) {
      const double* wrow = w + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) da[i] += wrow[i] * delta[o];
    }
    if (t > 0) {
      const Vec& z_prev = tr.preacts[t - 1];
      delta.assign(in, 0.0);
      for (int i = 0; i < in; ++i) delta[i] = act_deriv(spec.activation, z_prev[i]) * da[i];
    } else if (dx != nullptr) {
      *dx = std::move(da);
    }
  }
}

// Jacobian S of softmax_temperature at p: S = (diag(p) - p p^T) / T.
// apply_softmax_jac computes S * v.
Vec apply_softmax_jac(const Vec& p, const Vec& v, double temperature) {
  double pv = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) pv += p[i] * v[i];
  Vec r(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) r[i] = p[i] * (v[i] - pv) / temperature;
  return r;
}

void check_batch(const ModelSpec& spec, const Batch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("batch: empty");
  if (batch.dim != spec.input_dim())
    throw std::invalid_argument("batch: feature width does not match model input width");
  if (static_cast<int>(batch.labels.size()) != batch.size())
    throw std::invalid_argument("batch: label count does not match row count");
  for (int y : batch.labels)
    if (y < 0 || y >= spec.output_dim())
      throw std::invalid_argument("batch: label outside [0, L)");
}

}  // namespace

std::size_t ModelSpec::param_count() const {
  std::size_t n = 0;
  for (int t = 0; t + 1 < static_cast<int>(layer_widths.size()); ++t)
    n += static_cast<std::size_t>(layer_widths[t]) * layer_widths[t + 1] + layer_widths[t + 1];
  return n;
}

void ModelSpec::validate() const {
  if (layer_widths.size() < 2)
    throw std::invalid_argument("model.layer_widths: need at least input and output widths");
  for (int w : layer_widths)
    if (w < 1) throw std::invalid_argument("model.layer_widths: widths must be positive");
  if (layer_widths.back() < 2)
    throw std::invalid_argument("model.layer_widths: output width must be >= 2");
}

int LabelTable::present_rows() const {
  int n = 0;
  for (std::int64_t c : counts)
    if (c > 0) ++n;
  return n;
}

LabelTable make_table(int label_count, int row_width) {
  LabelTable t;
  t.label_count = label_count;
  t.row_width = row_width;
  t.counts.assign(label_count, 0);
  t.rows.assign(static_cast<std::size_t>(label_count) * row_width, 0.0);
  return t;
}

ParamVector init_params(const ModelSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  ParamVector p(spec.param_count(), 0.0);
  Layout lay = layout_of(spec);
  for (int t = 0; t < spec.layer_count(); ++t) {
    int in = spec.layer_widths[t];
    int out = spec.layer_widths[t + 1];
    double bound = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> u(-bound, bound);
    double* w = p.data() + lay.weight_off[t];
    for (std::size_t i = 0; i < static_cast<std::size_t>(in) * out; ++i) w[i] = u(rng);
  }
  return p;
}

Vec forward(const ModelSpec& spec, const ParamVector& params, std::span<const double> x) {
  return forward_trace(spec, params, x).acts.back();
}

Vec softmax_temperature(std::span<const double> z, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("softmax: temperature must be > 0");
  if (z.empty()) throw std::invalid_argument("softmax: empty logit vector");
  double m = z[0];
  for (double v : z) {
    if (!std::isfinite(v)) throw std::invalid_argument("softmax: non-finite logit");
    m = std::max(m, v);
  }
  Vec p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp((z[i] - m) / temperature);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

std::pair<double, ParamVector> loss_and_grad(const ModelSpec& spec, const ParamVector& params,
                                             const Batch& batch) {
  check_batch(spec, batch);
  int n = batch.size();
  double loss = 0.0;
  ParamVector grad(params.size(), 0.0);
  for (int s = 0; s < n; ++s) {
    Trace tr = forward_trace(spec, params, batch.row(s));
    Vec p = softmax_temperature(tr.acts.back(), 1.0);
    int y = batch.labels[s];
    loss += -std::log(std::max(p[y], 1e-300)) / n;
    Vec dlogits(p.size());
    for (std::size_t i = 0; i < p.size(); ++i)
      dlogits[i] = (p[i] - (static_cast<int>(i) == y ? 1.0 : 0.0)) / n;
    backprop(spec, params, tr, dlogits, &grad, nullptr);
  }
  return {loss, std::move(grad)};
}

EvalResult evaluate(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
  check_batch(spec, batch);
  int n = batch.size();
  EvalResult r;
  for (int s = 0; s < n; ++s) {
    Vec z = forward(spec, params, batch.row(s));
    Vec p = softmax_temperature(z, 1.0);
    int y = batch.labels[s];
    r.loss += -std::log(std::max(p[y], 1e-300)) / n;
    int arg = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    if (arg == y) r.accuracy += 1.0 / n;
  }
  return r;
}

ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double eta) {
  vec::check_same_size(params, grad, "sgd_step");
  ParamVector next(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) next[i] = params[i] - eta * grad[i];
  return next;
}

std::vector<double> input_jacobian(const ModelSpec& spec, const ParamVector& params,
                                   std::span<const double> x, double temperature) {
  Trace tr = forward_trace(spec, params, x);
  Vec p = softmax_temperature(tr.acts.back(), temperature);
  int L = spec.output_dim();
  int d = spec.input_dim();
  std::vector<double> jac(static_cast<std::size_t>(L) * d, 0.0);
  for (int l = 0; l < L; ++l) {
    // Row l of the softmax Jacobian, then reverse through the net.
    Vec srow(L);
    for (int j = 0; j < L; ++j)
      srow[j] = p[l] * ((j == l ? 1.0 : 0.0) - p[j]) / temperature;
    Vec dx;
    backprop(spec, params, tr, srow, nullptr, &dx);
    std::copy(dx.begin(), dx.end(), jac.begin() + static_cast<std::size_t>(l) * d);
  }
  return jac;
}

LabelTable logit_table(const ModelSpec& spec, const ParamVector& params, const Batch& batch,
                       double temperature) {
  check_batch(spec, batch);
  int L = spec.output_dim();
  LabelTable t = make_table(L, L);
  for (int s = 0; s < batch.size(); ++s) {
    Vec p = softmax_temperature(forward(spec, params, batch.row(s)), temperature);
    int y = batch.labels[s];
    auto row = t.row(y);
    for (int j = 0; j < L; ++j) row[j] += p[j];
    t.counts[y] += 1;
  }
  for (int l = 0; l < L; ++l) {
    if (t.counts[l] == 0) continue;
    auto row = t.row(l);
    for (int j = 0; j < L; ++j) row[j] /= static_cast<double>(t.counts[l]);
  }
  return t;
}

LabelTable input_jacobian_table(const ModelSpec& spec, const ParamVector& params,
                                const Batch& batch, double temperature) {
  check_batch(spec, batch);
  int L = spec.output_dim();
  int d = spec.input_dim();
  LabelTable t = make_table(L, L * d);
  for (int s = 0; s < batch.size(); ++s) {
    std::vector<double> jac = input_jacobian(spec, params, batch.row(s), temperature);
    int y = batch.labels[s];
    auto row = t.row(y);
    for (std::size_t j = 0; j < jac.size(); ++j) row[j] += jac[j];
    t.counts[y] += 1;
  }
  for (int l = 0; l < L; ++l) {
    if (t.counts[l] == 0) continue;
    auto row = t.row(l);
    for (int j = 0; j < L * d; ++j) row[j] /= static_cast<double>(t.counts[l]);
  }
  return t;
}

void distill_logit_grad(const ModelSpec& spec, const ParamVector& params, std::span<const double> x,
                        double temperature, std::span<const double> target, RegKind kind,
                        ParamVector& grad) {
  if (grad.size() != params.size())
    throw std::invalid_argument("distill_logit_grad: grad size mismatch");
  Trace tr = forward_trace(spec, params, x);
  Vec p = softmax_temperature(tr.acts.back(), temperature);
  if (target.size() != p.size())
    throw std::invalid_argument("distill_logit_grad: target length mismatch");
  Vec dp(p.size());
  if (kind == RegKind::kMse) {
    for (std::size_t i = 0; i < p.size(); ++i) dp[i] = p[i] - target[i];
  } else {
    for (std::size_t i = 0; i < p.size(); ++i) dp[i] = -target[i] / std::max(p[i], 1e-12);
  }
  Vec dlogits = apply_softmax_jac(p, dp, temperature);
  backprop(spec, params, tr, dlogits, &grad, nullptr);
}

// Parameter gradient of 0.5 * ||J - G||_F^2. Let A = J - G (held constant by
// the envelope rule) and phi = <A, J>. J's columns are the tangents of the
// normalized output along each input coordinate, so phi is differentiated by
// an adjoint sweep over the joint primal/tangent computation. Tangent
// quantities are matrices with one column per input coordinate.
void distill_jacobian_grad(const ModelSpec& spec, const ParamVector& params,
                           std::span<const double> x, double temperature,
                           std::span<const double> target, ParamVector& grad) {
  if (grad.size() != params.size())
    throw std::invalid_argument("distill_jacobian_grad: grad size mismatch");
  int L = spec.output_dim();
  int d = spec.input_dim();
  if (static_cast<int>(target.size()) != L * d)
    throw std::invalid_argument("distill_jacobian_grad: target size mismatch");
  int K = spec.layer_count();
  Layout lay = layout_of(spec);
  Trace tr = forward_trace(spec, params, x);
  Vec p = softmax_temperature(tr.acts.back(), temperature);

  auto idx = [d](int r, int c) { return static_cast<std::size_t>(r) * d + c; };

  // Tangent forward pass: Adot[t] is n_t x d, the tangent of layer t's output.
  std::vector<std::vector<double>> adot(K + 1), zdot(K + 1);
  adot[0].assign(static_cast<std::size_t>(d) * d, 0.0);
  for (int m = 0; m < d; ++m) adot[0][idx(m, m)] = 1.0;
  for (int t = 0; t < K; ++t) {
    int in = spec.layer_widths[t];
    int out = spec.layer_widths[t + 1];
    const double* w = params.data() + lay.weight_off[t];
    zdot[t + 1].assign(static_cast<std::size_t>(out) * d, 0.0);
    for (int o = 0; o < out; ++o) {
      const double* wrow = w + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) {
        double wv = wrow[i];
        if (wv == 0.0) continue;
        for (int m = 0; m < d; ++m) zdot[t + 1][idx(o, m)] += wv * adot[t][idx(i, m)];
      }
    }
    if (t + 1 < K) {
      adot[t + 1].assign(static_cast<std::size_t>(out) * d, 0.0);
      const Vec& z = tr.preacts[t];
      for (int o = 0; o < out; ++o) {
        double dz = act_deriv(spec.activation, z[o]);
        for (int m = 0; m < d; ++m) adot[t + 1][idx(o, m)] = dz * zdot[t + 1][idx(o, m)];
      }
    } else {
      adot[t + 1] = zdot[t + 1];  // logits tangent
    }
  }

  // J columns: pdot[:,m] = S * zdot_K[:,m];  phi = <A, pdot>.
  std::vector<double> jac(static_cast<std::size_t>(L) * d, 0.0);
  for (int m = 0; m < d; ++m) {
    Vec col(L);
    for (int l = 0; l < L; ++l) col[l] = zdot[K][idx(l, m)];
    Vec pcol = apply_softmax_jac(p, col, temperature);
    for (int l = 0; l < L; ++l) jac[idx(l, m)] = pcol[l];
  }
  std::vector<double> A(static_cast<std::size_t>(L) * d);
  for (std::size_t i = 0; i < A.size(); ++i) A[i] = jac[i] - target[i];

  // Adjoint sweep. pbar and zbar are vectors (primal adjoints); zdot_bar and
  // adot_bar are matrices (tangent adjoints, one column per input coordinate).
  // Through pdot_m = S(p) * v_m with v_m = zdot_K[:,m]:
  //   zdot_bar_K[:,m] = S * A[:,m]
  //   pbar += (A[:,m] .* v_m - (p.v_m) A[:,m] - v_m (p.A[:,m])) / T
  Vec pbar(L, 0.0);
  std::vector<double> zdot_bar(static_cast<std::size_t>(L) * d, 0.0);
  for (int m = 0; m < d; ++m) {
    Vec v(L), a_col(L);
    for (int l = 0; l < L; ++l) {
      v[l] = zdot[K][idx(l, m)];
      a_col[l] = A[idx(l, m)];
    }
    Vec sa = apply_softmax_jac(p, a_col, temperature);
    for (int l = 0; l < L; ++l) zdot_bar[idx(l, m)] = sa[l];
    double pv = 0.0, pa = 0.0;
    for (int l = 0; l < L; ++l) {
      pv += p[l] * v[l];
      pa += p[l] * a_col[l];
    }
    for (int l = 0; l < L; ++l)
      pbar[l] += (a_col[l] * v[l] - pv * a_col[l] - v[l] * pa) / temperature;
  }
  Vec zbar = apply_softmax_jac(p, pbar, temperature);  // logits adjoint

  for (int t = K - 1; t >= 0; --t) {
    int in = spec.layer_widths[t];
    int out = spec.layer_widths[t + 1];
    const double* w = params.data() + lay.weight_off[t];
    double* gw = grad.data() + lay.weight_off[t];
    double* gb = grad.data() + lay.bias_off[t];
    const Vec& a = tr.acts[t];

    // W_bar += zdot_bar * adot^T + zbar * a^T;  b_bar += zbar.
    for (int o = 0; o < out; ++o) {
      double* gwrow = gw + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) {
        double s = zbar[o] * a[i];
        for (int m = 0; m < d; ++m) s += zdot_bar[idx(o, m)] * adot[t][idx(i, m)];
        gwrow[i] += s;
      }
      gb[o] += zbar[o];
    }

    if (t == 0) break;
    int prev = in;
    Vec abar(prev, 0.0);
    std::vector<double> adot_bar(static_cast<std::size_t>(prev) * d, 0.0);
    for (int o = 0; o < out; ++o) {
      const double* wrow = w + static_cast<std::size_t>(o) * in;
      for (int i = 0; i < in; ++i) {
        double wv = wrow[i];
        if (wv == 0.0) continue;
        abar[i] += wv * zbar[o];
        for (int m = 0; m < d; ++m) adot_bar[idx(i, m)] += wv * zdot_bar[idx(o, m)];
      }
    }
    // Through a = act(z) and adot = act'(z) .* zdot:
    //   zbar_prev = act'(z) .* abar + act''(z) .* sum_m zdot[:,m] .* adot_bar[:,m]
    //   zdot_bar_prev[:,m] = act'(z) .* adot_bar[:,m]
    const Vec& z_prev = tr.preacts[t - 1];
    Vec zbar_prev(prev, 0.0);
    std::vector<double> zdot_bar_prev(static_cast<std::size_t>(prev) * d, 0.0);
    for (int i = 0; i < prev; ++i) {
      double d1 = act_deriv(spec.activation, z_prev[i]);
      double d2 = act_second_deriv(spec.activation, z_prev[i]);
      double cross = 0.0;
      for (int m = 0; m < d; ++m) {
        cross += zdot[t][idx(i, m)] * adot_bar[idx(i, m)];
        zdot_bar_prev[idx(i, m)] = d1 * adot_bar[idx(i, m)];
      }
      zbar_prev[i] = d1 * abar[i] + d2 * cross;
    }
    zbar = std::move(zbar_prev);
    zdot_bar = std::move(zdot_bar_prev);
  }
}

}  // namespace fedsim::nn
