#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "fedsim/nn.hpp"
#include "fedsim/rng.hpp"

using namespace fedsim;
using nn::Batch;
using nn::ModelSpec;
using nn::ParamVector;
using vec::Vec;

namespace {

ModelSpec spec_of(std::vector<int> widths, nn::Activation act = nn::Activation::kSigmoid) {
  return ModelSpec{std::move(widths), act};
}

Batch random_batch(const ModelSpec& spec, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::uniform_int_distribution<int> lab(0, spec.output_dim() - 1);
  Batch b;
  b.dim = spec.input_dim();
  for (int i = 0; i < n * b.dim; ++i) b.inputs.push_back(u(rng));
  for (int i = 0; i < n; ++i) b.labels.push_back(lab(rng));
  return b;
}

// Straight-line re-implementation of the forward pass: explicit mat-vec per
// layer, independent of the library's internals apart from the flat layout.
Vec oracle_forward(const ModelSpec& spec, const ParamVector& p, const Vec& x) {
  Vec a = x;
  std::size_t off = 0;
  for (int t = 0; t + 1 < static_cast<int>(spec.layer_widths.size()); ++t) {
    int in = spec.layer_widths[t];
    int out = spec.layer_widths[t + 1];
    Vec z(out, 0.0);
    for (int o = 0; o < out; ++o) {
      for (int i = 0; i < in; ++i) z[o] += p[off + static_cast<std::size_t>(o) * in + i] * a[i];
      z[o] += p[off + static_cast<std::size_t>(in) * out + o];
    }
    off += static_cast<std::size_t>(in) * out + out;
    if (t + 2 < static_cast<int>(spec.layer_widths.size())) {
      a.assign(out, 0.0);
      for (int o = 0; o < out; ++o)
        a[o] = spec.activation == nn::Activation::kRelu ? std::max(z[o], 0.0)
                                                        : 1.0 / (1.0 + std::exp(-z[o]));
    } else {
      a = z;
    }
  }
  return a;
}

double max_rel_err(const Vec& got, const Vec& want) {
  REQUIRE(got.size() == want.size());
  double scale = 1e-6;
  for (double w : want) scale = std::max(scale, std::abs(w));
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i)
    worst = std::max(worst, std::abs(got[i] - want[i]) / scale);
  return worst;
}

Vec fd_param_grad(const ParamVector& params, double step,
                  const std::function<double(const ParamVector&)>& f) {
  Vec g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamVector lo = params, hi = params;
    lo[i] -= step;
    hi[i] += step;
    g[i] = (f(hi) - f(lo)) / (2.0 * step);
  }
  return g;
}

double entropy(const Vec& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

}  // namespace

TEST_CASE("parameter count formula") {
  ModelSpec spec = spec_of({3, 5, 4});
  CHECK(spec.param_count() == 3u * 5 + 5 + 5 * 4 + 4);
  ModelSpec deep = spec_of({7, 2, 9, 3});
  CHECK(deep.param_count() == 7u * 2 + 2 + 2 * 9 + 9 + 9 * 3 + 3);
}

TEST_CASE("model spec validation") {
  CHECK_THROWS_AS(spec_of({4}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(spec_of({4, 1}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(spec_of({0, 3}).validate(), std::invalid_argument);
  CHECK_NOTHROW(spec_of({4, 2}).validate());
}

TEST_CASE("forward: zero params annihilate") {
  ModelSpec spec = spec_of({3, 4, 2}, nn::Activation::kRelu);
  ParamVector zeros(spec.param_count(), 0.0);
  Vec z = nn::forward(spec, zeros, Vec{0.3, -0.7, 1.1});
  for (double v : z) CHECK(v == 0.0);
}

TEST_CASE("forward: identity linear map") {
  ModelSpec spec = spec_of({3, 3});
  ParamVector p(spec.param_count(), 0.0);
  p[0] = p[4] = p[8] = 1.0;  // W = I, biases zero
  Vec x{0.25, -2.0, 7.5};
  Vec z = nn::forward(spec, p, x);
  for (int i = 0; i < 3; ++i) CHECK(z[i] == x[i]);
}

TEST_CASE("forward matches an independent mat-vec oracle") {
  auto rng = make_rng(11, "test");
  for (int trial = 0; trial < 20; ++trial) {
    ModelSpec spec =
        spec_of({4, 6, 3}, trial % 2 ? nn::Activation::kRelu : nn::Activation::kSigmoid);
    ParamVector p = nn::init_params(spec, rng);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    Vec x(4);
    for (double& v : x) v = u(rng);
    Vec got = nn::forward(spec, p, x);
    Vec want = oracle_forward(spec, p, x);
    for (int i = 0; i < 3; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("forward rejects dimension mismatch") {
  ModelSpec spec = spec_of({3, 4, 2});
  ParamVector p(spec.param_count(), 0.0);
  CHECK_THROWS_AS(nn::forward(spec, p, Vec{1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(nn::forward(spec, ParamVector(3, 0.0), Vec{1.0, 2.0, 3.0}),
                  std::invalid_argument);
}

TEST_CASE("softmax temperature basics") {
  Vec p = nn::softmax_temperature(Vec{2.0, 0.0}, 1.0);
  CHECK(p[0] == doctest::Approx(0.8808).epsilon(1e-3));
  CHECK(p[1] == doctest::Approx(0.1192).epsilon(1e-3));

  Vec hot = nn::softmax_temperature(Vec{5.0, -3.0, 0.5}, 1e6);
  for (double v : hot) CHECK(std::abs(v - 1.0 / 3.0) < 1e-4);

  Vec flat = nn::softmax_temperature(Vec{4.2, 4.2, 4.2, 4.2}, 0.37);
  for (double v : flat) CHECK(v == 0.25);

  double sum = 0.0;
  for (double v : nn::softmax_temperature(Vec{1e3, -1e3, 0.0}, 1.0)) sum += v;
  CHECK(std::abs(sum - 1.0) < 1e-12);
}

TEST_CASE("softmax rejects bad input") {
  CHECK_THROWS_AS(nn::softmax_temperature(Vec{1.0, 2.0}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(nn::softmax_temperature(Vec{1.0, 2.0}, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(nn::softmax_temperature(Vec{1.0, std::nan("")}, 1.0), std::invalid_argument);
}

TEST_CASE("softmax entropy is non-decreasing in temperature") {
  Vec z{3.0, -1.0, 0.5, 2.2};
  double prev = -1.0;
  for (double T : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 32.0}) {
    double h = entropy(nn::softmax_temperature(z, T));
    CHECK(h >= prev - 1e-12);
    prev = h;
  }
}

TEST_CASE("cross-entropy of a single sample is -ln p") {
  ModelSpec spec = spec_of({2, 4, 3});
  auto rng = make_rng(5, "test");
  ParamVector p = nn::init_params(spec, rng);
  Batch b;
  b.dim = 2;
  b.inputs = {0.4, -0.9};
  b.labels = {2};
  auto [loss, grad] = nn::loss_and_grad(spec, p, b);
  Vec prob = nn::softmax_temperature(nn::forward(spec, p, b.row(0)), 1.0);
  CHECK(loss == doctest::Approx(-std::log(prob[2])).epsilon(1e-12));
  CHECK(grad.size() == p.size());
}

TEST_CASE("duplicated batch leaves loss and gradient unchanged") {
  ModelSpec spec = spec_of({3, 5, 2});
  auto rng = make_rng(6, "test");
  ParamVector p = nn::init_params(spec, rng);
  Batch b = random_batch(spec, 4, rng);
  Batch doubled = b;
  doubled.inputs.insert(doubled.inputs.end(), b.inputs.begin(), b.inputs.end());
  doubled.labels.insert(doubled.labels.end(), b.labels.begin(), b.labels.end());
  auto [l1, g1] = nn::loss_and_grad(spec, p, b);
  auto [l2, g2] = nn::loss_and_grad(spec, p, doubled);
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-12));
  CHECK(max_rel_err(g1, g2) < 1e-12);
}

TEST_CASE("loss gradient matches central finite differences on a 2-8-3 net") {
  ModelSpec spec = spec_of({2, 8, 3});
  auto rng = make_rng(7, "test");
  ParamVector p = nn::init_params(spec, rng);
  Batch b = random_batch(spec, 5, rng);
  auto [loss, grad] = nn::loss_and_grad(spec, p, b);
  (void)loss;
  Vec fd = fd_param_grad(
      p, 1e-5, [&](const ParamVector& q) { return nn::loss_and_grad(spec, q, b).first; });
  CHECK(max_rel_err(grad, fd) < 1e-4);
}

TEST_CASE("loss rejects an empty batch") {
  ModelSpec spec = spec_of({2, 3, 2});
  ParamVector p(spec.param_count(), 0.0);
  Batch empty;
  empty.dim = 2;
  CHECK_THROWS_AS(nn::loss_and_grad(spec, p, empty), std::invalid_argument);
}

TEST_CASE("sgd_step") {
  CHECK(nn::sgd_step(Vec{1.0}, Vec{1.0}, 0.1)[0] == doctest::Approx(0.9).epsilon(1e-15));
  Vec w{0.5, -0.25};
  Vec g{3.0, 4.0};
  Vec same = nn::sgd_step(w, g, 0.0);
  CHECK(same[0] == w[0]);
  CHECK(same[1] == w[1]);
  // Two steps with fixed gradients equal one step with the summed gradient.
  Vec g2{-1.0, 2.0};
  Vec two = nn::sgd_step(nn::sgd_step(w, g, 0.1), g2, 0.1);
  Vec sum{g[0] + g2[0], g[1] + g2[1]};
  Vec one = nn::sgd_step(w, sum, 0.1);
  CHECK(two[0] == doctest::Approx(one[0]).epsilon(1e-15));
  CHECK(two[1] == doctest::Approx(one[1]).epsilon(1e-15));
  CHECK_THROWS_AS(nn::sgd_step(Vec{1.0}, Vec{1.0, 2.0}, 0.1), std::invalid_argument);
}

TEST_CASE("forward and loss are pure") {
  ModelSpec spec = spec_of({3, 6, 4});
  auto rng = make_rng(8, "test");
  ParamVector p = nn::init_params(spec, rng);
  Batch b = random_batch(spec, 3, rng);
  Vec z1 = nn::forward(spec, p, b.row(0));
  Vec z2 = nn::forward(spec, p, b.row(0));
  for (std::size_t i = 0; i < z1.size(); ++i) CHECK(z1[i] == z2[i]);
  auto r1 = nn::loss_and_grad(spec, p, b);
  auto r2 = nn::loss_and_grad(spec, p, b);
  CHECK(r1.first == r2.first);
  for (std::size_t i = 0; i < r1.second.size(); ++i) CHECK(r1.second[i] == r2.second[i]);
}

TEST_CASE("logit table: singleton, idempotence, absence") {
  ModelSpec spec = spec_of({2, 5, 3});
  auto rng = make_rng(9, "test");
  ParamVector p = nn::init_params(spec, rng);
  Batch one;
  one.dim = 2;
  one.inputs = {0.1, 0.7};
  one.labels = {0};
  nn::LabelTable t = nn::logit_table(spec, p, one, 2.0);
  Vec prob = nn::softmax_temperature(nn::forward(spec, p, one.row(0)), 2.0);
  CHECK(t.present(0));
  CHECK_FALSE(t.present(1));
  CHECK_FALSE(t.present(2));
  CHECK(t.present_rows() == 1);
  for (int j = 0; j < 3; ++j) CHECK(t.row(0)[j] == doctest::Approx(prob[j]).epsilon(1e-15));

  Batch twice = one;
  twice.inputs.insert(twice.inputs.end(), one.inputs.begin(), one.inputs.end());
  twice.labels.push_back(0);
  nn::LabelTable t2 = nn::logit_table(spec, p, twice, 2.0);
  for (int j = 0; j < 3; ++j) CHECK(t2.row(0)[j] == doctest::Approx(t.row(0)[j]).epsilon(1e-15));
}

TEST_CASE("logit table matches a group-by-and-average oracle") {
  ModelSpec spec = spec_of({3, 7, 4});
  auto rng = make_rng(10, "test");
  ParamVector p = nn::init_params(spec, rng);
  Batch b = random_batch(spec, 17, rng);
  nn::LabelTable t = nn::logit_table(spec, p, b, 1.5);
  for (int l = 0; l < 4; ++l) {
    Vec sum(4, 0.0);
    int count = 0;
    for (int s = 0; s < b.size(); ++s) {
      if (b.labels[s] != l) continue;
      Vec prob = nn::softmax_temperature(nn::forward(spec, p, b.row(s)), 1.5);
      for (int j = 0; j < 4; ++j) sum[j] += prob[j];
      ++count;
    }
    CHECK(t.present(l) == (count > 0));
    if (count == 0) continue;
    for (int j = 0; j < 4; ++j)
      CHECK(t.row(l)[j] == doctest::Approx(sum[j] / count).epsilon(1e-12));
  }
}

TEST_CASE("input jacobian of a linear model composes the softmax jacobian with W") {
  ModelSpec spec = spec_of({3, 3});
  auto rng = make_rng(12, "test");
  ParamVector p = nn::init_params(spec, rng);
  Vec x{0.2, -0.4, 0.9};
  double T = 1.3;
  Vec prob = nn::softmax_temperature(nn::forward(spec, p, x), T);
  std::vector<double> jac = nn::input_jacobian(spec, p, x, T);
  for (int l = 0; l < 3; ++l) {
    for (int m = 0; m < 3; ++m) {
      double want = 0.0;
      for (int j = 0; j < 3; ++j) {
        double s_lj = prob[l] * ((j == l ? 1.0 : 0.0) - prob[j]) / T;
        want += s_lj * p[static_cast<std::size_t>(j) * 3 + m];  // dz_j/dx_m = W[j][m]
      }
      CHECK(jac[static_cast<std::size_t>(l) * 3 + m] == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("input jacobian matches finite differences on a 2-8-3 net") {
  ModelSpec spec = spec_of({2, 8, 3});
  auto rng = make_rng(13, "test");
  ParamVector p = nn::init_params(spec, rng);
  Vec x{0.35, -0.85};
  double T = 1.0;
  std::vector<double> jac = nn::input_jacobian(spec, p, x, T);
  double h = 1e-6;
  Vec fd(jac.size());
  for (int m = 0; m < 2; ++m) {
    Vec lo = x, hi = x;
    lo[m] -= h;
    hi[m] += h;
    Vec plo = nn::softmax_temperature(nn::forward(spec, p, lo), T);
    Vec phi = nn::softmax_temperature(nn::forward(spec, p, hi), T);
    for (int l = 0; l < 3; ++l)
      fd[static_cast<std::size_t>(l) * 2 + m] = (phi[l] - plo[l]) / (2 * h);
  }
  CHECK(max_rel_err(jac, fd) < 1e-4);
}

TEST_CASE("jacobian table is deterministic") {
  ModelSpec spec = spec_of({2, 4, 3});
  auto rng = make_rng(14, "test");
  ParamVector p = nn::init_params(spec, rng);
  Batch b = random_batch(spec, 6, rng);
  nn::LabelTable t1 = nn::input_jacobian_table(spec, p, b, 1.0);
  nn::LabelTable t2 = nn::input_jacobian_table(spec, p, b, 1.0);
  CHECK(t1.rows == t2.rows);
  CHECK(t1.counts == t2.counts);
}

TEST_CASE("distillation gradient vanishes when local output equals the target") {
  ModelSpec spec = spec_of({2, 4, 3});
  auto rng = make_rng(15, "test");
  ParamVector p = nn::init_params(spec, rng);
  Vec x{0.2, 0.6};
  Vec target = nn::softmax_temperature(nn::forward(spec, p, x), 1.0);
  ParamVector g(p.size(), 0.0);
  nn::distill_logit_grad(spec, p, x, 1.0, target, nn::RegKind::kMse, g);
  for (double v : g) CHECK(std::abs(v) < 1e-14);

  std::vector<double> jtarget = nn::input_jacobian(spec, p, x, 1.0);
  ParamVector gj(p.size(), 0.0);
  nn::distill_jacobian_grad(spec, p, x, 1.0, jtarget, gj);
  for (double v : gj) CHECK(std::abs(v) < 1e-14);
}

TEST_CASE("mse distillation gradient matches finite differences") {
  ModelSpec spec = spec_of({2, 6, 3});
  auto rng = make_rng(16, "test");
  ParamVector p = nn::init_params(spec, rng);
  Vec x{-0.3, 0.8};
  double T = 2.0;
  Vec target{0.5, 0.2, 0.3};
  ParamVector g(p.size(), 0.0);
  nn::distill_logit_grad(spec, p, x, T, target, nn::RegKind::kMse, g);
  Vec fd = fd_param_grad(p, 1e-5, [&](const ParamVector& q) {
    Vec prob = nn::softmax_temperature(nn::forward(spec, q, x), T);
    double v = 0.0;
    for (int i = 0; i < 3; ++i) v += 0.5 * (prob[i] - target[i]) * (prob[i] - target[i]);
    return v;
  });
  CHECK(max_rel_err(g, fd) < 1e-4);
}

TEST_CASE("cross-entropy distillation gradient matches finite differences") {
  ModelSpec spec = spec_of({2, 6, 3});
  auto rng = make_rng(17, "test");
  ParamVector p = nn::init_params(spec, rng);
  Vec x{0.4, -0.1};
  double T = 1.0;
  Vec target{0.6, 0.1, 0.3};
  ParamVector g(p.size(), 0.0);
  nn::distill_logit_grad(spec, p, x, T, target, nn::RegKind::kCrossEntropy, g);
  Vec fd = fd_param_grad(p, 1e-5, [&](const ParamVector& q) {
    Vec prob = nn::softmax_temperature(nn::forward(spec, q, x), T);
    double v = 0.0;
    for (int i = 0; i < 3; ++i) v -= target[i] * std::log(prob[i]);
    return v;
  });
  CHECK(max_rel_err(g, fd) < 1e-4);
}

TEST_CASE("jacobian mismatch gradient matches finite differences on a 2-4-3 net") {
  for (auto act : {nn::Activation::kSigmoid, nn::Activation::kRelu}) {
    ModelSpec spec = spec_of({2, 4, 3}, act);
    auto rng = make_rng(18, "test");
    ParamVector p = nn::init_params(spec, rng);
    Vec x{0.45, -0.25};
    double T = 1.5;
    std::vector<double> target(6, 0.0);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (double& v : target) v = u(rng);
    ParamVector g(p.size(), 0.0);
    nn::distill_jacobian_grad(spec, p, x, T, target, g);
    Vec fd = fd_param_grad(p, 1e-5, [&](const ParamVector& q) {
      std::vector<double> jac = nn::input_jacobian(spec, q, x, T);
      double v = 0.0;
      for (std::size_t i = 0; i < jac.size(); ++i)
        v += 0.5 * (jac[i] - target[i]) * (jac[i] - target[i]);
      return v;
    });
    CHECK(max_rel_err(g, fd) < 1e-4);
  }
}

TEST_CASE("seeded corpus: gradients beat 1e-4 against finite differences") {
  auto rng = make_rng(99, "corpus");
  std::uniform_int_distribution<int> width(2, 10);
  for (int trial = 0; trial < 10; ++trial) {
    ModelSpec spec = spec_of({width(rng), width(rng) + 1, width(rng) + 1},
                             trial % 2 ? nn::Activation::kRelu : nn::Activation::kSigmoid);
    ParamVector p = nn::init_params(spec, rng);
    Batch b = random_batch(spec, 4, rng);
    auto [loss, grad] = nn::loss_and_grad(spec, p, b);
    (void)loss;
    Vec fd = fd_param_grad(
        p, 1e-5, [&](const ParamVector& q) { return nn::loss_and_grad(spec, q, b).first; });
    CHECK(max_rel_err(grad, fd) < 1e-4);
  }
}
