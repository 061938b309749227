#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "fedsim/vecmath.hpp"

namespace fedsim::nn {

using vec::Vec;

enum class Activation { kRelu, kSigmoid };

// Fully connected feed-forward net: layer_widths = {input dim, hidden..., L}.
// The final layer emits raw logits; classification probabilities come from
// softmax_temperature.
struct ModelSpec {
  std::vector<int> layer_widths;
  Activation activation = Activation::kRelu;

  int input_dim() const { return layer_widths.front(); }
  int output_dim() const { return layer_widths.back(); }
  int layer_count() const { return static_cast<int>(layer_widths.size()) - 1; }
  std::size_t param_count() const;
  void validate() const;  // throws std::invalid_argument
};

// Flat parameter vector: per layer, weights (out x in, row major) then biases.
using ParamVector = Vec;

struct Batch {
  std::vector<double> inputs;  // n x d, row major
  std::vector<int> labels;     // n entries in [0, L)
  int dim = 0;

  int size() const { return dim == 0 ? 0 : static_cast<int>(inputs.size()) / dim; }
  std::span<const double> row(int i) const {
    return std::span<const double>(inputs.data() + static_cast<std::size_t>(i) * dim, dim);
  }
};

// Per-label table of mean vectors. A row with count 0 never contributed a
// sample and must be skipped, not read as zeros.
struct LabelTable {
  int label_count = 0;
  int row_width = 0;
  std::vector<std::int64_t> counts;  // per label; 0 = absent
  std::vector<double> rows;          // label_count x row_width, absent rows zero

  bool present(int label) const { return counts[label] > 0; }
  int present_rows() const;
  std::span<const double> row(int label) const {
    return std::span<const double>(rows.data() + static_cast<std::size_t>(label) * row_width,
                                   row_width);
  }
  std::span<double> row(int label) {
    return std::span<double>(rows.data() + static_cast<std::size_t>(label) * row_width, row_width);
  }
};

LabelTable make_table(int label_count, int row_width);

// Fan-based uniform weight init in +-sqrt(6/(fan_in+fan_out)), biases zero.
ParamVector init_params(const ModelSpec& spec, std::mt19937_64& rng);

// Raw logits for one input. Pure; throws on dimension mismatch.
Vec forward(const ModelSpec& spec, const ParamVector& params, std::span<const double> x);

// exp(z_i/T) / sum_j exp(z_j/T), computed with max subtraction.
// Throws when T <= 0 or any logit is non-finite.
Vec softmax_temperature(std::span<const double> z, double temperature);

// Mean cross-entropy (softmax at T=1) and its analytic parameter gradient.
std::pair<double, ParamVector> loss_and_grad(const ModelSpec& spec, const ParamVector& params,
                                             const Batch& batch);

// Mean loss and accuracy under argmax prediction; evaluation only.
struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};
EvalResult evaluate(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

// params - eta * grad, elementwise.
ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double eta);

// Jacobian of the temperature-normalized output w.r.t. the input, L x d row
// major, for one sample.
std::vector<double> input_jacobian(const ModelSpec& spec, const ParamVector& params,
                                   std::span<const double> x, double temperature);

// Per-label mean of temperature-normalized logits over the batch (row width L).
LabelTable logit_table(const ModelSpec& spec, const ParamVector& params, const Batch& batch,
                       double temperature);

// Per-label mean input Jacobian over the batch (row width L*d).
LabelTable input_jacobian_table(const ModelSpec& spec, const ParamVector& params,
                                const Batch& batch, double temperature);

enum class RegKind { kMse, kCrossEntropy };

// Accumulates into grad the parameter gradient of the distillation gap between
// the model's normalized output for x and a fixed target vector:
//   mse:           0.5 * ||p(x) - target||^2
//   cross_entropy: -sum_l target_l * log p_l(x)
void distill_logit_grad(const ModelSpec& spec, const ParamVector& params, std::span<const double> x,
                        double temperature, std::span<const double> target, RegKind kind,
                        ParamVector& grad);

// Accumulates the parameter gradient of 0.5 * ||J(x) - target||_F^2, where J is
// the L x d input Jacobian of the normalized output. Uses a forward tangent
// pass per input coordinate folded into one reverse pass.
void distill_jacobian_grad(const ModelSpec& spec, const ParamVector& params,
                           std::span<const double> x, double temperature,
                           std::span<const double> target, ParamVector& grad);

}  // namespace fedsim::nn
