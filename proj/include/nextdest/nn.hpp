#pragma once

// Differentiable building blocks with hand-written backward passes.
//
// Activations are batch-major matrices (batch x features). A sequence is a
// vector of such matrices, one per timestep. LSTM gate blocks are stacked in
// the order input, forget, candidate, output: weights are (4H x in) and
// (4H x H), bias has 4H entries.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nextdest/tensor.hpp"

namespace nextdest::nn {

using Sequence = std::vector<Matrix>;

// ---- embedding ------------------------------------------------------------

/// Row k of the result is table row indices[k].
Matrix embedding_lookup(const Tensor& table, std::span<const int> indices);

/// Adds upstream row k into table_grad row indices[k].
void embedding_backward(std::span<const int> indices, const Matrix& upstream,
                        Tensor& table_grad);

// ---- LSTM -----------------------------------------------------------------

struct LstmWeights {
  const Tensor& input;      // 4H x in
  const Tensor& recurrent;  // 4H x H
  const Tensor& bias;       // 4H

  std::size_t hidden() const { return recurrent.cols(); }
  std::size_t input_dim() const { return input.cols(); }
};

struct LstmState {
  Matrix h;
  Matrix c;
};

struct LstmCache {
  Sequence inputs;
  Sequence input_gate, forget_gate, candidate, output_gate;
  Sequence cell, cell_tanh, hidden;
  Matrix h0, c0;
};

/// Returns h_1..h_T. `initial` defaults to zeros; `cache` may be null for
/// inference.
Sequence lstm_forward(const LstmWeights& weights, const Sequence& inputs,
                      const LstmState* initial = nullptr, LstmCache* cache = nullptr);

struct LstmGrads {
  Sequence inputs;
  Tensor input_weights;
  Tensor recurrent_weights;
  Tensor bias;
  LstmState initial;
};

/// Exact backpropagation through time. `d_hidden[t]` is dL/dh_t from layers
/// above; `d_final` optionally adds gradient on the last (h, c).
LstmGrads lstm_backward(const LstmWeights& weights, const LstmCache& cache,
                        const Sequence& d_hidden, const LstmState* d_final = nullptr);

// ---- dense + softmax cross-entropy ----------------------------------------

/// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits);

struct SoftmaxCrossEntropy {
  double loss = 0.0;  // mean over the batch
  Matrix probs;
  Tensor d_weights;
  Tensor d_bias;
  Matrix d_input;
};

/// logits = input * weights^T + bias, weights (p x in), labels in [0, p).
SoftmaxCrossEntropy dense_softmax_cross_entropy(const Tensor& weights, const Tensor& bias,
                                                const Matrix& input,
                                                std::span<const int> labels);

// ---- Adam -----------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// One bias-corrected update. Every gradient must match a parameter's
  /// name and shape; parameters without a gradient are left alone.
  void step(ParamMap& params, const ParamMap& grads);

  std::uint64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  const ParamMap& first_moment() const { return m_; }
  const ParamMap& second_moment() const { return v_; }

 private:
  AdamConfig config_;
  std::uint64_t steps_ = 0;
  ParamMap m_;
  ParamMap v_;
};

// ---- finite-difference verification ---------------------------------------

struct GradCheckOptions {
  double step = 1e-5;
  /// Entries checked per tensor; 0 checks everything. Larger tensors are
  /// sampled at an even stride.
  std::size_t max_entries_per_tensor = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

using LossFn = std::function<double(const ParamMap&)>;

/// Central differences against `analytic`, relative error
/// |a - n| / max(|a|, |n|, 1e-8). Throws on non-finite values.
GradCheckReport grad_check(const LossFn& loss, ParamMap params, const ParamMap& analytic,
                           const GradCheckOptions& options = {});

}  // namespace nextdest::nn
