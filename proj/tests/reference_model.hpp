#pragma once

// Straight-loop re-implementation of the network forward pass in extended
// precision. Independent of the Eigen code path, so it serves both as a
// forward-pass oracle and as a finite-difference loss whose rounding noise
// sits well below the smallest gradients being checked.

#include <cmath>
#include <span>
#include <vector>

#include "nextdest/model.hpp"

namespace testing {

using Real = long double;

inline Real sigmoid(Real x) { return 1.0L / (1.0L + std::exp(-x)); }

// One LSTM layer over a [t][unit] sequence, gates i, f, g, o.
inline std::vector<std::vector<Real>> reference_lstm(const nextdest::nn::Tensor& wx,
                                                     const nextdest::nn::Tensor& wh,
                                                     const nextdest::nn::Tensor& bias,
                                                     const std::vector<std::vector<Real>>& xs) {
  const std::size_t H = wh.cols(), D = wx.cols();
  std::vector<Real> h(H, 0.0L), c(H, 0.0L), z(4 * H);
  std::vector<std::vector<Real>> out;
  for (const auto& x : xs) {
    for (std::size_t r = 0; r < 4 * H; ++r) {
      Real s = bias[r];
      for (std::size_t k = 0; k < D; ++k) s += static_cast<Real>(wx[r * D + k]) * x[k];
      for (std::size_t k = 0; k < H; ++k) s += static_cast<Real>(wh[r * H + k]) * h[k];
      z[r] = s;
    }
    for (std::size_t j = 0; j < H; ++j) {
      const Real i = sigmoid(z[j]), f = sigmoid(z[H + j]), g = std::tanh(z[2 * H + j]),
                 o = sigmoid(z[3 * H + j]);
      c[j] = f * c[j] + i * g;
      h[j] = o * std::tanh(c[j]);
    }
    out.push_back(h);
  }
  return out;
}

/// Per-entry probabilities.
inline std::vector<std::vector<Real>> reference_probs(const nextdest::nn::ParamMap& params,
                                                      const nextdest::ModelShape& shape,
                                                      std::span<const nextdest::EncodedEntry> batch) {
  using nextdest::EmbeddingRole;
  const std::size_t d = shape.embedding_dim, W = nextdest::kDenseWidth;
  auto emb = [&](EmbeddingRole role, int id, std::vector<Real>& out) {
    const auto& t = params.at(shape.embedding_param(role));
    for (std::size_t k = 0; k < d; ++k) out.push_back(t[static_cast<std::size_t>(id) * d + k]);
  };
  std::vector<std::vector<Real>> result;
  for (const auto& e : batch) {
    std::vector<std::vector<Real>> xs;
    for (std::size_t t = 0; t < e.window_size; ++t) {
      std::vector<Real> x;
      emb(EmbeddingRole::ChainOrigin, e.chain_origins[t], x);
      emb(EmbeddingRole::ChainDestination, e.chain_destinations[t], x);
      for (std::size_t k = 0; k < W; ++k) x.push_back(e.dense[t * W + k]);
      emb(EmbeddingRole::TopOrigin, e.top_origin, x);
      xs.push_back(std::move(x));
    }
    const auto h1 = reference_lstm(params.at("lstm1.w_input"), params.at("lstm1.w_recurrent"),
                                   params.at("lstm1.bias"), xs);
    const auto h2 = reference_lstm(params.at("lstm2.w_input"), params.at("lstm2.w_recurrent"),
                                   params.at("lstm2.bias"), h1);
    std::vector<Real> head = h2.back();
    emb(EmbeddingRole::TargetOrigin, e.target_origin, head);

    const auto& w = params.at("dense.weights");
    const auto& b = params.at("dense.bias");
    const std::size_t P = w.rows(), in = w.cols();
    std::vector<Real> logits(P);
    Real top = -INFINITY;
    for (std::size_t r = 0; r < P; ++r) {
      Real s = b[r];
      for (std::size_t k = 0; k < in; ++k) s += static_cast<Real>(w[r * in + k]) * head[k];
      logits[r] = s;
      top = std::max(top, s);
    }
    Real z = 0.0L;
    for (auto& l : logits) z += (l = std::exp(l - top));
    for (auto& l : logits) l /= z;
    result.push_back(std::move(logits));
  }
  return result;
}

inline Real reference_loss(const nextdest::nn::ParamMap& params, const nextdest::ModelShape& shape,
                           std::span<const nextdest::EncodedEntry> batch) {
  const auto probs = reference_probs(params, shape, batch);
  Real loss = 0.0L;
  for (std::size_t b = 0; b < batch.size(); ++b)
    loss -= std::log(probs[b][static_cast<std::size_t>(batch[b].label)]);
  return loss / static_cast<Real>(batch.size());
}

/// Loss for grad_check: the extended-precision loss minus its value at
/// `base`. The offset cancels in central differences and keeps the small
/// differences representable in double.
inline nextdest::nn::LossFn reference_loss_fn(const nextdest::nn::ParamMap& base,
                                              const nextdest::ModelShape& shape,
                                              std::vector<nextdest::EncodedEntry> batch) {
  const Real offset = reference_loss(base, shape, batch);
  return [shape, batch = std::move(batch), offset](const nextdest::nn::ParamMap& p) {
    return static_cast<double>(reference_loss(p, shape, batch) - offset);
  };
}

}  // namespace testing
