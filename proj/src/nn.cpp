#include "nextdest/nn.hpp"

#include <algorithm>
#include <cmath>

#include "nextdest/core.hpp"

namespace nextdest::nn {

namespace {

Matrix sigmoid(const Matrix& z) {
  return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

Matrix tanh_of(const Matrix& z) {
  return z.unaryExpr([](double v) { return std::tanh(v); });
}

void require(bool ok, const std::string& message) {
  if (!ok) throw Error(message);
}

}  // namespace

Matrix embedding_lookup(const Tensor& table, std::span<const int> indices) {
  const auto rows = static_cast<int>(table.rows());
  Matrix out(static_cast<Eigen::Index>(indices.size()), static_cast<Eigen::Index>(table.cols()));
  const auto t = table.matrix();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const int idx = indices[k];
    require(idx >= 0 && idx < rows, "embedding index " + std::to_string(idx) +
                                        " out of range for table with " +
                                        std::to_string(rows) + " rows");
    out.row(static_cast<Eigen::Index>(k)) = t.row(idx);
  }
  return out;
}

void embedding_backward(std::span<const int> indices, const Matrix& upstream,
                        Tensor& table_grad) {
  require(static_cast<std::size_t>(upstream.rows()) == indices.size() &&
              static_cast<std::size_t>(upstream.cols()) == table_grad.cols(),
          "embedding_backward: upstream shape mismatch");
  auto g = table_grad.matrix();
  const auto rows = static_cast<int>(table_grad.rows());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const int idx = indices[k];
    require(idx >= 0 && idx < rows, "embedding index " + std::to_string(idx) + " out of range");
    g.row(idx) += upstream.row(static_cast<Eigen::Index>(k));
  }
}

Sequence lstm_forward(const LstmWeights& w, const Sequence& inputs, const LstmState* initial,
                      LstmCache* cache) {
  const auto H = static_cast<Eigen::Index>(w.hidden());
  const auto I = static_cast<Eigen::Index>(w.input_dim());
  require(w.input.rows() == 4 * w.hidden() && w.recurrent.rows() == 4 * w.hidden() &&
              w.bias.size() == 4 * w.hidden(),
          "lstm: weight shapes are inconsistent");
  require(!inputs.empty(), "lstm: empty input sequence");
  const Eigen::Index B = inputs.front().rows();

  Matrix h = initial ? initial->h : Matrix::Zero(B, H);
  Matrix c = initial ? initial->c : Matrix::Zero(B, H);
  require(h.rows() == B && h.cols() == H && c.rows() == B && c.cols() == H,
          "lstm: initial state shape mismatch");
  if (cache) {
    *cache = LstmCache{};
    cache->h0 = h;
    cache->c0 = c;
  }

  const auto W = w.input.matrix();
  const auto U = w.recurrent.matrix();
  const auto b = w.bias.matrix();  // 1 x 4H

  Sequence hidden;
  hidden.reserve(inputs.size());
  for (const auto& x : inputs) {
    require(x.rows() == B && x.cols() == I,
            "lstm: input has shape " + std::to_string(x.rows()) + "x" +
                std::to_string(x.cols()) + ", expected " + std::to_string(B) + "x" +
                std::to_string(I));
    Matrix z = x * W.transpose();
    z.noalias() += h * U.transpose();
    z.rowwise() += b.row(0);

    Matrix ig = sigmoid(z.middleCols(0, H));
    Matrix fg = sigmoid(z.middleCols(H, H));
    Matrix gg = tanh_of(z.middleCols(2 * H, H));
    Matrix og = sigmoid(z.middleCols(3 * H, H));
    c = fg.cwiseProduct(c) + ig.cwiseProduct(gg);
    Matrix tc = tanh_of(c);
    h = og.cwiseProduct(tc);
    hidden.push_back(h);

    if (cache) {
      cache->inputs.push_back(x);
      cache->input_gate.push_back(std::move(ig));
      cache->forget_gate.push_back(std::move(fg));
      cache->candidate.push_back(std::move(gg));
      cache->output_gate.push_back(std::move(og));
      cache->cell.push_back(c);
      cache->cell_tanh.push_back(std::move(tc));
      cache->hidden.push_back(h);
    }
  }
  return hidden;
}

LstmGrads lstm_backward(const LstmWeights& w, const LstmCache& cache, const Sequence& d_hidden,
                        const LstmState* d_final) {
  const std::size_t T = cache.inputs.size();
  const auto H = static_cast<Eigen::Index>(w.hidden());
  require(T > 0, "lstm_backward: empty cache");
  require(d_hidden.size() == T, "lstm_backward: expected " + std::to_string(T) +
                                    " upstream gradients, got " +
                                    std::to_string(d_hidden.size()));
  const Eigen::Index B = cache.h0.rows();
  for (const auto& d : d_hidden)
    require(d.rows() == B && d.cols() == H, "lstm_backward: upstream shape mismatch");

  const auto W = w.input.matrix();
  const auto U = w.recurrent.matrix();

  LstmGrads g;
  g.inputs.resize(T);
  g.input_weights = Tensor(w.input.shape());
  g.recurrent_weights = Tensor(w.recurrent.shape());
  g.bias = Tensor(w.bias.shape());
  auto dW = g.input_weights.matrix();
  auto dU = g.recurrent_weights.matrix();
  auto db = g.bias.matrix();

  Matrix dh_next = d_final ? d_final->h : Matrix::Zero(B, H);
  Matrix dc_next = d_final ? d_final->c : Matrix::Zero(B, H);
  Matrix dz(B, 4 * H);

  for (std::size_t t = T; t-- > 0;) {
    const Matrix& ig = cache.input_gate[t];
    const Matrix& fg = cache.forget_gate[t];
    const Matrix& gg = cache.candidate[t];
    const Matrix& og = cache.output_gate[t];
    const Matrix& tc = cache.cell_tanh[t];
    const Matrix& c_prev = t ? cache.cell[t - 1] : cache.c0;
    const Matrix& h_prev = t ? cache.hidden[t - 1] : cache.h0;

    const Matrix dh = d_hidden[t] + dh_next;
    const Matrix dc =
        dh.cwiseProduct(og).cwiseProduct((1.0 - tc.array().square()).matrix()) + dc_next;

    dz.middleCols(0, H) = dc.cwiseProduct(gg).cwiseProduct(ig.cwiseProduct((1.0 - ig.array()).matrix()));
    dz.middleCols(H, H) = dc.cwiseProduct(c_prev).cwiseProduct(fg.cwiseProduct((1.0 - fg.array()).matrix()));
    dz.middleCols(2 * H, H) = dc.cwiseProduct(ig).cwiseProduct((1.0 - gg.array().square()).matrix());
    dz.middleCols(3 * H, H) = dh.cwiseProduct(tc).cwiseProduct(og.cwiseProduct((1.0 - og.array()).matrix()));

    dW.noalias() += dz.transpose() * cache.inputs[t];
    dU.noalias() += dz.transpose() * h_prev;
    db += dz.colwise().sum();
    g.inputs[t].noalias() = dz * W;
    dh_next.noalias() = dz * U;
    dc_next = dc.cwiseProduct(fg);
  }
  g.initial = LstmState{std::move(dh_next), std::move(dc_next)};
  return g;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix probs(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      const double e = std::exp(logits(r, c) - m);
      probs(r, c) = e;
      sum += e;
    }
    probs.row(r) /= sum;
  }
  return probs;
}

SoftmaxCrossEntropy dense_softmax_cross_entropy(const Tensor& weights, const Tensor& bias,
                                                const Matrix& input,
                                                std::span<const int> labels) {
  const auto W = weights.matrix();
  const auto p = static_cast<int>(weights.rows());
  require(static_cast<std::size_t>(input.cols()) == weights.cols(),
          "dense: input width " + std::to_string(input.cols()) + " does not match weights " +
              shape_string(weights.shape()));
  require(bias.size() == weights.rows(), "dense: bias size mismatch");
  require(static_cast<std::size_t>(input.rows()) == labels.size(),
          "dense: one label per input row required");
  for (int y : labels)
    require(y >= 0 && y < p, "label " + std::to_string(y) + " out of range for " +
                                 std::to_string(p) + " classes");

  Matrix logits = input * W.transpose();
  logits.rowwise() += bias.matrix().row(0);

  SoftmaxCrossEntropy out;
  out.probs = softmax_rows(logits);
  const auto B = static_cast<double>(labels.size());
  Matrix d_logits = out.probs;
  double loss = 0.0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    // log-softmax directly, so a saturated wrong class still gives a finite loss.
    const double m = logits.row(r).maxCoeff();
    const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
    loss += lse - logits(r, labels[k]);
    d_logits(r, labels[k]) -= 1.0;
  }
  out.loss = labels.empty() ? 0.0 : loss / B;
  if (!labels.empty()) d_logits /= B;

  out.d_weights = Tensor(weights.shape());
  out.d_weights.matrix().noalias() = d_logits.transpose() * input;
  out.d_bias = Tensor(bias.shape());
  out.d_bias.matrix() = d_logits.colwise().sum();
  out.d_input = d_logits * W;
  return out;
}

void Adam::step(ParamMap& params, const ParamMap& grads) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);
  for (const auto& [name, grad] : grads) {
    auto it = params.find(name);
    require(it != params.end(), "adam: gradient for unknown parameter '" + name + "'");
    Tensor& param = it->second;
    require(param.shape() == grad.shape(), "adam: shape mismatch for '" + name + "'");
    auto [mit, m_new] = m_.try_emplace(name, param.shape());
    auto [vit, v_new] = v_.try_emplace(name, param.shape());
    auto m = mit->second.data();
    auto v = vit->second.data();
    auto p = param.data();
    auto g = grad.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

GradCheckReport grad_check(const LossFn& loss, ParamMap params, const ParamMap& analytic,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  const double h = options.step;
  for (auto& [name, tensor] : params) {
    auto ait = analytic.find(name);
    require(ait != analytic.end(), "grad_check: no analytic gradient for '" + name + "'");
    require(ait->second.shape() == tensor.shape(),
            "grad_check: analytic gradient shape mismatch for '" + name + "'");
    const std::size_t n = tensor.size();
    std::size_t stride = 1;
    if (options.max_entries_per_tensor && n > options.max_entries_per_tensor)
      stride = (n + options.max_entries_per_tensor - 1) / options.max_entries_per_tensor;
    for (std::size_t i = 0; i < n; i += stride) {
      const double original = tensor[i];
      tensor[i] = original + h;
      const double up = loss(params);
      tensor[i] = original - h;
      const double down = loss(params);
      tensor[i] = original;
      const double numeric = (up - down) / (2.0 * h);
      const double a = ait->second[i];
      if (!std::isfinite(up) || !std::isfinite(down) || !std::isfinite(a))
        throw Error("grad_check: non-finite value at " + name + "[" + std::to_string(i) + "]");
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (report.checked == 1 || rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_parameter = name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace nextdest::nn
