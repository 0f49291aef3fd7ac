#include "nextdest/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "nextdest/io.hpp"
#include "nextdest/random.hpp"

namespace nextdest {

using nn::Matrix;
using nn::ParamMap;
using nn::Tensor;

void Hyperparams::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw Error(std::string("hyperparameter ") + name + " must be positive");
  };
  positive(window_size, "window_size");
  positive(hidden1, "hidden1");
  positive(hidden2, "hidden2");
  positive(embedding_dim, "embedding_dim");
  positive(batch_size, "batch_size");
  positive(epochs, "epochs");
  positive(patience, "patience");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw Error("hyperparameter learning_rate must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw Error("hyperparameter validation_fraction must be in [0, 1)");
}

nlohmann::json Hyperparams::to_json() const {
  return {{"window_size", window_size},     {"hidden1", hidden1},
          {"hidden2", hidden2},             {"embedding_dim", embedding_dim},
          {"batch_size", batch_size},       {"epochs", epochs},
          {"learning_rate", learning_rate}, {"seed", seed},
          {"patience", patience},           {"validation_fraction", validation_fraction},
          {"shared_embedding", shared_embedding}};
}

Hyperparams Hyperparams::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("hyperparameters must be a JSON object");
  Hyperparams h;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "window_size") h.window_size = value.get<std::size_t>();
      else if (key == "hidden1") h.hidden1 = value.get<std::size_t>();
      else if (key == "hidden2") h.hidden2 = value.get<std::size_t>();
      else if (key == "embedding_dim") h.embedding_dim = value.get<std::size_t>();
      else if (key == "batch_size") h.batch_size = value.get<std::size_t>();
      else if (key == "epochs") h.epochs = value.get<std::size_t>();
      else if (key == "learning_rate") h.learning_rate = value.get<double>();
      else if (key == "seed") h.seed = value.get<std::uint64_t>();
      else if (key == "patience") h.patience = value.get<std::size_t>();
      else if (key == "validation_fraction") h.validation_fraction = value.get<double>();
      else if (key == "shared_embedding") h.shared_embedding = value.get<bool>();
      else throw Error("unknown hyperparameter '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid hyperparameters: ") + e.what());
  }
  h.validate();
  return h;
}

ModelShape ModelShape::from(const Hyperparams& hyper, std::size_t vocab_size) {
  return ModelShape{vocab_size, hyper.hidden1, hyper.hidden2, hyper.embedding_dim,
                    hyper.shared_embedding};
}

std::string ModelShape::embedding_param(EmbeddingRole role) const {
  if (shared_embedding) return "embedding.city";
  switch (role) {
    case EmbeddingRole::ChainOrigin: return "embedding.chain_origin";
    case EmbeddingRole::ChainDestination: return "embedding.chain_destination";
    case EmbeddingRole::TopOrigin: return "embedding.top_origin";
    case EmbeddingRole::TargetOrigin: return "embedding.target_origin";
  }
  return {};
}

std::map<std::string, std::vector<std::size_t>> ModelShape::parameter_shapes() const {
  std::map<std::string, std::vector<std::size_t>> s;
  for (auto role : {EmbeddingRole::ChainOrigin, EmbeddingRole::ChainDestination,
                    EmbeddingRole::TopOrigin, EmbeddingRole::TargetOrigin})
    s[embedding_param(role)] = {vocab_size, embedding_dim};
  s["lstm1.w_input"] = {4 * hidden1, lstm1_input()};
  s["lstm1.w_recurrent"] = {4 * hidden1, hidden1};
  s["lstm1.bias"] = {4 * hidden1};
  s["lstm2.w_input"] = {4 * hidden2, hidden1};
  s["lstm2.w_recurrent"] = {4 * hidden2, hidden2};
  s["lstm2.bias"] = {4 * hidden2};
  s["dense.weights"] = {vocab_size, hidden2 + embedding_dim};
  s["dense.bias"] = {vocab_size};
  return s;
}

ParamMap init_params(const ModelShape& shape, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0}));
  ParamMap params;
  for (const auto& [name, dims] : shape.parameter_shapes()) {
    Tensor t(dims);
    if (name.starts_with("embedding.")) {
      for (auto& v : t.data()) v = rng.uniform(-0.05, 0.05);
    } else if (name.ends_with("bias")) {
      if (name.starts_with("lstm")) {
        const std::size_t hidden = t.size() / 4;
        for (std::size_t i = hidden; i < 2 * hidden; ++i) t[i] = 1.0;
      }
    } else {
      const double r = std::sqrt(6.0 / static_cast<double>(dims[0] + dims[1]));
      for (auto& v : t.data()) v = rng.uniform(-r, r);
    }
    params.emplace(name, std::move(t));
  }
  return params;
}

namespace {

const Tensor& param(const ParamMap& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw Error("missing model parameter '" + name + "'");
  return it->second;
}

void check_batch(const ModelShape& shape, std::span<const EncodedEntry> batch) {
  if (batch.empty()) throw Error("empty batch");
  const std::size_t w = batch.front().window_size;
  const auto p = static_cast<CityId>(shape.vocab_size);
  auto in_vocab = [p](CityId c) { return c >= 0 && c < p; };
  for (const auto& e : batch) {
    if (e.window_size != w || e.window_size == 0)
      throw Error("batch mixes window sizes " + std::to_string(w) + " and " +
                  std::to_string(e.window_size));
    if (e.dense.size() != w * kDenseWidth || e.chain_origins.size() != w ||
        e.chain_destinations.size() != w)
      throw Error("encoded entry does not match the model input schema");
    if (!in_vocab(e.top_origin) || !in_vocab(e.target_origin) || !in_vocab(e.label) ||
        !std::all_of(e.chain_origins.begin(), e.chain_origins.end(), in_vocab) ||
        !std::all_of(e.chain_destinations.begin(), e.chain_destinations.end(), in_vocab))
      throw Error("encoded entry references a city outside the model vocabulary of " +
                  std::to_string(shape.vocab_size));
  }
}

struct Forward {
  std::vector<std::vector<int>> origins;       // [t][b]
  std::vector<std::vector<int>> destinations;  // [t][b]
  std::vector<int> top;
  std::vector<int> target_origin;
  std::vector<int> labels;
  nn::LstmCache lstm1;
  nn::LstmCache lstm2;
  Matrix head;
};

// Runs the network up to the head input. Caches are filled only when
// `keep_cache` is set.
Forward run_forward(const ParamMap& params, const ModelShape& shape,
                    std::span<const EncodedEntry> batch, bool keep_cache) {
  check_batch(shape, batch);
  const std::size_t B = batch.size();
  const std::size_t w = batch.front().window_size;
  const auto d = static_cast<Eigen::Index>(shape.embedding_dim);
  const auto dense = static_cast<Eigen::Index>(kDenseWidth);

  Forward f;
  f.origins.assign(w, std::vector<int>(B));
  f.destinations.assign(w, std::vector<int>(B));
  for (std::size_t b = 0; b < B; ++b) {
    f.top.push_back(batch[b].top_origin);
    f.target_origin.push_back(batch[b].target_origin);
    f.labels.push_back(batch[b].label);
    for (std::size_t t = 0; t < w; ++t) {
      f.origins[t][b] = batch[b].chain_origins[t];
      f.destinations[t][b] = batch[b].chain_destinations[t];
    }
  }

  const Tensor& emb_o = param(params, shape.embedding_param(EmbeddingRole::ChainOrigin));
  const Tensor& emb_d = param(params, shape.embedding_param(EmbeddingRole::ChainDestination));
  const Tensor& emb_top = param(params, shape.embedding_param(EmbeddingRole::TopOrigin));
  const Tensor& emb_target = param(params, shape.embedding_param(EmbeddingRole::TargetOrigin));

  const Matrix top_rows = nn::embedding_lookup(emb_top, f.top);
  nn::Sequence inputs;
  inputs.reserve(w);
  for (std::size_t t = 0; t < w; ++t) {
    Matrix x(static_cast<Eigen::Index>(B), 3 * d + dense);
    x.leftCols(d) = nn::embedding_lookup(emb_o, f.origins[t]);
    x.middleCols(d, d) = nn::embedding_lookup(emb_d, f.destinations[t]);
    for (std::size_t b = 0; b < B; ++b)
      x.row(static_cast<Eigen::Index>(b)).segment(2 * d, dense) =
          Eigen::Map<const Eigen::RowVectorXd>(batch[b].dense.data() + t * kDenseWidth, dense);
    x.rightCols(d) = top_rows;
    inputs.push_back(std::move(x));
  }

  const nn::LstmWeights l1{param(params, "lstm1.w_input"), param(params, "lstm1.w_recurrent"),
                           param(params, "lstm1.bias")};
  const nn::LstmWeights l2{param(params, "lstm2.w_input"), param(params, "lstm2.w_recurrent"),
                           param(params, "lstm2.bias")};
  const nn::Sequence h1 = nn::lstm_forward(l1, inputs, nullptr, keep_cache ? &f.lstm1 : nullptr);
  const nn::Sequence h2 = nn::lstm_forward(l2, h1, nullptr, keep_cache ? &f.lstm2 : nullptr);

  const auto h2_dim = h2.back().cols();
  f.head.resize(static_cast<Eigen::Index>(B), h2_dim + d);
  f.head.leftCols(h2_dim) = h2.back();
  f.head.rightCols(d) = nn::embedding_lookup(emb_target, f.target_origin);
  return f;
}

Matrix head_logits(const ParamMap& params, const Matrix& head) {
  const Tensor& w = param(params, "dense.weights");
  const Tensor& b = param(params, "dense.bias");
  Matrix logits = head * w.matrix().transpose();
  logits.rowwise() += b.matrix().row(0);
  return logits;
}

}  // namespace

Matrix predict_batch(const ParamMap& params, const ModelShape& shape,
                     std::span<const EncodedEntry> batch) {
  const Forward f = run_forward(params, shape, batch, false);
  return nn::softmax_rows(head_logits(params, f.head));
}

double batch_loss(const ParamMap& params, const ModelShape& shape,
                  std::span<const EncodedEntry> batch) {
  const Forward f = run_forward(params, shape, batch, false);
  return nn::dense_softmax_cross_entropy(param(params, "dense.weights"),
                                         param(params, "dense.bias"), f.head, f.labels)
      .loss;
}

BatchGradients batch_gradients(const ParamMap& params, const ModelShape& shape,
                               std::span<const EncodedEntry> batch) {
  Forward f = run_forward(params, shape, batch, true);
  auto ce = nn::dense_softmax_cross_entropy(param(params, "dense.weights"),
                                            param(params, "dense.bias"), f.head, f.labels);
  BatchGradients out;
  out.loss = ce.loss;
  out.grads = nn::zeros_like(params);
  out.grads["dense.weights"] = std::move(ce.d_weights);
  out.grads["dense.bias"] = std::move(ce.d_bias);

  const auto d = static_cast<Eigen::Index>(shape.embedding_dim);
  const auto h2_dim = static_cast<Eigen::Index>(shape.hidden2);
  const std::size_t w = f.origins.size();

  nn::embedding_backward(f.target_origin, ce.d_input.rightCols(d),
                         out.grads[shape.embedding_param(EmbeddingRole::TargetOrigin)]);

  const nn::LstmWeights l2{param(params, "lstm2.w_input"), param(params, "lstm2.w_recurrent"),
                           param(params, "lstm2.bias")};
  nn::Sequence d_h2(w, Matrix::Zero(ce.d_input.rows(), h2_dim));
  d_h2.back() = ce.d_input.leftCols(h2_dim);
  nn::LstmGrads g2 = nn::lstm_backward(l2, f.lstm2, d_h2);
  out.grads["lstm2.w_input"] = std::move(g2.input_weights);
  out.grads["lstm2.w_recurrent"] = std::move(g2.recurrent_weights);
  out.grads["lstm2.bias"] = std::move(g2.bias);

  const nn::LstmWeights l1{param(params, "lstm1.w_input"), param(params, "lstm1.w_recurrent"),
                           param(params, "lstm1.bias")};
  nn::LstmGrads g1 = nn::lstm_backward(l1, f.lstm1, g2.inputs);
  out.grads["lstm1.w_input"] = std::move(g1.input_weights);
  out.grads["lstm1.w_recurrent"] = std::move(g1.recurrent_weights);
  out.grads["lstm1.bias"] = std::move(g1.bias);

  Tensor& g_o = out.grads[shape.embedding_param(EmbeddingRole::ChainOrigin)];
  Tensor& g_d = out.grads[shape.embedding_param(EmbeddingRole::ChainDestination)];
  Tensor& g_top = out.grads[shape.embedding_param(EmbeddingRole::TopOrigin)];
  for (std::size_t t = 0; t < w; ++t) {
    const Matrix& dx = g1.inputs[t];
    nn::embedding_backward(f.origins[t], dx.leftCols(d), g_o);
    nn::embedding_backward(f.destinations[t], dx.middleCols(d, d), g_d);
    nn::embedding_backward(f.top, dx.rightCols(d), g_top);
  }
  out.probs = std::move(ce.probs);
  return out;
}

nlohmann::json EpochRecord::to_json() const {
  return {{"epoch", epoch}, {"train_loss", train_loss}, {"val_loss", val_loss},
          {"elapsed_ms", elapsed_ms}};
}

std::vector<double> TrainedModel::forward(const EncodedEntry& entry) const {
  if (entry.window_size != hyper.window_size)
    throw Error("entry window size " + std::to_string(entry.window_size) +
                " does not match model window size " + std::to_string(hyper.window_size));
  const Matrix probs = predict_batch(params, shape(), std::span(&entry, 1));
  return std::vector<double>(probs.data(), probs.data() + probs.size());
}

Matrix TrainedModel::predict(std::span<const EncodedEntry> entries) const {
  const ModelShape s = shape();
  Matrix out(static_cast<Eigen::Index>(entries.size()), static_cast<Eigen::Index>(s.vocab_size));
  const std::size_t chunk = std::max<std::size_t>(hyper.batch_size, 256);
  for (std::size_t start = 0; start < entries.size(); start += chunk) {
    const auto part = entries.subspan(start, std::min(chunk, entries.size() - start));
    for (const auto& e : part)
      if (e.window_size != hyper.window_size)
        throw Error("entry window size " + std::to_string(e.window_size) +
                    " does not match model window size " + std::to_string(hyper.window_size));
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(part.size())) =
        predict_batch(params, s, part);
  }
  return out;
}

Matrix TrainedModel::predict(std::span<const WindowEntry> entries) const {
  const auto encoded = preprocessor.transform(entries);
  return predict(std::span<const EncodedEntry>(encoded));
}

std::vector<std::string> validation_customers(std::span<const WindowEntry> train_entries,
                                              const Hyperparams& hyper) {
  std::vector<std::string> customers;
  std::set<std::string> seen;
  for (const auto& e : train_entries)
    if (seen.insert(e.customer_id).second) customers.push_back(e.customer_id);
  std::sort(customers.begin(), customers.end());
  if (customers.size() < 2 || hyper.validation_fraction <= 0.0) return {};
  auto n_val = static_cast<std::size_t>(
      std::llround(hyper.validation_fraction * static_cast<double>(customers.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, customers.size() - 1);
  Rng rng(derive_seed(hyper.seed, {1}));
  rng.shuffle(std::span(customers));
  customers.resize(n_val);
  std::sort(customers.begin(), customers.end());
  return customers;
}

namespace {

double mean_loss(const ParamMap& params, const ModelShape& shape,
                 std::span<const EncodedEntry> entries, std::size_t chunk) {
  double total = 0.0;
  for (std::size_t start = 0; start < entries.size(); start += chunk) {
    const auto part = entries.subspan(start, std::min(chunk, entries.size() - start));
    total += batch_loss(params, shape, part) * static_cast<double>(part.size());
  }
  return total / static_cast<double>(entries.size());
}

}  // namespace

TrainedModel train(std::span<const WindowEntry> train_entries, const CityVocab& vocab,
                   const Hyperparams& hyper, const EpochCallback& on_epoch) {
  hyper.validate();
  if (train_entries.empty()) throw Error("train: empty training set");
  for (const auto& e : train_entries)
    if (e.window.size() != hyper.window_size)
      throw Error("train: entry window size " + std::to_string(e.window.size()) +
                  " differs from window_size " + std::to_string(hyper.window_size));

  TrainedModel model;
  model.hyper = hyper;
  model.vocab = vocab;
  model.preprocessor = Preprocessor::fit(train_entries, vocab.size());
  const ModelShape shape = model.shape();

  const auto val_ids = validation_customers(train_entries, hyper);
  std::vector<EncodedEntry> fit_set, val_set;
  for (const auto& e : train_entries) {
    auto enc = model.preprocessor.transform(e);
    if (std::binary_search(val_ids.begin(), val_ids.end(), e.customer_id))
      val_set.push_back(std::move(enc));
    else
      fit_set.push_back(std::move(enc));
  }

  ParamMap params = init_params(shape, hyper.seed);
  nn::Adam adam(nn::AdamConfig{hyper.learning_rate});
  Rng rng(derive_seed(hyper.seed, {2}));
  std::vector<std::size_t> order(fit_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  ParamMap best = params;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  const auto started = std::chrono::steady_clock::now();
  std::vector<EncodedEntry> batch;

  for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
    rng.shuffle(std::span(order));
    double epoch_loss = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += hyper.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), start + hyper.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(fit_set[order[k]]);
      BatchGradients g = batch_gradients(params, shape, batch);
      if (!std::isfinite(g.loss)) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch << ", batch " << batch_no
            << "; try a smaller learning_rate (currently " << hyper.learning_rate << ")";
        throw Error(msg.str());
      }
      epoch_loss += g.loss * static_cast<double>(batch.size());
      adam.step(params, g.grads);
    }
    const double train_loss = epoch_loss / static_cast<double>(fit_set.size());
    const double val_loss =
        val_set.empty() ? train_loss : mean_loss(params, shape, val_set, 256);
    model.history.train_loss.push_back(train_loss);
    model.history.val_loss.push_back(val_loss);
    if (on_epoch) {
      const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - started)
                          .count();
      on_epoch(EpochRecord{epoch, train_loss, val_loss, ms});
    }
    if (val_loss < best_loss) {
      best_loss = val_loss;
      best = params;
      model.history.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= hyper.patience) {
      break;
    }
  }
  model.params = std::move(best);
  return model;
}

nlohmann::json checkpoint_json(const TrainedModel& model) {
  auto params = nlohmann::json::array();
  for (const auto& [name, t] : model.params) {
    params.push_back({{"name", name},
                      {"shape", t.shape()},
                      {"values", std::vector<double>(t.data().begin(), t.data().end())}});
  }
  return {{"format", "nextdest-checkpoint"},
          {"version", kCheckpointVersion},
          {"hyperparams", model.hyper.to_json()},
          {"vocab", model.vocab.cities()},
          {"preprocessor", model.preprocessor.to_json()},
          {"history",
           {{"train_loss", model.history.train_loss},
            {"val_loss", model.history.val_loss},
            {"best_epoch", model.history.best_epoch}}},
          {"params", std::move(params)}};
}

TrainedModel model_from_checkpoint(const nlohmann::json& j, const CityVocab* expected_vocab) {
  using Kind = CheckpointError::Kind;
  if (!j.is_object() || !j.contains("format") || j["format"] != "nextdest-checkpoint")
    throw CheckpointError(Kind::Format, "not a nextdest checkpoint");
  if (!j.contains("version") || j["version"] != kCheckpointVersion)
    throw CheckpointError(Kind::Version,
                          "checkpoint version " + (j.contains("version") ? j["version"].dump() : "?") +
                              " is not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
  TrainedModel m;
  try {
    m.hyper = Hyperparams::from_json(j.at("hyperparams"));
    m.vocab = CityVocab(j.at("vocab").get<std::vector<std::string>>());
    m.preprocessor = Preprocessor::from_json(j.at("preprocessor"));
    const auto& h = j.at("history");
    m.history.train_loss = h.at("train_loss").get<std::vector<double>>();
    m.history.val_loss = h.at("val_loss").get<std::vector<double>>();
    m.history.best_epoch = h.at("best_epoch").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Kind::Format, std::string("malformed checkpoint: ") + e.what());
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointError(Kind::Format, std::string("malformed checkpoint: ") + e.what());
  }

  if (m.preprocessor.vocab_size() != m.vocab.size())
    throw CheckpointError(Kind::Vocabulary, "preprocessor vocabulary size does not match vocabulary");
  if (expected_vocab && !(*expected_vocab == m.vocab))
    throw CheckpointError(Kind::Vocabulary,
                          "checkpoint vocabulary has " + std::to_string(m.vocab.size()) +
                              " cities; expected vocabulary of " +
                              std::to_string(expected_vocab->size()));

  const auto expected = m.shape().parameter_shapes();
  try {
    for (const auto& item : j.at("params")) {
      const auto name = item.at("name").get<std::string>();
      auto it = expected.find(name);
      if (it == expected.end())
        throw CheckpointError(Kind::Shape, "unexpected parameter '" + name + "'");
      const auto shape = item.at("shape").get<std::vector<std::size_t>>();
      if (shape != it->second)
        throw CheckpointError(Kind::Shape, "parameter '" + name + "' has shape " +
                                               nn::shape_string(shape) + ", expected " +
                                               nn::shape_string(it->second));
      auto values = item.at("values").get<std::vector<double>>();
      const std::size_t want = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                               std::multiplies<>());
      if (values.size() != want)
        throw CheckpointError(Kind::Shape, "parameter '" + name + "' has " +
                                               std::to_string(values.size()) +
                                               " values, shape needs " + std::to_string(want));
      m.params.emplace(name, Tensor(shape, std::move(values)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(Kind::Format, std::string("malformed parameter list: ") + e.what());
  }
  for (const auto& [name, dims] : expected)
    if (!m.params.contains(name))
      throw CheckpointError(Kind::Shape, "parameter '" + name + "' missing from checkpoint");
  return m;
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, checkpoint_json(model).dump());
}

TrainedModel load_model(const std::filesystem::path& path, const CityVocab* expected_vocab) {
  const std::string text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError(CheckpointError::Kind::Truncated,
                          "checkpoint '" + path.string() + "' is truncated or corrupt: " + e.what());
  }
  return model_from_checkpoint(j, expected_vocab);
}

}  // namespace nextdest
