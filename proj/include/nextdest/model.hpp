#pragma once

// Next-destination network:
//
//   per timestep  [emb(origin_t) | emb(dest_t) | dense date/numeric/season | emb(top origin)]
//   -> LSTM(hidden1, full sequence) -> LSTM(hidden2) -> last hidden state
//   -> [h | emb(target origin)] -> dense(p) -> softmax
//
// The target trip's origin joins only at the head.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nextdest/core.hpp"
#include "nextdest/nn.hpp"
#include "nextdest/pipeline.hpp"

namespace nextdest {

struct Hyperparams {
  std::size_t window_size = 5;
  std::size_t hidden1 = 100;
  std::size_t hidden2 = 20;
  std::size_t embedding_dim = 8;
  std::size_t batch_size = 64;
  std::size_t epochs = 20;
  double learning_rate = 1e-3;
  std::uint64_t seed = 7;
  /// Epochs without validation improvement before stopping.
  std::size_t patience = 3;
  double validation_fraction = 0.1;
  /// One city table for all four city inputs, or one table each.
  bool shared_embedding = true;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static Hyperparams from_json(const nlohmann::json& j);

  bool operator==(const Hyperparams&) const = default;
};

enum class EmbeddingRole { ChainOrigin, ChainDestination, TopOrigin, TargetOrigin };

struct ModelShape {
  std::size_t vocab_size = 0;
  std::size_t hidden1 = 0;
  std::size_t hidden2 = 0;
  std::size_t embedding_dim = 0;
  bool shared_embedding = true;

  static ModelShape from(const Hyperparams& hyper, std::size_t vocab_size);

  std::size_t lstm1_input() const { return 3 * embedding_dim + kDenseWidth; }
  std::string embedding_param(EmbeddingRole role) const;
  /// Every parameter name with its shape.
  std::map<std::string, std::vector<std::size_t>> parameter_shapes() const;
};

/// Glorot-uniform matrices, embeddings in (-0.05, 0.05), zero biases except
/// the forget gates (1.0).
nn::ParamMap init_params(const ModelShape& shape, std::uint64_t seed);

/// Class probabilities, one row per entry. All entries must share a window
/// length.
nn::Matrix predict_batch(const nn::ParamMap& params, const ModelShape& shape,
                         std::span<const EncodedEntry> batch);

/// Mean cross-entropy over the batch.
double batch_loss(const nn::ParamMap& params, const ModelShape& shape,
                  std::span<const EncodedEntry> batch);

struct BatchGradients {
  double loss = 0.0;
  nn::Matrix probs;
  nn::ParamMap grads;
};

BatchGradients batch_gradients(const nn::ParamMap& params, const ModelShape& shape,
                               std::span<const EncodedEntry> batch);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  long long elapsed_ms = 0;

  nlohmann::json to_json() const;
};

struct TrainingHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  /// 1-based epoch whose parameters were kept.
  std::size_t best_epoch = 0;

  bool operator==(const TrainingHistory&) const = default;
};

struct TrainedModel {
  Hyperparams hyper;
  CityVocab vocab;
  Preprocessor preprocessor;
  nn::ParamMap params;
  TrainingHistory history;

  ModelShape shape() const { return ModelShape::from(hyper, vocab.size()); }

  /// Probability vector over the vocabulary.
  std::vector<double> forward(const EncodedEntry& entry) const;
  nn::Matrix predict(std::span<const EncodedEntry> entries) const;
  nn::Matrix predict(std::span<const WindowEntry> entries) const;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Holds out a share of training customers for early stopping and returns the
/// parameters of the best validation epoch. Throws on a non-finite loss.
TrainedModel train(std::span<const WindowEntry> train_entries, const CityVocab& vocab,
                   const Hyperparams& hyper, const EpochCallback& on_epoch = {});

/// Customer ids assigned to the validation share, in sorted order.
std::vector<std::string> validation_customers(std::span<const WindowEntry> train_entries,
                                              const Hyperparams& hyper);

class CheckpointError : public Error {
 public:
  enum class Kind { Truncated, Format, Version, Shape, Vocabulary };

  CheckpointError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr int kCheckpointVersion = 1;

nlohmann::json checkpoint_json(const TrainedModel& model);
TrainedModel model_from_checkpoint(const nlohmann::json& j, const CityVocab* expected_vocab = nullptr);
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path,
                        const CityVocab* expected_vocab = nullptr);

}  // namespace nextdest
