#include "nextdest/metrics.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace nextdest {

std::vector<int> top_n_classes(std::span<const double> probs, std::size_t n) {
  if (n < 1 || n > probs.size())
    throw Error("top-N: N=" + std::to_string(n) + " outside [1, " +
                std::to_string(probs.size()) + "]");
  std::vector<int> idx(probs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(),
                    [&](int a, int b) {
                      const double pa = probs[static_cast<std::size_t>(a)];
                      const double pb = probs[static_cast<std::size_t>(b)];
                      return pa != pb ? pa > pb : a < b;
                    });
  idx.resize(n);
  return idx;
}

double weighted_f1(std::span<const int> predictions, std::span<const int> labels,
                   std::size_t num_classes) {
  if (predictions.size() != labels.size())
    throw Error("weighted_f1: predictions and labels differ in length");
  if (labels.empty()) throw Error("weighted_f1: no instances");
  std::vector<double> tp(num_classes, 0), predicted(num_classes, 0), support(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i], yhat = predictions[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes || yhat < 0 ||
        static_cast<std::size_t>(yhat) >= num_classes)
      throw Error("weighted_f1: class id out of range");
    support[static_cast<std::size_t>(y)] += 1;
    predicted[static_cast<std::size_t>(yhat)] += 1;
    if (y == yhat) tp[static_cast<std::size_t>(y)] += 1;
  }
  double score = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (support[c] == 0) continue;
    const double precision = predicted[c] > 0 ? tp[c] / predicted[c] : 0.0;
    const double recall = tp[c] / support[c];
    const double f1 =
        precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    score += support[c] * f1;
  }
  return score / static_cast<double>(labels.size());
}

namespace {

void check_shapes(const nn::Matrix& probs, std::span<const int> labels, std::size_t n) {
  if (static_cast<std::size_t>(probs.rows()) != labels.size())
    throw Error("top-N: one probability row per label required");
  const auto p = static_cast<std::size_t>(probs.cols());
  if (n < 1 || n > p)
    throw Error("top-N: N=" + std::to_string(n) + " outside [1, " + std::to_string(p) + "]");
}

std::span<const double> row_of(const nn::Matrix& m, Eigen::Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

}  // namespace

double topn_f1(const nn::Matrix& probs, std::span<const int> labels, std::size_t n) {
  check_shapes(probs, labels, n);
  std::vector<int> collapsed(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto top = top_n_classes(row_of(probs, static_cast<Eigen::Index>(i)), n);
    collapsed[i] = std::find(top.begin(), top.end(), labels[i]) != top.end() ? labels[i] : top[0];
  }
  return weighted_f1(collapsed, labels, static_cast<std::size_t>(probs.cols()));
}

double recall_at_n(const nn::Matrix& probs, std::span<const int> labels, std::size_t n) {
  check_shapes(probs, labels, n);
  if (labels.empty()) throw Error("recall_at_n: no instances");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto top = top_n_classes(row_of(probs, static_cast<Eigen::Index>(i)), n);
    hits += std::find(top.begin(), top.end(), labels[i]) != top.end();
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<int> labels_of(std::span<const WindowEntry> entries) {
  std::vector<int> labels;
  labels.reserve(entries.size());
  for (const auto& e : entries) labels.push_back(e.target_destination);
  return labels;
}

CityId global_mode_destination(std::span<const WindowEntry> train) {
  if (train.empty()) throw Error("global_mode_destination: empty training set");
  std::map<CityId, std::size_t> counts;
  for (const auto& e : train) ++counts[e.target_destination];
  CityId best = counts.begin()->first;
  for (const auto& [city, count] : counts)
    if (count > counts[best]) best = city;
  return best;
}

std::vector<int> lookup_oracle_predictions(std::span<const WindowEntry> entries,
                                           CityId fallback) {
  std::vector<int> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    CityId guess = fallback;
    for (auto it = e.window.rbegin(); it != e.window.rend(); ++it) {
      if (it->origin == e.target_origin) {
        guess = it->destination;
        break;
      }
    }
    out.push_back(guess);
  }
  return out;
}

}  // namespace nextdest
