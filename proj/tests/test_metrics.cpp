#include <doctest.h>

#include "helpers.hpp"
#include "nextdest/datagen.hpp"
#include "nextdest/metrics.hpp"
#include "nextdest/random.hpp"

using namespace nextdest;

namespace {

nn::Matrix random_probs(std::size_t rows, std::size_t p, Rng& rng) {
  nn::Matrix m(rows, p);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < p; ++k) s += (m(r, k) = rng.uniform());
    m.row(r) /= s;
  }
  return m;
}

}  // namespace

TEST_CASE("top classes break ties toward lower ids") {
  const std::vector<double> p = {0.1, 0.3, 0.3, 0.2, 0.1};
  CHECK(top_n_classes(p, 1) == std::vector<int>{1});
  CHECK(top_n_classes(p, 3) == std::vector<int>{1, 2, 3});
  CHECK(top_n_classes(p, 5) == std::vector<int>{1, 2, 3, 0, 4});
}

TEST_CASE("weighted f1 by hand") {
  const std::vector<int> pred = {0, 0, 1, 2}, truth = {0, 1, 1, 2};
  CHECK(weighted_f1(pred, truth, 3) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(weighted_f1(truth, truth, 3) == 1.0);
  // Predicting an unseen class only costs recall of the true class.
  const std::vector<int> stray = {3, 1, 1, 2};
  CHECK(weighted_f1(stray, truth, 4) == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("four-instance hand example") {
  nn::Matrix probs(4, 2);
  probs << 0.9, 0.1,  //
      0.4, 0.6,       //
      0.2, 0.8,       //
      0.7, 0.3;
  const std::vector<int> labels = {0, 0, 1, 1};
  CHECK(topn_f1(probs, labels, 1) == 0.5);
  CHECK(topn_f1(probs, labels, 2) == 1.0);
  CHECK(recall_at_n(probs, labels, 1) == 0.5);
  CHECK(recall_at_n(probs, labels, 2) == 1.0);
  CHECK_THROWS_AS(topn_f1(probs, labels, 0), Error);
  CHECK_THROWS_AS(topn_f1(probs, labels, 3), Error);
}

TEST_CASE("top-N F1 properties on random draws") {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t p = 8 + rng.below(9), rows = 5 + rng.below(60);
    const auto probs = random_probs(rows, p, rng);
    std::vector<int> labels(rows);
    for (auto& l : labels) l = static_cast<int>(rng.below(p));
    double prev = 0.0;
    for (std::size_t n : {1u, 3u, 5u, 7u}) {
      const double s = topn_f1(probs, labels, n);
      CHECK(s >= prev);
      CHECK(s <= 1.0);
      prev = s;
    }
    CHECK(topn_f1(probs, labels, p) == 1.0);

    std::vector<int> argmax(rows);
    for (std::size_t r = 0; r < rows; ++r)
      argmax[r] = top_n_classes(std::span(probs.row(r).data(), p), 1)[0];
    CHECK(topn_f1(probs, labels, 1) == doctest::Approx(weighted_f1(argmax, labels, p)).epsilon(1e-15));
  }
}

TEST_CASE("baselines") {
  GenConfig g;
  g.n_customers = 80;
  g.archetype_mix = {0, 1, 0};
  const auto rows = to_raw(generate(g));
  const auto vocab = build_vocab(rows, 16);
  const auto split = build_split(filter_min_trips(clean(rows, vocab), 5), 5);
  const auto labels = labels_of(split.test);
  const auto oracle = lookup_oracle_predictions(split.test, 0);
  CHECK(weighted_f1(oracle, labels, vocab.size()) == 1.0);

  const CityId mode = global_mode_destination(split.train);
  std::vector<std::size_t> counts(vocab.size());
  for (const auto& e : split.train) ++counts[static_cast<std::size_t>(e.target_destination)];
  CHECK(counts[static_cast<std::size_t>(mode)] ==
        *std::max_element(counts.begin(), counts.end()));
}
