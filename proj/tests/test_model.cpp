#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "reference_model.hpp"
#include "nextdest/datagen.hpp"
#include "nextdest/io.hpp"
#include "nextdest/model.hpp"

using namespace nextdest;

namespace {

struct Fixture {
  CityVocab vocab;
  Split split;
  std::vector<EncodedEntry> encoded;
  Preprocessor pre;
};

Fixture fixture(std::size_t customers, std::size_t w, ArchetypeMix mix = {0.4, 0.4, 0.2},
                std::size_t top_p = 8) {
  GenConfig g;
  g.n_customers = customers;
  g.n_cities = top_p;
  g.archetype_mix = mix;
  g.seed = 17;
  const auto rows = to_raw(generate(g));
  Fixture f;
  f.vocab = build_vocab(rows, top_p);
  f.split = build_split(filter_min_trips(clean(rows, f.vocab), w), w);
  f.pre = Preprocessor::fit(f.split.train, f.vocab.size());
  f.encoded = f.pre.transform(f.split.train);
  return f;
}

Hyperparams tiny(std::size_t w) {
  Hyperparams h;
  h.window_size = w;
  h.hidden1 = 12;
  h.hidden2 = 6;
  h.embedding_dim = 4;
  h.batch_size = 16;
  h.epochs = 3;
  return h;
}

}  // namespace

TEST_CASE("hyperparameters validate and round trip") {
  Hyperparams h;
  CHECK(h.hidden1 == 100);
  CHECK(h.hidden2 == 20);
  CHECK(h.embedding_dim == 8);
  CHECK(Hyperparams::from_json(h.to_json()) == h);
  CHECK_THROWS_AS(Hyperparams::from_json({{"hiden1", 3}}), Error);
  CHECK_THROWS_AS(Hyperparams::from_json({{"batch_size", 0}}), Error);
  CHECK_THROWS_AS(Hyperparams::from_json({{"learning_rate", -1.0}}), Error);
}

TEST_CASE("parameter shapes") {
  Hyperparams h;
  const auto shape = ModelShape::from(h, 16);
  const auto s = shape.parameter_shapes();
  CHECK(s.at("embedding.city") == std::vector<std::size_t>{16, 8});
  CHECK(s.at("lstm1.w_input") == std::vector<std::size_t>{400, 3 * 8 + 61});
  CHECK(s.at("lstm1.w_recurrent") == std::vector<std::size_t>{400, 100});
  CHECK(s.at("lstm2.w_input") == std::vector<std::size_t>{80, 100});
  CHECK(s.at("lstm2.bias") == std::vector<std::size_t>{80});
  CHECK(s.at("dense.weights") == std::vector<std::size_t>{16, 28});
  CHECK(s.at("dense.bias") == std::vector<std::size_t>{16});

  h.shared_embedding = false;
  const auto sep = ModelShape::from(h, 16).parameter_shapes();
  CHECK_FALSE(sep.contains("embedding.city"));
  CHECK(sep.contains("embedding.target_origin"));
  CHECK(sep.size() == s.size() + 3);
}

TEST_CASE("initialisation") {
  const auto shape = ModelShape::from(Hyperparams{}, 16);
  const auto p = init_params(shape, 7);
  CHECK(p == init_params(shape, 7));
  CHECK_FALSE(p == init_params(shape, 8));
  const auto& b = p.at("lstm1.bias");
  for (std::size_t k = 0; k < 400; ++k) CHECK(b[k] == (k >= 100 && k < 200 ? 1.0 : 0.0));
  const double r = std::sqrt(6.0 / (85 + 400));
  for (double v : p.at("lstm1.w_input").data()) CHECK(std::abs(v) <= r);
  for (double v : p.at("embedding.city").data()) CHECK(std::abs(v) <= 0.05);
}

TEST_CASE("forward is a distribution and not saturated at init") {
  auto f = fixture(40, 4, {0.4, 0.4, 0.2}, 16);
  auto h = Hyperparams{};
  h.window_size = 4;
  const auto shape = ModelShape::from(h, 16);
  const auto params = init_params(shape, 3);
  const auto probs = predict_batch(params, shape, f.encoded);
  CHECK(probs.cols() == 16);
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    CHECK(std::abs(probs.row(r).sum() - 1.0) < 1e-12);
    CHECK(probs.row(r).minCoeff() >= 0.0);
    CHECK(probs.row(r).maxCoeff() < 0.5);
  }
  CHECK(predict_batch(params, shape, f.encoded) == probs);
  CHECK(batch_loss(params, shape, f.encoded) == doctest::Approx(std::log(16.0)).epsilon(0.05));
}

TEST_CASE("target origin reaches only the head") {
  auto f = fixture(20, 3);
  EncodedEntry a = f.encoded.front(), b = a;
  b.target_origin = (a.target_origin + 1) % static_cast<int>(f.vocab.size());
  std::vector<EncodedEntry> pair = {a, b};

  // Separate tables so zeroing the head's rows leaves the chain untouched.
  Hyperparams hs = tiny(3);
  hs.shared_embedding = false;
  const auto sep = ModelShape::from(hs, f.vocab.size());
  auto p2 = init_params(sep, 5);
  auto probs = predict_batch(p2, sep, pair);
  CHECK_FALSE(probs.row(0) == probs.row(1));
  p2.at("embedding.target_origin").fill(0.0);
  probs = predict_batch(p2, sep, pair);
  CHECK(probs.row(0) == probs.row(1));
}

TEST_CASE("forward agrees with the extended-precision reference") {
  auto f = fixture(20, 3);
  for (bool shared : {true, false}) {
    Hyperparams h = tiny(3);
    h.shared_embedding = shared;
    const auto shape = ModelShape::from(h, f.vocab.size());
    const auto params = init_params(shape, 2);
    const auto probs = predict_batch(params, shape, f.encoded);
    const auto ref = testing::reference_probs(params, shape, f.encoded);
    double worst = 0.0;
    for (std::size_t r = 0; r < ref.size(); ++r)
      for (std::size_t k = 0; k < ref[r].size(); ++k)
        worst = std::max(worst, std::abs(probs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) -
                                         static_cast<double>(ref[r][k])));
    CHECK(worst < 1e-13);
  }
}

TEST_CASE("full model gradient check") {
  auto f = fixture(20, 3);
  for (bool shared : {true, false}) {
    Hyperparams h = tiny(3);
    h.shared_embedding = shared;
    const auto shape = ModelShape::from(h, f.vocab.size());
    const auto params = init_params(shape, 11);
    const std::vector<EncodedEntry> batch(f.encoded.begin(), f.encoded.begin() + 2);
    const auto g = batch_gradients(params, shape, batch);
    CHECK(g.loss == doctest::Approx(batch_loss(params, shape, batch)).epsilon(1e-14));
    const auto report = nn::grad_check(testing::reference_loss_fn(params, shape, batch), params, g.grads);
    INFO(report.worst_parameter, " ", report.worst_index, " ", report.worst_analytic, " ",
         report.worst_numeric);
    CHECK(report.max_relative_error < 1e-4);
    CHECK(report.checked == [&] {
      std::size_t n = 0;
      for (const auto& [name, t] : params) n += t.size();
      return n;
    }());
  }
}

TEST_CASE("schema mismatch is reported") {
  auto f = fixture(20, 3);
  const auto shape = ModelShape::from(tiny(3), f.vocab.size());
  const auto params = init_params(shape, 1);
  std::vector<EncodedEntry> bad = {f.encoded.front()};
  bad[0].dense.pop_back();
  CHECK_THROWS_AS(predict_batch(params, shape, bad), Error);
  bad = {f.encoded.front()};
  bad[0].label = 99;
  CHECK_THROWS_AS(batch_loss(params, shape, bad), Error);
}

TEST_CASE("overfits a single batch") {
  auto f = fixture(30, 3);
  std::vector<WindowEntry> one;
  for (const auto& e : f.split.train)
    if (one.size() < 32 && e.customer_id == f.split.train.front().customer_id) one.push_back(e);
  for (const auto& e : f.split.train)
    if (one.size() < 32 && e.customer_id != one.front().customer_id) {
      auto copy = e;
      copy.customer_id = one.front().customer_id;  // single customer: no validation split
      one.push_back(copy);
    }
  REQUIRE(one.size() == 32);
  Hyperparams h = tiny(3);
  h.hidden1 = 32;
  h.hidden2 = 16;
  h.batch_size = 32;
  h.epochs = 200;
  h.patience = 200;
  h.learning_rate = 1e-2;
  const auto m = train(one, f.vocab, h);
  CHECK(m.history.train_loss.back() < 0.05);
}

TEST_CASE("training is deterministic and keeps the best epoch") {
  auto f = fixture(60, 4);
  Hyperparams h = tiny(4);
  h.epochs = 4;
  std::vector<EpochRecord> log;
  const auto a = train(f.split.train, f.vocab, h, [&](const EpochRecord& r) { log.push_back(r); });
  const auto b = train(f.split.train, f.vocab, h);
  CHECK(a.params == b.params);
  CHECK(a.history == b.history);
  REQUIRE(log.size() == a.history.train_loss.size());
  CHECK(log.front().epoch == 1);
  const auto& v = a.history.val_loss;
  const auto best = std::min_element(v.begin(), v.end()) - v.begin();
  CHECK(a.history.best_epoch == static_cast<std::size_t>(best) + 1);
  CHECK(a.history.train_loss.front() < std::log(8.0) + 0.2);

  const auto val = validation_customers(f.split.train, h);
  std::set<std::string> ids;
  for (const auto& e : f.split.train) ids.insert(e.customer_id);
  CHECK(val.size() == static_cast<std::size_t>(std::lround(0.1 * static_cast<double>(ids.size()))));
}

TEST_CASE("non-finite loss aborts with guidance") {
  auto f = fixture(20, 3);
  Hyperparams h = tiny(3);
  h.learning_rate = 1e300;  // parameters overflow after the first step
  h.epochs = 5;
  try {
    train(f.split.train, f.vocab, h);
    FAIL("expected a non-finite loss");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("smaller learning_rate") != std::string::npos);
  }
}

TEST_CASE("checkpoints") {
  auto f = fixture(30, 3);
  Hyperparams h = tiny(3);
  h.epochs = 1;
  const auto m = train(f.split.train, f.vocab, h);
  const auto dir = testing::temp_dir("ckpt");
  const auto path = dir / "m.json";
  save_model(m, path);
  const auto back = load_model(path, &f.vocab);
  CHECK(back.params == m.params);
  CHECK(back.hyper == m.hyper);
  CHECK(back.preprocessor == m.preprocessor);
  const auto p1 = m.predict(std::span<const WindowEntry>(f.split.test));
  const auto p2 = back.predict(std::span<const WindowEntry>(f.split.test));
  CHECK(p1 == p2);

  auto kind_of = [](const auto& fn) {
    try {
      fn();
    } catch (const CheckpointError& e) {
      return e.kind();
    }
    FAIL("no error");
    return CheckpointError::Kind::Format;
  };
  const std::string text = read_file(path);
  write_file_atomic(dir / "cut.json", text.substr(0, text.size() / 2));
  CHECK(kind_of([&] { load_model(dir / "cut.json"); }) == CheckpointError::Kind::Truncated);

  auto j = checkpoint_json(m);
  j["version"] = 99;
  CHECK(kind_of([&] { model_from_checkpoint(j); }) == CheckpointError::Kind::Version);

  j = checkpoint_json(m);
  for (auto& p : j["params"])
    if (p["name"] == "lstm2.w_input") p["shape"] = {3, 3};
  try {
    model_from_checkpoint(j);
    FAIL("expected shape error");
  } catch (const CheckpointError& e) {
    CHECK(e.kind() == CheckpointError::Kind::Shape);
    CHECK(std::string(e.what()).find("lstm2.w_input") != std::string::npos);
  }

  j = checkpoint_json(m);
  j["params"].erase(0);
  CHECK(kind_of([&] { model_from_checkpoint(j); }) == CheckpointError::Kind::Shape);

  const CityVocab other({"A", "B", "C", "D"});
  CHECK(kind_of([&] { model_from_checkpoint(checkpoint_json(m), &other); }) ==
        CheckpointError::Kind::Vocabulary);
  CHECK(kind_of([&] { model_from_checkpoint(nlohmann::json{{"hello", 1}}); }) ==
        CheckpointError::Kind::Format);
}
