#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "nextdest/datagen.hpp"
#include "nextdest/pipeline.hpp"

using namespace nextdest;
using testing::trip;
using testing::ymd;

namespace {

CityVocab abcd() { return CityVocab({"A", "B", "C", "D", "E"}); }

RawTrip raw(std::string c, Date d, std::string o, std::string dst, std::string top = "A") {
  return {std::move(c), d, std::move(o), std::move(dst), true, false, std::move(top)};
}

}  // namespace

TEST_CASE("clean drops same-city, null and unknown rows") {
  const std::vector<RawTrip> rows = {
      raw("c1", ymd(2021, 3, 1), "A", "A"),
      raw("c1", ymd(2021, 2, 1), "A", ""),
      raw("c1", ymd(2021, 1, 1), "A", "Z"),
      raw("c1", ymd(2021, 1, 5), "A", "B", ""),
      raw("c1", ymd(2021, 4, 1), "B", "C"),
      raw("c2", ymd(2021, 1, 1), "C", "D"),
  };
  CleanReport report;
  const auto h = clean(rows, abcd(), &report);
  CHECK(report.input_rows == 6);
  CHECK(report.same_city == 1);
  CHECK(report.null_city == 2);
  CHECK(report.out_of_vocab == 1);
  CHECK(report.kept == 2);
  REQUIRE(h.size() == 2);
  CHECK(h[0].customer_id == "c1");
  CHECK(h[0].trips.size() == 1);
}

TEST_CASE("clean sorts each history by date, stable on ties") {
  const std::vector<RawTrip> rows = {
      raw("c", ymd(2021, 5, 1), "C", "A"),
      raw("c", ymd(2021, 1, 1), "A", "B"),
      raw("c", ymd(2021, 3, 1), "B", "C"),
      raw("c", ymd(2021, 3, 1), "B", "D"),
  };
  const auto h = clean(rows, abcd());
  REQUIRE(h.size() == 1);
  REQUIRE(h[0].trips.size() == 4);
  CHECK(h[0].trips[0].destination == 1);
  CHECK(h[0].trips[1].destination == 2);
  CHECK(h[0].trips[2].destination == 3);
  CHECK(h[0].trips[3].destination == 0);
}

TEST_CASE("rename map applies before the other rules") {
  const std::vector<RawTrip> rows = {raw("c", ymd(2021, 5, 1), "Aa", "B")};
  const RenameMap renames = {{"Aa", "A"}};
  const auto h = clean(rows, abcd(), nullptr, &renames);
  REQUIRE(h.size() == 1);
  CHECK(h[0].trips[0].origin == 0);
}

TEST_CASE("min trip filter keeps n >= w + 2") {
  std::vector<CustomerHistory> hs = {testing::alternating("a", 17), testing::alternating("b", 16),
                                     testing::alternating("c", 4)};
  const auto kept = filter_min_trips(hs, 15);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].customer_id == "a");
  CHECK(filter_min_trips(hs, 2).size() == 3);
}

TEST_CASE("min trip filter against a direct scan") {
  GenConfig g;
  g.n_customers = 100;
  g.min_trips = 10;
  g.max_trips = 20;
  const auto data = generate(g);
  const auto kept = filter_min_trips(data.histories, 10);
  std::size_t expected = 0;
  for (const auto& h : data.histories) expected += h.trips.size() >= 12;
  CHECK(kept.size() == expected);
  for (const auto& h : kept) CHECK(h.trips.size() >= 12);
}

TEST_CASE("sliding windows follow the indexing") {
  // (A,B),(B,C),(C,A),(A,D),(D,A)
  CustomerHistory h{"c", {trip(0, 1, ymd(2024, 1, 1)), trip(1, 2, ymd(2024, 1, 2)),
                          trip(2, 0, ymd(2024, 1, 3)), trip(0, 3, ymd(2024, 1, 4)),
                          trip(3, 0, ymd(2024, 1, 5))}};
  const auto entries = window_customer(h, 3);
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].window.size() == 3);
  CHECK(entries[0].window[0] == h.trips[0]);
  CHECK(entries[0].target_origin == 0);
  CHECK(entries[0].target_destination == 3);
  CHECK(entries[1].window[0] == h.trips[1]);
  CHECK(entries[1].target_origin == 3);
  CHECK(entries[1].target_destination == 0);

  CHECK(window_customer(testing::alternating("x", 4), 3).size() == 1);
  CHECK_THROWS_AS(window_customer(testing::alternating("x", 3), 3), Error);
}

TEST_CASE("window features by hand") {
  const std::vector<Trip> w = {trip(0, 1, ymd(2024, 1, 5), true, true),
                               trip(1, 2, ymd(2024, 1, 12), true, false),
                               trip(2, 3, ymd(2024, 3, 20), false, false)};
  const auto f = compute_features(w);
  CHECK(f.avg_day_difference == 75);
  CHECK(f.domestic_flight_count == 2);
  CHECK(f.return_trip_count == 1);
  CHECK(f.first_season == Season::Winter);
  CHECK(f.last_season == Season::Spring);
  CHECK(f.days == std::vector<int>{5, 12, 20});
  CHECK(f.months == std::vector<int>{1, 1, 3});
  CHECK(f.weekdays == std::vector<int>{4, 4, 2});  // Fri, Fri, Wed
  CHECK(f.flights == std::vector<std::pair<CityId, CityId>>{{0, 1}, {1, 2}, {2, 3}});
}

TEST_CASE("train/test split takes each customer's last entry") {
  std::vector<std::vector<WindowEntry>> per = {window_customer(testing::alternating("a", 17), 15),
                                               window_customer(testing::alternating("b", 10), 5)};
  const auto s = split_train_test(per);
  CHECK(s.train.size() == 1 + 4);
  REQUIRE(s.test.size() == 2);
  CHECK(s.test[0] == per[0].back());
  CHECK(s.test[1] == per[1].back());

  std::vector<std::vector<WindowEntry>> short_one = {window_customer(testing::alternating("c", 6), 5)};
  CHECK_THROWS_AS(split_train_test(short_one), Error);
}

TEST_CASE("window counts per generated customer") {
  GenConfig g;
  g.n_customers = 200;
  const auto data = generate(g);
  for (std::size_t w : {3u, 5u, 7u}) {
    const auto kept = filter_min_trips(data.histories, w);
    const auto split = build_split(kept, w);
    CHECK(split.test.size() == kept.size());
    std::size_t expected_train = 0;
    for (const auto& h : kept) expected_train += h.trips.size() - w - 1;
    CHECK(split.train.size() == expected_train);
    for (const auto& e : split.train) {
      REQUIRE(e.window.size() == w);
      for (std::size_t t = 1; t < w; ++t)
        CHECK(e.window[t - 1].departure_date <= e.window[t].departure_date);
      CHECK(e.window.back().departure_date <= e.target.departure_date);
    }
  }
}

TEST_CASE("preprocessor statistics and scaling") {
  // Three entries with avg_day_difference 10, 20, 30.
  std::vector<WindowEntry> train;
  for (int k = 1; k <= 3; ++k) {
    std::vector<Trip> t = {trip(0, 1, ymd(2024, 1, 1), true, true),
                           trip(1, 0, add_days(ymd(2024, 1, 1), 10 * k), true, true),
                           trip(0, 1, ymd(2024, 6, 1))};
    train.push_back(make_entry(t));
  }
  const auto p = Preprocessor::fit(train, 5);
  CHECK(p.medians()[0] == 20.0);
  CHECK(p.means()[0] == 20.0);
  CHECK(p.stddevs()[0] == doctest::Approx(std::sqrt(200.0 / 3.0)));
  // Constant features keep a unit stddev and scale to zero.
  CHECK(p.stddevs()[1] == 1.0);
  CHECK(p.scale({20.0, 2.0, 2.0})[0] == 0.0);
  CHECK(p.scale({20.0, 2.0, 2.0})[1] == 0.0);
  // Missing values take the median.
  CHECK(p.scale({std::nullopt, 2.0, 2.0})[0] == 0.0);

  CHECK_THROWS_AS(Preprocessor::fit({}, 5), Error);
  CHECK(Preprocessor::from_json(p.to_json()) == p);
}

TEST_CASE("transform layout") {
  const std::vector<Trip> t = {trip(0, 1, ymd(2024, 1, 5), true, true, 2),
                               trip(1, 3, ymd(2024, 7, 31), false, false, 2),
                               trip(3, 4, ymd(2024, 8, 1))};
  const auto e = make_entry(t);
  const auto p = Preprocessor::fit(std::span(&e, 1), 5);
  const auto enc = p.transform(e);
  CHECK(kDenseWidth == 61);
  REQUIRE(enc.dense.size() == 2 * 61);
  auto row = [&](std::size_t r) { return std::span(enc.dense).subspan(r * 61, 61); };
  CHECK(row(0)[4] == 1.0);          // day 5
  CHECK(row(0)[31 + 0] == 1.0);     // January
  CHECK(row(0)[43 + 4] == 1.0);     // Friday
  CHECK(row(1)[30] == 1.0);         // day 31
  CHECK(row(1)[31 + 6] == 1.0);     // July
  for (std::size_t r = 0; r < 2; ++r) {
    double onehots = 0.0;
    for (std::size_t k = 0; k < 50; ++k) onehots += row(r)[k];
    CHECK(onehots == 3.0);
    CHECK(row(r)[50] == 0.0);  // scaled numeric equal to the mean
    CHECK(row(r)[53 + 0] == 1.0);  // first season winter
    CHECK(row(r)[57 + 2] == 1.0);  // last season summer
  }
  CHECK(enc.chain_origins == std::vector<CityId>{0, 1});
  CHECK(enc.chain_destinations == std::vector<CityId>{1, 3});
  CHECK(enc.top_origin == 2);
  CHECK(enc.target_origin == 3);
  CHECK(enc.label == 4);
  CHECK(p.transform(e) == enc);

  const auto small = Preprocessor::fit(std::span(&e, 1), 4);
  CHECK_THROWS_AS(small.transform(e), Error);
}

TEST_CASE("preprocessor ignores test data") {
  GenConfig g;
  g.n_customers = 60;
  const auto data = generate(g);
  auto split = build_split(filter_min_trips(data.histories, 5), 5);
  const auto before = Preprocessor::fit(split.train, data.cities.size());
  for (auto& e : split.test) e.features.avg_day_difference += 1000;
  CHECK(Preprocessor::fit(split.train, data.cities.size()) == before);
}

TEST_CASE("prepared dataset round trip") {
  GenConfig g;
  g.n_customers = 40;
  const auto rows = to_raw(generate(g));
  const auto vocab = build_vocab(rows, 16);
  PreparedDataset ds{vocab, 4, build_split(filter_min_trips(clean(rows, vocab), 4), 4)};
  const auto dir = testing::temp_dir("dataset");
  save_dataset(ds, dir / "d.json");
  const auto back = load_dataset(dir / "d.json");
  CHECK(back.vocab == ds.vocab);
  CHECK(back.window_size == 4);
  CHECK(back.split.train == ds.split.train);
  CHECK(back.split.test == ds.split.test);
}
