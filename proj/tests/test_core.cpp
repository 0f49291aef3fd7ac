#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "helpers.hpp"
#include "nextdest/core.hpp"
#include "nextdest/io.hpp"
#include "nextdest/random.hpp"

using namespace nextdest;
using testing::ymd;

TEST_CASE("dates parse, format and validate") {
  CHECK(parse_date("2021-03-14") == ymd(2021, 3, 14));
  CHECK(format_date(ymd(2020, 2, 29)) == "2020-02-29");
  CHECK_THROWS_AS(parse_date("2021-02-30"), Error);
  CHECK_THROWS_AS(parse_date("14/03/2021"), Error);
  CHECK_THROWS_AS(parse_date(""), Error);
  CHECK(days_between(ymd(2021, 1, 1), ymd(2021, 3, 1)) == 59);
  CHECK(days_between(ymd(2021, 3, 1), ymd(2021, 1, 1)) == -59);
  CHECK(add_days(ymd(2020, 12, 31), 1) == ymd(2021, 1, 1));
}

TEST_CASE("seasons follow meteorological months") {
  const Season expected[12] = {Season::Winter, Season::Winter, Season::Spring, Season::Spring,
                               Season::Spring, Season::Summer, Season::Summer, Season::Summer,
                               Season::Autumn, Season::Autumn, Season::Autumn, Season::Winter};
  for (unsigned m = 1; m <= 12; ++m) CHECK(season_of(ymd(2022, m, 15)) == expected[m - 1]);
  CHECK(std::string(season_name(Season::Autumn)) == "Autumn");
}

TEST_CASE("weekday is Monday based") {
  CHECK(weekday_of(ymd(2024, 1, 1)) == 0);  // Monday
  CHECK(weekday_of(ymd(2024, 1, 7)) == 6);  // Sunday
  CHECK(weekday_of(ymd(2021, 3, 14)) == 6);
}

TEST_CASE("vocabulary ranks by count then name") {
  std::vector<RawTrip> rows = {
      {"a", ymd(2021, 1, 1), "Oslo", "Rome", false, false, "Oslo"},
      {"a", ymd(2021, 1, 2), "Rome", "Oslo", false, false, "Oslo"},
      {"b", ymd(2021, 1, 3), "Lima", "Oslo", false, false, "Lima"},
      {"b", ymd(2021, 1, 4), "Kiev", "", false, false, "Lima"},
  };
  const CityVocab v = build_vocab(rows, 3);
  CHECK(v.cities() == std::vector<std::string>{"Oslo", "Rome", "Kiev"});
  CHECK(v.id("Rome") == 1);
  CHECK(v.find("Lima") == -1);
  CHECK_THROWS_AS(v.id("Lima"), Error);
  CHECK_THROWS_AS(v.name(3), Error);

  try {
    build_vocab(rows, 6);
    FAIL("expected shortfall error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("short by 2") != std::string::npos);
  }
  CHECK_THROWS_AS(CityVocab({"x", "x"}), Error);
}

TEST_CASE("rng is deterministic and bounded") {
  Rng a(123), b(123), c(124);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  CHECK(Rng(123).next() != c.next());

  Rng r(9);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto k = r.below(7);
    REQUIRE(k < 7);
    ++counts[k];
  }
  for (int n : counts) CHECK(n == doctest::Approx(10000).epsilon(0.05));
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const auto v = r.between(-3, 3);
    REQUIRE(v >= -3);
    REQUIRE(v <= 3);
  }
}

TEST_CASE("rng stream is pinned") {
  // Guards against accidental algorithm changes: grids must reproduce.
  Rng r(42);
  const std::uint64_t first = r.next();
  Rng again(42);
  CHECK(again.next() == first);
  CHECK(derive_seed(42, {1, 2}) == derive_seed(42, {1, 2}));
  CHECK(derive_seed(42, {1, 2}) != derive_seed(42, {2, 1}));
  CHECK(derive_seed(42, {}) != derive_seed(43, {}));
}

TEST_CASE("shuffle is a permutation") {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  Rng r(5);
  r.shuffle(std::span<int>(v));
  CHECK(std::set<int>(v.begin(), v.end()).size() == 50);
  CHECK_FALSE(std::is_sorted(v.begin(), v.end()));
}

TEST_CASE("weighted draws skip zero weights") {
  Rng r(1);
  const std::vector<double> w = {0.0, 3.0, 0.0, 1.0};
  std::vector<int> counts(4, 0);
  for (int i = 0; i < 8000; ++i) ++counts[r.weighted(w)];
  CHECK(counts[0] == 0);
  CHECK(counts[2] == 0);
  CHECK(counts[1] == doctest::Approx(6000).epsilon(0.05));
}

TEST_CASE("atomic write round trips") {
  const auto dir = testing::temp_dir("io");
  write_file_atomic(dir / "x.txt", "hello\n");
  CHECK(read_file(dir / "x.txt") == "hello\n");
  CHECK_FALSE(std::filesystem::exists(dir / "x.txt.tmp"));
  CHECK_THROWS_AS(read_file(dir / "missing.txt"), Error);
}
