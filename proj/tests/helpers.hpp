#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "nextdest/core.hpp"
#include "nextdest/pipeline.hpp"

namespace testing {

inline nextdest::Date ymd(int y, unsigned m, unsigned d) {
  return nextdest::Date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
}

inline nextdest::Trip trip(nextdest::CityId o, nextdest::CityId d, nextdest::Date date,
                           bool dom = false, bool ret = false, nextdest::CityId top = 0,
                           std::string customer = "C1") {
  return {std::move(customer), o, d, date, dom, ret, top};
}

/// History of n trips, one every 10 days, alternating between cities a and b.
inline nextdest::CustomerHistory alternating(const std::string& id, std::size_t n,
                                             nextdest::CityId a = 0, nextdest::CityId b = 1) {
  nextdest::CustomerHistory h{id, {}};
  for (std::size_t i = 0; i < n; ++i) {
    const bool even = i % 2 == 0;
    h.trips.push_back(trip(even ? a : b, even ? b : a,
                           nextdest::add_days(ymd(2021, 1, 1), static_cast<long>(10 * i)),
                           true, true, a, id));
  }
  return h;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("nextdest_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
