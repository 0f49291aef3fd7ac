#include "nextdest/core.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <unordered_map>

namespace nextdest {

namespace {

bool parse_int(std::string_view text, int& out) {
  if (text.empty()) return false;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

Date parse_date(std::string_view text) {
  int y = 0, m = 0, d = 0;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-' ||
      !parse_int(text.substr(0, 4), y) || !parse_int(text.substr(5, 2), m) ||
      !parse_int(text.substr(8, 2), d)) {
    throw Error("invalid date '" + std::string(text) + "', expected YYYY-MM-DD");
  }
  Date date{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
            std::chrono::day{static_cast<unsigned>(d)}};
  if (!date.ok()) throw Error("invalid calendar date '" + std::string(text) + "'");
  return date;
}

std::string format_date(const Date& date) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()),
                static_cast<unsigned>(date.day()));
  return buf;
}

Season season_of(const Date& date) {
  switch (static_cast<unsigned>(date.month())) {
    case 12: case 1: case 2: return Season::Winter;
    case 3: case 4: case 5: return Season::Spring;
    case 6: case 7: case 8: return Season::Summer;
    default: return Season::Autumn;
  }
}

const char* season_name(Season season) {
  switch (season) {
    case Season::Winter: return "Winter";
    case Season::Spring: return "Spring";
    case Season::Summer: return "Summer";
    case Season::Autumn: return "Autumn";
  }
  return "?";
}

int weekday_of(const Date& date) {
  const std::chrono::weekday wd{std::chrono::sys_days{date}};
  return static_cast<int>(wd.iso_encoding()) - 1;
}

long days_between(const Date& earlier, const Date& later) {
  return (std::chrono::sys_days{later} - std::chrono::sys_days{earlier}).count();
}

Date add_days(const Date& date, long days) {
  return Date{std::chrono::sys_days{date} + std::chrono::days{days}};
}

CityVocab::CityVocab(std::vector<std::string> cities) : cities_(std::move(cities)) {
  for (std::size_t i = 0; i < cities_.size(); ++i) {
    if (cities_[i].empty()) throw Error("empty city name in vocabulary");
    if (!index_.emplace(cities_[i], static_cast<CityId>(i)).second)
      throw Error("duplicate city '" + cities_[i] + "' in vocabulary");
  }
}

const std::string& CityVocab::name(CityId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= cities_.size())
    throw Error("city id " + std::to_string(id) + " out of range");
  return cities_[static_cast<std::size_t>(id)];
}

CityId CityVocab::find(std::string_view name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

CityId CityVocab::id(std::string_view name) const {
  const CityId found = find(name);
  if (found < 0) throw Error("city '" + std::string(name) + "' not in vocabulary");
  return found;
}

CityVocab build_vocab(const std::vector<RawTrip>& trips, std::size_t top_p) {
  if (trips.empty()) throw Error("build_vocab: no trips");
  if (top_p < 2) throw Error("build_vocab: top_p must be at least 2");

  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& t : trips) {
    if (!t.origin.empty()) ++counts[t.origin];
    if (!t.destination.empty()) ++counts[t.destination];
  }
  if (counts.size() < top_p) {
    throw Error("build_vocab: requested " + std::to_string(top_p) +
                " cities but input has only " + std::to_string(counts.size()) +
                " distinct (short by " + std::to_string(top_p - counts.size()) +
                ")");
  }

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                          counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> names;
  names.reserve(top_p);
  for (std::size_t i = 0; i < top_p; ++i) names.push_back(ranked[i].first);
  return CityVocab(std::move(names));
}

}  // namespace nextdest
