#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nextdest {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Date = std::chrono::year_month_day;

enum class Season { Winter = 0, Spring = 1, Summer = 2, Autumn = 3 };

/// Parses YYYY-MM-DD. Throws Error on malformed or invalid dates.
Date parse_date(std::string_view text);
std::string format_date(const Date& date);

/// Meteorological seasons: Dec-Feb winter, Mar-May spring, Jun-Aug summer,
/// Sep-Nov autumn.
Season season_of(const Date& date);
const char* season_name(Season season);

/// 0 = Monday ... 6 = Sunday.
int weekday_of(const Date& date);

/// later - earlier, in whole days (may be negative).
long days_between(const Date& earlier, const Date& later);

Date add_days(const Date& date, long days);

using CityId = int;

/// One flight segment with cities resolved against a vocabulary.
struct Trip {
  std::string customer_id;
  CityId origin = 0;
  CityId destination = 0;
  Date departure_date{};
  bool domestic = false;
  bool return_trip = false;
  CityId top_origin_city = 0;

  bool operator==(const Trip&) const = default;
};

/// All trips of one customer, ascending by departure date.
struct CustomerHistory {
  std::string customer_id;
  std::vector<Trip> trips;
};

/// One CSV row before cleaning. City fields may be empty (null).
struct RawTrip {
  std::string customer_id;
  Date departure_date{};
  std::string origin;
  std::string destination;
  bool domestic = false;
  bool return_trip = false;
  std::string top_origin_city;

  bool operator==(const RawTrip&) const = default;
};

/// Dense 0-based city ids ordered by descending frequency, ties broken by
/// name.
class CityVocab {
 public:
  CityVocab() = default;
  /// Takes names already in id order. Throws on duplicates or empty names.
  explicit CityVocab(std::vector<std::string> cities);

  std::size_t size() const { return cities_.size(); }
  const std::vector<std::string>& cities() const { return cities_; }
  const std::string& name(CityId id) const;
  /// -1 when the name is not in the vocabulary.
  CityId find(std::string_view name) const;
  CityId id(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) >= 0; }

  bool operator==(const CityVocab& other) const {
    return cities_ == other.cities_;
  }

 private:
  std::vector<std::string> cities_;
  std::map<std::string, CityId, std::less<>> index_;
};

/// Vocabulary of the top_p cities by combined origin + destination count.
CityVocab build_vocab(const std::vector<RawTrip>& trips, std::size_t top_p);

}  // namespace nextdest
