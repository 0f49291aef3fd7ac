#pragma once

// Synthetic airline-trip generator and the trip CSV format.
//
// Each customer follows one behavioural archetype:
//   seasonal  flies from a home city to a destination fixed by the season of
//             the departure date (a per-customer season -> city table)
//   commuter  alternates home -> work, work -> home, all flagged as returns
//   random    uniform destinations, each trip leaving from the last arrival
// Customer k draws from its own stream, derive_seed(seed, {k}), so output does
// not depend on generation order.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nextdest/core.hpp"

namespace nextdest {

enum class Archetype { Seasonal = 0, Commuter = 1, Random = 2 };

const char* archetype_name(Archetype archetype);

struct ArchetypeMix {
  double seasonal = 0.4;
  double commuter = 0.4;
  double random = 0.2;
};

struct GenConfig {
  std::size_t n_customers = 1000;
  std::size_t n_cities = 16;
  std::size_t min_trips = 10;
  std::size_t max_trips = 30;
  ArchetypeMix archetype_mix;
  Date start_date = Date{std::chrono::year{2019}, std::chrono::month{1},
                         std::chrono::day{1}};
  Date end_date = Date{std::chrono::year{2023}, std::chrono::month{12},
                       std::chrono::day{31}};
  std::uint64_t seed = 42;

  /// Throws Error describing the first violated constraint.
  void validate() const;
};

struct GeneratedData {
  /// City names indexed by the ids used in `histories`.
  std::vector<std::string> cities;
  std::vector<CustomerHistory> histories;
  std::vector<Archetype> archetypes;
};

GeneratedData generate(const GenConfig& config);

struct GenStats {
  std::array<std::size_t, 3> archetype_counts{};
  std::map<std::string, std::size_t> city_histogram;
  std::size_t trip_count = 0;
};

GenStats summarize(const GeneratedData& data);

inline constexpr std::array<const char*, 7> kCsvColumns = {
    "CUST_KEY", "SEG_LCL_DEP_DT", "ORG_CITY_NM", "CITY_NM",
    "DOM_INTNL_FLAG", "JRNY_TYP", "TOP1_ORG_CTY"};

/// Resolves generated histories back to named rows.
std::vector<RawTrip> to_raw(const GeneratedData& data);

void write_csv(const std::vector<RawTrip>& rows, const std::filesystem::path& path);
void write_csv(const GeneratedData& data, const std::filesystem::path& path);

/// Throws Error naming a missing column, or the line number of a bad row.
std::vector<RawTrip> read_csv(const std::filesystem::path& path);

}  // namespace nextdest
