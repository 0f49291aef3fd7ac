#pragma once

// Cleaning, sliding windows, train/test split, window features and the
// fitted preprocessor that turns window entries into network inputs.

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nextdest/core.hpp"

namespace nextdest {

struct CleanReport {
  std::size_t input_rows = 0;
  std::size_t same_city = 0;
  std::size_t null_city = 0;
  std::size_t out_of_vocab = 0;
  std::size_t kept = 0;
};

/// Maps misspelled city names onto canonical ones before any other rule.
using RenameMap = std::map<std::string, std::string, std::less<>>;

/// Drops same-city, null-city and out-of-vocabulary rows, groups by customer
/// and sorts each history by date (stable). Customers come out in order of
/// first appearance.
std::vector<CustomerHistory> clean(const std::vector<RawTrip>& rows,
                                   const CityVocab& vocab,
                                   CleanReport* report = nullptr,
                                   const RenameMap* renames = nullptr);

/// Keeps customers with at least w + 2 trips: one training window and one
/// test window.
std::vector<CustomerHistory> filter_min_trips(std::vector<CustomerHistory> histories,
                                              std::size_t window_size);

struct CustomFeatures {
  /// Days from the first to the last flight of the window.
  long avg_day_difference = 0;
  int domestic_flight_count = 0;
  int return_trip_count = 0;
  Season first_season = Season::Winter;
  Season last_season = Season::Winter;
  std::vector<int> days;      // 1..31
  std::vector<int> months;    // 1..12
  std::vector<int> weekdays;  // 0..6, Monday = 0
  std::vector<std::pair<CityId, CityId>> flights;

  bool operator==(const CustomFeatures&) const = default;
};

CustomFeatures compute_features(std::span<const Trip> window);

struct WindowEntry {
  std::string customer_id;
  std::vector<Trip> window;
  CustomFeatures features;
  CityId top_origin_city = 0;
  CityId target_origin = 0;
  CityId target_destination = 0;
  /// The trip being predicted. Kept so entries can be re-serialised.
  Trip target;

  bool operator==(const WindowEntry&) const = default;
};

/// Builds the entry whose window is `trips[0..w)` and target `trips[w]`.
WindowEntry make_entry(std::span<const Trip> trips);

/// All n - w windows of one history, oldest first.
std::vector<WindowEntry> window_customer(const CustomerHistory& history,
                                         std::size_t window_size);

struct Split {
  std::vector<WindowEntry> train;
  std::vector<WindowEntry> test;
};

/// Each customer's final entry goes to test, the rest to train.
Split split_train_test(const std::vector<std::vector<WindowEntry>>& per_customer);

/// clean-output histories -> windowed split, in one step.
Split build_split(const std::vector<CustomerHistory>& histories, std::size_t window_size);

inline constexpr std::size_t kNumericFeatures = 3;
inline constexpr std::size_t kDayBlock = 31;
inline constexpr std::size_t kMonthBlock = 12;
inline constexpr std::size_t kWeekdayBlock = 7;
inline constexpr std::size_t kSeasonBlock = 4;
/// day + month + weekday one-hots, scaled numerics, first/last season.
inline constexpr std::size_t kDenseWidth =
    kDayBlock + kMonthBlock + kWeekdayBlock + kNumericFeatures + 2 * kSeasonBlock;

using NumericValues = std::array<std::optional<double>, kNumericFeatures>;

NumericValues numeric_values(const CustomFeatures& features);

/// Network-ready form of one entry.
struct EncodedEntry {
  std::size_t window_size = 0;
  /// window_size x kDenseWidth, row-major.
  std::vector<double> dense;
  std::vector<CityId> chain_origins;
  std::vector<CityId> chain_destinations;
  CityId top_origin = 0;
  CityId target_origin = 0;
  CityId label = 0;

  bool operator==(const EncodedEntry&) const = default;
};

class Preprocessor {
 public:
  Preprocessor() = default;

  /// Median imputation values and standard-scaler statistics from training
  /// entries only. Throws on an empty set.
  static Preprocessor fit(std::span<const WindowEntry> train, std::size_t vocab_size);

  /// Imputes missing values with the median, then standardises.
  std::array<double, kNumericFeatures> scale(const NumericValues& values) const;

  EncodedEntry transform(const WindowEntry& entry) const;
  std::vector<EncodedEntry> transform(std::span<const WindowEntry> entries) const;

  std::size_t vocab_size() const { return vocab_size_; }
  const std::array<double, kNumericFeatures>& medians() const { return medians_; }
  const std::array<double, kNumericFeatures>& means() const { return means_; }
  const std::array<double, kNumericFeatures>& stddevs() const { return stddevs_; }

  nlohmann::json to_json() const;
  static Preprocessor from_json(const nlohmann::json& j);

  bool operator==(const Preprocessor&) const = default;

 private:
  std::size_t vocab_size_ = 0;
  std::array<double, kNumericFeatures> medians_{};
  std::array<double, kNumericFeatures> means_{};
  std::array<double, kNumericFeatures> stddevs_{1.0, 1.0, 1.0};
};

/// Windowed dataset persisted by `prepare`. Entries are stored as their raw
/// w + 1 trips; features are recomputed on load.
struct PreparedDataset {
  CityVocab vocab;
  std::size_t window_size = 0;
  Split split;
};

nlohmann::json dataset_to_json(const PreparedDataset& dataset);
PreparedDataset dataset_from_json(const nlohmann::json& j);
void save_dataset(const PreparedDataset& dataset, const std::filesystem::path& path);
PreparedDataset load_dataset(const std::filesystem::path& path);

}  // namespace nextdest
