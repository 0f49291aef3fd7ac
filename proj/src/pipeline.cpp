#include "nextdest/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "nextdest/io.hpp"

namespace nextdest {

std::vector<CustomerHistory> clean(const std::vector<RawTrip>& rows,
                                   const CityVocab& vocab, CleanReport* report,
                                   const RenameMap* renames) {
  CleanReport local;
  CleanReport& r = report ? *report : local;
  r = CleanReport{};
  r.input_rows = rows.size();

  auto canonical = [&](const std::string& name) -> const std::string& {
    if (renames) {
      auto it = renames->find(name);
      if (it != renames->end()) return it->second;
    }
    return name;
  };

  std::vector<CustomerHistory> histories;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& row : rows) {
    const std::string& origin = canonical(row.origin);
    const std::string& dest = canonical(row.destination);
    const std::string& top = canonical(row.top_origin_city);
    if (origin.empty() || dest.empty() || top.empty()) {
      ++r.null_city;
      continue;
    }
    if (origin == dest) {
      ++r.same_city;
      continue;
    }
    const CityId o = vocab.find(origin), d = vocab.find(dest), t = vocab.find(top);
    if (o < 0 || d < 0 || t < 0) {
      ++r.out_of_vocab;
      continue;
    }
    auto [it, inserted] = slot.emplace(row.customer_id, histories.size());
    if (inserted) histories.push_back(CustomerHistory{row.customer_id, {}});
    histories[it->second].trips.push_back(Trip{row.customer_id, o, d, row.departure_date,
                                               row.domestic, row.return_trip, t});
    ++r.kept;
  }
  for (auto& h : histories) {
    std::stable_sort(h.trips.begin(), h.trips.end(), [](const Trip& a, const Trip& b) {
      return std::chrono::sys_days{a.departure_date} < std::chrono::sys_days{b.departure_date};
    });
  }
  return histories;
}

std::vector<CustomerHistory> filter_min_trips(std::vector<CustomerHistory> histories,
                                              std::size_t window_size) {
  if (window_size < 1) throw Error("window size must be at least 1");
  std::erase_if(histories, [&](const CustomerHistory& h) {
    return h.trips.size() < window_size + 2;
  });
  return histories;
}

CustomFeatures compute_features(std::span<const Trip> window) {
  if (window.empty()) throw Error("compute_features: empty window");
  CustomFeatures f;
  f.avg_day_difference = days_between(window.front().departure_date, window.back().departure_date);
  f.first_season = season_of(window.front().departure_date);
  f.last_season = season_of(window.back().departure_date);
  for (const auto& t : window) {
    f.domestic_flight_count += t.domestic ? 1 : 0;
    f.return_trip_count += t.return_trip ? 1 : 0;
    f.days.push_back(static_cast<int>(static_cast<unsigned>(t.departure_date.day())));
    f.months.push_back(static_cast<int>(static_cast<unsigned>(t.departure_date.month())));
    f.weekdays.push_back(weekday_of(t.departure_date));
    f.flights.emplace_back(t.origin, t.destination);
  }
  return f;
}

WindowEntry make_entry(std::span<const Trip> trips) {
  if (trips.size() < 2) throw Error("make_entry: need a window and a target trip");
  const auto window = trips.first(trips.size() - 1);
  WindowEntry e;
  e.customer_id = trips.front().customer_id;
  e.window.assign(window.begin(), window.end());
  e.features = compute_features(window);
  e.top_origin_city = window.back().top_origin_city;
  e.target = trips.back();
  e.target_origin = e.target.origin;
  e.target_destination = e.target.destination;
  return e;
}

std::vector<WindowEntry> window_customer(const CustomerHistory& history,
                                         std::size_t window_size) {
  const std::size_t n = history.trips.size();
  if (window_size < 1) throw Error("window size must be at least 1");
  if (n < window_size + 1) {
    throw Error("customer " + history.customer_id + " has " + std::to_string(n) +
                " trips; window size " + std::to_string(window_size) + " needs at least " +
                std::to_string(window_size + 1));
  }
  std::vector<WindowEntry> entries;
  entries.reserve(n - window_size);
  const std::span<const Trip> trips(history.trips);
  for (std::size_t j = 0; j + window_size < n; ++j)
    entries.push_back(make_entry(trips.subspan(j, window_size + 1)));
  return entries;
}

Split split_train_test(const std::vector<std::vector<WindowEntry>>& per_customer) {
  Split split;
  for (const auto& entries : per_customer) {
    if (entries.size() < 2) {
      throw Error("customer " + (entries.empty() ? std::string("?") : entries.front().customer_id) +
                  " has " + std::to_string(entries.size()) +
                  " window entries; at least 2 are needed for a train/test split");
    }
    split.train.insert(split.train.end(), entries.begin(), entries.end() - 1);
    split.test.push_back(entries.back());
  }
  return split;
}

Split build_split(const std::vector<CustomerHistory>& histories, std::size_t window_size) {
  std::vector<std::vector<WindowEntry>> per_customer;
  per_customer.reserve(histories.size());
  for (const auto& h : histories) per_customer.push_back(window_customer(h, window_size));
  return split_train_test(per_customer);
}

NumericValues numeric_values(const CustomFeatures& f) {
  return {static_cast<double>(f.avg_day_difference),
          static_cast<double>(f.domestic_flight_count),
          static_cast<double>(f.return_trip_count)};
}

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

Preprocessor Preprocessor::fit(std::span<const WindowEntry> train, std::size_t vocab_size) {
  if (train.empty()) throw Error("fit_preprocessor: empty training set");
  Preprocessor p;
  p.vocab_size_ = vocab_size;
  for (std::size_t k = 0; k < kNumericFeatures; ++k) {
    std::vector<double> values;
    values.reserve(train.size());
    for (const auto& e : train)
      if (auto v = numeric_values(e.features)[k]) values.push_back(*v);
    if (values.empty()) {
      p.medians_[k] = 0.0;
      p.means_[k] = 0.0;
      p.stddevs_[k] = 1.0;
      continue;
    }
    p.medians_[k] = median_of(values);
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(values.size()));
    p.means_[k] = mean;
    p.stddevs_[k] = sd > 0.0 ? sd : 1.0;
  }
  return p;
}

std::array<double, kNumericFeatures> Preprocessor::scale(const NumericValues& values) const {
  std::array<double, kNumericFeatures> out{};
  for (std::size_t k = 0; k < kNumericFeatures; ++k) {
    const double v = values[k].value_or(medians_[k]);
    out[k] = (v - means_[k]) / stddevs_[k];
  }
  return out;
}

EncodedEntry Preprocessor::transform(const WindowEntry& entry) const {
  const auto& f = entry.features;
  const std::size_t w = entry.window.size();
  if (f.days.size() != w || f.months.size() != w || f.weekdays.size() != w ||
      f.flights.size() != w)
    throw Error("transform: feature lists do not match window length");

  auto check_city = [&](CityId id, const char* what) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size_)
      throw Error(std::string("transform: ") + what + " city id " + std::to_string(id) +
                  " outside vocabulary of " + std::to_string(vocab_size_));
    return id;
  };

  EncodedEntry out;
  out.window_size = w;
  out.dense.assign(w * kDenseWidth, 0.0);
  const auto scaled = scale(numeric_values(f));
  for (std::size_t t = 0; t < w; ++t) {
    double* row = out.dense.data() + t * kDenseWidth;
    std::size_t off = 0;
    row[off + static_cast<std::size_t>(f.days[t] - 1)] = 1.0;
    off += kDayBlock;
    row[off + static_cast<std::size_t>(f.months[t] - 1)] = 1.0;
    off += kMonthBlock;
    row[off + static_cast<std::size_t>(f.weekdays[t])] = 1.0;
    off += kWeekdayBlock;
    for (double s : scaled) row[off++] = s;
    row[off + static_cast<std::size_t>(f.first_season)] = 1.0;
    off += kSeasonBlock;
    row[off + static_cast<std::size_t>(f.last_season)] = 1.0;

    out.chain_origins.push_back(check_city(f.flights[t].first, "chain origin"));
    out.chain_destinations.push_back(check_city(f.flights[t].second, "chain destination"));
  }
  out.top_origin = check_city(entry.top_origin_city, "top origin");
  out.target_origin = check_city(entry.target_origin, "target origin");
  out.label = check_city(entry.target_destination, "target destination");
  return out;
}

std::vector<EncodedEntry> Preprocessor::transform(std::span<const WindowEntry> entries) const {
  std::vector<EncodedEntry> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(transform(e));
  return out;
}

nlohmann::json Preprocessor::to_json() const {
  return {{"vocab_size", vocab_size_},
          {"numeric_features", {"avg_day_difference", "domestic_flight_count", "return_trip_count"}},
          {"medians", medians_},
          {"means", means_},
          {"stddevs", stddevs_},
          {"categories", {{"season", kSeasonBlock}, {"day", kDayBlock},
                          {"month", kMonthBlock}, {"weekday", kWeekdayBlock}}}};
}

Preprocessor Preprocessor::from_json(const nlohmann::json& j) {
  Preprocessor p;
  try {
    p.vocab_size_ = j.at("vocab_size").get<std::size_t>();
    p.medians_ = j.at("medians").get<std::array<double, kNumericFeatures>>();
    p.means_ = j.at("means").get<std::array<double, kNumericFeatures>>();
    p.stddevs_ = j.at("stddevs").get<std::array<double, kNumericFeatures>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid preprocessor: ") + e.what());
  }
  for (double sd : p.stddevs_)
    if (!(sd > 0.0)) throw Error("invalid preprocessor: non-positive stddev");
  return p;
}

namespace {

nlohmann::json trip_to_json(const Trip& t) {
  return nlohmann::json::array({format_date(t.departure_date), t.origin, t.destination,
                                t.domestic, t.return_trip, t.top_origin_city});
}

Trip trip_from_json(const nlohmann::json& j, const std::string& customer) {
  Trip t;
  t.customer_id = customer;
  t.departure_date = parse_date(j.at(0).get<std::string>());
  t.origin = j.at(1).get<CityId>();
  t.destination = j.at(2).get<CityId>();
  t.domestic = j.at(3).get<bool>();
  t.return_trip = j.at(4).get<bool>();
  t.top_origin_city = j.at(5).get<CityId>();
  return t;
}

nlohmann::json entries_to_json(const std::vector<WindowEntry>& entries) {
  auto arr = nlohmann::json::array();
  for (const auto& e : entries) {
    auto trips = nlohmann::json::array();
    for (const auto& t : e.window) trips.push_back(trip_to_json(t));
    trips.push_back(trip_to_json(e.target));
    arr.push_back({{"customer", e.customer_id}, {"trips", std::move(trips)}});
  }
  return arr;
}

std::vector<WindowEntry> entries_from_json(const nlohmann::json& arr, std::size_t w) {
  std::vector<WindowEntry> out;
  out.reserve(arr.size());
  for (const auto& item : arr) {
    const auto customer = item.at("customer").get<std::string>();
    std::vector<Trip> trips;
    for (const auto& t : item.at("trips")) trips.push_back(trip_from_json(t, customer));
    if (trips.size() != w + 1)
      throw Error("dataset entry for " + customer + " has " + std::to_string(trips.size()) +
                  " trips, expected " + std::to_string(w + 1));
    out.push_back(make_entry(trips));
  }
  return out;
}

}  // namespace

nlohmann::json dataset_to_json(const PreparedDataset& d) {
  return {{"format", "nextdest-dataset"},
          {"version", 1},
          {"window_size", d.window_size},
          {"vocab", d.vocab.cities()},
          {"train", entries_to_json(d.split.train)},
          {"test", entries_to_json(d.split.test)}};
}

PreparedDataset dataset_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "nextdest-dataset") throw Error("not a prepared dataset");
    if (j.at("version") != 1) throw Error("unsupported dataset version");
    PreparedDataset d;
    d.window_size = j.at("window_size").get<std::size_t>();
    d.vocab = CityVocab(j.at("vocab").get<std::vector<std::string>>());
    d.split.train = entries_from_json(j.at("train"), d.window_size);
    d.split.test = entries_from_json(j.at("test"), d.window_size);
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("invalid dataset file: ") + e.what());
  }
}

void save_dataset(const PreparedDataset& dataset, const std::filesystem::path& path) {
  write_file_atomic(path, dataset_to_json(dataset).dump());
}

PreparedDataset load_dataset(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("cannot parse '" + path.string() + "': " + e.what());
  }
  return dataset_from_json(j);
}

}  // namespace nextdest
