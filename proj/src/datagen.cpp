#include "nextdest/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "nextdest/io.hpp"
#include "nextdest/random.hpp"

namespace nextdest {

namespace {

constexpr std::array<const char*, 32> kCityNames = {
    "Istanbul", "Ankara",    "Izmir",     "Antalya",   "London",
    "Paris",    "Frankfurt", "Amsterdam", "Berlin",    "Rome",
    "Madrid",   "Dubai",     "New York",  "Moscow",    "Trabzon",
    "Adana",    "Munich",    "Vienna",    "Zurich",    "Athens",
    "Barcelona","Milan",     "Tokyo",     "Doha",      "Cairo",
    "Baku",     "Kyiv",      "Brussels",  "Copenhagen","Stockholm",
    "Oslo",     "Lisbon"};

std::string city_name(std::size_t k) {
  if (k < kCityNames.size()) return kCityNames[k];
  return "City" + std::to_string(k);
}

// Popularity falls off as 1/(k+1), so vocab ordering is non-trivial.
std::vector<double> city_weights(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t k = 0; k < n; ++k) w[k] = 1.0 / static_cast<double>(k + 1);
  return w;
}

CityId draw_city_excluding(Rng& rng, std::vector<double> weights,
                           std::initializer_list<CityId> excluded) {
  for (CityId e : excluded) weights[static_cast<std::size_t>(e)] = 0.0;
  return static_cast<CityId>(rng.weighted(weights));
}

// Even-indexed cities form the home market; a trip is domestic when both
// ends are in it.
bool is_domestic(CityId a, CityId b) { return a % 2 == 0 && b % 2 == 0; }

CustomerHistory generate_customer(const GenConfig& config, std::size_t index,
                                  const std::vector<std::string>& names,
                                  Archetype& archetype_out) {
  Rng rng(derive_seed(config.seed, {static_cast<std::uint64_t>(index)}));
  const auto& mix = config.archetype_mix;
  const double mix_weights[] = {mix.seasonal, mix.commuter, mix.random};
  const auto archetype = static_cast<Archetype>(rng.weighted(mix_weights));
  archetype_out = archetype;

  const auto n = static_cast<std::size_t>(
      rng.between(static_cast<std::int64_t>(config.min_trips),
                  static_cast<std::int64_t>(config.max_trips)));
  const long span = days_between(config.start_date, config.end_date);
  std::vector<long> offsets(n);
  for (auto& o : offsets) o = rng.between(0, span);
  std::sort(offsets.begin(), offsets.end());

  const auto weights = city_weights(config.n_cities);
  const CityId home = static_cast<CityId>(rng.weighted(weights));

  char id_buf[32];
  std::snprintf(id_buf, sizeof id_buf, "C%06zu", index);
  CustomerHistory history{id_buf, {}};
  history.trips.reserve(n);

  auto push = [&](CityId origin, CityId destination, long offset, bool ret) {
    Trip t;
    t.customer_id = history.customer_id;
    t.origin = origin;
    t.destination = destination;
    t.departure_date = add_days(config.start_date, offset);
    t.domestic = is_domestic(origin, destination);
    t.return_trip = ret;
    history.trips.push_back(std::move(t));
  };

  switch (archetype) {
    case Archetype::Commuter: {
      const CityId work = draw_city_excluding(rng, weights, {home});
      for (std::size_t k = 0; k < n; ++k) {
        if (k % 2 == 0) push(home, work, offsets[k], true);
        else push(work, home, offsets[k], true);
      }
      break;
    }
    case Archetype::Seasonal: {
      std::array<CityId, 4> by_season{};
      std::vector<double> pool = weights;
      pool[static_cast<std::size_t>(home)] = 0.0;
      const std::size_t available = config.n_cities - 1;
      for (auto& city : by_season) {
        city = static_cast<CityId>(rng.weighted(pool));
        // Distinct per season while enough cities remain.
        if (available >= by_season.size()) pool[static_cast<std::size_t>(city)] = 0.0;
      }
      for (std::size_t k = 0; k < n; ++k) {
        const Date date = add_days(config.start_date, offsets[k]);
        const CityId dest = by_season[static_cast<std::size_t>(season_of(date))];
        push(home, dest, offsets[k], rng.uniform() < 0.3);
      }
      break;
    }
    case Archetype::Random: {
      const std::vector<double> uniform(config.n_cities, 1.0);
      CityId origin = home;
      for (std::size_t k = 0; k < n; ++k) {
        const CityId dest = draw_city_excluding(rng, uniform, {origin});
        push(origin, dest, offsets[k], rng.uniform() < 0.5);
        origin = dest;
      }
      break;
    }
  }

  // Modal origin city, ties broken by name.
  std::vector<std::size_t> origin_counts(config.n_cities, 0);
  for (const auto& t : history.trips) ++origin_counts[static_cast<std::size_t>(t.origin)];
  CityId top = 0;
  for (std::size_t c = 1; c < config.n_cities; ++c) {
    const auto best = origin_counts[static_cast<std::size_t>(top)];
    if (origin_counts[c] > best ||
        (origin_counts[c] == best && names[c] < names[static_cast<std::size_t>(top)]))
      top = static_cast<CityId>(c);
  }
  for (auto& t : history.trips) t.top_origin_city = top;
  return history;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

const char* archetype_name(Archetype archetype) {
  switch (archetype) {
    case Archetype::Seasonal: return "seasonal";
    case Archetype::Commuter: return "commuter";
    case Archetype::Random: return "random";
  }
  return "?";
}

void GenConfig::validate() const {
  if (n_customers == 0) throw Error("n_customers must be positive");
  if (n_cities < 2) throw Error("n_cities must be at least 2");
  if (min_trips < 1) throw Error("trips_per_customer lower bound must be >= 1");
  if (max_trips < min_trips) throw Error("trips_per_customer range is empty");
  const auto& m = archetype_mix;
  if (m.seasonal < 0 || m.commuter < 0 || m.random < 0)
    throw Error("archetype_mix proportions must be non-negative");
  if (std::abs(m.seasonal + m.commuter + m.random - 1.0) > 1e-9)
    throw Error("archetype_mix proportions must sum to 1");
  if (!start_date.ok() || !end_date.ok() ||
      days_between(start_date, end_date) < 0)
    throw Error("date_range is empty");
}

GeneratedData generate(const GenConfig& config) {
  config.validate();
  GeneratedData data;
  data.cities.reserve(config.n_cities);
  for (std::size_t k = 0; k < config.n_cities; ++k) data.cities.push_back(city_name(k));
  data.histories.reserve(config.n_customers);
  data.archetypes.resize(config.n_customers);
  for (std::size_t i = 0; i < config.n_customers; ++i)
    data.histories.push_back(generate_customer(config, i, data.cities, data.archetypes[i]));
  return data;
}

GenStats summarize(const GeneratedData& data) {
  GenStats stats;
  for (auto a : data.archetypes) ++stats.archetype_counts[static_cast<std::size_t>(a)];
  for (const auto& h : data.histories) {
    stats.trip_count += h.trips.size();
    for (const auto& t : h.trips) {
      ++stats.city_histogram[data.cities[static_cast<std::size_t>(t.origin)]];
      ++stats.city_histogram[data.cities[static_cast<std::size_t>(t.destination)]];
    }
  }
  return stats;
}

std::vector<RawTrip> to_raw(const GeneratedData& data) {
  std::vector<RawTrip> rows;
  for (const auto& h : data.histories) {
    for (const auto& t : h.trips) {
      rows.push_back(RawTrip{t.customer_id, t.departure_date,
                             data.cities[static_cast<std::size_t>(t.origin)],
                             data.cities[static_cast<std::size_t>(t.destination)],
                             t.domestic, t.return_trip,
                             data.cities[static_cast<std::size_t>(t.top_origin_city)]});
    }
  }
  return rows;
}

void write_csv(const std::vector<RawTrip>& rows, const std::filesystem::path& path) {
  std::string out;
  for (std::size_t i = 0; i < kCsvColumns.size(); ++i) {
    if (i) out += ',';
    out += kCsvColumns[i];
  }
  out += '\n';
  for (const auto& r : rows) {
    for (const auto* field : {&r.customer_id, &r.origin, &r.destination, &r.top_origin_city})
      if (field->find_first_of(",\n\r") != std::string::npos)
        throw Error("field '" + *field + "' contains a separator");
    out += r.customer_id + ',' + format_date(r.departure_date) + ',' + r.origin + ',' +
           r.destination + ',' + (r.domestic ? "D" : "I") + ',' +
           (r.return_trip ? "RT" : "OW") + ',' + r.top_origin_city + '\n';
  }
  write_file_atomic(path, out);
}

void write_csv(const GeneratedData& data, const std::filesystem::path& path) {
  write_csv(to_raw(data), path);
}

std::vector<RawTrip> read_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw Error("'" + path.string() + "' is empty; header row required");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_line(line);

  std::array<std::size_t, kCsvColumns.size()> col{};
  for (std::size_t c = 0; c < kCsvColumns.size(); ++c) {
    auto it = std::find(header.begin(), header.end(), kCsvColumns[c]);
    if (it == header.end())
      throw Error(std::string("missing column ") + kCsvColumns[c] + " in '" +
                  path.string() + "'");
    col[c] = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<RawTrip> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_line(line);
    auto fail = [&](const std::string& why) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    if (f.size() != header.size())
      fail("expected " + std::to_string(header.size()) + " fields, got " +
           std::to_string(f.size()));
    RawTrip r;
    r.customer_id = f[col[0]];
    try {
      r.departure_date = parse_date(f[col[1]]);
    } catch (const Error& e) {
      fail(e.what());
    }
    r.origin = f[col[2]];
    r.destination = f[col[3]];
    const auto& dom = f[col[4]];
    if (dom == "D") r.domestic = true;
    else if (dom == "I") r.domestic = false;
    else fail("DOM_INTNL_FLAG must be D or I, got '" + dom + "'");
    const auto& jt = f[col[5]];
    if (jt == "RT") r.return_trip = true;
    else if (jt == "OW") r.return_trip = false;
    else fail("JRNY_TYP must be OW or RT, got '" + jt + "'");
    r.top_origin_city = f[col[6]];
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace nextdest
