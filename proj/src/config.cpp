#include "nextdest/config.hpp"

#include <set>

#include "nextdest/io.hpp"

namespace nextdest {

namespace {

void reject_unknown(const nlohmann::json& j, const char* section,
                    std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw Error(std::string("config: ") + section + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.contains(key))
      throw Error(std::string("config: unknown key '") + key + "' in " + section);
}

GenConfig generator_from_json(const nlohmann::json& j) {
  reject_unknown(j, "generator",
                 {"n_customers", "n_cities", "trips_per_customer", "archetype_mix", "date_range"});
  GenConfig g;
  if (j.contains("n_customers")) g.n_customers = j["n_customers"].get<std::size_t>();
  if (j.contains("n_cities")) g.n_cities = j["n_cities"].get<std::size_t>();
  if (j.contains("trips_per_customer")) {
    const auto range = j["trips_per_customer"].get<std::vector<std::size_t>>();
    if (range.size() != 2) throw Error("config: trips_per_customer must be [min, max]");
    g.min_trips = range[0];
    g.max_trips = range[1];
  }
  if (j.contains("archetype_mix")) {
    const auto& m = j["archetype_mix"];
    reject_unknown(m, "archetype_mix", {"seasonal", "commuter", "random"});
    g.archetype_mix = ArchetypeMix{m.value("seasonal", 0.0), m.value("commuter", 0.0),
                                   m.value("random", 0.0)};
  }
  if (j.contains("date_range")) {
    const auto range = j["date_range"].get<std::vector<std::string>>();
    if (range.size() != 2) throw Error("config: date_range must be [start, end]");
    g.start_date = parse_date(range[0]);
    g.end_date = parse_date(range[1]);
  }
  return g;
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  reject_unknown(j, "config",
                 {"seed", "output_dir", "generator", "pipeline", "hyperparams", "grid", "metrics",
                  "data_csv"});
  RunConfig c;
  try {
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
    if (j.contains("generator")) c.generator = generator_from_json(j["generator"]);
    if (j.contains("pipeline")) {
      const auto& p = j["pipeline"];
      reject_unknown(p, "pipeline", {"top_p", "window_sizes"});
      if (p.contains("top_p")) c.top_p = p["top_p"].get<std::size_t>();
      if (p.contains("window_sizes"))
        c.window_sizes = p["window_sizes"].get<std::vector<std::size_t>>();
    }
    if (j.contains("hyperparams")) c.hyper = Hyperparams::from_json(j["hyperparams"]);
    if (j.contains("grid")) {
      const auto& g = j["grid"];
      reject_unknown(g, "grid", {"customer_sizes", "replicates"});
      if (g.contains("customer_sizes"))
        c.customer_sizes = g["customer_sizes"].get<std::vector<std::size_t>>();
      if (g.contains("replicates")) c.replicates = g["replicates"].get<std::size_t>();
    }
    if (j.contains("metrics")) {
      const auto& m = j["metrics"];
      reject_unknown(m, "metrics", {"top_n"});
      if (m.contains("top_n")) c.top_n = m["top_n"].get<std::vector<std::size_t>>();
    }
    if (j.contains("data_csv")) c.data_csv = j["data_csv"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  c.set_seed(c.seed);
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error("config not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
  const auto& g = generator;
  nlohmann::json j = {
      {"seed", seed},
      {"output_dir", output_dir.string()},
      {"generator",
       {{"n_customers", g.n_customers},
        {"n_cities", g.n_cities},
        {"trips_per_customer", {g.min_trips, g.max_trips}},
        {"archetype_mix",
         {{"seasonal", g.archetype_mix.seasonal},
          {"commuter", g.archetype_mix.commuter},
          {"random", g.archetype_mix.random}}},
        {"date_range", {format_date(g.start_date), format_date(g.end_date)}}}},
      {"pipeline", {{"top_p", top_p}, {"window_sizes", window_sizes}}},
      {"hyperparams", hyper.to_json()},
      {"grid", {{"customer_sizes", customer_sizes}, {"replicates", replicates}}},
      {"metrics", {{"top_n", top_n}}}};
  if (data_csv) j["data_csv"] = data_csv->string();
  return j;
}

void RunConfig::set_seed(std::uint64_t value) {
  seed = value;
  generator.seed = value;
}

GridConfig RunConfig::grid_config() const {
  GridConfig g;
  g.customer_sizes = customer_sizes;
  g.window_sizes = window_sizes;
  g.replicates = replicates;
  g.base_seed = seed;
  g.top_p = top_p;
  g.top_n = top_n;
  g.hyper = hyper;
  return g;
}

void RunConfig::validate() const {
  generator.validate();
  if (top_p < 2) throw Error("config: pipeline.top_p must be at least 2");
  grid_config().validate();
}

}  // namespace nextdest
