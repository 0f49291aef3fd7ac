#include "nextdest/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "nextdest/io.hpp"
#include "nextdest/metrics.hpp"
#include "nextdest/pipeline.hpp"
#include "nextdest/random.hpp"

namespace nextdest {

void GridConfig::validate() const {
  if (customer_sizes.empty() || window_sizes.empty())
    throw Error("grid: customer_sizes and window_sizes must be non-empty");
  for (auto cs : customer_sizes)
    if (cs == 0) throw Error("grid: customer sizes must be positive");
  for (auto ws : window_sizes)
    if (ws == 0) throw Error("grid: window sizes must be positive");
  if (replicates == 0) throw Error("grid: replicates must be positive");
  if (top_n.empty()) throw Error("grid: top_n must be non-empty");
  for (auto n : top_n)
    if (n == 0 || n > top_p)
      throw Error("grid: top-N value " + std::to_string(n) + " outside [1, " +
                  std::to_string(top_p) + "]");
  hyper.validate();
}

ResultsGrid ResultsGrid::averaged() const {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<const GridRow*>> groups;
  for (const auto& r : rows) groups[{r.cs, r.ws}].push_back(&r);
  ResultsGrid out;
  out.top_n = top_n;
  for (const auto& [key, members] : groups) {
    GridRow avg;
    avg.cs = key.first;
    avg.ws = key.second;
    avg.f1.assign(top_n.size(), 0.0);
    const bool has_recall = std::all_of(members.begin(), members.end(), [&](const GridRow* r) {
      return r->recall.size() == top_n.size();
    });
    if (has_recall) avg.recall.assign(top_n.size(), 0.0);
    for (const auto* r : members) {
      for (std::size_t k = 0; k < top_n.size(); ++k) {
        avg.f1[k] += r->f1[k];
        if (has_recall) avg.recall[k] += r->recall[k];
      }
    }
    const auto m = static_cast<double>(members.size());
    for (auto& v : avg.f1) v /= m;
    for (auto& v : avg.recall) v /= m;
    out.rows.push_back(std::move(avg));
  }
  return out;
}

stats::CellMeans ResultsGrid::cell_means(std::size_t n) const {
  const auto it = std::find(top_n.begin(), top_n.end(), n);
  if (it == top_n.end()) throw Error("results grid has no top" + std::to_string(n) + " column");
  const auto k = static_cast<std::size_t>(it - top_n.begin());
  const ResultsGrid avg = averaged();
  std::set<std::size_t> cs_set, ws_set;
  for (const auto& r : avg.rows) {
    cs_set.insert(r.cs);
    ws_set.insert(r.ws);
  }
  stats::CellMeans cells;
  for (auto cs : cs_set) cells.cs_levels.push_back(static_cast<double>(cs));
  for (auto ws : ws_set) cells.ws_levels.push_back(static_cast<double>(ws));
  cells.values.assign(cs_set.size(), std::vector<double>(ws_set.size(), 0.0));
  if (avg.rows.size() != cs_set.size() * ws_set.size())
    throw Error("results grid is missing (cs, ws) cells");
  for (const auto& r : avg.rows) {
    const auto i = static_cast<std::size_t>(std::distance(cs_set.begin(), cs_set.find(r.cs)));
    const auto j = static_cast<std::size_t>(std::distance(ws_set.begin(), ws_set.find(r.ws)));
    cells.values[i][j] = r.f1[k];
  }
  return cells;
}

namespace {

std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10f", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::size_t parse_size(const std::string& s, std::size_t line, const char* what) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw Error("grid csv line " + std::to_string(line) + ": bad " + what + " '" + s + "'");
  }
}

double parse_score(const std::string& s, std::size_t line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error("grid csv line " + std::to_string(line) + ": bad score '" + s + "'");
  }
}

}  // namespace

std::string ResultsGrid::to_csv() const {
  std::string out = "cs,ws,replicate";
  for (auto n : top_n) out += ",top" + std::to_string(n);
  for (auto n : top_n) out += ",recall" + std::to_string(n);
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.cs) + ',' + std::to_string(r.ws) + ',' + std::to_string(r.replicate);
    for (double v : r.f1) out += ',' + format_score(v);
    for (std::size_t k = 0; k < top_n.size(); ++k)
      out += ',' + (k < r.recall.size() ? format_score(r.recall[k]) : std::string());
    out += '\n';
  }
  return out;
}

ResultsGrid ResultsGrid::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error("grid csv is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  auto find = [&](const std::string& name) -> long {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<long>(it - header.begin());
  };
  const long cs_col = find("cs"), ws_col = find("ws"), rep_col = find("replicate");
  if (cs_col < 0) throw Error("grid csv: missing column cs");
  if (ws_col < 0) throw Error("grid csv: missing column ws");
  if (rep_col < 0) throw Error("grid csv: missing column replicate");

  ResultsGrid grid;
  std::vector<long> f1_cols, recall_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c].starts_with("top")) {
      grid.top_n.push_back(parse_size(header[c].substr(3), 1, "column name"));
      f1_cols.push_back(static_cast<long>(c));
    }
  }
  if (grid.top_n.empty()) throw Error("grid csv: no top<N> columns");
  bool with_recall = true;
  for (auto n : grid.top_n) {
    const long c = find("recall" + std::to_string(n));
    recall_cols.push_back(c);
    with_recall = with_recall && c >= 0;
  }

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size())
      throw Error("grid csv line " + std::to_string(line_no) + ": expected " +
                  std::to_string(header.size()) + " fields");
    GridRow r;
    r.cs = parse_size(f[static_cast<std::size_t>(cs_col)], line_no, "cs");
    r.ws = parse_size(f[static_cast<std::size_t>(ws_col)], line_no, "ws");
    r.replicate = parse_size(f[static_cast<std::size_t>(rep_col)], line_no, "replicate");
    for (long c : f1_cols) r.f1.push_back(parse_score(f[static_cast<std::size_t>(c)], line_no));
    if (with_recall) {
      bool any_empty = false;
      for (long c : recall_cols) any_empty |= f[static_cast<std::size_t>(c)].empty();
      if (!any_empty)
        for (long c : recall_cols)
          r.recall.push_back(parse_score(f[static_cast<std::size_t>(c)], line_no));
    }
    grid.rows.push_back(std::move(r));
  }
  std::sort(grid.rows.begin(), grid.rows.end(), [](const GridRow& a, const GridRow& b) {
    return std::tie(a.cs, a.ws, a.replicate) < std::tie(b.cs, b.ws, b.replicate);
  });
  return grid;
}

void write_grid_csv(const ResultsGrid& grid, const std::filesystem::path& path) {
  write_file_atomic(path, grid.to_csv());
}

ResultsGrid read_grid_csv(const std::filesystem::path& path) {
  return ResultsGrid::from_csv(read_file(path));
}

std::uint64_t cell_seed(std::uint64_t base_seed, std::size_t cs, std::size_t ws,
                        std::size_t replicate) {
  return derive_seed(base_seed, {cs, ws, replicate});
}

std::vector<CustomerHistory> sample_customers(const std::vector<CustomerHistory>& pool,
                                              std::size_t count, std::uint64_t seed) {
  if (count > pool.size())
    throw Error("cannot sample " + std::to_string(count) + " customers from a pool of " +
                std::to_string(pool.size()));
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  // Partial Fisher-Yates: the first `count` slots are the sample.
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.below(pool.size() - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  std::vector<CustomerHistory> out;
  out.reserve(count);
  for (auto i : idx) out.push_back(pool[i]);
  return out;
}

GridRow evaluate_cell(const TrainedModel& model, std::span<const WindowEntry> test,
                      const std::vector<std::size_t>& top_n) {
  const nn::Matrix probs = model.predict(test);
  const auto labels = labels_of(test);
  GridRow row;
  for (auto n : top_n) {
    row.f1.push_back(topn_f1(probs, labels, n));
    row.recall.push_back(recall_at_n(probs, labels, n));
  }
  return row;
}

ResultsGrid run_grid(const GridConfig& config, const std::vector<RawTrip>& rows,
                     std::size_t jobs,
                     const std::function<void(const CellProgress&)>& on_cell) {
  config.validate();
  const CityVocab vocab = build_vocab(rows, config.top_p);
  const std::size_t max_ws =
      *std::max_element(config.window_sizes.begin(), config.window_sizes.end());
  const std::size_t max_cs =
      *std::max_element(config.customer_sizes.begin(), config.customer_sizes.end());
  const auto pool = filter_min_trips(clean(rows, vocab), max_ws);
  if (pool.size() < max_cs)
    throw Error("grid: largest customer size " + std::to_string(max_cs) + " exceeds the " +
                std::to_string(pool.size()) + " customers with at least " +
                std::to_string(max_ws + 2) + " usable trips");

  struct Cell {
    std::size_t cs, ws, replicate;
  };
  std::vector<Cell> cells;
  for (auto cs : config.customer_sizes)
    for (auto ws : config.window_sizes)
      for (std::size_t r = 0; r < config.replicates; ++r) cells.push_back({cs, ws, r});
  std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
    return std::tie(a.cs, a.ws, a.replicate) < std::tie(b.cs, b.ws, b.replicate);
  });

  std::vector<GridRow> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::size_t done = 0;
  std::mutex mutex;
  std::exception_ptr failure;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      {
        std::lock_guard lock(mutex);
        if (failure) return;
      }
      try {
        const Cell& c = cells[i];
        const std::uint64_t seed = cell_seed(config.base_seed, c.cs, c.ws, c.replicate);
        const auto sample = sample_customers(pool, c.cs, seed);
        const Split split = build_split(sample, c.ws);
        Hyperparams hyper = config.hyper;
        hyper.window_size = c.ws;
        hyper.seed = derive_seed(seed, {1});
        const TrainedModel model = train(split.train, vocab, hyper);
        GridRow row = evaluate_cell(model, split.test, config.top_n);
        row.cs = c.cs;
        row.ws = c.ws;
        row.replicate = c.replicate;
        std::lock_guard lock(mutex);
        results[i] = std::move(row);
        ++done;
        if (on_cell) on_cell(CellProgress{c.cs, c.ws, c.replicate, done, cells.size()});
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, cells.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool_threads;
    for (std::size_t t = 0; t < threads; ++t) pool_threads.emplace_back(worker);
    for (auto& t : pool_threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  ResultsGrid grid;
  grid.top_n = config.top_n;
  grid.rows = std::move(results);
  return grid;
}

}  // namespace nextdest
