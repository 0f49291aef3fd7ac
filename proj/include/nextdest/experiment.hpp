#pragma once

// Customer-size x window-size experiment with replicate customer samples.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "nextdest/core.hpp"
#include "nextdest/model.hpp"
#include "nextdest/stats.hpp"

namespace nextdest {

struct GridConfig {
  std::vector<std::size_t> customer_sizes;
  std::vector<std::size_t> window_sizes;
  std::size_t replicates = 1;
  std::uint64_t base_seed = 42;
  std::size_t top_p = 16;
  std::vector<std::size_t> top_n = {1, 3, 5, 7};
  /// window_size and seed are overridden per cell.
  Hyperparams hyper;

  void validate() const;
};

struct GridRow {
  std::size_t cs = 0;
  std::size_t ws = 0;
  std::size_t replicate = 0;
  std::vector<double> f1;      // one per top_n
  std::vector<double> recall;  // one per top_n, may be empty when read back

  bool operator==(const GridRow&) const = default;
};

struct ResultsGrid {
  std::vector<std::size_t> top_n;
  /// Ordered by (cs, ws, replicate).
  std::vector<GridRow> rows;

  /// Replicate means per (cs, ws), one row each, replicate set to 0.
  ResultsGrid averaged() const;

  /// 3 x 3 cell means of the F1 column for `n`, averaging replicates.
  stats::CellMeans cell_means(std::size_t n) const;

  std::string to_csv() const;
  /// Requires cs, ws, replicate and top<N> columns; recall<N> is optional.
  static ResultsGrid from_csv(const std::string& text);
};

void write_grid_csv(const ResultsGrid& grid, const std::filesystem::path& path);
ResultsGrid read_grid_csv(const std::filesystem::path& path);

/// Seed for the customer sample of one cell.
std::uint64_t cell_seed(std::uint64_t base_seed, std::size_t cs, std::size_t ws,
                        std::size_t replicate);

/// Draws `count` histories without replacement, keeping their pool order.
std::vector<CustomerHistory> sample_customers(const std::vector<CustomerHistory>& pool,
                                              std::size_t count, std::uint64_t seed);

struct CellProgress {
  std::size_t cs = 0;
  std::size_t ws = 0;
  std::size_t replicate = 0;
  std::size_t done = 0;
  std::size_t total = 0;
};

/// Builds the vocabulary and customer pool from `rows`, then trains and
/// scores every (cs, ws, replicate) cell on up to `jobs` threads. The pool
/// holds customers with enough trips for the largest window; an undersized
/// pool is reported before any training.
ResultsGrid run_grid(const GridConfig& config, const std::vector<RawTrip>& rows,
                     std::size_t jobs = 1,
                     const std::function<void(const CellProgress&)>& on_cell = {});

/// Scores one trained model on test entries for every N.
GridRow evaluate_cell(const TrainedModel& model, std::span<const WindowEntry> test,
                      const std::vector<std::size_t>& top_n);

}  // namespace nextdest
