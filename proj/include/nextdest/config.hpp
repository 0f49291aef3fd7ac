#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "nextdest/datagen.hpp"
#include "nextdest/experiment.hpp"
#include "nextdest/model.hpp"

namespace nextdest {

/// Everything a CLI run needs, read from one JSON document. Unknown keys are
/// rejected at every level. The single `seed` feeds the generator and the
/// experiment grid.
struct RunConfig {
  std::uint64_t seed = 42;
  std::filesystem::path output_dir = "out";
  GenConfig generator;
  std::size_t top_p = 16;
  std::vector<std::size_t> window_sizes = {5, 10, 15};
  Hyperparams hyper;
  std::vector<std::size_t> customer_sizes = {200, 600, 1000};
  std::size_t replicates = 3;
  std::vector<std::size_t> top_n = {1, 3, 5, 7};
  /// Grid input; generated from `generator` when absent.
  std::optional<std::filesystem::path> data_csv;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  /// Applies a seed override everywhere the config seed flows.
  void set_seed(std::uint64_t value);
  GridConfig grid_config() const;
  void validate() const;
};

}  // namespace nextdest
