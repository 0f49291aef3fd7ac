// nextdest: generate, prepare, train, evaluate, grid, stats.
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid invocation or input
// files (missing config, bad flags).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "nextdest/config.hpp"
#include "nextdest/datagen.hpp"
#include "nextdest/experiment.hpp"
#include "nextdest/io.hpp"
#include "nextdest/metrics.hpp"
#include "nextdest/model.hpp"
#include "nextdest/pipeline.hpp"
#include "nextdest/stats.hpp"

namespace fs = std::filesystem;
using namespace nextdest;

namespace {

/// Bad user input, mapped to exit code 2.
struct UsageError : Error {
  using Error::Error;
};

RunConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
  if (!fs::exists(path)) throw UsageError("config not found: " + path);
  RunConfig config;
  try {
    config = RunConfig::load(path);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (seed) config.set_seed(*seed);
  return config;
}

void require_file(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw UsageError(std::string(what) + " not found: " + path);
}

std::string fmt(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string fmt_p(const std::optional<double>& p) {
  if (!p) return "--";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f%s", *p, *p < 0.01 ? "**" : *p < 0.05 ? "*" : "");
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v, 3) : "--"; }

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

// ---- subcommands ------------------------------------------------------------

int cmd_generate(const std::string& config_path, const std::string& out,
                 std::optional<std::uint64_t> seed) {
  const RunConfig config = load_config(config_path, seed);
  const GeneratedData data = generate(config.generator);
  write_csv(data, out);
  const GenStats stats = summarize(data);
  nlohmann::json sidecar = {
      {"customers", data.histories.size()},
      {"trips", stats.trip_count},
      {"seed", config.generator.seed},
      {"archetypes",
       {{"seasonal", stats.archetype_counts[0]},
        {"commuter", stats.archetype_counts[1]},
        {"random", stats.archetype_counts[2]}}},
      {"city_histogram", stats.city_histogram}};
  write_file_atomic(out + ".stats.json", sidecar.dump(2) + "\n");
  std::cout << "wrote " << stats.trip_count << " rows for " << data.histories.size()
            << " customers to " << out << "\n";
  return 0;
}

int cmd_prepare(const std::string& csv, std::size_t window_size, std::size_t top_cities,
                const std::string& out_dir) {
  require_file(csv, "csv");
  const auto rows = read_csv(csv);
  const CityVocab vocab = build_vocab(rows, top_cities);
  CleanReport report;
  const auto histories = clean(rows, vocab, &report);
  const auto kept = filter_min_trips(histories, window_size);
  if (kept.empty())
    throw Error("no customer has the " + std::to_string(window_size + 2) +
                " trips needed for window size " + std::to_string(window_size));
  PreparedDataset dataset{vocab, window_size, build_split(kept, window_size)};
  const fs::path dir(out_dir);
  save_dataset(dataset, dir / "dataset.json");
  nlohmann::json summary = {
      {"window_size", window_size},
      {"vocab", vocab.cities()},
      {"rows", {{"input", report.input_rows},
                {"dropped_same_city", report.same_city},
                {"dropped_null_city", report.null_city},
                {"dropped_out_of_vocab", report.out_of_vocab},
                {"kept", report.kept}}},
      {"customers", {{"cleaned", histories.size()}, {"kept", kept.size()}}},
      {"entries", {{"train", dataset.split.train.size()}, {"test", dataset.split.test.size()}}}};
  write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
  std::cout << "prepared " << dataset.split.train.size() << " train and "
            << dataset.split.test.size() << " test entries (" << kept.size()
            << " customers, w=" << window_size << ") in " << dir.string() << "\n";
  return 0;
}

int cmd_train(const std::string& data_path, const std::string& hyper_path,
              const std::string& checkpoint) {
  require_file(data_path, "dataset");
  const PreparedDataset dataset = load_dataset(data_path);
  nlohmann::json hj = nlohmann::json::object();
  if (!hyper_path.empty()) {
    require_file(hyper_path, "hyperparameter file");
    try {
      hj = nlohmann::json::parse(read_file(hyper_path));
    } catch (const nlohmann::json::parse_error& e) {
      throw UsageError("hyperparameter file is not valid JSON: " + std::string(e.what()));
    }
  }
  if (hj.is_object() && !hj.contains("window_size")) hj["window_size"] = dataset.window_size;
  Hyperparams hyper;
  try {
    hyper = Hyperparams::from_json(hj);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (hyper.window_size != dataset.window_size)
    throw UsageError("hyperparameter window_size " + std::to_string(hyper.window_size) +
                     " does not match dataset window size " +
                     std::to_string(dataset.window_size));
  const TrainedModel model =
      train(dataset.split.train, dataset.vocab, hyper, [](const EpochRecord& r) {
        std::cout << r.to_json().dump() << "\n" << std::flush;
      });
  save_model(model, checkpoint);
  std::cerr << "saved checkpoint (best epoch " << model.history.best_epoch << ") to "
            << checkpoint << "\n";
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& data_path,
                 const std::vector<std::size_t>& top_n, const std::string& split_name) {
  require_file(checkpoint, "checkpoint");
  require_file(data_path, "dataset");
  const PreparedDataset dataset = load_dataset(data_path);
  const TrainedModel model = load_model(checkpoint, &dataset.vocab);
  const auto& entries = split_name == "train" ? dataset.split.train : dataset.split.test;
  if (entries.empty()) throw Error("dataset has no " + split_name + " entries");
  const GridRow row = evaluate_cell(model, entries, top_n);
  std::cout << pad("N", 5) << pad("top-N F1", 12) << "recall@N\n";
  for (std::size_t k = 0; k < top_n.size(); ++k)
    std::cout << pad(std::to_string(top_n[k]), 5) << pad(fmt(row.f1[k]), 12)
              << fmt(row.recall[k]) << "\n";
  std::cout << "(" << entries.size() << " " << split_name << " entries)\n";
  return 0;
}

int cmd_grid(const std::string& config_path, const std::string& out, std::size_t jobs,
             const std::string& csv_override, std::optional<std::uint64_t> seed) {
  RunConfig config = load_config(config_path, seed);
  std::vector<RawTrip> rows;
  if (!csv_override.empty() || config.data_csv) {
    const std::string csv = csv_override.empty() ? config.data_csv->string() : csv_override;
    require_file(csv, "csv");
    rows = read_csv(csv);
  } else {
    rows = to_raw(generate(config.generator));
  }
  const ResultsGrid grid =
      run_grid(config.grid_config(), rows, jobs, [](const CellProgress& p) {
        std::cerr << "cell cs=" << p.cs << " ws=" << p.ws << " replicate=" << p.replicate
                  << " done (" << p.done << "/" << p.total << ")\n";
      });
  write_grid_csv(grid, out);
  std::cout << "wrote " << grid.rows.size() << " rows to " << out << "\n";
  return 0;
}

int cmd_stats(const std::string& grid_path, const std::string& json_out, bool replicate_level) {
  require_file(grid_path, "results grid");
  const ResultsGrid grid = read_grid_csv(grid_path);
  nlohmann::json report = nlohmann::json::array();
  std::ostringstream text;
  for (std::size_t n : grid.top_n) {
    const auto k = static_cast<std::size_t>(
        std::find(grid.top_n.begin(), grid.top_n.end(), n) - grid.top_n.begin());
    stats::AnovaTable table;
    if (replicate_level) {
      std::vector<stats::Observation> obs;
      for (const auto& r : grid.rows)
        obs.push_back({static_cast<double>(r.cs), static_cast<double>(r.ws), r.f1[k]});
      table = stats::anova_linear(obs);
    } else {
      table = stats::anova(grid.cell_means(n));
    }
    const auto comparisons = stats::tukey(grid.cell_means(n), stats::Factor::CustomerSize);

    text << "Top " << n << " F1 - factorial ANOVA" << (replicate_level ? " (replicates)" : "")
         << "\n";
    text << pad("Factor", 8) << pad("Sum Sq", 12) << pad("df", 5) << pad("F", 10)
         << pad("p", 11) << pad("eta2", 8) << "partial eta2\n";
    for (const auto& t : table.terms) {
      const bool err = t.name == "Error";
      text << pad(t.name, 8) << pad(fmt(t.ss, 6), 12) << pad(fmt(t.df, 0), 5)
           << pad(fmt_opt(t.f), 10) << pad(fmt_p(t.p), 11)
           << pad(err ? "--" : fmt(t.eta_sq, 3), 8) << (err ? "--" : fmt(t.partial_eta_sq, 3))
           << "\n";
    }
    text << "Top " << n << " F1 - Tukey comparisons of customer size\n";
    text << pad("Contrast", 22) << pad("Estimate", 10) << pad("SE", 10) << pad("df", 4)
         << pad("t.ratio", 9) << "p.value\n";
    auto tukey_json = nlohmann::json::array();
    for (const auto& c : comparisons) {
      const std::string contrast = "CS" + fmt(c.level_a, 0) + " - CS" + fmt(c.level_b, 0);
      text << pad(contrast, 22) << pad(fmt(c.estimate), 10) << pad(fmt(c.se, 6), 10)
           << pad(fmt(c.df, 0), 4) << pad(fmt(c.t_ratio, 3), 9) << fmt_p(c.p_adjusted) << "\n";
      auto cj = c.to_json();
      cj["contrast"] = contrast;
      tukey_json.push_back(cj);
    }
    text << "\n";
    report.push_back({{"metric", "top" + std::to_string(n)},
                      {"anova", table.to_json()},
                      {"tukey", tukey_json}});
  }
  std::cout << text.str();
  if (!json_out.empty()) write_file_atomic(json_out, report.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Next-destination prediction with sliding-window LSTMs"};
  app.require_subcommand(1);

  std::string config_path, out, csv, out_dir, data, hyper, checkpoint, grid_path, json_out;
  std::string split_name = "test";
  std::size_t window_size = 5, top_cities = 16, jobs = 1;
  std::vector<std::size_t> top_n = {1, 3, 5, 7};
  std::optional<std::uint64_t> seed;
  bool replicate_level = false;

  auto* gen = app.add_subcommand("generate", "Generate a synthetic trip CSV");
  gen->add_option("--config", config_path, "Run config JSON")->required();
  gen->add_option("--out", out, "Output CSV")->required();
  gen->add_option("--seed", seed, "Override the config seed");

  auto* prep = app.add_subcommand("prepare", "Clean, window and split a trip CSV");
  prep->add_option("--csv", csv, "Input trip CSV")->required();
  prep->add_option("--window-size", window_size, "Sliding window size")->check(CLI::PositiveNumber);
  prep->add_option("--top-cities", top_cities, "Vocabulary size")->check(CLI::Range(2, 100000));
  prep->add_option("--out-dir", out_dir, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train one model on a prepared dataset");
  tr->add_option("--data", data, "dataset.json from prepare")->required();
  tr->add_option("--hyper", hyper, "Hyperparameter JSON");
  tr->add_option("--checkpoint", checkpoint, "Output checkpoint")->required();

  auto* ev = app.add_subcommand("evaluate", "Top-N scores of a checkpoint");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required();
  ev->add_option("--data", data, "dataset.json from prepare")->required();
  ev->add_option("--top-n", top_n, "N values")->delimiter(',');
  ev->add_option("--split", split_name, "Which split to score")
      ->check(CLI::IsMember({"test", "train"}));

  auto* gr = app.add_subcommand("grid", "Run the customer-size x window-size experiment");
  gr->add_option("--config", config_path, "Run config JSON")->required();
  gr->add_option("--out", out, "Results grid CSV")->required();
  gr->add_option("--jobs", jobs, "Concurrent cells")->check(CLI::PositiveNumber);
  gr->add_option("--csv", csv, "Trip CSV instead of generated data");
  gr->add_option("--seed", seed, "Override the config seed");

  auto* st = app.add_subcommand("stats", "ANOVA and Tukey tables for a results grid");
  st->add_option("--grid", grid_path, "Results grid CSV")->required();
  st->add_option("--json", json_out, "Also write the tables as JSON");
  st->add_flag("--replicate-level", replicate_level, "ANOVA over replicate rows");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_generate(config_path, out, seed);
    if (prep->parsed()) return cmd_prepare(csv, window_size, top_cities, out_dir);
    if (tr->parsed()) return cmd_train(data, hyper, checkpoint);
    if (ev->parsed()) return cmd_evaluate(checkpoint, data, top_n, split_name);
    if (gr->parsed()) return cmd_grid(config_path, out, jobs, csv, seed);
    if (st->parsed()) return cmd_stats(grid_path, json_out, replicate_level);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
