// Command-line front end: train, eval, compare, export-weights, synth, aggregate.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 numeric failure (including a free-energy decrease in batch mode).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tnesi/core.hpp"
#include "tnesi/data.hpp"
#include "tnesi/harness.hpp"

namespace {

using namespace tnesi;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct DataArgs {
  std::string images;
  std::string labels;
  std::string test_images;
  std::string test_labels;
};

struct TrainArgs {
  std::string config;
  DataArgs data;
  int labels_per_class = -1;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::string out;
  std::string mode = "online";
  std::string cprime_list;
};

bool is_csv(const std::string& path) { return std::filesystem::path(path).extension() == ".csv"; }

RawDataset load_raw(const std::string& images, const std::string& labels) {
  if (is_csv(images)) return load_csv(images);
  if (labels.empty()) throw ConfigError("--labels is required for IDX images");
  return load_idx(images, labels);
}

ModelConfig base_config(const TrainArgs& args) {
  ModelConfig cfg = args.config.empty() ? ModelConfig{} : load_config(args.config);
  if (args.seed) cfg.seed = *args.seed;
  if (args.epochs) cfg.epochs = *args.epochs;
  return cfg;
}

struct Prepared {
  ModelConfig cfg;
  Dataset train;
  std::optional<Dataset> test;
};

Prepared prepare(const TrainArgs& args) {
  ModelConfig cfg = base_config(args);
  const RawDataset raw = load_raw(args.data.images, args.data.labels);
  cfg.D = static_cast<int>(raw.dim());
  Dataset train = preprocess(raw, cfg.A, cfg.K);
  if (args.labels_per_class >= 0) train = subsample_labels(train, args.labels_per_class, cfg.seed);
  cfg = validate_config(resolve_learning_rates(cfg, train.size()));

  std::optional<Dataset> test;
  if (!args.data.test_images.empty()) {
    const RawDataset raw_test = load_raw(args.data.test_images, args.data.test_labels);
    test = preprocess(raw_test, cfg.A, cfg.K);
  }
  return {cfg, std::move(train), std::move(test)};
}

EpochCallback progress(const std::string& tag) {
  auto start = std::make_shared<std::chrono::steady_clock::time_point>(std::chrono::steady_clock::now());
  return [tag, start](int epoch, const RunReport& r) {
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - *start).count();
    std::fprintf(stderr, "%s epoch %d/%d", tag.c_str(), epoch, r.config.epochs);
    if (!r.test_error.empty()) std::fprintf(stderr, "  test error %.4f", r.test_error.back());
    if (!r.free_energy.empty() && r.free_energy.back().iteration == epoch)
      std::fprintf(stderr, "  F %.10g", r.free_energy.back().value);
    if (!r.gate.empty() && epoch > 0)
      std::fprintf(stderr, "  self-labeled %ld", static_cast<long>(r.gate.back().self_labeled));
    std::fprintf(stderr, "  (%.1f s)\n", elapsed);
  };
}

int run_train(const TrainArgs& args) {
  Prepared p = prepare(args);
  const Dataset* test = p.test ? &*p.test : nullptr;
  if (args.mode == "batch") {
    TrainResult result = train_batch(p.train, p.cfg);
    write_report(args.out, result.report);
    save_model((std::filesystem::path(args.out) / "model").string(), p.cfg, result.W, result.R);
    if (result.report.monotonicity_violation) {
      const auto i = *result.report.monotonicity_violation;
      const auto& e = result.report.free_energy.entries();
      std::fprintf(stderr, "free energy decreased at step %d: %.17g -> %.17g\n", e[i].iteration,
                   e[i - 1].value, e[i].value);
      return kExitNumeric;
    }
    return 0;
  }
  TrainResult result = train(p.train, test, p.cfg, progress("train"));
  write_report(args.out, result.report);
  save_model((std::filesystem::path(args.out) / "model").string(), p.cfg, result.W, result.R);
  return 0;
}

std::vector<int> parse_cprime_list(const std::string& list, int C) {
  std::vector<int> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "C") {
      out.push_back(C);
      continue;
    }
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("bad entry \"" + item + "\" in --cprime-list");
    }
  }
  if (out.empty()) throw ConfigError("--cprime-list is empty");
  return out;
}

int run_compare(const TrainArgs& args) {
  Prepared p = prepare(args);
  const Dataset* test = p.test ? &*p.test : nullptr;
  const auto c_primes = parse_cprime_list(args.cprime_list, p.cfg.C);
  for (int c_prime : c_primes) {
    ModelConfig check = p.cfg;
    check.C_prime = c_prime;
    validate_config(check);
  }
  const auto runs = compare_truncation(p.train, test, p.cfg, c_primes, progress("compare"));
  for (const auto& run : runs) {
    write_report(args.out, run.report, "_cprime" + std::to_string(run.report.config.C_prime));
  }
  return 0;
}

int run_eval(const std::string& weights, const DataArgs& data) {
  const SavedModel model = load_model(weights);
  const RawDataset raw = load_raw(data.test_images, data.test_labels);
  const Dataset test = preprocess(raw, model.config.A, model.config.K);
  const double error = evaluate(test, model.W, model.R, model.config.C_prime);
  nlohmann::json j{{"test_error", error}, {"test_size", test.size()}, {"C_prime", model.config.C_prime}};
  std::cout << j.dump(2) << '\n';
  return 0;
}

int run_export(const std::string& weights, int rows, int cols, int panels, std::optional<std::uint64_t> seed,
               const std::string& out) {
  const SavedModel model = load_model(weights);
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(model.config.D))));
  const Index capacity = static_cast<Index>(rows) * cols;
  const Index count = panels >= 0 ? panels : std::min<Index>(capacity, model.W.clusters());
  if (count > model.W.clusters()) throw ConfigError("more panels requested than clusters exist");
  std::vector<Index> indices(static_cast<std::size_t>(model.W.clusters()));
  std::iota(indices.begin(), indices.end(), Index{0});
  if (seed) {
    Rng rng(*seed);
    std::shuffle(indices.begin(), indices.end(), rng);
  }
  indices.resize(static_cast<std::size_t>(count));
  export_weight_grid(model.W, model.R, rows, cols, side, indices, out);
  return 0;
}

int run_synth(Index clusters, Index dim, Index n, std::uint64_t seed, double mass, const std::string& out) {
  if (clusters <= 0 || dim <= 0 || n <= 0) throw ConfigError("--clusters, --dim and --n must be positive");
  if (mass <= 0) mass = 10.0 * static_cast<double>(dim);
  Rng rng(seed);
  const PoissonMixture mixture = make_poisson_mixture(clusters, dim, mass, rng);
  const RawDataset raw = sample_poisson_mixture(mixture, n, rng);
  std::filesystem::create_directories(out);
  write_csv((std::filesystem::path(out) / "data.csv").string(), raw);
  RawDataset rates;
  rates.pixels = mixture.rates;
  rates.labels.resize(static_cast<std::size_t>(clusters));
  std::iota(rates.labels.begin(), rates.labels.end(), 0);
  write_csv((std::filesystem::path(out) / "rates.csv").string(), rates);
  return 0;
}

int run_aggregate(const std::vector<std::string>& reports) {
  const ErrorSummary s = aggregate_reports(reports);
  nlohmann::json j{{"runs", s.runs}, {"mean_error", s.mean}, {"std", s.std}, {"sem", s.sem}};
  std::cout << j.dump(2) << '\n';
  return 0;
}

void add_data_options(CLI::App* cmd, DataArgs& data, bool need_train) {
  if (need_train) {
    cmd->add_option("--images", data.images, "Training images (IDX or .csv)")->required();
    cmd->add_option("--labels", data.labels, "Training labels (IDX)");
  }
  cmd->add_option("--test-images", data.test_images, "Test images (IDX or .csv)");
  cmd->add_option("--test-labels", data.test_labels, "Test labels (IDX)");
}

void add_train_options(CLI::App* cmd, TrainArgs& args) {
  cmd->add_option("--config", args.config, "Model configuration JSON");
  add_data_options(cmd, args.data, true);
  cmd->add_option("--labels-per-class", args.labels_per_class,
                  "Keep this many randomly chosen labels per class (default: keep all)");
  cmd->add_option("--seed", args.seed, "Override the configured seed");
  cmd->add_option("--epochs", args.epochs, "Override the configured epoch count");
  cmd->add_option("--out", args.out, "Output directory")->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Truncated Neural Simpletron: semi-supervised learning with truncated variational EM"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a network and write a run report");
  add_train_options(train_cmd, train_args);
  train_cmd->add_option("--mode", train_args.mode, "online (Hebbian) or batch (TV-EM, bottom layer only)")
      ->check(CLI::IsMember({"online", "batch"}));

  TrainArgs compare_args;
  auto* compare_cmd = app.add_subcommand("compare", "Train once per truncation size with shared initialization");
  add_train_options(compare_cmd, compare_args);
  compare_cmd->add_option("--cprime-list", compare_args.cprime_list, "Comma-separated C' values; C means C' = C")
      ->required();

  std::string eval_weights;
  DataArgs eval_data;
  auto* eval_cmd = app.add_subcommand("eval", "Test error of a saved model");
  eval_cmd->add_option("--weights", eval_weights, "Model directory")->required();
  add_data_options(eval_cmd, eval_data, false);
  eval_cmd->get_option("--test-images")->required();

  std::string export_weights;
  int export_rows = 10;
  int export_cols = 10;
  int export_panels = -1;
  std::optional<std::uint64_t> export_seed;
  std::string export_out;
  auto* export_cmd = app.add_subcommand("export-weights", "Render weights as a PGM grid");
  export_cmd->add_option("--weights", export_weights, "Model directory")->required();
  export_cmd->add_option("--rows", export_rows, "Grid rows");
  export_cmd->add_option("--cols", export_cols, "Grid columns");
  export_cmd->add_option("--panels", export_panels, "Number of clusters to draw (default: fill the grid)");
  export_cmd->add_option("--seed", export_seed, "Draw a random subset of clusters");
  export_cmd->add_option("--out", export_out, "Output PGM path")->required();

  Index synth_clusters = 0;
  Index synth_dim = 0;
  Index synth_n = 0;
  std::uint64_t synth_seed = 0;
  double synth_mass = 0.0;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Sample a synthetic Poisson mixture as CSV");
  synth_cmd->add_option("--clusters", synth_clusters, "Mixture components")->required();
  synth_cmd->add_option("--dim", synth_dim, "Dimensionality")->required();
  synth_cmd->add_option("--n", synth_n, "Number of points")->required();
  synth_cmd->add_option("--seed", synth_seed, "RNG seed");
  synth_cmd->add_option("--mass", synth_mass, "Expected counts per point (default 10 * dim)");
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();

  std::vector<std::string> aggregate_inputs;
  auto* aggregate_cmd = app.add_subcommand("aggregate", "Mean, std and SEM of final errors over run reports");
  aggregate_cmd->add_option("reports", aggregate_inputs, "report.json files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUsage;
  }

  try {
    if (*train_cmd) return run_train(train_args);
    if (*compare_cmd) return run_compare(compare_args);
    if (*eval_cmd) return run_eval(eval_weights, eval_data);
    if (*export_cmd)
      return run_export(export_weights, export_rows, export_cols, export_panels, export_seed, export_out);
    if (*synth_cmd) return run_synth(synth_clusters, synth_dim, synth_n, synth_seed, synth_mass, synth_out);
    if (*aggregate_cmd) return run_aggregate(aggregate_inputs);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
