#ifndef TNESI_HARNESS_HPP
#define TNESI_HARNESS_HPP

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tnesi/core.hpp"
#include "tnesi/data.hpp"
#include "tnesi/learning.hpp"

namespace tnesi {

/// Everything a run produced. Wall-clock timings are kept alongside but are
/// not part of the JSON document, which is a deterministic function of the
/// inputs and the seed.
struct RunReport {
  ModelConfig config;
  std::string mode = "online";  // "online" or "batch"
  Index train_size = 0;
  Index labeled_count = 0;
  std::vector<double> test_error;  // entry e is the error after e epochs
  FreeEnergyTrace free_energy;     // epochs (online) or half-steps (batch)
  std::vector<GateStats> gate;     // one per trained epoch
  std::vector<PhaseTimes> seconds; // one per trained epoch
  std::optional<double> final_error;
  std::uint64_t initial_weights_hash = 0;
  Index dead_clusters = 0;                        // batch mode only
  std::optional<std::size_t> monotonicity_violation;  // batch mode only, trace position
};

nlohmann::json to_json(const RunReport& report);
void write_report(const std::string& dir, const RunReport& report, const std::string& suffix = "");

struct TrainResult {
  RunReport report;
  BottomWeights W;
  TopWeights R;
};

using EpochCallback = std::function<void(int epoch, const RunReport& report)>;

/// Online training for cfg.epochs epochs. Test error is evaluated after every
/// epoch when a test set is given; the free energy of the training set every
/// cfg.trace_every epochs and after the last one.
TrainResult train(const Dataset& train_set, const Dataset* test_set, const ModelConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Batch truncated variational EM on the bottom layer for cfg.epochs
/// iterations. The top layer stays at its initial value.
TrainResult train_batch(const Dataset& train_set, const ModelConfig& cfg, double rel_slack = 1e-8);

/// Fraction of test points whose prediction differs from their label, using
/// truncated inference with C_prime clusters.
double evaluate(const Dataset& test_set, const BottomWeights& W, const TopWeights& R, Index C_prime);

// Predictions for every point of a data set.
std::vector<Index> predict_all(const Dataset& data, const BottomWeights& W, const TopWeights& R,
                               Index C_prime);

/// One training run per C' with identical seed and initial weights.
std::vector<TrainResult> compare_truncation(const Dataset& train_set, const Dataset* test_set,
                                            const ModelConfig& cfg, std::span<const int> c_primes,
                                            const EpochCallback& on_epoch = {});

/// Binary PGM of a rows x cols grid. Each panel shows one W row as a
/// side x side image with the matching R column as a K-pixel strip on its
/// right; both are min-max scaled per panel (constant data renders as 128).
std::vector<unsigned char> render_weight_grid(const BottomWeights& W, const TopWeights& R, int rows,
                                              int cols, int side, std::span<const Index> panels);
void export_weight_grid(const BottomWeights& W, const TopWeights& R, int rows, int cols, int side,
                        std::span<const Index> panels, const std::string& path);

// Model directory: config.json, W.bin, R.bin.
void save_model(const std::string& dir, const ModelConfig& cfg, const BottomWeights& W,
                const TopWeights& R);
struct SavedModel {
  ModelConfig config;
  BottomWeights W;
  TopWeights R;
};
SavedModel load_model(const std::string& dir);

struct ErrorSummary {
  std::size_t runs = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
  double sem = 0.0;
};
ErrorSummary summarize_errors(std::span<const double> errors);
ErrorSummary aggregate_reports(std::span<const std::string> report_paths);

}  // namespace tnesi

#endif  // TNESI_HARNESS_HPP
