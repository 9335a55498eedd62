#include "tnesi/harness.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "tnesi/classifier.hpp"
#include "tnesi/inference.hpp"

namespace tnesi {

namespace {

constexpr Index kEvalBlockRows = 1024;
constexpr char kMatrixMagic[8] = {'T', 'N', 'E', 'S', 'I', 'M', '0', '1'};

static_assert(std::endian::native == std::endian::little, "weight files are little-endian");

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw DataError(DataError::Kind::Io, "cannot write " + path.string());
  return out;
}

void write_matrix(const std::filesystem::path& path, const RowMatrix& m) {
  auto out = open_out(path, true);
  const std::uint64_t dims[2] = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  out.write(kMatrixMagic, sizeof kMatrixMagic);
  out.write(reinterpret_cast<const char*>(dims), sizeof dims);
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

RowMatrix read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataError::Kind::Io, "cannot open " + path.string());
  char magic[8];
  std::uint64_t dims[2];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMatrixMagic, sizeof magic) != 0)
    throw DataError(DataError::Kind::BadMagic, "not a weight file: " + path.string());
  if (!in.read(reinterpret_cast<char*>(dims), sizeof dims))
    throw DataError(DataError::Kind::Truncated, "truncated weight file: " + path.string());
  RowMatrix m(static_cast<Index>(dims[0]), static_cast<Index>(dims[1]));
  if (!in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double))))
    throw DataError(DataError::Kind::Truncated, "truncated weight file: " + path.string());
  return m;
}

unsigned char scale_pixel(double v, double lo, double hi) {
  if (!(hi > lo)) return 128;
  return static_cast<unsigned char>(std::lround(255.0 * (v - lo) / (hi - lo)));
}

}  // namespace

nlohmann::json to_json(const RunReport& report) {
  nlohmann::json j;
  j["config"] = to_json(report.config);
  j["mode"] = report.mode;
  j["seed"] = report.config.seed;
  j["train_size"] = report.train_size;
  j["labeled_count"] = report.labeled_count;
  j["test_error"] = report.test_error;
  auto& trace = j["free_energy"] = nlohmann::json::array();
  for (const auto& e : report.free_energy.entries()) trace.push_back({{"iteration", e.iteration}, {"value", e.value}});
  auto& gate = j["gate"] = nlohmann::json::array();
  for (const auto& g : report.gate)
    gate.push_back({{"labeled", g.labeled}, {"self_labeled", g.self_labeled}, {"gated", g.gated}});
  j["final_error"] = report.final_error ? nlohmann::json(*report.final_error) : nlohmann::json(nullptr);
  j["initial_weights_hash"] = hex64(report.initial_weights_hash);
  if (report.mode == "batch") {
    j["dead_clusters"] = report.dead_clusters;
    j["monotonicity_violation"] = report.monotonicity_violation
                                      ? nlohmann::json(*report.monotonicity_violation)
                                      : nlohmann::json(nullptr);
  }
  return j;
}

void write_report(const std::string& dir, const RunReport& report, const std::string& suffix) {
  const std::filesystem::path base(dir);
  std::filesystem::create_directories(base);
  open_out(base / ("report" + suffix + ".json")) << to_json(report).dump(2) << '\n';
  report.free_energy.write_csv((base / ("trace" + suffix + ".csv")).string(),
                               report.mode == "batch" ? "iteration" : "epoch");
  if (!report.test_error.empty()) {
    auto out = open_out(base / ("errors" + suffix + ".csv"));
    out << "epoch,test_error\n";
    for (std::size_t e = 0; e < report.test_error.size(); ++e) out << e << ',' << shortest(report.test_error[e]) << '\n';
  }
  auto out = open_out(base / ("timings" + suffix + ".csv"));
  out << "epoch,integrate_s,select_s,update_s\n";
  for (std::size_t e = 0; e < report.seconds.size(); ++e) {
    const auto& s = report.seconds[e];
    out << e + 1 << ',' << shortest(s.integrate) << ',' << shortest(s.select) << ',' << shortest(s.update) << '\n';
  }
}

std::vector<Index> predict_all(const Dataset& data, const BottomWeights& W, const TopWeights& R,
                               Index C_prime) {
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(data.size()));
  for (Index start = 0; start < data.size(); start += kEvalBlockRows) {
    const Index len = std::min(kEvalBlockRows, data.size() - start);
    const RowMatrix I = integrate_batch(W, data.observations().middleRows(start, len));
    for (Index i = 0; i < len; ++i) {
      const auto In = I.row(i);
      out.push_back(predict(truncated_posterior(In, select_truncation(In, C_prime)), R));
    }
  }
  return out;
}

double evaluate(const Dataset& test_set, const BottomWeights& W, const TopWeights& R, Index C_prime) {
  for (Index n = 0; n < test_set.size(); ++n) {
    if (!test_set.label(n))
      throw DataError(DataError::Kind::Labels, "test example " + std::to_string(n) + " has no label");
  }
  const auto predictions = predict_all(test_set, W, R, C_prime);
  Index wrong = 0;
  for (Index n = 0; n < test_set.size(); ++n) {
    if (predictions[static_cast<std::size_t>(n)] != *test_set.label(n)) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(test_set.size());
}

TrainResult train(const Dataset& train_set, const Dataset* test_set, const ModelConfig& cfg_in,
                  const EpochCallback& on_epoch) {
  const ModelConfig cfg = validate_config(cfg_in);
  if (train_set.dim() != cfg.D) throw ConfigError("training data dimension does not match D");
  if (train_set.classes() != cfg.K) throw ConfigError("training data class count does not match K");
  if (test_set && test_set->dim() != cfg.D) throw ConfigError("test data dimension does not match D");

  Rng rng(cfg.seed);
  auto [W, R] = init_weights(cfg, train_set.mean(), rng);

  RunReport report;
  report.config = cfg;
  report.train_size = train_set.size();
  report.labeled_count = train_set.labeled_count();
  report.initial_weights_hash = weights_hash(W, R);

  auto record = [&](int epoch) {
    if (test_set) report.test_error.push_back(evaluate(*test_set, W, R, cfg.C_prime));
    if (epoch == 0 || epoch % cfg.trace_every == 0 || epoch == cfg.epochs)
      report.free_energy.push(epoch, optimal_free_energy(train_set, W, cfg.C_prime));
    if (on_epoch) on_epoch(epoch, report);
  };

  record(0);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const EpochStats stats = online_epoch(train_set, W, R, cfg, rng);
    report.gate.push_back(stats.gate);
    report.seconds.push_back(stats.seconds);
    record(epoch);
  }
  if (!report.test_error.empty()) report.final_error = report.test_error.back();
  return {std::move(report), std::move(W), std::move(R)};
}

TrainResult train_batch(const Dataset& train_set, const ModelConfig& cfg_in, double rel_slack) {
  const ModelConfig cfg = validate_config(cfg_in);
  if (train_set.dim() != cfg.D) throw ConfigError("training data dimension does not match D");

  Rng rng(cfg.seed);
  auto [W, R] = init_weights(cfg, train_set.mean(), rng);

  RunReport report;
  report.config = cfg;
  report.mode = "batch";
  report.train_size = train_set.size();
  report.labeled_count = train_set.labeled_count();
  report.initial_weights_hash = weights_hash(W, R);

  BatchRun run = run_tv_em(train_set, std::move(W), cfg.C_prime, cfg.epochs);
  report.free_energy = std::move(run.trace);
  report.dead_clusters = run.dead_clusters;
  report.monotonicity_violation = report.free_energy.first_decrease(rel_slack);
  return {std::move(report), std::move(run.W), std::move(R)};
}

std::vector<TrainResult> compare_truncation(const Dataset& train_set, const Dataset* test_set,
                                            const ModelConfig& cfg, std::span<const int> c_primes,
                                            const EpochCallback& on_epoch) {
  std::vector<TrainResult> runs;
  for (const int c_prime : c_primes) {
    ModelConfig run_cfg = cfg;
    run_cfg.C_prime = c_prime;
    runs.push_back(train(train_set, test_set, run_cfg, on_epoch));
    if (runs.front().report.initial_weights_hash != runs.back().report.initial_weights_hash)
      throw NumericError("truncation comparison runs did not share their initial weights");
  }
  return runs;
}

std::vector<unsigned char> render_weight_grid(const BottomWeights& W, const TopWeights& R, int rows,
                                              int cols, int side, std::span<const Index> panels) {
  if (rows <= 0 || cols <= 0 || side <= 0) throw ConfigError("grid dimensions must be positive");
  if (static_cast<Index>(side) * side != W.dim())
    throw ConfigError("D = " + std::to_string(W.dim()) + " is not " + std::to_string(side) + " squared");
  if (static_cast<Index>(panels.size()) > static_cast<Index>(rows) * cols)
    throw ConfigError("grid of " + std::to_string(rows * cols) + " panels cannot hold " +
                      std::to_string(panels.size()));
  const Index K = R.classes();
  const Index panel_w = side + 1;
  const Index panel_h = std::max<Index>(side, K);
  const Index width = cols * panel_w;
  const Index height = rows * panel_h;

  const std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  const std::size_t offset = bytes.size();
  bytes.resize(offset + static_cast<std::size_t>(width * height), 0);
  auto pixel = [&](Index y, Index x) -> unsigned char& {
    return bytes[offset + static_cast<std::size_t>(y * width + x)];
  };

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const Index c = panels[p];
    if (c < 0 || c >= W.clusters()) throw ConfigError("panel index out of range");
    const Index top = static_cast<Index>(p) / cols * panel_h;
    const Index left = static_cast<Index>(p) % cols * panel_w;
    const auto w = W.weights().row(c);
    const double w_lo = w.minCoeff();
    const double w_hi = w.maxCoeff();
    for (Index i = 0; i < side; ++i)
      for (Index j = 0; j < side; ++j) pixel(top + i, left + j) = scale_pixel(w(i * side + j), w_lo, w_hi);
    const auto r = R.weights().col(c);
    const double r_lo = r.minCoeff();
    const double r_hi = r.maxCoeff();
    for (Index k = 0; k < K; ++k) pixel(top + k, left + side) = scale_pixel(r(k), r_lo, r_hi);
  }
  return bytes;
}

void export_weight_grid(const BottomWeights& W, const TopWeights& R, int rows, int cols, int side,
                        std::span<const Index> panels, const std::string& path) {
  const auto bytes = render_weight_grid(W, R, rows, cols, side, panels);
  auto out = open_out(path, true);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void save_model(const std::string& dir, const ModelConfig& cfg, const BottomWeights& W,
                const TopWeights& R) {
  const std::filesystem::path base(dir);
  std::filesystem::create_directories(base);
  open_out(base / "config.json") << to_json(cfg).dump(2) << '\n';
  write_matrix(base / "W.bin", W.weights());
  write_matrix(base / "R.bin", R.weights());
}

SavedModel load_model(const std::string& dir) {
  const std::filesystem::path base(dir);
  if (!std::filesystem::is_regular_file(base / "config.json"))
    throw DataError(DataError::Kind::Io, "no model in " + dir);
  ModelConfig cfg = load_config((base / "config.json").string());
  RowMatrix W = read_matrix(base / "W.bin");
  RowMatrix R = read_matrix(base / "R.bin");
  if (W.rows() != cfg.C || W.cols() != cfg.D || R.rows() != cfg.K || R.cols() != cfg.C)
    throw DataError(DataError::Kind::Format, "weight shapes do not match " + (base / "config.json").string());
  return {cfg, BottomWeights(std::move(W), cfg.A), TopWeights(std::move(R))};
}

ErrorSummary summarize_errors(std::span<const double> errors) {
  ErrorSummary s;
  s.runs = errors.size();
  if (errors.empty()) return s;
  for (double e : errors) s.mean += e;
  s.mean /= static_cast<double>(errors.size());
  if (errors.size() > 1) {
    double ss = 0.0;
    for (double e : errors) ss += (e - s.mean) * (e - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(errors.size() - 1));
    s.sem = s.std / std::sqrt(static_cast<double>(errors.size()));
  }
  return s;
}

ErrorSummary aggregate_reports(std::span<const std::string> report_paths) {
  std::vector<double> errors;
  for (const auto& path : report_paths) {
    std::ifstream in(path);
    if (!in) throw DataError(DataError::Kind::Io, "cannot open " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError(DataError::Kind::Format, "cannot parse " + path + ": " + e.what());
    }
    if (!j.contains("final_error") || !j["final_error"].is_number())
      throw DataError(DataError::Kind::Format, path + " has no final_error");
    errors.push_back(j["final_error"].get<double>());
  }
  return summarize_errors(errors);
}

}  // namespace tnesi
