#include "tnesi/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

namespace tnesi {

namespace {

bool in_unit_interval_open_left(double x) { return x > 0.0 && x <= 1.0; }

double relative_error(double value, double target) {
  return std::abs(value - target) / std::max(std::abs(target), 1.0);
}

}  // namespace

ModelConfig validate_config(const ModelConfig& cfg) {
  if (cfg.K <= 0) throw ConfigError("K must be positive");
  if (cfg.C <= 0) throw ConfigError("C must be positive");
  if (cfg.D <= 0) throw ConfigError("D must be positive");
  if (cfg.C_prime < 1 || cfg.C_prime > cfg.C) throw ConfigError("C_prime must be in [1, C]");
  if (!(cfg.A > cfg.D)) throw ConfigError("A must exceed D");
  if (!in_unit_interval_open_left(cfg.eps_W)) throw ConfigError("eps_W must be in (0, 1]");
  if (!in_unit_interval_open_left(cfg.eps_R)) throw ConfigError("eps_R must be in (0, 1]");
  if (!(cfg.theta_bvsb >= 0.0 && cfg.theta_bvsb <= 1.0))
    throw ConfigError("theta_bvsb must be in [0, 1]");
  if (cfg.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (cfg.trace_every < 1) throw ConfigError("trace_every must be positive");
  return cfg;
}

ModelConfig resolve_learning_rates(ModelConfig cfg, Index n_train, double w_factor,
                                   double r_factor) {
  if (n_train <= 0) throw ConfigError("learning rates need a non-empty training set");
  const auto n = static_cast<double>(n_train);
  if (std::isnan(cfg.eps_W)) cfg.eps_W = w_factor * cfg.C / n;
  if (std::isnan(cfg.eps_R)) cfg.eps_R = r_factor * cfg.K / n;
  return cfg;
}

nlohmann::json to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["K"] = cfg.K;
  j["C"] = cfg.C;
  j["C_prime"] = cfg.C_prime;
  j["A"] = cfg.A;
  j["D"] = cfg.D;
  // NaN is not representable in JSON; an unresolved rate is written as null.
  j["eps_W"] = std::isnan(cfg.eps_W) ? nlohmann::json(nullptr) : nlohmann::json(cfg.eps_W);
  j["eps_R"] = std::isnan(cfg.eps_R) ? nlohmann::json(nullptr) : nlohmann::json(cfg.eps_R);
  j["theta_bvsb"] = cfg.theta_bvsb;
  j["epochs"] = cfg.epochs;
  j["seed"] = cfg.seed;
  j["trace_every"] = cfg.trace_every;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ModelConfig cfg;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "K") cfg.K = value.get<int>();
      else if (key == "C") cfg.C = value.get<int>();
      else if (key == "C_prime") cfg.C_prime = value.get<int>();
      else if (key == "A") cfg.A = value.get<double>();
      else if (key == "D") cfg.D = value.get<int>();
      else if (key == "eps_W")
        cfg.eps_W = value.is_null() ? std::numeric_limits<double>::quiet_NaN() : value.get<double>();
      else if (key == "eps_R")
        cfg.eps_R = value.is_null() ? std::numeric_limits<double>::quiet_NaN() : value.get<double>();
      else if (key == "theta_bvsb") cfg.theta_bvsb = value.get<double>();
      else if (key == "epochs") cfg.epochs = value.get<int>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "trace_every") cfg.trace_every = value.get<int>();
      else throw ConfigError("unknown config key \"" + key + "\"");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad value for config key \"" + key + "\": " + e.what());
    }
  }
  return cfg;
}

ModelConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("cannot parse config file " + path + ": " + e.what());
  }
  return config_from_json(j);
}

Observation Observation::from_normalized(Vector y, double A) {
  if (y.size() == 0) throw DataError(DataError::Kind::Format, "observation has no components");
  if (!y.allFinite()) throw DataError(DataError::Kind::Format, "observation is not finite");
  if ((y.array() < 1.0).any())
    throw DataError(DataError::Kind::Format, "observation has a component below 1");
  if (relative_error(y.sum(), A) > kObservationTolerance)
    throw DataError(DataError::Kind::Format, "observation does not sum to A");
  return Observation(std::move(y), A);
}

BottomWeights::BottomWeights(RowMatrix W, double A) : W_(std::move(W)), A_(A) {
  if (W_.size() == 0) throw ConfigError("bottom weights are empty");
  if (!W_.allFinite() || (W_.array() <= 0.0).any())
    throw ConfigError("bottom weights must be finite and positive");
  if (max_row_sum_error() > kWeightRowTolerance)
    throw ConfigError("bottom weight rows must sum to A");
  log_W_.resize(W_.rows(), W_.cols());
  for (Index c = 0; c < W_.rows(); ++c) refresh_log(c);
}

void BottomWeights::refresh_log(Index c) {
  constexpr Index L = 8;
  using Lanes = Eigen::Array<double, L, 1>;
  const double* src = W_.row(c).data();
  double* dst = log_W_.row(c).data();
  const Index D = dim();
  Index d = 0;
  for (; d + L <= D; d += L) Eigen::Map<Lanes>(dst + d) = Eigen::Map<const Lanes>(src + d).log();
  for (; d < D; ++d) dst[d] = std::log(src[d]);
}

void BottomWeights::set_row(Index c, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  if (row.size() != dim()) throw ConfigError("row has the wrong dimension");
  if (!row.allFinite() || (row.array() <= 0.0).any())
    throw ConfigError("bottom weights must be finite and positive");
  if (relative_error(row.sum(), A_) > kWeightRowTolerance)
    throw ConfigError("bottom weight rows must sum to A");
  W_.row(c) = row;
  refresh_log(c);
}

double BottomWeights::max_row_sum_error() const {
  double worst = 0.0;
  for (Index c = 0; c < W_.rows(); ++c) worst = std::max(worst, relative_error(W_.row(c).sum(), A_));
  return worst;
}

TopWeights::TopWeights(RowMatrix R) : R_(std::move(R)) {
  if (R_.size() == 0) throw ConfigError("top weights are empty");
  if (!R_.allFinite() || (R_.array() < 0.0).any())
    throw ConfigError("top weights must be finite and nonnegative");
  if (max_row_sum_error() > kTopRowTolerance) throw ConfigError("top weight rows must sum to 1");
}

double TopWeights::max_row_sum_error() const {
  return (R_.rowwise().sum().array() - 1.0).abs().maxCoeff();
}

TruncationSet::TruncationSet(std::vector<Index> indices, Index C)
    : indices_(std::move(indices)), C_(C) {
  if (indices_.empty()) throw ConfigError("truncation set must not be empty");
  if (static_cast<Index>(indices_.size()) > C_)
    throw ConfigError("truncation set is larger than the cluster count");
  std::vector<bool> seen(static_cast<std::size_t>(C_), false);
  for (Index c : indices_) {
    if (c < 0 || c >= C_) throw ConfigError("truncation index out of range");
    if (seen[static_cast<std::size_t>(c)]) throw ConfigError("truncation indices must be distinct");
    seen[static_cast<std::size_t>(c)] = true;
  }
}

TruncationSet TruncationSet::full(Index C) {
  std::vector<Index> all(static_cast<std::size_t>(C));
  for (Index c = 0; c < C; ++c) all[static_cast<std::size_t>(c)] = c;
  return TruncationSet(std::move(all), C);
}

bool TruncationSet::contains(Index c) const {
  return std::find(indices_.begin(), indices_.end(), c) != indices_.end();
}

TruncatedPosterior::TruncatedPosterior(TruncationSet support, Vector probs)
    : support_(std::move(support)), probs_(std::move(probs)) {
  if (probs_.size() != support_.size())
    throw ConfigError("posterior and support sizes differ");
  if (!probs_.allFinite() || (probs_.array() < 0.0).any())
    throw NumericError("posterior entries must be finite and nonnegative");
  if (std::abs(probs_.sum() - 1.0) > kProbabilityTolerance)
    throw NumericError("posterior does not sum to 1");
}

Vector TruncatedPosterior::to_dense() const {
  Vector dense = Vector::Zero(support_.clusters());
  for (Index i = 0; i < size(); ++i) dense(support_[i]) = probs_(i);
  return dense;
}

ClassPosterior::ClassPosterior(Vector t) : t_(std::move(t)) {
  if (t_.size() == 0) throw ConfigError("class posterior is empty");
  if (!t_.allFinite() || (t_.array() < 0.0).any())
    throw NumericError("class posterior entries must be finite and nonnegative");
  if (std::abs(t_.sum() - 1.0) > kProbabilityTolerance)
    throw NumericError("class posterior does not sum to 1");
}

ClassPosterior ClassPosterior::one_hot(Index K, Index label) {
  if (label < 0 || label >= K) throw ConfigError("label out of range");
  Vector t = Vector::Zero(K);
  t(label) = 1.0;
  return ClassPosterior(std::move(t));
}

std::pair<BottomWeights, TopWeights> init_weights(const ModelConfig& cfg, const Vector& data_mean,
                                                  Rng& rng) {
  validate_config(cfg);
  if (data_mean.size() != cfg.D) throw ConfigError("data mean has the wrong dimension");
  if ((data_mean.array() <= 0.0).any()) throw ConfigError("data mean must be positive");

  std::uniform_real_distribution<double> noise(0.95, 1.05);
  RowMatrix W(cfg.C, cfg.D);
  for (Index c = 0; c < cfg.C; ++c) {
    for (Index d = 0; d < cfg.D; ++d) W(c, d) = data_mean(d) * noise(rng);
    W.row(c) *= cfg.A / W.row(c).sum();
  }
  RowMatrix R = RowMatrix::Constant(cfg.K, cfg.C, 1.0 / cfg.C);
  return {BottomWeights(std::move(W), cfg.A), TopWeights(std::move(R))};
}

std::uint64_t weights_hash(const BottomWeights& W, const TopWeights& R) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const RowMatrix& m) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
    const std::size_t n = static_cast<std::size_t>(m.size()) * sizeof(double);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  mix(W.weights());
  mix(R.weights());
  return h;
}

}  // namespace tnesi
