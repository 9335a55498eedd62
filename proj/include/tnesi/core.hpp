#ifndef TNESI_CORE_HPP
#define TNESI_CORE_HPP

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace tnesi {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

// Error hierarchy. The CLI maps each family onto its own exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  enum class Kind { Io, BadMagic, Truncated, CountMismatch, Format, Degenerate, Labels };

  DataError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Tolerances on the normalization invariants.
inline constexpr double kWeightRowTolerance = 1e-6;   // relative, rows of W
inline constexpr double kTopRowTolerance = 1e-9;      // rows of R
inline constexpr double kObservationTolerance = 1e-9; // relative, sum of y
inline constexpr double kProbabilityTolerance = 1e-12;

/// Hyperparameters of a network. Learning rates may be left NaN and filled
/// in from the training-set size with resolve_learning_rates().
struct ModelConfig {
  int K = 10;
  int C = 10000;
  int C_prime = 15;
  double A = 900.0;
  int D = 784;
  double eps_W = std::numeric_limits<double>::quiet_NaN();
  double eps_R = std::numeric_limits<double>::quiet_NaN();
  double theta_bvsb = 0.6;
  int epochs = 500;
  std::uint64_t seed = 0;
  // Free-energy trace cadence in epochs for online runs.
  int trace_every = 1;

  bool operator==(const ModelConfig&) const = default;
};

// Returns cfg unchanged, or throws ConfigError naming the first violated invariant.
ModelConfig validate_config(const ModelConfig& cfg);

// eps_W = w_factor * C / N and eps_R = r_factor * K / N for whichever rate is NaN.
ModelConfig resolve_learning_rates(ModelConfig cfg, Index n_train, double w_factor = 0.2,
                                   double r_factor = 0.2);

nlohmann::json to_json(const ModelConfig& cfg);
// Unknown keys are rejected. Missing keys keep their defaults.
ModelConfig config_from_json(const nlohmann::json& j);
ModelConfig load_config(const std::string& path);

/// A normalized input: every component >= 1 and the components sum to A.
class Observation {
 public:
  static Observation from_normalized(Vector y, double A);

  const Vector& values() const noexcept { return y_; }
  Index dim() const noexcept { return y_.size(); }
  double mass() const noexcept { return mass_; }

 private:
  Observation(Vector y, double A) : y_(std::move(y)), mass_(A) {}
  Vector y_;
  double mass_;
};

/// C x D matrix of positive weights whose rows sum to A. Keeps log(W) in sync
/// so that input integration never evaluates a logarithm.
class BottomWeights {
 public:
  BottomWeights(RowMatrix W, double A);

  const RowMatrix& weights() const noexcept { return W_; }
  const RowMatrix& log_weights() const noexcept { return log_W_; }
  Index clusters() const noexcept { return W_.rows(); }
  Index dim() const noexcept { return W_.cols(); }
  double mass() const noexcept { return A_; }

  // W_c <- (1 - rate) W_c + rate * y. rate must lie in [0, 1] and y >= 1.
  template <typename Derived>
  void blend_row(Index c, double rate, const Eigen::MatrixBase<Derived>& y) {
    const Index D = dim();
    double* row = W_.row(c).data();
    const double keep = 1.0 - rate;
    for (Index d = 0; d < D; ++d) row[d] = keep * row[d] + rate * y(d);
    writes_ += static_cast<std::uint64_t>(D);
    // rate == 0 leaves the row bitwise unchanged, so its log stays valid.
    if (rate != 0.0) refresh_log(c);
  }

  // Replaces row c; the row must be positive and sum to A.
  void set_row(Index c, const Eigen::Ref<const Eigen::RowVectorXd>& row);

  // Number of weight entries written through blend_row since construction.
  std::uint64_t write_count() const noexcept { return writes_; }
  void reset_write_count() noexcept { writes_ = 0; }

  // Largest relative deviation of a row sum from A.
  double max_row_sum_error() const;

 private:
  // Recomputes row c of log(W). The result for an entry depends only on its
  // value and column, so equal rows always get equal logs.
  void refresh_log(Index c);

  RowMatrix W_;
  RowMatrix log_W_;
  double A_;
  std::uint64_t writes_ = 0;
};

/// K x C nonnegative matrix whose rows sum to 1.
class TopWeights {
 public:
  explicit TopWeights(RowMatrix R);

  const RowMatrix& weights() const noexcept { return R_; }
  RowMatrix& mutable_weights() noexcept { return R_; }
  Index classes() const noexcept { return R_.rows(); }
  Index clusters() const noexcept { return R_.cols(); }

  double max_row_sum_error() const;

 private:
  RowMatrix R_;
};

class TruncationSet;
namespace detail {
struct TruncationSetAccess;
}

/// Exactly C' distinct cluster indices in [0, C). Order is significant only
/// as a presentation detail: select_truncation emits best-first.
class TruncationSet {
 public:
  TruncationSet(std::vector<Index> indices, Index C);
  static TruncationSet full(Index C);

  std::span<const Index> indices() const noexcept { return indices_; }
  Index size() const noexcept { return static_cast<Index>(indices_.size()); }
  Index clusters() const noexcept { return C_; }
  Index operator[](Index i) const { return indices_[static_cast<std::size_t>(i)]; }
  bool contains(Index c) const;

 private:
  friend struct detail::TruncationSetAccess;
  struct Trusted {};
  TruncationSet(Trusted, std::vector<Index> indices, Index C)
      : indices_(std::move(indices)), C_(C) {}

  std::vector<Index> indices_;
  Index C_;
};

namespace detail {
// Used by the selection routines, whose output satisfies the set invariants
// by construction.
struct TruncationSetAccess {
  static TruncationSet make(std::vector<Index> indices, Index C) {
    return TruncationSet(TruncationSet::Trusted{}, std::move(indices), C);
  }
};
}  // namespace detail

/// Posterior over C clusters that is zero outside its support.
class TruncatedPosterior {
 public:
  TruncatedPosterior(TruncationSet support, Vector probs);

  const TruncationSet& support() const noexcept { return support_; }
  const Vector& probs() const noexcept { return probs_; }
  Index size() const noexcept { return probs_.size(); }
  Vector to_dense() const;

 private:
  TruncationSet support_;
  Vector probs_;
};

class ClassPosterior {
 public:
  explicit ClassPosterior(Vector t);
  static ClassPosterior one_hot(Index K, Index label);

  const Vector& values() const noexcept { return t_; }
  Index classes() const noexcept { return t_.size(); }
  double operator[](Index k) const { return t_(k); }

 private:
  Vector t_;
};

// W rows are data_mean scaled by U[0.95, 1.05] noise and renormalized to A;
// R is uniform 1/C.
std::pair<BottomWeights, TopWeights> init_weights(const ModelConfig& cfg, const Vector& data_mean,
                                                  Rng& rng);

// FNV-1a over the raw bytes of both matrices.
std::uint64_t weights_hash(const BottomWeights& W, const TopWeights& R);

}  // namespace tnesi

#endif  // TNESI_CORE_HPP
