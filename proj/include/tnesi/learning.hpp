#ifndef TNESI_LEARNING_HPP
#define TNESI_LEARNING_HPP

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tnesi/core.hpp"
#include "tnesi/data.hpp"

namespace tnesi {

/// Free-energy values indexed by a strictly increasing iteration counter.
class FreeEnergyTrace {
 public:
  struct Entry {
    int iteration;
    double value;
  };

  void push(int iteration, double value);
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const Entry& back() const { return entries_.back(); }

  // Position of the first entry that falls below its predecessor by more than
  // rel_slack * |predecessor|, if any.
  std::optional<std::size_t> first_decrease(double rel_slack) const;

  // iteration,free_energy with shortest round-trip formatting. The header's
  // first column name is configurable ("epoch" for online runs).
  void write_csv(const std::string& path, const std::string& index_name = "iteration") const;

 private:
  std::vector<Entry> entries_;
};

/// Accumulators of truncated expectations: sum_n s_c and sum_n s_c y.
struct SufficientStats {
  Vector s_sum;
  RowMatrix sy_sum;

  SufficientStats(Index C, Index D) : s_sum(Vector::Zero(C)), sy_sum(RowMatrix::Zero(C, D)) {}

  template <typename Derived>
  void add(const TruncatedPosterior& s, const Eigen::MatrixBase<Derived>& y) {
    for (Index i = 0; i < s.size(); ++i) {
      const Index c = s.support()[i];
      const double w = s.probs()(i);
      s_sum(c) += w;
      for (Index d = 0; d < sy_sum.cols(); ++d) sy_sum(c, d) += w * y(d);
    }
  }

  void merge(const SufficientStats& other) {
    s_sum += other.s_sum;
    sy_sum += other.sy_sum;
  }
};

/// Hebbian bottom update on the support of s only:
/// W_cd <- (1 - eps s_c) W_cd + eps s_c y_d. Requires eps_W * max(s) <= 1.
template <typename Derived>
void update_bottom(BottomWeights& W, const TruncatedPosterior& s, const Eigen::MatrixBase<Derived>& y,
                   double eps_W) {
  for (Index i = 0; i < s.size(); ++i) W.blend_row(s.support()[i], eps_W * s.probs()(i), y);
}

inline void update_bottom(BottomWeights& W, const TruncatedPosterior& s, const Observation& y,
                          double eps_W) {
  update_bottom(W, s, y.values(), eps_W);
}

/// Hebbian top update R_kc += eps t_k (s_c - R_kc). The decay term is dense in
/// c, so every row with t_k > 0 is touched.
void update_top(TopWeights& R, const ClassPosterior& t, const TruncatedPosterior& s, double eps_R);

/// sum_n log sum_{c in K_n} p(c, y_n | W).
double free_energy(const Dataset& data, const BottomWeights& W, std::span<const TruncationSet> sets);

// F(K, W) with K the optimal sets of size C' for W; nothing is stored.
double optimal_free_energy(const Dataset& data, const BottomWeights& W, Index C_prime);

// Exact log-likelihood of the normalized Poisson mixture (all sets full).
double log_likelihood(const Dataset& data, const BottomWeights& W);

struct EStep {
  std::vector<TruncationSet> sets;
  std::vector<TruncatedPosterior> posteriors;
  double free_energy = 0.0;  // F(new sets, W)
};

// Selects the C' largest joints per point and evaluates F on the way.
EStep truncated_e_step(const Dataset& data, const BottomWeights& W, Index C_prime);

std::vector<TruncationSet> batch_e_step(const Dataset& data, const BottomWeights& W, Index C_prime);

struct MStep {
  BottomWeights W;
  Index dead_clusters = 0;  // rows without responsibility, kept at their previous value
};

/// W_c = sum_n s_c y_n / sum_n s_c. Rows with zero responsibility keep their
/// value from `previous`.
MStep batch_m_step(const Dataset& data, std::span<const TruncatedPosterior> posteriors,
                   const BottomWeights& previous);

struct TvEmIteration {
  BottomWeights W;
  std::vector<TruncationSet> sets;
  std::vector<TruncatedPosterior> posteriors;
  double free_energy_e = 0.0;  // F(new sets, old W)
  double free_energy_m = 0.0;  // F(new sets, new W)
  Index dead_clusters = 0;
};

TvEmIteration tv_em_iteration(const Dataset& data, const BottomWeights& W, Index C_prime);

struct BatchRun {
  BottomWeights W;
  // Half-step trace: entry 2t-1 follows the E-step of iteration t, entry 2t its M-step.
  FreeEnergyTrace trace;
  Index dead_clusters = 0;  // summed over iterations
};

BatchRun run_tv_em(const Dataset& data, BottomWeights W, Index C_prime, int iterations);

struct GateStats {
  Index labeled = 0;       // top updates from labeled points
  Index self_labeled = 0;  // unlabeled points that passed the BvSB gate
  Index gated = 0;         // unlabeled points that did not
};

struct PhaseTimes {
  double integrate = 0.0;  // seconds
  double select = 0.0;
  double update = 0.0;
};

struct EpochStats {
  GateStats gate;
  PhaseTimes seconds;
};

/// One pass of online learning over a fresh random permutation of the data.
/// Labeled points update R with their one-hot label; unlabeled points whose
/// class posterior passes the BvSB gate update R with the inferred label.
EpochStats online_epoch(const Dataset& data, BottomWeights& W, TopWeights& R, const ModelConfig& cfg,
                        Rng& rng);

}  // namespace tnesi

#endif  // TNESI_LEARNING_HPP
