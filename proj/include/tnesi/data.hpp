#ifndef TNESI_DATA_HPP
#define TNESI_DATA_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tnesi/core.hpp"

namespace tnesi {

struct LabeledExample {
  Observation y;
  std::optional<int> label;
};

/// Pixel data as read from disk, before normalization. Rows are examples.
/// A label of -1 marks an unlabeled example.
struct RawDataset {
  RowMatrix pixels;
  std::vector<int> labels;
  Index rows = 0;  // image geometry when known, else 0
  Index cols = 0;

  Index size() const { return pixels.rows(); }
  Index dim() const { return pixels.cols(); }
};

/// Normalized observations with optional labels. The observation block is
/// immutable and shared between copies, so relabeled views are cheap.
class Dataset {
 public:
  Dataset(RowMatrix observations, std::vector<std::optional<int>> labels, int K, double A);
  static Dataset from_examples(const std::vector<LabeledExample>& examples, int K);

  Index size() const noexcept { return y_->rows(); }
  Index dim() const noexcept { return y_->cols(); }
  int classes() const noexcept { return K_; }
  double mass() const noexcept { return A_; }

  const RowMatrix& observations() const noexcept { return *y_; }
  auto observation(Index n) const { return y_->row(n); }
  const std::optional<int>& label(Index n) const { return labels_[static_cast<std::size_t>(n)]; }
  const std::vector<std::optional<int>>& labels() const noexcept { return labels_; }
  // sum_d lgamma(y_d + 1) for example n.
  double log_factorial(Index n) const { return (*log_factorials_)(n); }
  LabeledExample example(Index n) const;

  Index labeled_count() const;
  Vector mean() const;

  // Same observations, different label mask.
  Dataset with_labels(std::vector<std::optional<int>> labels) const;

 private:
  Dataset(std::shared_ptr<const RowMatrix> y, std::shared_ptr<const Vector> log_factorials,
          std::vector<std::optional<int>> labels, int K, double A);
  void check_labels() const;

  std::shared_ptr<const RowMatrix> y_;
  std::shared_ptr<const Vector> log_factorials_;
  std::vector<std::optional<int>> labels_;
  int K_;
  double A_;
};

// IDX readers (big-endian header, unsigned byte payload).
RawDataset load_idx(const std::string& images_path, const std::string& labels_path);
RawDataset read_idx_images(const std::string& path);
std::vector<int> read_idx_labels(const std::string& path);

// CSV with header label,p0,...,p{D-1}; label -1 means unlabeled.
RawDataset load_csv(const std::string& path);
void write_csv(const std::string& path, const RawDataset& raw);

// Normalizes every example to mass A. Zero images are rejected by index.
Dataset preprocess(const RawDataset& raw, double A, int K);

// Keeps labels on exactly per_class randomly chosen examples of each class.
Dataset subsample_labels(const Dataset& data, int per_class, std::uint64_t seed);

/// A Poisson mixture with well-separated rate rows, for synthetic experiments.
/// Rates are in count units and every row sums to `mass`.
struct PoissonMixture {
  RowMatrix rates;
  double mass = 0.0;

  Index clusters() const { return rates.rows(); }
  Index dim() const { return rates.cols(); }
  // Rows that normalized observations of each component concentrate on:
  // (A - D) rates / mass + 1, each summing to A.
  RowMatrix normalized_rows(double A) const;
};

PoissonMixture make_poisson_mixture(Index clusters, Index dim, double mass, Rng& rng);

// Draws n points with uniformly chosen components; the label of each point is
// its generating component. All-zero draws are redrawn.
RawDataset sample_poisson_mixture(const PoissonMixture& mixture, Index n, Rng& rng);

}  // namespace tnesi

#endif  // TNESI_DATA_HPP
