#ifndef TNESI_INFERENCE_HPP
#define TNESI_INFERENCE_HPP

#include <cmath>
#include <string>

#include "tnesi/core.hpp"
#include "tnesi/topk.hpp"

namespace tnesi {

// Log-domain inputs I_c of the first hidden layer.
using LogActivation = Vector;

namespace detail {

template <typename Derived>
decltype(auto) as_column(const Eigen::MatrixBase<Derived>& v) {
  if constexpr (Derived::ColsAtCompileTime == 1) {
    return v.derived();
  } else {
    return v.derived().transpose();
  }
}

}  // namespace detail

/// y_d = (A - D) raw_d / sum(raw) + 1. The result is >= 1 and sums to A.
template <typename Derived>
Observation normalize_input(const Eigen::MatrixBase<Derived>& raw, double A) {
  const Index D = raw.size();
  if (D == 0) throw DataError(DataError::Kind::Format, "empty input vector");
  if (!(A > static_cast<double>(D))) throw ConfigError("A must exceed D");
  Vector r = detail::as_column(raw).template cast<double>();
  if (!r.allFinite() || (r.array() < 0.0).any())
    throw DataError(DataError::Kind::Format, "input must be finite and nonnegative");
  const double total = r.sum();
  if (!(total > 0.0)) throw DataError(DataError::Kind::Degenerate, "degenerate input: zero total mass");
  Vector y = ((A - static_cast<double>(D)) / total) * r.array() + 1.0;
  return Observation::from_normalized(std::move(y), A);
}

// I_c = sum_d log(W_cd) y_d.
// Every row goes through the same fixed-order reduction, so identical rows of
// W give bitwise identical inputs.
double row_dot(const double* w, const double* y, Index D);

// y points at W.dim() contiguous values; I must already have W.clusters() entries.
void integrate_into(const BottomWeights& W, const double* y, LogActivation& I);

template <typename Derived>
LogActivation integrate(const BottomWeights& W, const Eigen::MatrixBase<Derived>& y) {
  const Vector v = detail::as_column(y);
  if (v.size() != W.dim()) throw ConfigError("observation has the wrong dimension");
  LogActivation I(W.clusters());
  integrate_into(W, v.data(), I);
  return I;
}

inline LogActivation integrate(const BottomWeights& W, const Observation& y) {
  return integrate(W, y.values());
}

// All inputs of a block of observations at once: rows of Y are data points,
// the result is N x C.
RowMatrix integrate_batch(const BottomWeights& W, const Eigen::Ref<const RowMatrix>& Y);

/// The C' clusters with the largest inputs, best first (ties go to the smaller
/// index). With C' = C truncation is disabled and the full set is returned in
/// index order.
template <typename Derived>
TruncationSet select_truncation(const Eigen::MatrixBase<Derived>& I, Index C_prime) {
  const Index C = I.size();
  if (C_prime < 1 || C_prime > C) throw ConfigError("C_prime must be in [1, C]");
  if (C_prime == C) return TruncationSet::full(C);
  TopKSelector<double> heap(C_prime);
  for (Index c = 0; c < C; ++c) heap.push(I(c), c);
  return detail::TruncationSetAccess::make(heap.take_sorted(), C);
}

/// Softmax of I restricted to the set, with the maximum subtracted first.
template <typename Derived>
TruncatedPosterior truncated_posterior(const Eigen::MatrixBase<Derived>& I, const TruncationSet& set) {
  if (set.clusters() != I.size()) throw ConfigError("truncation set does not match I");
  const Index n = set.size();
  Vector p(n);
  double top = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n; ++i) top = std::max(top, static_cast<double>(I(set[i])));
  for (Index i = 0; i < n; ++i) p(i) = std::exp(I(set[i]) - top);
  p /= p.sum();
  return TruncatedPosterior(set, std::move(p));
}

// Dense softmax over all C entries.
template <typename Derived>
Vector full_posterior(const Eigen::MatrixBase<Derived>& I) {
  Vector p = detail::as_column(I).template cast<double>();
  p = (p.array() - p.maxCoeff()).exp();
  p /= p.sum();
  return p;
}

// Sum over d of lgamma(y_d + 1): the continuous extension of log(y_d!).
template <typename Derived>
double log_factorial_sum(const Eigen::MatrixBase<Derived>& y) {
  double s = 0.0;
  for (Index d = 0; d < y.size(); ++d) s += std::lgamma(static_cast<double>(y(d)) + 1.0);
  return s;
}

/// log p(c, y | W) = -log C + sum_d [y_d log W_cd - W_cd - lgamma(y_d + 1)].
template <typename RowDerived, typename YDerived>
double log_joint(const Eigen::MatrixBase<RowDerived>& W_row, const Eigen::MatrixBase<YDerived>& y,
                 Index C) {
  if (W_row.size() != y.size()) throw ConfigError("weight row and observation differ in size");
  double s = -std::log(static_cast<double>(C));
  for (Index d = 0; d < y.size(); ++d) {
    const double yd = y(d);
    const double w = W_row(d);
    s += yd * std::log(w) - w - std::lgamma(yd + 1.0);
  }
  return s;
}

template <typename RowDerived>
double log_joint(const Eigen::MatrixBase<RowDerived>& W_row, const Observation& y, Index C) {
  return log_joint(W_row, y.values(), C);
}

// log(sum_i exp(v_i)), stable for any magnitudes.
template <typename Derived>
double log_sum_exp(const Eigen::MatrixBase<Derived>& v) {
  const double top = v.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((v.array() - top).exp().sum());
}

}  // namespace tnesi

#endif  // TNESI_INFERENCE_HPP
