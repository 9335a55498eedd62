#include "tnesi/inference.hpp"

namespace tnesi {

double row_dot(const double* w, const double* y, Index D) {
  constexpr Index L = 32;
  using Lanes = Eigen::Array<double, L, 1>;
  Lanes acc = Lanes::Zero();
  Index d = 0;
  for (; d + L <= D; d += L) acc += Eigen::Map<const Lanes>(w + d) * Eigen::Map<const Lanes>(y + d);
  double tail = 0.0;
  for (; d < D; ++d) tail += w[d] * y[d];
  double sum = 0.0;
  for (Index j = 0; j < L; ++j) sum += acc(j);
  return sum + tail;
}

void integrate_into(const BottomWeights& W, const double* y, LogActivation& I) {
  const RowMatrix& logW = W.log_weights();
  const Index D = W.dim();
  for (Index c = 0; c < W.clusters(); ++c) I(c) = row_dot(logW.row(c).data(), y, D);
}

RowMatrix integrate_batch(const BottomWeights& W, const Eigen::Ref<const RowMatrix>& Y) {
  if (Y.cols() != W.dim()) throw ConfigError("observation block has the wrong dimension");
  RowMatrix I(Y.rows(), W.clusters());
  const RowMatrix& logW = W.log_weights();
  const Index D = W.dim();
  for (Index n = 0; n < Y.rows(); ++n) {
    const double* y = Y.row(n).data();
    for (Index c = 0; c < W.clusters(); ++c) I(n, c) = row_dot(logW.row(c).data(), y, D);
  }
  return I;
}

}  // namespace tnesi
