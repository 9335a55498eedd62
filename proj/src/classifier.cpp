#include "tnesi/classifier.hpp"

namespace tnesi {

ClassPosterior class_activation(const TruncatedPosterior& s, const TopWeights& R,
                                std::optional<int> label) {
  const Index K = R.classes();
  if (label) return ClassPosterior::one_hot(K, *label);
  if (s.support().clusters() != R.clusters())
    throw ConfigError("posterior and top weights disagree on the cluster count");

  const RowMatrix& Rw = R.weights();
  Vector t = Vector::Zero(K);
  for (Index i = 0; i < s.size(); ++i) {
    const Index c = s.support()[i];
    const double sc = s.probs()(i);
    const double column = Rw.col(c).sum();
    if (column > 0.0) {
      t += (sc / column) * Rw.col(c);
    } else {
      t.array() += sc / static_cast<double>(K);
    }
  }
  // Exact in real arithmetic; renormalizing removes the accumulated rounding.
  t /= t.sum();
  return ClassPosterior(std::move(t));
}

double bvsb(const ClassPosterior& t) {
  const Index K = t.classes();
  if (K < 2) throw ConfigError("BvSB undefined for single class");
  double best = -1.0;
  double second = -1.0;
  for (Index k = 0; k < K; ++k) {
    const double v = t[k];
    if (v > best) {
      second = best;
      best = v;
    } else if (v > second) {
      second = v;
    }
  }
  return best - second;
}

bool passes_gate(const ClassPosterior& t, bool labeled, double theta) {
  return labeled || bvsb(t) > theta;
}

Index argmax(const Vector& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

Index predict(const TruncatedPosterior& s, const TopWeights& R) {
  return argmax(class_activation(s, R).values());
}

}  // namespace tnesi
