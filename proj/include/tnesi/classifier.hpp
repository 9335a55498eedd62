#ifndef TNESI_CLASSIFIER_HPP
#define TNESI_CLASSIFIER_HPP

#include <optional>

#include "tnesi/core.hpp"

namespace tnesi {

/// Second hidden layer. A labeled point yields the one-hot posterior at its
/// label; otherwise t_k = sum_c R_kc / (sum_k' R_k'c) s_c over the support of s.
/// A support column of R that sums to zero contributes 1/K to every class.
ClassPosterior class_activation(const TruncatedPosterior& s, const TopWeights& R,
                                std::optional<int> label = std::nullopt);

// Best minus second-best entry of t. Throws for K = 1.
double bvsb(const ClassPosterior& t);

// True when a top-layer update is allowed: labeled points always pass,
// unlabeled points pass when bvsb(t) > theta.
bool passes_gate(const ClassPosterior& t, bool labeled, double theta);

// Index of the largest entry; ties go to the smallest index.
Index argmax(const Vector& v);

// argmax of the unlabeled class activation.
Index predict(const TruncatedPosterior& s, const TopWeights& R);

}  // namespace tnesi

#endif  // TNESI_CLASSIFIER_HPP
