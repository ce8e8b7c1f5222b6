#pragma once

// Energy view of classifier logits.
//
// A classifier with logits f(x) in R^K defines the joint energy
// E(x, y) = -f(x)[y] and the marginal energy E(x) = -logsumexp_y f(x)[y].
// The conditional p(y|x) is the row-wise softmax of the logits, which is
// the normalized exp(-E(x, y)) over y. The partition function is never
// estimated.

#include <span>

#include "dat/tensor.hpp"

namespace dat {

// Max-shifted log-sum-exp of one row.
double logsumexp(std::span<const double> row);

// Per-row log-sum-exp.
Vector logsumexp_rows(const Matrix& logits);

// -logits[i, labels[i]]. Throws DomainError for labels outside [0, K).
Vector joint_energy(const Matrix& logits, std::span<const int> labels);

// -logsumexp(logits[i, :]).
Vector marginal_energy(const Matrix& logits);

// Row-wise softmax.
Matrix conditional_probs(const Matrix& logits);

// Numerically stable log(1 + exp(z)).
double softplus(double z);
double sigmoid(double z);

void check_labels(std::span<const int> labels, std::size_t num_classes, std::size_t batch);

}  // namespace dat
