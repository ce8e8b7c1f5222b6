#include "dat/energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dat {

double logsumexp(std::span<const double> row) {
  if (row.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(row.begin(), row.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : row) s += std::exp(v - m);
  return m + std::log(s);
}

Vector logsumexp_rows(const Matrix& logits) {
  Vector out(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    out(i) = logsumexp({logits.row(i).data(), static_cast<std::size_t>(logits.cols())});
  }
  return out;
}

void check_labels(std::span<const int> labels, std::size_t num_classes, std::size_t batch) {
  if (labels.size() != batch) {
    throw DomainError("expected " + std::to_string(batch) + " labels, got " + std::to_string(labels.size()));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw DomainError("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

Vector joint_energy(const Matrix& logits, std::span<const int> labels) {
  check_labels(labels, static_cast<std::size_t>(logits.cols()), static_cast<std::size_t>(logits.rows()));
  Vector out(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) out(i) = -logits(i, labels[static_cast<std::size_t>(i)]);
  return out;
}

Vector marginal_energy(const Matrix& logits) { return -logsumexp_rows(logits); }

Matrix conditional_probs(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    p.row(i) = (logits.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace dat
