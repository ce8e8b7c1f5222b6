#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dat/attacks.hpp"
#include "dat/model.hpp"
#include "dat/tensor.hpp"

namespace dat {

class NonPsdCovariance : public DomainError {
 public:
  using DomainError::DomainError;
};

double robust_accuracy(const EnergyModel& model, const Tensor& x, const Labels& labels, const AttackSpec& spec);
double clean_accuracy(const EnergyModel& model, const Tensor& x, const Labels& labels);

struct GaussianSummary {
  Vector mean;
  Matrix cov;
  std::size_t n = 0;
  bool regularized = false;  // fewer than D + 1 samples; cov += 1e-6 I
};

// Mean and unbiased covariance of the rows of `features`.
GaussianSummary summarize(const Matrix& features);

// ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^{1/2}). Eigenvalues below -1e-6
// raise NonPsdCovariance; those in (-1e-6, 0) are clipped to 0.
double fid(const GaussianSummary& a, const GaussianSummary& b);

// exp(mean_i KL(p_i || mean_j p_j)).
double inception_score(const Matrix& probs);

// P(score_id > score_ood) with ties counted 1/2.
double ood_auroc(std::span<const double> scores_id, std::span<const double> scores_ood);

enum class OodScore { NegEnergy, MaxConfidence };
std::string to_string(OodScore fn);

// NegEnergy: -E(x); MaxConfidence: max_y p(y|x). With an attack spec, each
// sample is first moved to increase its score within the bound.
std::vector<double> ood_scores(const EnergyModel& model, const Tensor& x, OodScore fn,
                               const std::optional<AttackSpec>& adversarial = std::nullopt);

struct ReliabilityBin {
  double lower = 0.0, upper = 0.0;
  std::size_t count = 0;
  double accuracy = 0.0;
  double confidence = 0.0;
};

struct CalibrationReport {
  double ece = 0.0;
  std::vector<ReliabilityBin> bins;
};

CalibrationReport ece(const Matrix& probs, const Labels& labels, int bins);

// Maps a batch to feature rows.
class FeatureEmbedder {
 public:
  // identity_flatten: raw sample values.
  static FeatureEmbedder identity_flatten();
  // trained_probe: output of the first `layers` layers of a frozen network.
  static FeatureEmbedder trained_probe(const Network& probe, std::size_t layers);

  const std::string& name() const { return name_; }
  Matrix embed(const Tensor& x) const;

 private:
  std::string name_;
  std::optional<Network> probe_;
  std::size_t layers_ = 0;
};

struct CounterfactualPoint {
  double eps = 0.0;
  double fid = 0.0;
  double confidence = 0.0;  // mean p(target | counterfactual)
  bool regularized = false;
};

// Targeted attacks toward `target_class` from `sources`, at each radius in
// `eps_grid`; FID against `reference` (real samples of the target class).
std::vector<CounterfactualPoint> counterfactual_fid(const EnergyModel& model, const Tensor& sources,
                                                    const Tensor& reference, int target_class,
                                                    const std::vector<double>& eps_grid,
                                                    const FeatureEmbedder& embedder, const AttackSpec& base);

struct MetricReport {
  long step = 0;
  std::string metric;
  double value = 0.0;
  std::string embedder;
  std::string attack_hash;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;

  static std::string csv_header();
  std::string csv_row() const;
};

}  // namespace dat
