#pragma once

#include <span>
#include <vector>

#include "dat/attacks.hpp"
#include "dat/model.hpp"
#include "dat/tensor.hpp"

namespace dat {

struct LossTermWeights {
  double atce = 1.0;
  double bce = 1.0;
  void validate() const;
};

// alpha(x) = 1 - sigmoid(-E(x)), beta(x) = sigmoid(-E(x)).
struct ScaleFactors {
  std::vector<double> alpha;
  std::vector<double> beta;
};
ScaleFactors scale_factors(std::span<const double> energies);

struct LossGrad {
  double value = 0.0;
  ParamVector grad;  // empty unless requested
};

// -mean log sigmoid(-E(data)) - mean log(1 - sigmoid(-E(contrastive))) from marginal energies.
double bce_from_energies(std::span<const double> data_energy, std::span<const double> contrastive_energy);

double bce_generative_loss(const EnergyModel& model, const Tensor& x_data, const Tensor& x_contrastive);
// Loss value and its parameter gradient by backpropagation through the loss.
LossGrad bce_generative_loss_grad(const EnergyModel& model, const Tensor& x_data, const Tensor& x_contrastive);

// mean_i[-alpha(x_i) grad E(x_i)] over data + mean_j[beta(x_j) grad E(x_j)] over contrastive
// samples, assembled from per-sample energy gradients.
ParamVector scaled_ebm_gradient(const EnergyModel& model, const Tensor& x_data, const Tensor& x_contrastive);

// mean[-grad E(data)] + mean[grad E(samples)]; the unscaled maximum-likelihood direction.
ParamVector reference_ebm_gradient(const EnergyModel& model, const Tensor& x_data, const Tensor& x_samples);

// Mean cross-entropy of p(y|x_adv).
double at_ce_loss(const EnergyModel& model, const Tensor& x_adv, const Labels& labels);
LossGrad at_ce_loss_grad(const EnergyModel& model, const Tensor& x_adv, const Labels& labels);

struct RatioSpec {
  AttackSpec classification = default_classification_attack();
  AttackSpec ood;  // uniform-CE attack; eps must be set explicitly
  double lambda = 1.0;
};

// AT-CE on attacked in-distribution data plus lambda times the uniform-target
// cross-entropy on OOD points attacked to maximize that same loss.
LossGrad ratio_loss(const EnergyModel& model, const Tensor& x, const Labels& labels, const Tensor& x_ood,
                    const RatioSpec& spec, bool need_grad = false);

// Mean squared L2 norm of the input gradient of the true-class logit.
double r1_penalty(const EnergyModel& model, const Tensor& x, const Labels& labels);

enum class GenerativeGradient { Scaled, Reference };

struct CombinedBatch {
  Tensor x_adv;
  Labels labels;
  Tensor x_data;         // mildly augmented data for the generative term
  Tensor x_contrastive;  // PGD samples initialized from OOD data
};

struct CombinedLoss {
  double total = 0.0;  // weighted_atce + weighted_bce
  double atce = 0.0;
  double bce = 0.0;
  double weighted_atce = 0.0;
  double weighted_bce = 0.0;
  bool bce_evaluated = false;
  ParamVector grad;
};

// w_atce * L_ATCE + w_bce * L_BCE with its parameter gradient. The BCE term is
// skipped entirely when w_bce is 0. With `commit_statistics`, the AT-CE forward
// pass folds its batch statistics into the model's running statistics.
CombinedLoss combined_loss(EnergyModel& model, const CombinedBatch& batch, const LossTermWeights& weights,
                           GenerativeGradient generative = GenerativeGradient::Scaled,
                           bool commit_statistics = false);

}  // namespace dat
