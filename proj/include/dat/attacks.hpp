#pragma once

// Iterative input-space samplers and attacks.
//
// All PGD variants share one loop: evaluate the objective gradient g at the
// current iterate, move by step_size * g / ||g||_2 per sample, project onto
// the L2 ball around the starting point when a bound is set, then clamp to
// [0, 1] when requested. Samples whose gradient norm falls below
// kDegenerateGradient skip the step and are flagged.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dat/model.hpp"
#include "dat/tensor.hpp"
#include "dat/util.hpp"

namespace dat {

inline constexpr double kDegenerateGradient = 1e-12;

enum class AttackObjective {
  NegJointEnergy,     // f(x)[y]
  NegMarginalEnergy,  // logsumexp f(x)
  CrossEntropy,       // -log p(y|x)
  UniformCE,          // cross-entropy of p(.|x) against the uniform target
  TargetCE,           // log p(t|x); ascent moves toward class t
};

enum class StepRule { NormalizedL2, Sign };

std::string to_string(AttackObjective objective);
AttackObjective attack_objective_from_string(const std::string& s);
std::string to_string(StepRule rule);
StepRule step_rule_from_string(const std::string& s);

struct AttackSpec {
  int steps = 10;
  double step_size = 0.1;
  std::optional<double> eps;  // L2 bound; absent = unconstrained
  AttackObjective objective = AttackObjective::CrossEntropy;
  double init_noise = 0.0;  // std of a Gaussian random start, projected into the ball
  bool clamp01 = true;
  // Return the per-sample iterate with the highest objective instead of the last one.
  bool keep_best = false;
  StepRule step_rule = StepRule::NormalizedL2;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static AttackSpec from_json(const nlohmann::json& j);
  std::string hash() const;
};

// Classification defaults: 10 steps of 0.1 inside an L2 ball of 0.5.
AttackSpec default_classification_attack();
// Generative defaults: 45 unconstrained steps of 0.1 on the joint energy.
AttackSpec default_generative_attack();

struct Trajectory {
  Tensor initial;
  Tensor final;
  Matrix objective;   // [T + 1, B]: value at x_0 .. x_T
  Matrix step_norms;  // [T, B]: displacement norm of each step before projection and clamping
  std::vector<std::size_t> degenerate_steps;  // per sample
  std::vector<double> mean_objective() const;
  std::size_t total_degenerate() const;
};

struct FieldEval {
  std::vector<double> values;
  Tensor grad;  // empty when not requested
};

// A per-sample scalar function of the input batch and its input gradient.
class InputField {
 public:
  virtual ~InputField() = default;
  virtual FieldEval evaluate(const Tensor& x, bool need_grad) const = 0;
};

// Per-sample objective values and their derivatives wrt the logits.
struct LogitObjective {
  std::vector<double> values;
  Matrix dlogits;
};
LogitObjective logit_objective(AttackObjective objective, const Matrix& logits, std::span<const int> labels);

class ModelObjective final : public InputField {
 public:
  ModelObjective(const EnergyModel& model, AttackObjective objective, Labels labels = {});
  FieldEval evaluate(const Tensor& x, bool need_grad) const override;

 private:
  const EnergyModel& model_;
  AttackObjective objective_;
  Labels labels_;
};

// Marginal energy E(x) = -logsumexp f(x) as a field (for descent samplers).
class MarginalEnergyField final : public InputField {
 public:
  explicit MarginalEnergyField(const EnergyModel& model) : model_(model) {}
  FieldEval evaluate(const Tensor& x, bool need_grad) const override;

 private:
  const EnergyModel& model_;
};

// Generic projected normalized-gradient ascent on `field`.
Trajectory projected_ascent(const InputField& field, const Tensor& x0, const AttackSpec& spec);

// Ascent on -E(x, y') (NegJointEnergy, labels = y') or -E(x) (NegMarginalEnergy).
Trajectory pgd_energy_sample(const EnergyModel& model, const Tensor& x0, const AttackSpec& spec,
                             const Labels& labels = {});

// Ascent on the cross-entropy at the true labels within the eps-ball. With
// objective TargetCE the labels are targets and the attack descends CE toward them.
Trajectory pgd_classification_attack(const EnergyModel& model, const Tensor& x, const Labels& labels,
                                     const AttackSpec& spec);

// Ascent on the cross-entropy against the uniform distribution within the eps-ball.
Trajectory uniform_ce_attack(const EnergyModel& model, const Tensor& x, const AttackSpec& spec);

struct SgldOptions {
  int steps = 20;
  double alpha = 1e-2;
  bool noise = true;
  std::uint64_t seed = 0;
};

// x_{t+1} = x_t - (alpha/2) grad E(x_t) + xi, xi ~ N(0, alpha I).
// `objective` of the returned trajectory holds E at each iterate.
Trajectory sgld_sample(const InputField& energy, const Tensor& x0, const SgldOptions& options);
Trajectory sgld_sample(const EnergyModel& model, const Tensor& x0, const SgldOptions& options);

}  // namespace dat
