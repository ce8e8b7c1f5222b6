#include "dat/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dat/energy.hpp"

namespace dat {

std::string to_string(AttackObjective objective) {
  switch (objective) {
    case AttackObjective::NegJointEnergy: return "neg_joint_energy";
    case AttackObjective::NegMarginalEnergy: return "neg_marginal_energy";
    case AttackObjective::CrossEntropy: return "cross_entropy";
    case AttackObjective::UniformCE: return "uniform_ce";
    case AttackObjective::TargetCE: return "target_ce";
  }
  return "?";
}

AttackObjective attack_objective_from_string(const std::string& s) {
  for (auto o : {AttackObjective::NegJointEnergy, AttackObjective::NegMarginalEnergy, AttackObjective::CrossEntropy,
                 AttackObjective::UniformCE, AttackObjective::TargetCE}) {
    if (to_string(o) == s) return o;
  }
  throw DomainError("unknown attack objective '" + s + "'");
}

std::string to_string(StepRule rule) { return rule == StepRule::NormalizedL2 ? "normalized_l2" : "sign"; }

StepRule step_rule_from_string(const std::string& s) {
  if (s == "normalized_l2") return StepRule::NormalizedL2;
  if (s == "sign") return StepRule::Sign;
  throw DomainError("unknown step rule '" + s + "'");
}

void AttackSpec::validate() const {
  if (steps < 0) throw DomainError("attack.steps must be >= 0");
  if (!(step_size > 0.0)) throw DomainError("attack.step_size must be > 0");
  if (eps && !(*eps >= 0.0)) throw DomainError("attack.eps must be >= 0");
  if (!(init_noise >= 0.0)) throw DomainError("attack.init_noise must be >= 0");
}

nlohmann::json AttackSpec::to_json() const {
  nlohmann::json j{{"steps", steps},
                   {"step_size", step_size},
                   {"objective", to_string(objective)},
                   {"init_noise", init_noise},
                   {"clamp01", clamp01},
                   {"keep_best", keep_best},
                   {"step_rule", to_string(step_rule)},
                   {"seed", seed}};
  j["eps"] = eps ? nlohmann::json(*eps) : nlohmann::json(nullptr);
  return j;
}

AttackSpec AttackSpec::from_json(const nlohmann::json& j) {
  AttackSpec s;
  s.steps = j.at("steps").get<int>();
  s.step_size = j.at("step_size").get<double>();
  s.objective = attack_objective_from_string(j.at("objective").get<std::string>());
  s.init_noise = j.value("init_noise", 0.0);
  s.clamp01 = j.value("clamp01", true);
  s.keep_best = j.value("keep_best", false);
  s.step_rule = step_rule_from_string(j.value("step_rule", std::string("normalized_l2")));
  s.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("eps") && !j.at("eps").is_null()) s.eps = j.at("eps").get<double>();
  return s;
}

std::string AttackSpec::hash() const { return hex64(fnv1a(to_json().dump())); }

AttackSpec default_classification_attack() {
  AttackSpec s;
  s.steps = 10;
  s.step_size = 0.1;
  s.eps = 0.5;
  s.objective = AttackObjective::CrossEntropy;
  s.keep_best = true;
  return s;
}

AttackSpec default_generative_attack() {
  AttackSpec s;
  s.steps = 45;
  s.step_size = 0.1;
  s.objective = AttackObjective::NegJointEnergy;
  return s;
}

std::vector<double> Trajectory::mean_objective() const {
  std::vector<double> out(static_cast<std::size_t>(objective.rows()));
  for (Eigen::Index t = 0; t < objective.rows(); ++t) out[static_cast<std::size_t>(t)] = objective.row(t).mean();
  return out;
}

std::size_t Trajectory::total_degenerate() const {
  std::size_t n = 0;
  for (auto d : degenerate_steps) n += d;
  return n;
}

LogitObjective logit_objective(AttackObjective objective, const Matrix& logits, std::span<const int> labels) {
  const auto batch = static_cast<std::size_t>(logits.rows());
  const auto k = static_cast<std::size_t>(logits.cols());
  const bool labelled = objective == AttackObjective::NegJointEnergy || objective == AttackObjective::CrossEntropy ||
                        objective == AttackObjective::TargetCE;
  if (labelled) check_labels(labels, k, batch);

  LogitObjective out;
  out.values.resize(batch);
  out.dlogits = Matrix::Zero(logits.rows(), logits.cols());
  const Matrix p = conditional_probs(logits);
  const Vector lse = logsumexp_rows(logits);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    switch (objective) {
      case AttackObjective::NegJointEnergy:
        out.values[i] = logits(r, labels[i]);
        out.dlogits(r, labels[i]) = 1.0;
        break;
      case AttackObjective::NegMarginalEnergy:
        out.values[i] = lse(r);
        out.dlogits.row(r) = p.row(r);
        break;
      case AttackObjective::CrossEntropy:
        out.values[i] = lse(r) - logits(r, labels[i]);
        out.dlogits.row(r) = p.row(r);
        out.dlogits(r, labels[i]) -= 1.0;
        break;
      case AttackObjective::UniformCE:
        out.values[i] = lse(r) - logits.row(r).mean();
        out.dlogits.row(r) = p.row(r).array() - 1.0 / static_cast<double>(k);
        break;
      case AttackObjective::TargetCE:
        out.values[i] = logits(r, labels[i]) - lse(r);
        out.dlogits.row(r) = -p.row(r);
        out.dlogits(r, labels[i]) += 1.0;
        break;
    }
  }
  return out;
}

ModelObjective::ModelObjective(const EnergyModel& model, AttackObjective objective, Labels labels)
    : model_(model), objective_(objective), labels_(std::move(labels)) {}

FieldEval ModelObjective::evaluate(const Tensor& x, bool need_grad) const {
  const ForwardPass pass = model_.forward(x);
  LogitObjective obj = logit_objective(objective_, pass.logits, labels_);
  FieldEval out{std::move(obj.values), {}};
  if (need_grad) out.grad = model_.backward(pass, obj.dlogits, {.input = true, .params = false}).input;
  return out;
}

FieldEval MarginalEnergyField::evaluate(const Tensor& x, bool need_grad) const {
  ModelObjective neg(model_, AttackObjective::NegMarginalEnergy);
  FieldEval e = neg.evaluate(x, need_grad);
  for (double& v : e.values) v = -v;
  for (double& g : e.grad.values()) g = -g;
  return e;
}

namespace {

void project_to_ball(std::span<double> x, std::span<const double> center, double eps) {
  double n2 = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) n2 += (x[j] - center[j]) * (x[j] - center[j]);
  const double n = std::sqrt(n2);
  if (n <= eps) return;
  const double scale = n > 0 ? eps / n : 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = center[j] + (x[j] - center[j]) * scale;
}

void clamp_unit(std::span<double> x) {
  for (double& v : x) v = std::clamp(v, 0.0, 1.0);
}

void constrain(Tensor& x, const Tensor& center, const AttackSpec& spec) {
  for (std::size_t i = 0; i < x.batch(); ++i) {
    if (spec.eps) project_to_ball(x.sample(i), center.sample(i), *spec.eps);
    if (spec.clamp01) clamp_unit(x.sample(i));
  }
}

}  // namespace

Trajectory projected_ascent(const InputField& field, const Tensor& x0, const AttackSpec& spec) {
  spec.validate();
  const std::size_t batch = x0.batch();
  const auto steps = static_cast<std::size_t>(spec.steps);

  Trajectory traj;
  traj.initial = x0;
  traj.objective = Matrix::Zero(static_cast<Eigen::Index>(steps + 1), static_cast<Eigen::Index>(batch));
  traj.step_norms = Matrix::Zero(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(batch));
  traj.degenerate_steps.assign(batch, 0);

  Tensor x = x0;
  if (spec.init_noise > 0.0) {
    Rng rng(spec.seed);
    std::normal_distribution<double> n(0.0, spec.init_noise);
    for (double& v : x.values()) v += n(rng);
  }
  constrain(x, x0, spec);

  Tensor best = x;
  std::vector<double> best_value;

  for (std::size_t t = 0; t <= steps; ++t) {
    const bool need_grad = t < steps;
    FieldEval e = field.evaluate(x, need_grad);
    for (std::size_t i = 0; i < batch; ++i) traj.objective(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = e.values[i];
    if (spec.keep_best) {
      if (t == 0) {
        best_value = e.values;
      } else {
        for (std::size_t i = 0; i < batch; ++i) {
          if (e.values[i] > best_value[i]) {
            best_value[i] = e.values[i];
            std::copy(x.sample(i).begin(), x.sample(i).end(), best.sample(i).begin());
          }
        }
      }
    }
    if (!need_grad) break;

    for (std::size_t i = 0; i < batch; ++i) {
      auto g = e.grad.sample(i);
      auto xi = x.sample(i);
      double n2 = 0.0;
      for (double v : g) n2 += v * v;
      const double gnorm = std::sqrt(n2);
      if (gnorm < kDegenerateGradient) {
        ++traj.degenerate_steps[i];
        continue;
      }
      double moved2 = 0.0;
      for (std::size_t j = 0; j < xi.size(); ++j) {
        const double d = spec.step_rule == StepRule::NormalizedL2
                             ? spec.step_size * g[j] / gnorm
                             : spec.step_size * static_cast<double>((g[j] > 0) - (g[j] < 0));
        xi[j] += d;
        moved2 += d * d;
      }
      traj.step_norms(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = std::sqrt(moved2);
    }
    constrain(x, x0, spec);
  }

  traj.final = spec.keep_best ? std::move(best) : std::move(x);
  return traj;
}

Trajectory pgd_energy_sample(const EnergyModel& model, const Tensor& x0, const AttackSpec& spec,
                             const Labels& labels) {
  if (spec.objective != AttackObjective::NegJointEnergy && spec.objective != AttackObjective::NegMarginalEnergy) {
    throw DomainError("energy sampling needs a neg_joint_energy or neg_marginal_energy objective");
  }
  return projected_ascent(ModelObjective(model, spec.objective, labels), x0, spec);
}

Trajectory pgd_classification_attack(const EnergyModel& model, const Tensor& x, const Labels& labels,
                                     const AttackSpec& spec) {
  if (spec.objective != AttackObjective::CrossEntropy && spec.objective != AttackObjective::TargetCE) {
    throw DomainError("classification attack needs a cross_entropy or target_ce objective");
  }
  if (!spec.eps) throw DomainError("classification attack needs a perturbation bound");
  return projected_ascent(ModelObjective(model, spec.objective, labels), x, spec);
}

Trajectory uniform_ce_attack(const EnergyModel& model, const Tensor& x, const AttackSpec& spec) {
  if (!spec.eps) throw DomainError("uniform-CE attack needs a perturbation bound");
  AttackSpec s = spec;
  s.objective = AttackObjective::UniformCE;
  return projected_ascent(ModelObjective(model, AttackObjective::UniformCE), x, s);
}

Trajectory sgld_sample(const InputField& energy, const Tensor& x0, const SgldOptions& options) {
  if (!(options.alpha > 0.0)) throw DomainError("SGLD step size must be > 0");
  if (options.steps < 0) throw DomainError("SGLD steps must be >= 0");
  const std::size_t batch = x0.batch();
  const auto steps = static_cast<std::size_t>(options.steps);
  Trajectory traj;
  traj.initial = x0;
  traj.objective = Matrix::Zero(static_cast<Eigen::Index>(steps + 1), static_cast<Eigen::Index>(batch));
  traj.step_norms = Matrix::Zero(static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(batch));
  traj.degenerate_steps.assign(batch, 0);

  Rng rng(options.seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(options.alpha));
  Tensor x = x0;
  for (std::size_t t = 0; t <= steps; ++t) {
    const bool need_grad = t < steps;
    FieldEval e = energy.evaluate(x, need_grad);
    for (std::size_t i = 0; i < batch; ++i) traj.objective(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = e.values[i];
    if (!need_grad) break;
    for (std::size_t i = 0; i < batch; ++i) {
      auto xi = x.sample(i);
      auto g = e.grad.sample(i);
      double moved2 = 0.0;
      for (std::size_t j = 0; j < xi.size(); ++j) {
        double d = -0.5 * options.alpha * g[j];
        if (options.noise) d += normal(rng);
        xi[j] += d;
        moved2 += d * d;
      }
      traj.step_norms(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = std::sqrt(moved2);
    }
  }
  traj.final = std::move(x);
  return traj;
}

Trajectory sgld_sample(const EnergyModel& model, const Tensor& x0, const SgldOptions& options) {
  return sgld_sample(MarginalEnergyField(model), x0, options);
}

}  // namespace dat
