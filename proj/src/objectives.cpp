#include "dat/objectives.hpp"

#include <cmath>

#include "dat/energy.hpp"

namespace dat {

void LossTermWeights::validate() const {
  if (!(atce >= 0.0)) throw DomainError("loss.w_atce must be >= 0");
  if (!(bce >= 0.0)) throw DomainError("loss.w_bce must be >= 0");
}

ScaleFactors scale_factors(std::span<const double> energies) {
  ScaleFactors s;
  s.alpha.reserve(energies.size());
  s.beta.reserve(energies.size());
  for (double e : energies) {
    s.alpha.push_back(sigmoid(e));
    s.beta.push_back(sigmoid(-e));
  }
  return s;
}

double bce_from_energies(std::span<const double> data_energy, std::span<const double> contrastive_energy) {
  if (data_energy.empty() || contrastive_energy.empty()) throw DomainError("BCE needs non-empty batches");
  // -log sigmoid(-E) = softplus(E); -log(1 - sigmoid(-E)) = softplus(-E)
  double a = 0.0, b = 0.0;
  for (double e : data_energy) a += softplus(e);
  for (double e : contrastive_energy) b += softplus(-e);
  return a / static_cast<double>(data_energy.size()) + b / static_cast<double>(contrastive_energy.size());
}

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

void axpy(double a, const ParamVector& x, ParamVector& y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

// sum_i w_i * grad_theta E(x_i) for the marginal energy, in one backward pass.
ParamVector weighted_energy_gradient(const ForwardPass& pass, const EnergyModel& model, std::span<const double> w) {
  Matrix dlogits = -conditional_probs(pass.logits);
  for (Eigen::Index i = 0; i < dlogits.rows(); ++i) dlogits.row(i) *= w[static_cast<std::size_t>(i)];
  return model.backward(pass, dlogits, {.input = false, .params = true}).params;
}

// grad_theta E(x_i) for each sample, one backward pass per sample.
std::vector<ParamVector> per_sample_energy_gradients(const EnergyModel& model, const Tensor& x) {
  const ForwardPass pass = model.forward(x);
  const Matrix p = conditional_probs(pass.logits);
  std::vector<ParamVector> out;
  out.reserve(x.batch());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    Matrix seed = Matrix::Zero(p.rows(), p.cols());
    seed.row(i) = -p.row(i);
    out.push_back(model.backward(pass, seed, {.input = false, .params = true}).params);
  }
  return out;
}

}  // namespace

double bce_generative_loss(const EnergyModel& model, const Tensor& x_data, const Tensor& x_contrastive) {
  const auto ed = to_std(marginal_energy(logits(model, x_data)));
  const auto ec = to_std(marginal_energy(logits(model, x_contrastive)));
  return bce_from_energies(ed, ec);
}

LossGrad bce_generative_loss_grad(const EnergyModel& model, const Tensor& x_data, const Tensor& x_contrastive) {
  const ForwardPass pd = model.forward(x_data);
  const ForwardPass pc = model.forward(x_contrastive);
  const auto ed = to_std(marginal_energy(pd.logits));
  const auto ec = to_std(marginal_energy(pc.logits));
  LossGrad out;
  out.value = bce_from_energies(ed, ec);
  // d softplus(E)/dE = sigmoid(E); d softplus(-E)/dE = -sigmoid(-E)
  std::vector<double> wd(ed.size()), wc(ec.size());
  for (std::size_t i = 0; i < ed.size(); ++i) wd[i] = sigmoid(ed[i]) / static_cast<double>(ed.size());
  for (std::size_t i = 0; i < ec.size(); ++i) wc[i] = -sigmoid(-ec[i]) / static_cast<double>(ec.size());
  out.grad = weighted_energy_gradient(pd, model, wd);
  axpy(1.0, weighted_energy_gradient(pc, model, wc), out.grad);
  return out;
}

ParamVector scaled_ebm_gradient(const EnergyModel& model, const Tensor& x_data, const Tensor& x_contrastive) {
  const auto sd = scale_factors(to_std(marginal_energy(logits(model, x_data))));
  const auto sc = scale_factors(to_std(marginal_energy(logits(model, x_contrastive))));
  const auto gd = per_sample_energy_gradients(model, x_data);
  const auto gc = per_sample_energy_gradients(model, x_contrastive);
  ParamVector out(model.parameters().size(), 0.0);
  const double nd = static_cast<double>(gd.size()), nc = static_cast<double>(gc.size());
  for (std::size_t i = 0; i < gd.size(); ++i) axpy(-sd.alpha[i] / nd, gd[i], out);
  for (std::size_t i = 0; i < gc.size(); ++i) axpy(sc.beta[i] / nc, gc[i], out);
  return out;
}

ParamVector reference_ebm_gradient(const EnergyModel& model, const Tensor& x_data, const Tensor& x_samples) {
  const ForwardPass pd = model.forward(x_data);
  const ForwardPass ps = model.forward(x_samples);
  const std::vector<double> wd(x_data.batch(), -1.0 / static_cast<double>(x_data.batch()));
  const std::vector<double> ws(x_samples.batch(), 1.0 / static_cast<double>(x_samples.batch()));
  ParamVector out = weighted_energy_gradient(pd, model, wd);
  axpy(1.0, weighted_energy_gradient(ps, model, ws), out);
  return out;
}

namespace {

LossGrad ce_from_pass(const EnergyModel& model, const ForwardPass& pass, AttackObjective objective,
                      const Labels& labels, bool need_grad) {
  LogitObjective obj = logit_objective(objective, pass.logits, labels);
  const double n = static_cast<double>(obj.values.size());
  LossGrad out;
  for (double v : obj.values) out.value += v / n;
  if (need_grad) out.grad = model.backward(pass, obj.dlogits / n, {.input = false, .params = true}).params;
  return out;
}

}  // namespace

double at_ce_loss(const EnergyModel& model, const Tensor& x_adv, const Labels& labels) {
  return ce_from_pass(model, model.forward(x_adv), AttackObjective::CrossEntropy, labels, false).value;
}

LossGrad at_ce_loss_grad(const EnergyModel& model, const Tensor& x_adv, const Labels& labels) {
  return ce_from_pass(model, model.forward(x_adv), AttackObjective::CrossEntropy, labels, true);
}

LossGrad ratio_loss(const EnergyModel& model, const Tensor& x, const Labels& labels, const Tensor& x_ood,
                    const RatioSpec& spec, bool need_grad) {
  if (!(spec.lambda >= 0.0)) throw DomainError("ratio lambda must be >= 0");
  const Tensor x_adv = pgd_classification_attack(model, x, labels, spec.classification).final;
  LossGrad out = ce_from_pass(model, model.forward(x_adv), AttackObjective::CrossEntropy, labels, need_grad);
  if (spec.lambda == 0.0) return out;
  const Tensor ood_adv = uniform_ce_attack(model, x_ood, spec.ood).final;
  const LossGrad u = ce_from_pass(model, model.forward(ood_adv), AttackObjective::UniformCE, {}, need_grad);
  out.value += spec.lambda * u.value;
  if (need_grad) axpy(spec.lambda, u.grad, out.grad);
  return out;
}

double r1_penalty(const EnergyModel& model, const Tensor& x, const Labels& labels) {
  const ForwardPass pass = model.forward(x);
  check_labels(labels, model.num_classes(), x.batch());
  Matrix seed = Matrix::Zero(pass.logits.rows(), pass.logits.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) seed(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  const Tensor g = model.backward(pass, seed, {.input = true, .params = false}).input;
  double total = 0.0;
  for (double n : sample_norms(g)) total += n * n;
  return total / static_cast<double>(x.batch());
}

CombinedLoss combined_loss(EnergyModel& model, const CombinedBatch& batch, const LossTermWeights& weights,
                           GenerativeGradient generative, bool commit_statistics) {
  weights.validate();
  CombinedLoss out;
  const ForwardPass pass = model.forward(batch.x_adv);
  const LossGrad at = ce_from_pass(model, pass, AttackObjective::CrossEntropy, batch.labels, true);
  if (commit_statistics) model.commit_batch_statistics(pass);
  out.atce = at.value;
  out.grad.assign(at.grad.size(), 0.0);
  axpy(weights.atce, at.grad, out.grad);

  if (weights.bce > 0.0) {
    out.bce_evaluated = true;
    if (generative == GenerativeGradient::Scaled) {
      const LossGrad bce = bce_generative_loss_grad(model, batch.x_data, batch.x_contrastive);
      out.bce = bce.value;
      axpy(weights.bce, bce.grad, out.grad);
    } else {
      out.bce = bce_generative_loss(model, batch.x_data, batch.x_contrastive);
      // the reference direction ascends the log-likelihood; descend its negation
      axpy(-weights.bce, reference_ebm_gradient(model, batch.x_data, batch.x_contrastive), out.grad);
    }
  }
  out.weighted_atce = weights.atce * out.atce;
  out.weighted_bce = out.bce_evaluated ? weights.bce * out.bce : 0.0;
  out.total = out.weighted_atce + out.weighted_bce;
  return out;
}

}  // namespace dat
