#include "dat/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "dat/data.hpp"
#include "dat/energy.hpp"

namespace dat {

namespace {

std::vector<double> ce_values(const EnergyModel& model, const Tensor& x, const Labels& labels) {
  return logit_objective(AttackObjective::CrossEntropy, logits(model, x), labels).values;
}

}  // namespace

std::vector<double> dense_inner_max(const EnergyModel& model, const Tensor& x, const Labels& labels, double eps,
                                    const DensePgd& options) {
  std::vector<double> best = ce_values(model, x, labels);
  if (eps <= 0.0) return best;
  AttackSpec spec;
  spec.steps = options.steps;
  spec.step_size = eps / 4.0;
  spec.eps = eps;
  spec.objective = AttackObjective::CrossEntropy;
  spec.clamp01 = false;
  spec.keep_best = true;
  for (int r = 0; r < options.restarts; ++r) {
    spec.init_noise = r == 0 ? 0.0 : eps;
    spec.seed = mix_seed(options.seed, static_cast<std::uint64_t>(r));
    const Trajectory t = pgd_classification_attack(model, x, labels, spec);
    const auto v = ce_values(model, t.final, labels);
    for (std::size_t i = 0; i < v.size(); ++i) best[i] = std::max(best[i], v[i]);
  }
  return best;
}

std::vector<ExpansionRow> verify_first_order_expansion(const EnergyModel& model, const Tensor& x, const Labels& labels,
                                                       const std::vector<double>& eps_list, const DensePgd& options) {
  const ForwardPass pass = model.forward(x);
  const LogitObjective ce = logit_objective(AttackObjective::CrossEntropy, pass.logits, labels);
  const std::vector<double> norms = sample_norms(model.backward(pass, ce.dlogits, {.input = true, .params = false}).input);
  for (double n : norms) {
    if (n < kDegenerateGradient) throw DomainError("degenerate input gradient in first-order check");
  }
  const double b = static_cast<double>(x.batch());
  std::vector<ExpansionRow> rows;
  for (double eps : eps_list) {
    const auto inner = dense_inner_max(model, x, labels, eps, options);
    ExpansionRow row{.eps = eps};
    for (std::size_t i = 0; i < x.batch(); ++i) {
      const double lin = ce.values[i] + eps * norms[i];
      row.ce += ce.values[i] / b;
      row.grad_norm += norms[i] / b;
      row.linear += lin / b;
      row.inner_max += inner[i] / b;
      row.gap += (inner[i] - lin) / b;
      if (eps > 0) row.rel_error += std::abs(inner[i] - lin) / (eps * norms[i]) / b;
    }
    rows.push_back(row);
  }
  return rows;
}

double Decomposition::residual() const { return std::abs(direct - expansion()); }

std::vector<Decomposition> gradient_decomposition(const EnergyModel& model, const Tensor& x, const Labels& labels) {
  const std::size_t k = model.num_classes();
  check_labels(labels, k, x.batch());
  const ForwardPass pass = model.forward(x);
  const Matrix p = conditional_probs(pass.logits);

  // g[c] holds grad_x f_c for every sample.
  std::vector<Tensor> g;
  g.reserve(k);
  for (std::size_t c = 0; c < k; ++c) {
    Matrix seed = Matrix::Zero(pass.logits.rows(), pass.logits.cols());
    seed.col(static_cast<Eigen::Index>(c)).setOnes();
    g.push_back(model.backward(pass, seed, {.input = true, .params = false}).input);
  }
  const LogitObjective ce = logit_objective(AttackObjective::CrossEntropy, pass.logits, labels);
  const Tensor direct = model.backward(pass, ce.dlogits, {.input = true, .params = false}).input;

  auto dot = [&](std::size_t i, std::size_t a, std::size_t c) {
    const auto u = g[a].sample(i), v = g[c].sample(i);
    double s = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) s += u[j] * v[j];
    return s;
  };

  std::vector<Decomposition> out(x.batch());
  for (std::size_t i = 0; i < x.batch(); ++i) {
    auto& d = out[i];
    const auto y = static_cast<std::size_t>(labels[i]);
    const auto r = static_cast<Eigen::Index>(i);
    const double py = p(r, static_cast<Eigen::Index>(y));
    for (double v : direct.sample(i)) d.direct += v * v;
    d.true_class = (1 - py) * (1 - py) * dot(i, y, y);
    for (std::size_t a = 0; a < k; ++a) {
      if (a == y) continue;
      const double pa = p(r, static_cast<Eigen::Index>(a));
      d.competitors += pa * pa * dot(i, a, a);
      d.cross_true += -2.0 * (1 - py) * pa * dot(i, y, a);
      for (std::size_t c = a + 1; c < k; ++c) {
        if (c == y) continue;
        d.cross_pairs += 2.0 * pa * p(r, static_cast<Eigen::Index>(c)) * dot(i, a, c);
      }
    }
  }
  return out;
}

double verify_gradient_decomposition(const EnergyModel& model, const Tensor& x, const Labels& labels) {
  double worst = 0.0;
  for (const auto& d : gradient_decomposition(model, x, labels)) worst = std::max(worst, d.residual());
  return worst;
}

SamplingComparison compare_sampling_strategies(const EnergyModel& model, const Tensor& x0, const Tensor& reference,
                                               const Labels& label_pool, const AttackSpec& spec,
                                               const FeatureEmbedder& embedder, std::uint64_t seed) {
  const GaussianSummary ref = summarize(embedder.embed(reference));
  AttackSpec joint = spec;
  joint.objective = AttackObjective::NegJointEnergy;
  LabelSampler sampler(label_pool, seed);
  const Labels y = sampler.sample(x0.batch());
  const Tensor xa = pgd_energy_sample(model, x0, joint, y).final;

  AttackSpec marginal = spec;
  marginal.objective = AttackObjective::NegMarginalEnergy;
  const Tensor xm = pgd_energy_sample(model, x0, marginal).final;

  return {fid(summarize(embedder.embed(xa)), ref), fid(summarize(embedder.embed(xm)), ref), x0.batch()};
}

}  // namespace dat
