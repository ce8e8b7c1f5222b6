#include "dat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "dat/energy.hpp"

namespace dat {

namespace {

Labels argmax_rows(const Matrix& logits) {
  Labels out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index k;
    logits.row(i).maxCoeff(&k);
    out[static_cast<std::size_t>(i)] = static_cast<int>(k);
  }
  return out;
}

double accuracy_of(const Matrix& logits, const Labels& labels) {
  if (labels.empty()) throw DomainError("accuracy of an empty batch");
  const Labels pred = argmax_rows(logits);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

constexpr double kPsdTolerance = 1e-6;

Matrix sqrt_psd(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
  Eigen::VectorXd d = eig.eigenvalues();
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (d(i) < -kPsdTolerance) throw NonPsdCovariance("covariance is not positive semi-definite");
    d(i) = std::sqrt(std::max(d(i), 0.0));
  }
  return eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

double clean_accuracy(const EnergyModel& model, const Tensor& x, const Labels& labels) {
  check_labels(labels, model.num_classes(), x.batch());
  return accuracy_of(logits(model, x), labels);
}

double robust_accuracy(const EnergyModel& model, const Tensor& x, const Labels& labels, const AttackSpec& spec) {
  if (!spec.eps) throw DomainError("robust accuracy needs a bounded attack");
  const Tensor adv = pgd_classification_attack(model, x, labels, spec).final;
  return accuracy_of(logits(model, adv), labels);
}

GaussianSummary summarize(const Matrix& features) {
  if (features.rows() < 2) throw DomainError("a Gaussian summary needs at least 2 samples");
  GaussianSummary s;
  s.n = static_cast<std::size_t>(features.rows());
  s.mean = features.colwise().mean().transpose();
  const Matrix centered = features.rowwise() - s.mean.transpose();
  s.cov = (centered.transpose() * centered) / static_cast<double>(features.rows() - 1);
  if (features.rows() < features.cols() + 1) {
    s.cov.diagonal().array() += 1e-6;
    s.regularized = true;
  }
  return s;
}

double fid(const GaussianSummary& a, const GaussianSummary& b) {
  if (a.mean.size() != b.mean.size()) throw DomainError("FID summaries differ in dimension");
  const double mean_term = (a.mean - b.mean).squaredNorm();
  // Tr (S1 S2)^{1/2} = Tr (S1^{1/2} S2 S1^{1/2})^{1/2}, a symmetric PSD product.
  const Matrix ha = sqrt_psd(a.cov);
  sqrt_psd(b.cov);  // validates b
  const Matrix m = ha * b.cov * ha;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  double tr_sqrt = 0.0;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) tr_sqrt += std::sqrt(std::max(eig.eigenvalues()(i), 0.0));
  const double value = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
  return std::max(value, 0.0);
}

double inception_score(const Matrix& probs) {
  if (probs.rows() == 0) throw DomainError("inception score of an empty set");
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    if ((probs.row(i).array() < 0).any() || std::abs(probs.row(i).sum() - 1.0) > 1e-6) {
      throw DomainError("inception score rows must be probability distributions");
    }
  }
  const Eigen::RowVectorXd marginal = probs.colwise().mean();
  double kl = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i)
    for (Eigen::Index k = 0; k < probs.cols(); ++k) {
      const double p = probs(i, k);
      if (p > 0) kl += p * (std::log(p) - std::log(marginal(k)));
    }
  return std::exp(kl / static_cast<double>(probs.rows()));
}

double ood_auroc(std::span<const double> scores_id, std::span<const double> scores_ood) {
  if (scores_id.empty() || scores_ood.empty()) throw DomainError("AUROC needs non-empty score sets");
  const double n = static_cast<double>(scores_id.size()), m = static_cast<double>(scores_ood.size());
  if (n * m <= 1e6) {
    double wins = 0.0;
    for (double a : scores_id)
      for (double b : scores_ood) wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
    return wins / (n * m);
  }
  // Mann-Whitney U with mid-ranks for ties.
  std::vector<std::pair<double, bool>> all;
  all.reserve(scores_id.size() + scores_ood.size());
  for (double a : scores_id) all.emplace_back(a, true);
  for (double b : scores_ood) all.emplace_back(b, false);
  std::sort(all.begin(), all.end(), [](const auto& l, const auto& r) { return l.first < r.first; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (all[k].second) rank_sum += mid;
    i = j;
  }
  return (rank_sum - n * (n + 1) / 2.0) / (n * m);
}

std::string to_string(OodScore fn) { return fn == OodScore::NegEnergy ? "neg_energy" : "max_confidence"; }

std::vector<double> ood_scores(const EnergyModel& model, const Tensor& x, OodScore fn,
                               const std::optional<AttackSpec>& adversarial) {
  Tensor input = x;
  if (adversarial) {
    if (!adversarial->eps) throw DomainError("adversarial OOD scores need a bounded attack");
    AttackSpec s = *adversarial;
    s.objective = fn == OodScore::NegEnergy ? AttackObjective::NegMarginalEnergy : AttackObjective::UniformCE;
    s.keep_best = true;
    input = projected_ascent(ModelObjective(model, s.objective), x, s).final;
  }
  const Matrix l = logits(model, input);
  std::vector<double> out(static_cast<std::size_t>(l.rows()));
  if (fn == OodScore::NegEnergy) {
    const Vector lse = logsumexp_rows(l);
    for (Eigen::Index i = 0; i < l.rows(); ++i) out[static_cast<std::size_t>(i)] = lse(i);
  } else {
    const Matrix p = conditional_probs(l);
    for (Eigen::Index i = 0; i < l.rows(); ++i) out[static_cast<std::size_t>(i)] = p.row(i).maxCoeff();
  }
  return out;
}

CalibrationReport ece(const Matrix& probs, const Labels& labels, int bins) {
  if (bins < 1) throw DomainError("ECE needs at least one bin");
  check_labels(labels, static_cast<std::size_t>(probs.cols()), static_cast<std::size_t>(probs.rows()));
  CalibrationReport r;
  r.bins.resize(static_cast<std::size_t>(bins));
  for (int b = 0; b < bins; ++b) {
    r.bins[static_cast<std::size_t>(b)].lower = static_cast<double>(b) / bins;
    r.bins[static_cast<std::size_t>(b)].upper = static_cast<double>(b + 1) / bins;
  }
  std::vector<double> hits(r.bins.size(), 0.0), conf(r.bins.size(), 0.0);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index k;
    const double c = probs.row(i).maxCoeff(&k);
    // bins are (lower, upper]; confidence 0 falls in the first bin
    auto b = static_cast<std::size_t>(std::ceil(c * bins)) - 1;
    if (c <= 0.0) b = 0;
    b = std::min(b, r.bins.size() - 1);
    ++r.bins[b].count;
    conf[b] += c;
    hits[b] += k == labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(probs.rows());
  for (std::size_t b = 0; b < r.bins.size(); ++b) {
    auto& bin = r.bins[b];
    if (bin.count == 0) continue;
    bin.accuracy = hits[b] / static_cast<double>(bin.count);
    bin.confidence = conf[b] / static_cast<double>(bin.count);
    r.ece += static_cast<double>(bin.count) / n * std::abs(bin.accuracy - bin.confidence);
  }
  return r;
}

FeatureEmbedder FeatureEmbedder::identity_flatten() {
  FeatureEmbedder e;
  e.name_ = "identity_flatten";
  return e;
}

FeatureEmbedder FeatureEmbedder::trained_probe(const Network& probe, std::size_t layers) {
  if (layers == 0 || layers > probe.num_layers()) throw DomainError("probe layer index out of range");
  FeatureEmbedder e;
  e.name_ = "trained_probe";
  e.probe_ = probe;
  e.probe_->set_norm_mode(NormMode::FrozenStats);
  e.probe_->require_norm_mode(std::nullopt);
  e.layers_ = layers;
  return e;
}

Matrix FeatureEmbedder::embed(const Tensor& x) const {
  if (!probe_) return as_matrix(x);
  return probe_->features(x, layers_);
}

std::vector<CounterfactualPoint> counterfactual_fid(const EnergyModel& model, const Tensor& sources,
                                                    const Tensor& reference, int target_class,
                                                    const std::vector<double>& eps_grid,
                                                    const FeatureEmbedder& embedder, const AttackSpec& base) {
  const Labels targets(sources.batch(), target_class);
  check_labels(targets, model.num_classes(), sources.batch());
  const GaussianSummary ref = summarize(embedder.embed(reference));
  std::vector<CounterfactualPoint> out;
  for (double eps : eps_grid) {
    AttackSpec s = base;
    s.objective = AttackObjective::TargetCE;
    s.eps = eps;
    s.keep_best = true;
    const Tensor cf = eps > 0 ? pgd_classification_attack(model, sources, targets, s).final : sources;
    const GaussianSummary gen = summarize(embedder.embed(cf));
    const Matrix p = conditional_probs(logits(model, cf));
    out.push_back({eps, fid(gen, ref), p.col(target_class).mean(), gen.regularized || ref.regularized});
  }
  return out;
}

std::string MetricReport::csv_header() { return "step,metric,value,embedder,attack_hash,n_samples,seed"; }

std::string MetricReport::csv_row() const {
  std::ostringstream os;
  os << step << ',' << metric << ',' << format_double(value) << ',' << embedder << ',' << attack_hash << ','
     << n_samples << ',' << seed;
  return os.str();
}

}  // namespace dat
