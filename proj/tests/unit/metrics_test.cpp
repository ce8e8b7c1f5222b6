#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dat/data.hpp"
#include "dat/energy.hpp"
#include "dat/metrics.hpp"
#include "test_support.hpp"

using namespace dat;
using namespace dat::testing;

namespace {

GaussianSummary gaussian(std::vector<double> mean, Matrix cov) {
  GaussianSummary s;
  s.mean = Eigen::Map<Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  s.cov = std::move(cov);
  s.n = 1000;
  return s;
}

Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
  Matrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST(Fid, ClosedForms) {
  const Matrix i3 = Matrix::Identity(3, 3);
  EXPECT_NEAR(fid(gaussian({1, 2, 3}, i3), gaussian({1, 2, 3}, i3)), 0.0, 1e-6);
  EXPECT_NEAR(fid(gaussian({0, 0, 0}, i3), gaussian({1, -2, 0.5}, i3)), 1 + 4 + 0.25, 1e-6);
  EXPECT_NEAR(fid(gaussian({0}, Matrix::Constant(1, 1, 1.0)), gaussian({0}, Matrix::Constant(1, 1, 4.0))), 1.0, 1e-6);
}

TEST(Fid, CommutingCovariancesClosedForm) {
  // diagonal covariances: sum (sqrt(a_i) - sqrt(b_i))^2
  Matrix a = Matrix::Zero(3, 3), b = Matrix::Zero(3, 3);
  a.diagonal() << 1.0, 4.0, 0.25;
  b.diagonal() << 9.0, 1.0, 0.25;
  EXPECT_NEAR(fid(gaussian({0, 0, 0}, a), gaussian({0, 0, 0}, b)), 4.0 + 1.0 + 0.0, 1e-9);
}

TEST(Fid, RotatedCovarianceOracle) {
  // S2 = R S1 R^T with S1 diagonal: Tr (S1 S2)^{1/2} from the 2x2 closed form
  // sqrt(det) formula: Tr sqrt(M) = sqrt(Tr M + 2 sqrt(det M)) for 2x2 PSD M.
  Matrix s1 = Matrix::Zero(2, 2);
  s1.diagonal() << 2.0, 0.5;
  const double t = 0.6;
  Matrix r(2, 2);
  r << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
  const Matrix s2 = r * s1 * r.transpose();
  const Matrix m = s1 * s2;
  const double tr_sqrt = std::sqrt(m.trace() + 2.0 * std::sqrt(m.determinant()));
  const double expect = s1.trace() + s2.trace() - 2.0 * tr_sqrt;
  EXPECT_NEAR(fid(gaussian({0, 0}, s1), gaussian({0, 0}, s2)), expect, 1e-12);
}

TEST(Fid, NonPsdBeyondTolerance) {
  Matrix bad = Matrix::Identity(2, 2);
  bad(1, 1) = -1e-3;
  EXPECT_THROW(fid(gaussian({0, 0}, bad), gaussian({0, 0}, Matrix::Identity(2, 2))), NonPsdCovariance);
  Matrix tiny = Matrix::Identity(2, 2);
  tiny(1, 1) = -1e-9;
  EXPECT_NO_THROW(fid(gaussian({0, 0}, tiny), gaussian({0, 0}, Matrix::Identity(2, 2))));
  EXPECT_THROW(fid(gaussian({0}, Matrix::Identity(1, 1)), gaussian({0, 0}, Matrix::Identity(2, 2))), DomainError);
}

TEST(Summarize, UnbiasedAndRegularized) {
  const Matrix f = rows({{1, 0}, {3, 2}, {2, 4}});
  const GaussianSummary s = summarize(f);
  EXPECT_NEAR(s.mean(0), 2.0, 1e-15);
  EXPECT_NEAR(s.mean(1), 2.0, 1e-15);
  EXPECT_NEAR(s.cov(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(s.cov(1, 1), 4.0, 1e-15);
  EXPECT_NEAR(s.cov(0, 1), 1.0, 1e-15);
  EXPECT_FALSE(s.regularized);
  const GaussianSummary r = summarize(rows({{1, 0, 5}, {3, 2, 1}}));
  EXPECT_TRUE(r.regularized);
  EXPECT_NEAR(r.cov(0, 0), 2.0 + 1e-6, 1e-15);
  EXPECT_THROW(summarize(rows({{1, 2}})), DomainError);
}

TEST(Fid, SampleEstimateApproachesClosedForm) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix a(20000, 2), b(20000, 2);
  for (Eigen::Index i = 0; i < 20000; ++i) {
    a(i, 0) = g(rng), a(i, 1) = g(rng);
    b(i, 0) = 1.0 + 2.0 * g(rng), b(i, 1) = g(rng);
  }
  // ||mu||^2 = 1, (sigma1 - sigma2)^2 = 1 on the first axis
  EXPECT_NEAR(fid(summarize(a), summarize(b)), 2.0, 0.1);
}

TEST(InceptionScore, Examples) {
  EXPECT_NEAR(inception_score(Matrix::Constant(5, 4, 0.25)), 1.0, 1e-15);
  EXPECT_NEAR(inception_score(Matrix::Identity(6, 6)), 6.0, 1e-12);
  // marginal [0.75, 0.25]; both rows contribute a KL term
  const double kl_onehot = std::log(4.0 / 3.0);
  const double kl_flat = 0.5 * std::log(0.5 / 0.75) + 0.5 * std::log(0.5 / 0.25);
  EXPECT_NEAR(inception_score(rows({{1.0, 0.0}, {0.5, 0.5}})), std::exp(0.5 * (kl_onehot + kl_flat)), 1e-15);
}

TEST(InceptionScore, BoundedByClassCount) {
  std::mt19937_64 rng(2);
  std::gamma_distribution<double> g(0.3, 1.0);
  for (int t = 0; t < 20; ++t) {
    Matrix p(30, 5);
    for (Eigen::Index i = 0; i < 30; ++i) {
      for (Eigen::Index k = 0; k < 5; ++k) p(i, k) = g(rng) + 1e-12;
      p.row(i) /= p.row(i).sum();
    }
    const double is = inception_score(p);
    EXPECT_GE(is, 1.0 - 1e-12);
    EXPECT_LE(is, 5.0 + 1e-12);
  }
}

TEST(InceptionScore, InvalidRows) {
  EXPECT_THROW(inception_score(rows({{0.5, 0.6}})), DomainError);
  EXPECT_THROW(inception_score(rows({{1.5, -0.5}})), DomainError);
  EXPECT_THROW(inception_score(Matrix(0, 3)), DomainError);
}

TEST(Auroc, Examples) {
  const std::vector<double> id{0.9, 0.8}, ood{0.1, 0.2};
  EXPECT_DOUBLE_EQ(ood_auroc(id, ood), 1.0);
  EXPECT_DOUBLE_EQ(ood_auroc(ood, id), 0.0);
  const std::vector<double> same{0.3, 0.3, 0.7};
  EXPECT_DOUBLE_EQ(ood_auroc(same, same), 0.5);
  EXPECT_THROW(ood_auroc({}, ood), DomainError);
}

TEST(Auroc, MatchesPairEnumeration) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> coarse(0, 20);  // forces ties
  std::vector<double> a(50), b(50);
  for (auto& v : a) v = coarse(rng) / 4.0;
  for (auto& v : b) v = coarse(rng) / 5.0;
  double wins = 0;
  for (double x : a)
    for (double y : b) wins += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
  EXPECT_EQ(ood_auroc(a, b), wins / 2500.0);
}

TEST(Auroc, RankPathAgreesWithPairCount) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> coarse(0, 300);
  std::vector<double> a(1200), b(1000);
  for (auto& v : a) v = coarse(rng) + 20;
  for (auto& v : b) v = coarse(rng);
  double wins = 0;
  for (double x : a)
    for (double y : b) wins += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
  EXPECT_NEAR(ood_auroc(a, b), wins / (1200.0 * 1000.0), 1e-12);
}

TEST(OodScores, UniformLogits) {
  ArchitectureSpec spec;
  spec.kind = "linear";
  spec.classes = 10;
  Network net = build_network(spec);
  std::fill(net.parameters().begin(), net.parameters().end(), 0.0);
  const Tensor x = random_batch(3, {2, 1, 1}, 1);
  for (double v : ood_scores(net, x, OodScore::MaxConfidence)) EXPECT_NEAR(v, 0.1, 1e-15);
  for (double v : ood_scores(net, x, OodScore::NegEnergy)) EXPECT_NEAR(v, std::log(10.0), 1e-14);
}

TEST(OodScores, AdversarialVariant) {
  Network net = small_mlp(3);
  const Tensor x = random_batch(20, {2, 1, 1}, 4);
  AttackSpec s = default_classification_attack();
  s.clamp01 = false;
  s.eps = 0.0;
  for (auto fn : {OodScore::NegEnergy, OodScore::MaxConfidence})
    EXPECT_EQ(ood_scores(net, x, fn, s), ood_scores(net, x, fn));
  s.eps = 1.0;
  const auto clean = ood_scores(net, x, OodScore::NegEnergy);
  const auto adv = ood_scores(net, x, OodScore::NegEnergy, s);
  for (std::size_t i = 0; i < clean.size(); ++i) EXPECT_GE(adv[i], clean[i]);
  const auto cclean = ood_scores(net, x, OodScore::MaxConfidence);
  const auto cadv = ood_scores(net, x, OodScore::MaxConfidence, s);
  for (std::size_t i = 0; i < clean.size(); ++i) EXPECT_GE(cadv[i], cclean[i] - 1e-15);
  s.eps.reset();
  EXPECT_THROW(ood_scores(net, x, OodScore::NegEnergy, s), DomainError);
  EXPECT_EQ(to_string(OodScore::NegEnergy), "neg_energy");
}

TEST(Ece, Examples) {
  // confidences 0.25 / 0.75 with matching accuracies
  const Matrix p = rows({{0.75, 0.25}, {0.75, 0.25}, {0.75, 0.25}, {0.75, 0.25}});
  EXPECT_NEAR(ece(p, Labels{0, 0, 0, 1}, 2).ece, 0.0, 1e-15);
  const Matrix sure = rows({{1.0, 0.0}, {0.0, 1.0}});
  EXPECT_NEAR(ece(sure, Labels{0, 0}, 10).ece, 0.5, 1e-15);
}

TEST(Ece, HandComputedTwoBins) {
  // bins (0, 0.5], (0.5, 1]
  // sample 0: conf 0.5 (bin 0), correct; sample 1: conf 0.6 (bin 1), wrong
  // sample 2: conf 0.9 (bin 1), correct; sample 3: conf 0.8 (bin 1), correct
  const Matrix p = rows({{0.5, 0.5}, {0.6, 0.4}, {0.1, 0.9}, {0.8, 0.2}});
  const CalibrationReport r = ece(p, Labels{0, 1, 1, 0}, 2);
  const double bin0 = 0.25 * std::abs(1.0 - 0.5);
  const double bin1 = 0.75 * std::abs(2.0 / 3.0 - (0.6 + 0.9 + 0.8) / 3.0);
  EXPECT_NEAR(r.ece, bin0 + bin1, 1e-15);
  EXPECT_EQ(r.bins[0].count, 1u);
  EXPECT_EQ(r.bins[1].count, 3u);
  EXPECT_DOUBLE_EQ(r.bins[0].upper, 0.5);
  EXPECT_THROW(ece(p, Labels{0, 1, 2, 0}, 2), DomainError);
  EXPECT_THROW(ece(p, Labels{0, 1, 1, 0}, 0), DomainError);
}

TEST(RobustAccuracy, Examples) {
  const DatasetHandle d = load_dataset({"two_moons_id", "test", 200, 1});
  Network net = small_mlp(4, 2, 2);
  AttackSpec s = default_classification_attack();
  s.clamp01 = false;
  s.eps = 0.0;
  EXPECT_EQ(robust_accuracy(net, d.samples, d.labels, s), clean_accuracy(net, d.samples, d.labels));
  s.eps.reset();
  EXPECT_THROW(robust_accuracy(net, d.samples, d.labels, s), DomainError);

  Network constant = linear_binary({0.0, 0.0}, 1.0);
  Labels y(10, 0);
  y[0] = y[1] = y[2] = 1;
  const Tensor x = random_batch(10, {2, 1, 1}, 3);
  for (double e : {0.0, 0.5, 5.0}) {
    s.eps = e;
    EXPECT_DOUBLE_EQ(robust_accuracy(constant, x, y, s), 0.7);
  }
}

TEST(RobustAccuracy, MonotoneInRadius) {
  const DatasetHandle d = load_dataset({"two_moons_id", "test", 300, 2});
  for (std::uint64_t seed : {1, 2, 3}) {
    Network net = small_mlp(seed, 2, 2);
    AttackSpec s = default_classification_attack();
    s.clamp01 = false;
    s.eps = 0.25;
    s.step_size = 0.05;
    const double small = robust_accuracy(net, d.samples, d.labels, s);
    s.eps = 0.5;
    s.step_size = 0.1;
    EXPECT_LE(robust_accuracy(net, d.samples, d.labels, s), small + 0.01);
  }
}

TEST(Embedder, IdentityAndProbe) {
  const Tensor x = random_batch(4, {2, 1, 1}, 1);
  const FeatureEmbedder id = FeatureEmbedder::identity_flatten();
  EXPECT_EQ(id.name(), "identity_flatten");
  EXPECT_EQ(id.embed(x), as_matrix(x));
  Network net = small_mlp(2, 2, 3, true);
  net.set_norm_mode(NormMode::BatchStats);
  const FeatureEmbedder probe = FeatureEmbedder::trained_probe(net, 2);
  EXPECT_EQ(probe.embed(x).cols(), 8);
  net.set_norm_mode(NormMode::FrozenStats);
  EXPECT_EQ(probe.embed(x), net.features(x, 2));
  EXPECT_THROW(FeatureEmbedder::trained_probe(net, 0), DomainError);
  EXPECT_THROW(FeatureEmbedder::trained_probe(net, 99), DomainError);
}

TEST(Counterfactual, ZeroRadiusIsSelfBaseline) {
  Network net = small_mlp(5, 2, 2);
  const Tensor src = random_batch(40, {2, 1, 1}, 1);
  const Tensor ref = random_batch(40, {2, 1, 1}, 2, 1.5);
  AttackSpec base = default_classification_attack();
  base.clamp01 = false;
  const auto id = FeatureEmbedder::identity_flatten();
  const auto pts = counterfactual_fid(net, src, ref, 1, {0.0, 0.5}, id, base);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0].fid, fid(summarize(as_matrix(src)), summarize(as_matrix(ref))));
  EXPECT_NEAR(pts[0].confidence, conditional_probs(logits(net, src)).col(1).mean(), 1e-15);
  EXPECT_GE(pts[1].confidence, pts[0].confidence);
  EXPECT_FALSE(pts[0].regularized);
  EXPECT_THROW(counterfactual_fid(net, src, ref, 2, {0.0}, id, base), DomainError);
}

TEST(MetricReport, CsvSchema) {
  EXPECT_EQ(MetricReport::csv_header(), "step,metric,value,embedder,attack_hash,n_samples,seed");
  const MetricReport r{300, "fid", 0.125, "identity_flatten", "-", 500, 7};
  EXPECT_EQ(r.csv_row(), "300,fid,0.125,identity_flatten,-,500,7");
}
