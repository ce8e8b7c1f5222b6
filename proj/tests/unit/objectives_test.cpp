#include <gtest/gtest.h>

#include <cmath>

#include "dat/energy.hpp"
#include "dat/objectives.hpp"
#include "test_support.hpp"

using namespace dat;
using namespace dat::testing;

namespace {

// Binary linear model whose logits are [w.x + b, b].
Network equal_bias_linear(const std::vector<double>& w, double b) {
  Network net = linear_binary(w, b);
  net.parameters()[2 * w.size() + 1] = b;
  return net;
}

double vec_norm(const ParamVector& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST(BceFromEnergies, Examples) {
  const std::vector<double> zero{0.0}, neg{-50.0}, pos{50.0};
  EXPECT_NEAR(bce_from_energies(zero, zero), 2.0 * std::log(2.0), 1e-15);
  EXPECT_LT(bce_from_energies(neg, pos), 1e-20);
  const double v = bce_from_energies(pos, pos);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, 50.0, 1e-12);
  EXPECT_THROW(bce_from_energies({}, zero), DomainError);
}

TEST(ScaleFactors, SumToOneAndLimits) {
  const std::vector<double> e{-700.0, -3.0, 0.0, 1e-9, 2.5, 700.0};
  const ScaleFactors s = scale_factors(e);
  for (std::size_t i = 0; i < e.size(); ++i) EXPECT_NEAR(s.alpha[i] + s.beta[i], 1.0, 1e-7);
  EXPECT_DOUBLE_EQ(s.alpha[2], 0.5);
  EXPECT_DOUBLE_EQ(s.beta[2], 0.5);
  EXPECT_NEAR(s.alpha.back(), 1.0, 1e-15);
  EXPECT_NEAR(s.alpha.front(), 0.0, 1e-15);
}

TEST(BceGradient, MatchesFiniteDifferences) {
  Network net = small_mlp(3, 2, 3, true);
  const Tensor xd = random_batch(6, {2, 1, 1}, 4);
  const Tensor xc = random_batch(5, {2, 1, 1}, 5, 2.0);
  const LossGrad lg = bce_generative_loss_grad(net, xd, xc);
  EXPECT_NEAR(lg.value, bce_generative_loss(net, xd, xc), 1e-14);
  const std::vector<double> p(net.parameters().begin(), net.parameters().end());
  auto f = [&](const std::vector<double>& v) { return bce_generative_loss(with_parameters(net, v), xd, xc); };
  EXPECT_LT(relative_error(lg.grad, central_difference(f, p, 1e-6)), 1e-7);
}

TEST(BceGradient, EqualsNegatedScaledEbmGradient) {
  for (std::uint64_t seed : {1, 2, 3}) {
    for (int arch = 0; arch < 2; ++arch) {
      Network net = arch == 0 ? small_mlp(seed, 2, 3, true) : small_convnet(seed, true);
      const Shape s = arch == 0 ? Shape{2, 1, 1} : Shape{1, 6, 6};
      const Tensor xd = random_batch(7, s, seed + 10, 1.0, true);
      const Tensor xc = random_batch(9, s, seed + 20, 1.0, true);
      ParamVector scaled = scaled_ebm_gradient(net, xd, xc);
      for (double& v : scaled) v = -v;
      EXPECT_LT(relative_error(bce_generative_loss_grad(net, xd, xc).grad, scaled), 1e-5);
    }
  }
}

TEST(ScaledEbmGradient, HalfOfReferenceAtZeroEnergy) {
  // logits [w.x - ln 2, -ln 2] with w = 0 give E = 0 everywhere
  Network net = equal_bias_linear({0.0, 0.0}, -std::log(2.0));
  const Tensor xd = random_batch(4, {2, 1, 1}, 1);
  const Tensor xc = random_batch(6, {2, 1, 1}, 2);
  const Vector e = marginal_energy(logits(net, concat(xd, xc)));
  for (Eigen::Index i = 0; i < e.size(); ++i) EXPECT_NEAR(e(i), 0.0, 1e-15);
  const ParamVector scaled = scaled_ebm_gradient(net, xd, xc);
  const ParamVector ref = reference_ebm_gradient(net, xd, xc);
  ASSERT_GT(vec_norm(ref), 1e-3);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(scaled[i], 0.5 * ref[i], 1e-15);
}

TEST(ReferenceEbmGradient, CancelsOnIdenticalBatches) {
  Network net = small_mlp(8);
  const Tensor x = random_batch(5, {2, 1, 1}, 9);
  for (double g : reference_ebm_gradient(net, x, x)) EXPECT_NEAR(g, 0.0, 1e-15);
}

TEST(ReferenceEbmGradient, LinearEnergyClosedForm) {
  // With equal weight rows v, E(x) = -v.x - ln 2 so grad_v E = -x / 2 for each row.
  const std::vector<double> v{0.4, -0.3};
  Network net = equal_bias_linear({0.0, 0.0}, 0.0);
  auto p = net.parameters();
  p[0] = v[0], p[1] = v[1], p[2] = v[0], p[3] = v[1];
  const Tensor xd = random_batch(5, {2, 1, 1}, 1);
  const Tensor xs = random_batch(7, {2, 1, 1}, 2);
  const ParamVector g = reference_ebm_gradient(net, xd, xs);
  for (std::size_t j = 0; j < 2; ++j) {
    double md = 0, ms = 0;
    for (std::size_t i = 0; i < 5; ++i) md += xd.sample(i)[j] / 5.0;
    for (std::size_t i = 0; i < 7; ++i) ms += xs.sample(i)[j] / 7.0;
    const double expect = 0.5 * (md - ms);
    EXPECT_NEAR(g[j], expect, 1e-14);
    EXPECT_NEAR(g[2 + j], expect, 1e-14);
  }
  EXPECT_NEAR(g[4], 0.0, 1e-15);
  EXPECT_NEAR(g[5], 0.0, 1e-15);
}

TEST(AtCeLoss, Examples) {
  Network uniform = linear_binary({0.0, 0.0}, 0.0);
  const Tensor x = random_batch(3, {2, 1, 1}, 1);
  EXPECT_NEAR(at_ce_loss(uniform, x, Labels{0, 1, 0}), std::log(2.0), 1e-15);
  Network confident = linear_binary({0.0, 0.0}, 50.0);
  EXPECT_LT(at_ce_loss(confident, x, Labels{0, 0, 0}), 1e-20);
  EXPECT_THROW(at_ce_loss(uniform, x, Labels{0, 2, 0}), DomainError);
}

TEST(AtCeLoss, ZeroEpsAttackEqualsClean) {
  Network net = small_mlp(4);
  const Tensor x = random_batch(8, {2, 1, 1}, 4, 1.0, true);
  const Labels y = random_labels(8, 3, 4);
  AttackSpec s = default_classification_attack();
  s.eps = 0.0;
  EXPECT_EQ(at_ce_loss(net, pgd_classification_attack(net, x, y, s).final, y), at_ce_loss(net, x, y));
}

TEST(AtCeLoss, GradientMatchesFiniteDifferences) {
  Network net = small_mlp(5);
  const Tensor x = random_batch(8, {2, 1, 1}, 5);
  const Labels y = random_labels(8, 3, 5);
  const LossGrad lg = at_ce_loss_grad(net, x, y);
  const std::vector<double> p(net.parameters().begin(), net.parameters().end());
  auto f = [&](const std::vector<double>& v) { return at_ce_loss(with_parameters(net, v), x, y); };
  EXPECT_LT(relative_error(lg.grad, central_difference(f, p, 1e-6)), 1e-7);
}

TEST(RatioLoss, LambdaZeroIsAdversarialCe) {
  Network net = small_mlp(6);
  const Tensor x = random_batch(8, {2, 1, 1}, 6, 1.0, true);
  const Tensor ood = random_batch(8, {2, 1, 1}, 7, 1.0, true);
  const Labels y = random_labels(8, 3, 6);
  RatioSpec s;
  s.lambda = 0.0;
  s.ood.eps = 1.0;
  s.ood.objective = AttackObjective::UniformCE;
  const double expect = at_ce_loss(net, pgd_classification_attack(net, x, y, s.classification).final, y);
  EXPECT_EQ(ratio_loss(net, x, y, ood, s).value, expect);
}

TEST(RatioLoss, UniformModelSecondTermIsLnK) {
  Network net = linear_binary({0.0, 0.0}, 0.0);
  const Tensor x = random_batch(4, {2, 1, 1}, 1, 1.0, true);
  const Tensor ood = random_batch(4, {2, 1, 1}, 2, 1.0, true);
  RatioSpec s;
  s.lambda = 0.7;
  s.ood.eps = 1.0;
  s.ood.objective = AttackObjective::UniformCE;
  EXPECT_NEAR(ratio_loss(net, x, Labels{0, 1, 1, 0}, ood, s).value, std::log(2.0) + 0.7 * std::log(2.0), 1e-14);
}

TEST(RatioLoss, HandBuiltTwoSampleCase) {
  // no attack movement (eps = 0) so both terms are closed form
  Network net = linear_binary({1.0, -2.0}, 0.5);
  const Tensor x({2, 2, 1, 1}, std::vector<double>{0.2, 0.4, 0.9, 0.1});
  const Tensor ood({2, 2, 1, 1}, std::vector<double>{0.5, 0.5, 0.0, 1.0});
  const Labels y{0, 1};
  RatioSpec s;
  s.lambda = 1.0;
  s.classification.eps = 0.0;
  s.ood.eps = 0.0;
  s.ood.objective = AttackObjective::UniformCE;
  auto z = [](double a, double b) { return a - 2.0 * b + 0.5; };
  auto ce = [](double l0, double l1, int k) { return std::log(std::exp(l0) + std::exp(l1)) - (k == 0 ? l0 : l1); };
  const double at = 0.5 * (ce(z(0.2, 0.4), 0.0, 0) + ce(z(0.9, 0.1), 0.0, 1));
  const double u = 0.5 * (0.5 * (ce(z(0.5, 0.5), 0.0, 0) + ce(z(0.5, 0.5), 0.0, 1)) +
                          0.5 * (ce(z(0.0, 1.0), 0.0, 0) + ce(z(0.0, 1.0), 0.0, 1)));
  EXPECT_NEAR(ratio_loss(net, x, y, ood, s).value, at + u, 1e-14);
}

TEST(RatioLoss, RequiresExplicitOodRadius) {
  Network net = small_mlp(1);
  const Tensor x = random_batch(2, {2, 1, 1}, 1, 1.0, true);
  RatioSpec s;
  s.ood.objective = AttackObjective::UniformCE;
  EXPECT_THROW(ratio_loss(net, x, Labels{0, 1}, x, s), DomainError);
}

TEST(R1Penalty, ClosedForms) {
  Network constant = linear_binary({0.0, 0.0}, 1.0);
  const Tensor x = random_batch(4, {2, 1, 1}, 1);
  EXPECT_EQ(r1_penalty(constant, x, Labels{0, 1, 0, 1}), 0.0);
  Network lin = linear_binary({3.0, -4.0}, 0.2);
  EXPECT_NEAR(r1_penalty(lin, x, Labels{0, 0, 0, 0}), 25.0, 1e-12);
  EXPECT_EQ(r1_penalty(lin, x, Labels{1, 1, 1, 1}), 0.0);
}

TEST(R1Penalty, MatchesFiniteDifferenceGradientNorm) {
  Network net = small_mlp(12, 3, 3);
  const Tensor x = random_batch(3, {3, 1, 1}, 12);
  const Labels y{0, 2, 1};
  double expect = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const Tensor xi = x.slice(i, i + 1);
    auto f = [&](const std::vector<double>& v) { return logits(net, Tensor(xi.shape(), v))(0, y[i]); };
    for (double g : central_difference(f, xi.values(), 1e-5)) expect += g * g;
  }
  expect /= 3.0;
  EXPECT_NEAR(r1_penalty(net, x, y), expect, 1e-3 * expect);
}

TEST(CombinedLoss, WeightSelection) {
  Network net = small_mlp(13, 2, 3, true);
  CombinedBatch b{random_batch(6, {2, 1, 1}, 1), random_labels(6, 3, 1), random_batch(6, {2, 1, 1}, 2),
                  random_batch(6, {2, 1, 1}, 3, 2.0)};
  const LossGrad at = at_ce_loss_grad(net, b.x_adv, b.labels);
  const LossGrad bce = bce_generative_loss_grad(net, b.x_data, b.x_contrastive);

  const CombinedLoss only_at = combined_loss(net, b, {1.0, 0.0});
  EXPECT_FALSE(only_at.bce_evaluated);
  EXPECT_EQ(only_at.total, at.value);
  EXPECT_EQ(only_at.grad, at.grad);

  const CombinedLoss only_bce = combined_loss(net, b, {0.0, 1.0});
  EXPECT_TRUE(only_bce.bce_evaluated);
  EXPECT_EQ(only_bce.total, bce.value);
  for (std::size_t i = 0; i < bce.grad.size(); ++i) EXPECT_EQ(only_bce.grad[i], bce.grad[i]);

  const CombinedLoss both = combined_loss(net, b, {1.0, 1.0});
  EXPECT_NEAR(both.total, at.value + bce.value, 1e-14);
  for (std::size_t i = 0; i < at.grad.size(); ++i) EXPECT_NEAR(both.grad[i], at.grad[i] + bce.grad[i], 1e-14);

  const CombinedLoss ref = combined_loss(net, b, {1.0, 1.0}, GenerativeGradient::Reference);
  const ParamVector r = reference_ebm_gradient(net, b.x_data, b.x_contrastive);
  for (std::size_t i = 0; i < at.grad.size(); ++i) EXPECT_NEAR(ref.grad[i], at.grad[i] - r[i], 1e-14);

  EXPECT_THROW(combined_loss(net, b, {-1.0, 1.0}), DomainError);
}

TEST(CombinedLoss, CommitOnlyWhenAsked) {
  Network net = small_mlp(13, 2, 3, true);
  net.set_norm_mode(NormMode::BatchStats);
  CombinedBatch b{random_batch(6, {2, 1, 1}, 1), random_labels(6, 3, 1), random_batch(6, {2, 1, 1}, 2),
                  random_batch(6, {2, 1, 1}, 3)};
  const auto h = net.buffer_hash();
  (void)combined_loss(net, b, {1.0, 0.0}, GenerativeGradient::Scaled, false);
  EXPECT_EQ(net.buffer_hash(), h);
  (void)combined_loss(net, b, {1.0, 0.0}, GenerativeGradient::Scaled, true);
  EXPECT_NE(net.buffer_hash(), h);
}
