#include <gtest/gtest.h>

#include "dat/energy.hpp"
#include "dat/model.hpp"
#include "test_support.hpp"

using namespace dat;
using namespace dat::testing;

TEST(Network, ZeroHeadGivesZeroLogits) {
  Network net = small_mlp(1);
  auto p = net.parameters();
  const std::size_t head = 6 * 3 + 3;
  std::fill(p.end() - static_cast<std::ptrdiff_t>(head), p.end(), 0.0);
  const Matrix l = logits(net, random_batch(5, {2, 1, 1}, 2));
  EXPECT_EQ(l, Matrix::Zero(5, 3));
}

TEST(Network, ShapeMismatchIsDomainError) {
  Network net = small_mlp(1);
  EXPECT_THROW(logits(net, random_batch(2, {3, 1, 1}, 1)), DomainError);
  ArchitectureSpec bad;
  bad.input_shape = {2};
  EXPECT_THROW(build_network(bad), DomainError);
  bad.input_shape = {2, 1, 1};
  bad.kind = "transformer";
  EXPECT_THROW(build_network(bad), DomainError);
}

TEST(Network, FrozenStatsIsBatchIndependent) {
  Network net = small_mlp(3, 2, 3, true);
  const Tensor x = random_batch(1, {2, 1, 1}, 4);
  const Tensor junk = random_batch(9, {2, 1, 1}, 5, 10.0);
  const Matrix alone = logits(net, x);
  const Matrix mixed = logits(net, concat(x, junk));
  EXPECT_EQ(alone.row(0), mixed.row(0));
}

TEST(Network, FrozenStatsForwardIsPureAndRepeatable) {
  Network net = small_mlp(3, 2, 3, true);
  const Tensor x = random_batch(16, {2, 1, 1}, 6);
  const auto hash = net.buffer_hash();
  const Matrix first = logits(net, x);
  for (int i = 0; i < 100; ++i) {
    const ForwardPass pass = net.forward(x);
    net.commit_batch_statistics(pass);
    EXPECT_EQ(pass.logits, first);
  }
  EXPECT_EQ(net.buffer_hash(), hash);
}

TEST(Network, BatchStatsCommitMovesRunningMeanByHand) {
  Network net(Shape{1, 1, 1}, 2);
  net.add(make_flatten());
  net.add(make_batch_norm(1, 0.1));
  net.add(make_linear(1, 2));
  net.initialize(0);
  net.set_norm_mode(NormMode::BatchStats);
  const Tensor x({4, 1, 1, 1}, std::vector<double>{1.0, 2.0, 3.0, 6.0});
  // batch mean 3, unbiased variance (4 + 1 + 0 + 9) / 3
  net.commit_batch_statistics(net.forward(x));
  EXPECT_NEAR(net.buffers()[0], 0.9 * 0.0 + 0.1 * 3.0, 1e-15);
  EXPECT_NEAR(net.buffers()[1], 0.9 * 1.0 + 0.1 * 14.0 / 3.0, 1e-15);
  // a forward pass alone leaves the statistics untouched
  const auto before = net.buffer_hash();
  (void)net.forward(x);
  EXPECT_EQ(net.buffer_hash(), before);
}

TEST(Network, BatchStatsOutputsDependOnBatch) {
  Network net = small_mlp(3, 2, 3, true);
  net.set_norm_mode(NormMode::BatchStats);
  const Tensor x = random_batch(4, {2, 1, 1}, 4);
  const Tensor junk = random_batch(4, {2, 1, 1}, 5, 10.0);
  EXPECT_NE(logits(net, x).row(0), logits(net, concat(x, junk)).row(0));
}

TEST(Network, RequiredModeRaisesContractViolation) {
  Network net = small_mlp(3, 2, 3, true);
  net.require_norm_mode(NormMode::FrozenStats);
  const Tensor x = random_batch(4, {2, 1, 1}, 4);
  EXPECT_NO_THROW(logits(net, x));
  net.set_norm_mode(NormMode::BatchStats);
  EXPECT_THROW(logits(net, x), ContractViolation);
}

TEST(InputGradient, IdentityModelSumObjective) {
  Network net(Shape{3, 1, 1}, 3);
  net.add(make_flatten());
  const Tensor x = random_batch(2, {3, 1, 1}, 1);
  const Tensor g = input_gradient(net, x, Matrix::Ones(2, 3));
  for (double v : g.values()) EXPECT_EQ(v, 1.0);
}

TEST(InputGradient, MatchesCentralDifferences) {
  for (const char* act : {"tanh", "silu"}) {
    Network net = small_mlp(7, 4, 3, false, act);
    const Tensor x = random_batch(2, {4, 1, 1}, 8);
    Matrix w(2, 3);
    w << 0.3, -1.2, 0.7, 1.1, 0.4, -0.5;
    const Tensor g = input_gradient(net, x, w);
    auto f = [&](const std::vector<double>& v) {
      return (logits(net, Tensor(x.shape(), v)).array() * w.array()).sum();
    };
    const auto fd = central_difference(f, x.values(), 1e-3);
    ASSERT_EQ(fd.size(), 8u);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(g[i], fd[i], 1e-4 * std::max(1.0, std::abs(fd[i]))) << act;
  }
}

TEST(InputGradient, ConvnetMatchesCentralDifferences) {
  Network net = small_convnet(2, true);
  const Tensor x = random_batch(2, {1, 6, 6}, 3, 1.0, true);
  Matrix w = Matrix::Ones(2, 3);
  w(0, 1) = -2.0;
  const Tensor g = input_gradient(net, x, w);
  auto f = [&](const std::vector<double>& v) {
    return (logits(net, Tensor(x.shape(), v)).array() * w.array()).sum();
  };
  const auto fd = central_difference(f, x.values(), 1e-5);
  EXPECT_LT(relative_error(g.values(), fd), 1e-6);
}

TEST(InputGradient, NegMarginalEnergyChainRule) {
  Network net = small_mlp(9);
  const Tensor x = random_batch(3, {2, 1, 1}, 10);
  const Matrix l = logits(net, x);
  const Matrix p = conditional_probs(l);
  const Tensor direct = input_gradient(net, x, p);
  Tensor assembled(x.shape());
  for (int k = 0; k < 3; ++k) {
    Matrix ek = Matrix::Zero(3, 3);
    ek.col(k).setOnes();
    const Tensor gk = input_gradient(net, x, ek);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t d = 0; d < 2; ++d) assembled[i * 2 + d] += p(static_cast<Eigen::Index>(i), k) * gk[i * 2 + d];
  }
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(direct[i], assembled[i], 1e-12);
}

TEST(ParameterGradient, MatchesCentralDifferences) {
  Network net = small_mlp(4, 2, 3, true);
  net.set_norm_mode(NormMode::BatchStats);
  const Tensor x = random_batch(5, {2, 1, 1}, 12);
  Matrix w = Matrix::Random(5, 3);
  const auto g = net.backward(net.forward(x), w, {.input = false, .params = true}).params;
  auto f = [&](const std::vector<double>& v) {
    Network m = with_parameters(net, v);
    return (logits(m, x).array() * w.array()).sum();
  };
  const std::vector<double> p(net.parameters().begin(), net.parameters().end());
  const auto fd = central_difference(f, p, 1e-6);
  EXPECT_LT(relative_error(g, fd), 1e-6);
}

TEST(Network, NonDifferentiableLayerIsUnsupported) {
  Network net(Shape{2, 1, 1}, 2);
  net.add(make_flatten());
  net.add(make_quantize(8));
  net.add(make_linear(2, 2));
  net.initialize(1);
  const Tensor x = random_batch(2, {2, 1, 1}, 1, 1.0, true);
  EXPECT_NO_THROW(logits(net, x));
  EXPECT_THROW(input_gradient(net, x, Matrix::Ones(2, 2)), UnsupportedOperation);
}

TEST(Network, CopyIsDeep) {
  Network a = small_mlp(1);
  Network b = a;
  b.parameters()[0] += 1.0;
  EXPECT_NE(a.parameters()[0], b.parameters()[0]);
  EXPECT_NE(a.parameter_hash(), b.parameter_hash());
}

TEST(Ema, UpdateRule) {
  std::vector<double> p{1.0, 2.0};
  EmaShadow ema(p, 0.9);
  p = {2.0, 0.0};
  ema.update(p);
  EXPECT_NEAR(ema.values()[0], 1.1, 1e-15);
  EXPECT_NEAR(ema.values()[1], 1.8, 1e-15);
  EXPECT_THROW(EmaShadow(p, 1.0), DomainError);
}

TEST(Architecture, JsonRoundTrip) {
  ArchitectureSpec s;
  s.kind = "convnet";
  s.input_shape = {1, 12, 12};
  s.classes = 10;
  s.hidden = {4, 8};
  s.seed = 42;
  const ArchitectureSpec r = architecture_from_json(to_json(s));
  EXPECT_EQ(to_json(r), to_json(s));
}
