#pragma once

#include <cstdint>
#include <vector>

#include "dat/attacks.hpp"
#include "dat/metrics.hpp"
#include "dat/model.hpp"

namespace dat {

struct ExpansionRow {
  double eps = 0.0;
  double ce = 0.0;         // mean CE(x)
  double grad_norm = 0.0;  // mean ||grad_x CE(x)||
  double linear = 0.0;     // mean CE(x) + eps ||grad_x CE(x)||
  double inner_max = 0.0;  // mean of the dense-PGD maximum over the eps-ball
  // mean over samples of |inner_max - linear| / (eps ||grad||); 0 at eps = 0
  double rel_error = 0.0;
  double gap = 0.0;  // mean inner_max - linear
};

struct DensePgd {
  int steps = 100;
  int restarts = 10;
  std::uint64_t seed = 0;
};

// Inner maximum of CE over the L2 ball, per sample, by restarted projected ascent.
std::vector<double> dense_inner_max(const EnergyModel& model, const Tensor& x, const Labels& labels, double eps,
                                    const DensePgd& options = {});

// Compares the inner maximum against the first-order prediction CE(x) + eps ||grad CE||.
// Throws DomainError when a sample's gradient is degenerate.
std::vector<ExpansionRow> verify_first_order_expansion(const EnergyModel& model, const Tensor& x, const Labels& labels,
                                                       const std::vector<double>& eps_list,
                                                       const DensePgd& options = {});

struct Decomposition {
  double direct = 0.0;       // ||grad_x CE||^2 by backpropagation
  double true_class = 0.0;   // (1 - p_y)^2 ||g_y||^2
  double competitors = 0.0;  // sum_{k != y} p_k^2 ||g_k||^2
  double cross_true = 0.0;   // -2 (1 - p_y) sum_{k != y} p_k <g_y, g_k>
  double cross_pairs = 0.0;  // 2 sum_{i < j, i, j != y} p_i p_j <g_i, g_j>
  double expansion() const { return true_class + competitors + cross_true + cross_pairs; }
  double residual() const;
};

// Per-sample terms, with g_k = grad_x f_k(x).
std::vector<Decomposition> gradient_decomposition(const EnergyModel& model, const Tensor& x, const Labels& labels);

// Largest absolute residual between the direct value and the four-term expansion.
double verify_gradient_decomposition(const EnergyModel& model, const Tensor& x, const Labels& labels);

struct SamplingComparison {
  double fid_ancestral = 0.0;
  double fid_marginal = 0.0;
  std::size_t n = 0;
};

// Samples from `x0` by ascent on the joint energy with labels drawn from
// `label_pool`, and by ascent on the marginal energy, with the same spec
// otherwise. Both sets are compared to `reference`.
SamplingComparison compare_sampling_strategies(const EnergyModel& model, const Tensor& x0, const Tensor& reference,
                                               const Labels& label_pool, const AttackSpec& spec,
                                               const FeatureEmbedder& embedder, std::uint64_t seed);

}  // namespace dat
