#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dat/tensor.hpp"
#include "dat/util.hpp"

namespace dat {

// BatchStats: normalization layers use statistics of the current batch.
// FrozenStats: normalization layers use stored running statistics, so each
// sample's output is independent of its batch companions.
enum class NormMode { BatchStats, FrozenStats };

std::string to_string(NormMode mode);
NormMode norm_mode_from_string(const std::string& s);

// Raised when a model is used in a way its current stage forbids.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct LayerCache {
  Tensor input;
  Tensor aux;
  std::vector<double> mean;
  std::vector<double> inv_std;
  std::vector<double> batch_var;  // unbiased, for running-statistic updates
};

struct ForwardPass {
  Matrix logits;
  Tensor input;
  std::vector<LayerCache> caches;
};

struct GradRequest {
  bool input = true;
  bool params = true;
};

struct Gradients {
  Tensor input;
  ParamVector params;
};

// A differentiable classifier whose logits define an energy model.
class EnergyModel {
 public:
  virtual ~EnergyModel() = default;

  virtual std::size_t num_classes() const = 0;
  // Per-sample input shape [C, H, W].
  virtual const Shape& input_shape() const = 0;

  virtual std::span<double> parameters() = 0;
  virtual std::span<const double> parameters() const = 0;
  virtual std::span<const double> buffers() const { return {}; }

  virtual NormMode norm_mode() const = 0;
  virtual void set_norm_mode(NormMode mode) = 0;

  // Forward passes never touch running statistics; see commit_batch_statistics.
  virtual ForwardPass forward(const Tensor& x) const = 0;
  virtual Gradients backward(const ForwardPass& pass, const Matrix& dlogits, GradRequest request) const = 0;

  // Folds the batch statistics recorded in `pass` into the running statistics.
  // No-op in FrozenStats mode and for models without normalization layers.
  virtual void commit_batch_statistics(const ForwardPass& pass) { (void)pass; }
};

Matrix logits(const EnergyModel& model, const Tensor& x);

// Gradient wrt x of sum_i <dobjective_dlogits[i], logits[i]> evaluated at x.
Tensor input_gradient(const EnergyModel& model, const Tensor& x, const Matrix& dobjective_dlogits);

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  // Per-sample shapes, excluding the batch dimension.
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual std::size_t num_parameters() const { return 0; }
  virtual std::size_t num_buffers() const { return 0; }
  virtual bool differentiable() const { return true; }
  virtual bool is_normalization() const { return false; }

  virtual void initialize(std::span<double> params, std::span<double> buffers, Rng& rng) const {
    (void)params, (void)buffers, (void)rng;
  }
  virtual Tensor forward(const Tensor& x, std::span<const double> params, std::span<const double> buffers,
                         NormMode mode, LayerCache& cache) const = 0;
  // Accumulates into `param_grad`; returns the input gradient when `need_input`.
  virtual Tensor backward(const Tensor& grad_out, std::span<const double> params, const LayerCache& cache,
                          std::span<double> param_grad, bool need_input) const = 0;
  virtual void commit(const LayerCache& cache, std::span<double> buffers) const { (void)cache, (void)buffers; }

  virtual std::unique_ptr<Layer> clone() const = 0;
};

std::unique_ptr<Layer> make_flatten();
std::unique_ptr<Layer> make_linear(std::size_t in, std::size_t out);
std::unique_ptr<Layer> make_batch_norm(std::size_t channels, double momentum = 0.1, double eps = 1e-5);
std::unique_ptr<Layer> make_activation(const std::string& name);  // silu | relu | tanh
std::unique_ptr<Layer> make_conv3x3(std::size_t in_channels, std::size_t out_channels);
std::unique_ptr<Layer> make_avg_pool2();
std::unique_ptr<Layer> make_global_avg_pool();
// Snaps values to `levels` evenly spaced points in [0, 1]; has no gradient.
std::unique_ptr<Layer> make_quantize(int levels);

struct ArchitectureSpec {
  std::string kind = "mlp";  // mlp | convnet | linear
  Shape input_shape{2, 1, 1};
  std::size_t classes = 2;
  std::vector<std::size_t> hidden{64, 64};
  std::string activation = "silu";
  bool batch_norm = true;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const ArchitectureSpec& spec);
ArchitectureSpec architecture_from_json(const nlohmann::json& j);

// Sequential network with a single flat parameter vector and a flat buffer
// vector holding normalization running statistics.
class Network final : public EnergyModel {
 public:
  Network(Shape input_shape, std::size_t classes);
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  void add(std::unique_ptr<Layer> layer);
  void initialize(std::uint64_t seed);

  std::size_t num_classes() const override { return classes_; }
  const Shape& input_shape() const override { return input_shape_; }
  std::span<double> parameters() override { return params_; }
  std::span<const double> parameters() const override { return params_; }
  std::span<const double> buffers() const override { return buffers_; }
  std::span<double> mutable_buffers() { return buffers_; }

  NormMode norm_mode() const override { return mode_; }
  void set_norm_mode(NormMode mode) override { mode_ = mode; }

  // While set, any forward pass in a different mode raises ContractViolation.
  void require_norm_mode(std::optional<NormMode> mode) { required_mode_ = mode; }
  std::optional<NormMode> required_norm_mode() const { return required_mode_; }

  ForwardPass forward(const Tensor& x) const override;
  Gradients backward(const ForwardPass& pass, const Matrix& dlogits, GradRequest request) const override;
  void commit_batch_statistics(const ForwardPass& pass) override;

  // Output of the first `num_layers` layers, flattened to [B, D].
  Matrix features(const Tensor& x, std::size_t num_layers) const;
  std::size_t num_layers() const { return layers_.size(); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }

  std::uint64_t buffer_hash() const { return fnv1a(std::span<const double>(buffers_)); }
  std::uint64_t parameter_hash() const { return fnv1a(std::span<const double>(params_)); }

  const std::optional<ArchitectureSpec>& architecture() const { return arch_; }
  void set_architecture(ArchitectureSpec spec) { arch_ = std::move(spec); }

 private:
  void check_input(const Tensor& x) const;

  Shape input_shape_;
  std::size_t classes_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<std::size_t> param_offsets_;
  std::vector<std::size_t> buffer_offsets_;
  std::vector<double> params_;
  std::vector<double> buffers_;
  NormMode mode_ = NormMode::BatchStats;
  std::optional<NormMode> required_mode_;
  std::optional<ArchitectureSpec> arch_;
};

Network build_network(const ArchitectureSpec& spec);

// Exponential moving average of a parameter vector:
// shadow <- decay * shadow + (1 - decay) * params.
class EmaShadow {
 public:
  EmaShadow() = default;
  EmaShadow(std::span<const double> params, double decay);

  void update(std::span<const double> params);
  std::span<const double> values() const { return shadow_; }
  std::vector<double>& mutable_values() { return shadow_; }
  double decay() const { return decay_; }

 private:
  std::vector<double> shadow_;
  double decay_ = 0.999;
};

// Copy of `model` whose parameters are replaced by the shadow values.
Network with_parameters(const Network& model, std::span<const double> params);

}  // namespace dat
