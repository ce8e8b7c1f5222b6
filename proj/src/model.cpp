#include <cmath>
#include <string>

#include "dat/model.hpp"

namespace dat {

std::string to_string(NormMode mode) { return mode == NormMode::BatchStats ? "batch_stats" : "frozen_stats"; }

NormMode norm_mode_from_string(const std::string& s) {
  if (s == "batch_stats") return NormMode::BatchStats;
  if (s == "frozen_stats") return NormMode::FrozenStats;
  throw DomainError("unknown norm mode '" + s + "'");
}

Matrix logits(const EnergyModel& model, const Tensor& x) { return model.forward(x).logits; }

Tensor input_gradient(const EnergyModel& model, const Tensor& x, const Matrix& dobjective_dlogits) {
  const ForwardPass pass = model.forward(x);
  return model.backward(pass, dobjective_dlogits, {.input = true, .params = false}).input;
}

Network::Network(Shape input_shape, std::size_t classes) : input_shape_(std::move(input_shape)), classes_(classes) {
  if (classes_ < 2) throw DomainError("a classifier needs at least 2 classes");
}

Network::Network(const Network& other)
    : input_shape_(other.input_shape_),
      classes_(other.classes_),
      param_offsets_(other.param_offsets_),
      buffer_offsets_(other.buffer_offsets_),
      params_(other.params_),
      buffers_(other.buffers_),
      mode_(other.mode_),
      required_mode_(other.required_mode_),
      arch_(other.arch_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void Network::add(std::unique_ptr<Layer> layer) {
  Shape shape = input_shape_;
  for (const auto& l : layers_) shape = l->output_shape(shape);
  (void)layer->output_shape(shape);  // validates compatibility
  param_offsets_.push_back(params_.size());
  buffer_offsets_.push_back(buffers_.size());
  params_.resize(params_.size() + layer->num_parameters(), 0.0);
  buffers_.resize(buffers_.size() + layer->num_buffers(), 0.0);
  layers_.push_back(std::move(layer));
}

void Network::initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->initialize(std::span(params_).subspan(param_offsets_[i], layers_[i]->num_parameters()),
                           std::span(buffers_).subspan(buffer_offsets_[i], layers_[i]->num_buffers()), rng);
  }
}

void Network::check_input(const Tensor& x) const {
  if (x.sample_shape() != input_shape_) {
    throw DomainError("input shape " + shape_string(x.shape()) + " does not match model input " +
                      shape_string(input_shape_));
  }
  if (required_mode_ && mode_ != *required_mode_) {
    throw ContractViolation("forward pass in " + to_string(mode_) + " mode while the model requires " +
                            to_string(*required_mode_));
  }
}

ForwardPass Network::forward(const Tensor& x) const {
  check_input(x);
  ForwardPass pass;
  pass.input = x;
  pass.caches.resize(layers_.size());
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = *layers_[i];
    h = l.forward(h, std::span(params_).subspan(param_offsets_[i], l.num_parameters()),
                  std::span(buffers_).subspan(buffer_offsets_[i], l.num_buffers()), mode_, pass.caches[i]);
  }
  if (h.sample_size() != classes_) {
    throw DomainError("network output has " + std::to_string(h.sample_size()) + " features, expected " +
                      std::to_string(classes_));
  }
  pass.logits = as_matrix(h);
  return pass;
}

Gradients Network::backward(const ForwardPass& pass, const Matrix& dlogits, GradRequest request) const {
  if (dlogits.rows() != pass.logits.rows() || dlogits.cols() != pass.logits.cols()) {
    throw DomainError("logit gradient shape mismatch");
  }
  Gradients out;
  if (request.params) out.params.assign(params_.size(), 0.0);
  std::vector<double> scratch;
  if (!request.params) scratch.assign(params_.size(), 0.0);
  std::span<double> pg = request.params ? std::span<double>(out.params) : std::span<double>(scratch);

  // Lowest layer whose input gradient is still needed.
  std::size_t stop = 0;
  if (!request.input) {
    stop = layers_.size();
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (layers_[i]->num_parameters() > 0) {
        stop = i;
        break;
      }
    }
  }

  Tensor g = from_matrix(dlogits);
  for (std::size_t i = layers_.size(); i-- > stop;) {
    const auto& l = *layers_[i];
    const bool need_input = request.input || i > stop;
    if (!l.differentiable() && (need_input || l.num_parameters() > 0)) {
      throw UnsupportedOperation("layer '" + l.kind() + "' is not differentiable");
    }
    g = l.backward(g, std::span(params_).subspan(param_offsets_[i], l.num_parameters()), pass.caches[i],
                   pg.subspan(param_offsets_[i], l.num_parameters()), need_input);
  }
  if (request.input) out.input = g.reshaped(pass.input.shape());
  return out;
}

void Network::commit_batch_statistics(const ForwardPass& pass) {
  if (pass.caches.size() != layers_.size()) throw DomainError("forward pass does not belong to this network");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->commit(pass.caches[i], std::span(buffers_).subspan(buffer_offsets_[i], layers_[i]->num_buffers()));
  }
}

Matrix Network::features(const Tensor& x, std::size_t num_layers) const {
  check_input(x);
  Tensor h = x;
  LayerCache cache;
  for (std::size_t i = 0; i < std::min(num_layers, layers_.size()); ++i) {
    const auto& l = *layers_[i];
    h = l.forward(h, std::span(params_).subspan(param_offsets_[i], l.num_parameters()),
                  std::span(buffers_).subspan(buffer_offsets_[i], l.num_buffers()), mode_, cache);
  }
  return as_matrix(h);
}

nlohmann::json to_json(const ArchitectureSpec& spec) {
  return {{"kind", spec.kind},       {"input_shape", spec.input_shape}, {"classes", spec.classes},
          {"hidden", spec.hidden},   {"activation", spec.activation},   {"batch_norm", spec.batch_norm},
          {"seed", spec.seed}};
}

ArchitectureSpec architecture_from_json(const nlohmann::json& j) {
  ArchitectureSpec s;
  s.kind = j.at("kind").get<std::string>();
  s.input_shape = j.at("input_shape").get<Shape>();
  s.classes = j.at("classes").get<std::size_t>();
  s.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  s.activation = j.at("activation").get<std::string>();
  s.batch_norm = j.at("batch_norm").get<bool>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

Network build_network(const ArchitectureSpec& spec) {
  if (spec.input_shape.size() != 3) throw DomainError("input shape must be [C, H, W]");
  Network net(spec.input_shape, spec.classes);
  const std::size_t in = shape_numel(spec.input_shape);
  if (spec.kind == "linear") {
    net.add(make_flatten());
    net.add(make_linear(in, spec.classes));
  } else if (spec.kind == "mlp") {
    net.add(make_flatten());
    std::size_t width = in;
    for (std::size_t h : spec.hidden) {
      net.add(make_linear(width, h));
      if (spec.batch_norm) net.add(make_batch_norm(h));
      net.add(make_activation(spec.activation));
      width = h;
    }
    net.add(make_linear(width, spec.classes));
  } else if (spec.kind == "convnet") {
    // conv blocks with 2x2 pooling between them, global pooling, linear head
    if (spec.hidden.empty()) throw DomainError("convnet needs at least one channel width");
    std::size_t channels = spec.input_shape[0];
    for (std::size_t b = 0; b < spec.hidden.size(); ++b) {
      if (b > 0) net.add(make_avg_pool2());
      net.add(make_conv3x3(channels, spec.hidden[b]));
      if (spec.batch_norm) net.add(make_batch_norm(spec.hidden[b]));
      net.add(make_activation(spec.activation));
      channels = spec.hidden[b];
    }
    net.add(make_global_avg_pool());
    net.add(make_linear(channels, spec.classes));
  } else {
    throw DomainError("unknown architecture '" + spec.kind + "'");
  }
  net.initialize(spec.seed);
  net.set_architecture(spec);
  return net;
}

EmaShadow::EmaShadow(std::span<const double> params, double decay)
    : shadow_(params.begin(), params.end()), decay_(decay) {
  if (!(decay > 0.0 && decay < 1.0)) throw DomainError("EMA decay must lie in (0, 1)");
}

void EmaShadow::update(std::span<const double> params) {
  if (params.size() != shadow_.size()) throw DomainError("EMA size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) shadow_[i] = decay_ * shadow_[i] + (1.0 - decay_) * params[i];
}

Network with_parameters(const Network& model, std::span<const double> params) {
  if (params.size() != model.parameters().size()) throw DomainError("parameter count mismatch");
  Network copy(model);
  std::copy(params.begin(), params.end(), copy.parameters().begin());
  return copy;
}

}  // namespace dat
