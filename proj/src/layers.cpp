#include <algorithm>
#include <cmath>
#include <string>

#include "dat/model.hpp"

namespace dat {
namespace {

std::size_t spatial_size(const Shape& sample) {
  std::size_t n = 1;
  for (std::size_t i = 1; i < sample.size(); ++i) n *= sample[i];
  return n;
}

class Flatten final : public Layer {
 public:
  std::string kind() const override { return "flatten"; }
  Shape output_shape(const Shape& in) const override { return {shape_numel(in)}; }
  Tensor forward(const Tensor& x, std::span<const double>, std::span<const double>, NormMode,
                 LayerCache& cache) const override {
    cache.input = Tensor(x.shape());
    return x.reshaped({x.batch(), x.sample_size()});
  }
  Tensor backward(const Tensor& g, std::span<const double>, const LayerCache& cache, std::span<double>,
                  bool) const override {
    return g.reshaped(cache.input.shape());
  }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(*this); }
};

class Linear final : public Layer {
 public:
  Linear(std::size_t in, std::size_t out) : in_(in), out_(out) {}
  std::string kind() const override { return "linear"; }
  Shape output_shape(const Shape& in) const override {
    if (shape_numel(in) != in_) throw DomainError("linear layer expects " + std::to_string(in_) + " features");
    return {out_};
  }
  std::size_t num_parameters() const override { return in_ * out_ + out_; }

  void initialize(std::span<double> p, std::span<double>, Rng& rng) const override {
    // Kaiming-uniform weights, zero bias.
    const double bound = std::sqrt(6.0 / static_cast<double>(in_)) / std::sqrt(2.0);
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t i = 0; i < in_ * out_; ++i) p[i] = u(rng);
    for (std::size_t i = 0; i < out_; ++i) p[in_ * out_ + i] = 0.0;
  }

  Tensor forward(const Tensor& x, std::span<const double> p, std::span<const double>, NormMode,
                 LayerCache& cache) const override {
    cache.input = x.reshaped({x.batch(), x.sample_size()});
    Tensor y({x.batch(), out_});
    const auto w = weights(p);
    const Eigen::Map<const Eigen::RowVectorXd> b(p.data() + in_ * out_, static_cast<Eigen::Index>(out_));
    // row by row, so a sample's output never depends on the batch size
    const auto xm = as_matrix(cache.input);
    auto ym = as_matrix(y);
    for (Eigen::Index i = 0; i < xm.rows(); ++i) ym.row(i).noalias() = xm.row(i) * w.transpose() + b;
    return y;
  }

  Tensor backward(const Tensor& g, std::span<const double> p, const LayerCache& cache, std::span<double> pg,
                  bool need_input) const override {
    const auto gm = as_matrix(g);
    Eigen::Map<Matrix> dw(pg.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
    Eigen::Map<Eigen::RowVectorXd> db(pg.data() + in_ * out_, static_cast<Eigen::Index>(out_));
    dw.noalias() += gm.transpose() * as_matrix(cache.input);
    db += gm.colwise().sum();
    if (!need_input) return {};
    Tensor dx({g.batch(), in_});
    as_matrix(dx).noalias() = gm * weights(p);
    return dx;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Linear>(*this); }

 private:
  Eigen::Map<const Matrix> weights(std::span<const double> p) const {
    return {p.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_)};
  }
  std::size_t in_, out_;
};

// Per-channel normalization for [B, C] or [B, C, H, W] inputs.
// Parameters: gamma[C], beta[C]. Buffers: running_mean[C], running_var[C].
class BatchNorm final : public Layer {
 public:
  BatchNorm(std::size_t channels, double momentum, double eps)
      : channels_(channels), momentum_(momentum), eps_(eps) {}
  std::string kind() const override { return "batch_norm"; }
  bool is_normalization() const override { return true; }
  Shape output_shape(const Shape& in) const override {
    if (in.empty() || in[0] != channels_) throw DomainError("batch norm channel mismatch");
    return in;
  }
  std::size_t num_parameters() const override { return 2 * channels_; }
  std::size_t num_buffers() const override { return 2 * channels_; }

  void initialize(std::span<double> p, std::span<double> b, Rng&) const override {
    for (std::size_t c = 0; c < channels_; ++c) {
      p[c] = 1.0;
      p[channels_ + c] = 0.0;
      b[c] = 0.0;
      b[channels_ + c] = 1.0;
    }
  }

  Tensor forward(const Tensor& x, std::span<const double> p, std::span<const double> buf, NormMode mode,
                 LayerCache& cache) const override {
    const std::size_t batch = x.batch();
    const std::size_t hw = spatial_size(x.sample_shape());
    if (x.sample_shape().empty() || x.sample_shape()[0] != channels_) {
      throw DomainError("batch norm expects " + std::to_string(channels_) + " channels");
    }
    cache.mean.assign(channels_, 0.0);
    cache.inv_std.assign(channels_, 0.0);
    cache.batch_var.clear();
    if (mode == NormMode::BatchStats) {
      const double count = static_cast<double>(batch * hw);
      std::vector<double> var(channels_, 0.0);
      for (std::size_t c = 0; c < channels_; ++c) {
        double s = 0.0;
        for (std::size_t n = 0; n < batch; ++n)
          for (std::size_t k = 0; k < hw; ++k) s += x[(n * channels_ + c) * hw + k];
        const double mean = s / count;
        double ss = 0.0;
        for (std::size_t n = 0; n < batch; ++n)
          for (std::size_t k = 0; k < hw; ++k) {
            const double d = x[(n * channels_ + c) * hw + k] - mean;
            ss += d * d;
          }
        var[c] = ss / count;
        cache.mean[c] = mean;
        cache.inv_std[c] = 1.0 / std::sqrt(var[c] + eps_);
      }
      cache.batch_var.resize(channels_);
      for (std::size_t c = 0; c < channels_; ++c) {
        cache.batch_var[c] = count > 1 ? var[c] * count / (count - 1.0) : var[c];
      }
    } else {
      for (std::size_t c = 0; c < channels_; ++c) {
        cache.mean[c] = buf[c];
        cache.inv_std[c] = 1.0 / std::sqrt(buf[channels_ + c] + eps_);
      }
    }
    cache.aux = Tensor(x.shape());  // normalized input
    Tensor y(x.shape());
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t c = 0; c < channels_; ++c)
        for (std::size_t k = 0; k < hw; ++k) {
          const std::size_t i = (n * channels_ + c) * hw + k;
          const double xhat = (x[i] - cache.mean[c]) * cache.inv_std[c];
          cache.aux[i] = xhat;
          y[i] = p[c] * xhat + p[channels_ + c];
        }
    return y;
  }

  Tensor backward(const Tensor& g, std::span<const double> p, const LayerCache& cache, std::span<double> pg,
                  bool need_input) const override {
    const std::size_t batch = g.batch();
    const std::size_t hw = spatial_size(g.sample_shape());
    const bool batch_stats = !cache.batch_var.empty();
    std::vector<double> sum_g(channels_, 0.0), sum_gx(channels_, 0.0);
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t c = 0; c < channels_; ++c)
        for (std::size_t k = 0; k < hw; ++k) {
          const std::size_t i = (n * channels_ + c) * hw + k;
          sum_g[c] += g[i];
          sum_gx[c] += g[i] * cache.aux[i];
        }
    for (std::size_t c = 0; c < channels_; ++c) {
      pg[c] += sum_gx[c];
      pg[channels_ + c] += sum_g[c];
    }
    if (!need_input) return {};
    Tensor dx(g.shape());
    const double count = static_cast<double>(batch * hw);
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t c = 0; c < channels_; ++c) {
        const double scale = p[c] * cache.inv_std[c];
        for (std::size_t k = 0; k < hw; ++k) {
          const std::size_t i = (n * channels_ + c) * hw + k;
          if (batch_stats) {
            dx[i] = scale * (g[i] - sum_g[c] / count - cache.aux[i] * sum_gx[c] / count);
          } else {
            dx[i] = scale * g[i];
          }
        }
      }
    return dx;
  }

  void commit(const LayerCache& cache, std::span<double> buf) const override {
    if (cache.batch_var.empty()) return;
    for (std::size_t c = 0; c < channels_; ++c) {
      buf[c] = (1.0 - momentum_) * buf[c] + momentum_ * cache.mean[c];
      buf[channels_ + c] = (1.0 - momentum_) * buf[channels_ + c] + momentum_ * cache.batch_var[c];
    }
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm>(*this); }

 private:
  std::size_t channels_;
  double momentum_, eps_;
};

class Activation final : public Layer {
 public:
  enum class Fn { SiLU, ReLU, Tanh };
  explicit Activation(Fn fn) : fn_(fn) {}
  std::string kind() const override {
    switch (fn_) {
      case Fn::SiLU: return "silu";
      case Fn::ReLU: return "relu";
      case Fn::Tanh: return "tanh";
    }
    return "?";
  }
  Shape output_shape(const Shape& in) const override { return in; }

  Tensor forward(const Tensor& x, std::span<const double>, std::span<const double>, NormMode,
                 LayerCache& cache) const override {
    cache.input = x;
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double v = x[i];
      switch (fn_) {
        case Fn::SiLU: y[i] = v / (1.0 + std::exp(-v)); break;
        case Fn::ReLU: y[i] = v > 0 ? v : 0.0; break;
        case Fn::Tanh: y[i] = std::tanh(v); break;
      }
    }
    return y;
  }

  Tensor backward(const Tensor& g, std::span<const double>, const LayerCache& cache, std::span<double>,
                  bool need_input) const override {
    if (!need_input) return {};
    Tensor dx(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = cache.input[i];
      double d = 0.0;
      switch (fn_) {
        case Fn::SiLU: {
          const double s = 1.0 / (1.0 + std::exp(-v));
          d = s * (1.0 + v * (1.0 - s));
          break;
        }
        case Fn::ReLU: d = v > 0 ? 1.0 : 0.0; break;
        case Fn::Tanh: {
          const double t = std::tanh(v);
          d = 1.0 - t * t;
          break;
        }
      }
      dx[i] = g[i] * d;
    }
    return dx;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Activation>(*this); }

 private:
  Fn fn_;
};

// 3x3 convolution, stride 1, zero padding 1, via im2col.
class Conv3x3 final : public Layer {
 public:
  Conv3x3(std::size_t cin, std::size_t cout) : cin_(cin), cout_(cout) {}
  std::string kind() const override { return "conv3x3"; }
  Shape output_shape(const Shape& in) const override {
    if (in.size() != 3 || in[0] != cin_) throw DomainError("conv3x3 expects [" + std::to_string(cin_) + ", H, W]");
    return {cout_, in[1], in[2]};
  }
  std::size_t num_parameters() const override { return cout_ * cin_ * 9 + cout_; }

  void initialize(std::span<double> p, std::span<double>, Rng& rng) const override {
    const double fan_in = static_cast<double>(cin_ * 9);
    const double bound = std::sqrt(6.0 / fan_in) / std::sqrt(2.0);
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t i = 0; i < cout_ * cin_ * 9; ++i) p[i] = u(rng);
    for (std::size_t i = 0; i < cout_; ++i) p[cout_ * cin_ * 9 + i] = 0.0;
  }

  Tensor forward(const Tensor& x, std::span<const double> p, std::span<const double>, NormMode,
                 LayerCache& cache) const override {
    const std::size_t h = x.dim(2), w = x.dim(3);
    cache.input = x;
    Tensor y({x.batch(), cout_, h, w});
    const auto wm = weights(p);
    const Eigen::Map<const Eigen::VectorXd> b(p.data() + cout_ * cin_ * 9, static_cast<Eigen::Index>(cout_));
    Matrix cols;
    for (std::size_t n = 0; n < x.batch(); ++n) {
      im2col(x, n, h, w, cols);
      Eigen::Map<Matrix> out(y.data() + n * cout_ * h * w, static_cast<Eigen::Index>(cout_),
                             static_cast<Eigen::Index>(h * w));
      out.noalias() = wm * cols;
      out.colwise() += b;
    }
    return y;
  }

  Tensor backward(const Tensor& g, std::span<const double> p, const LayerCache& cache, std::span<double> pg,
                  bool need_input) const override {
    const Tensor& x = cache.input;
    const std::size_t h = x.dim(2), w = x.dim(3);
    Eigen::Map<Matrix> dw(pg.data(), static_cast<Eigen::Index>(cout_), static_cast<Eigen::Index>(cin_ * 9));
    Eigen::Map<Eigen::VectorXd> db(pg.data() + cout_ * cin_ * 9, static_cast<Eigen::Index>(cout_));
    const auto wm = weights(p);
    Tensor dx;
    if (need_input) dx = Tensor(x.shape());
    Matrix cols, dcols;
    for (std::size_t n = 0; n < x.batch(); ++n) {
      const Eigen::Map<const Matrix> gn(g.data() + n * cout_ * h * w, static_cast<Eigen::Index>(cout_),
                                        static_cast<Eigen::Index>(h * w));
      im2col(x, n, h, w, cols);
      dw.noalias() += gn * cols.transpose();
      db += gn.rowwise().sum();
      if (need_input) {
        dcols.noalias() = wm.transpose() * gn;
        col2im(dcols, n, h, w, dx);
      }
    }
    return dx;
  }

  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv3x3>(*this); }

 private:
  Eigen::Map<const Matrix> weights(std::span<const double> p) const {
    return {p.data(), static_cast<Eigen::Index>(cout_), static_cast<Eigen::Index>(cin_ * 9)};
  }

  void im2col(const Tensor& x, std::size_t n, std::size_t h, std::size_t w, Matrix& cols) const {
    cols.setZero(static_cast<Eigen::Index>(cin_ * 9), static_cast<Eigen::Index>(h * w));
    for (std::size_t c = 0; c < cin_; ++c)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const auto row = static_cast<Eigen::Index>((c * 3 + static_cast<std::size_t>(ky)) * 3 + static_cast<std::size_t>(kx));
          for (std::size_t i = 0; i < h; ++i) {
            const long yy = static_cast<long>(i) + ky - 1;
            if (yy < 0 || yy >= static_cast<long>(h)) continue;
            for (std::size_t j = 0; j < w; ++j) {
              const long xx = static_cast<long>(j) + kx - 1;
              if (xx < 0 || xx >= static_cast<long>(w)) continue;
              cols(row, static_cast<Eigen::Index>(i * w + j)) =
                  x[((n * cin_ + c) * h + static_cast<std::size_t>(yy)) * w + static_cast<std::size_t>(xx)];
            }
          }
        }
  }

  void col2im(const Matrix& dcols, std::size_t n, std::size_t h, std::size_t w, Tensor& dx) const {
    for (std::size_t c = 0; c < cin_; ++c)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const auto row = static_cast<Eigen::Index>((c * 3 + static_cast<std::size_t>(ky)) * 3 + static_cast<std::size_t>(kx));
          for (std::size_t i = 0; i < h; ++i) {
            const long yy = static_cast<long>(i) + ky - 1;
            if (yy < 0 || yy >= static_cast<long>(h)) continue;
            for (std::size_t j = 0; j < w; ++j) {
              const long xx = static_cast<long>(j) + kx - 1;
              if (xx < 0 || xx >= static_cast<long>(w)) continue;
              dx[((n * cin_ + c) * h + static_cast<std::size_t>(yy)) * w + static_cast<std::size_t>(xx)] +=
                  dcols(row, static_cast<Eigen::Index>(i * w + j));
            }
          }
        }
  }

  std::size_t cin_, cout_;
};

class AvgPool2 final : public Layer {
 public:
  std::string kind() const override { return "avg_pool2"; }
  Shape output_shape(const Shape& in) const override {
    if (in.size() != 3 || in[1] % 2 || in[2] % 2) throw DomainError("avg_pool2 expects even spatial dims");
    return {in[0], in[1] / 2, in[2] / 2};
  }
  Tensor forward(const Tensor& x, std::span<const double>, std::span<const double>, NormMode,
                 LayerCache& cache) const override {
    cache.input = Tensor(x.shape());
    const std::size_t c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor y({x.batch(), c, h / 2, w / 2});
    for (std::size_t n = 0; n < x.batch(); ++n)
      for (std::size_t k = 0; k < c; ++k)
        for (std::size_t i = 0; i < h / 2; ++i)
          for (std::size_t j = 0; j < w / 2; ++j) {
            const std::size_t base = ((n * c + k) * h + 2 * i) * w + 2 * j;
            y[((n * c + k) * (h / 2) + i) * (w / 2) + j] =
                0.25 * (x[base] + x[base + 1] + x[base + w] + x[base + w + 1]);
          }
    return y;
  }
  Tensor backward(const Tensor& g, std::span<const double>, const LayerCache& cache, std::span<double>,
                  bool need_input) const override {
    if (!need_input) return {};
    const Shape& s = cache.input.shape();
    const std::size_t c = s[1], h = s[2], w = s[3];
    Tensor dx(s);
    for (std::size_t n = 0; n < s[0]; ++n)
      for (std::size_t k = 0; k < c; ++k)
        for (std::size_t i = 0; i < h / 2; ++i)
          for (std::size_t j = 0; j < w / 2; ++j) {
            const double v = 0.25 * g[((n * c + k) * (h / 2) + i) * (w / 2) + j];
            const std::size_t base = ((n * c + k) * h + 2 * i) * w + 2 * j;
            dx[base] += v;
            dx[base + 1] += v;
            dx[base + w] += v;
            dx[base + w + 1] += v;
          }
    return dx;
  }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<AvgPool2>(*this); }
};

class GlobalAvgPool final : public Layer {
 public:
  std::string kind() const override { return "global_avg_pool"; }
  Shape output_shape(const Shape& in) const override {
    if (in.size() != 3) throw DomainError("global_avg_pool expects [C, H, W]");
    return {in[0]};
  }
  Tensor forward(const Tensor& x, std::span<const double>, std::span<const double>, NormMode,
                 LayerCache& cache) const override {
    cache.input = Tensor(x.shape());
    const std::size_t c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor y({x.batch(), c});
    for (std::size_t n = 0; n < x.batch(); ++n)
      for (std::size_t k = 0; k < c; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < hw; ++i) s += x[(n * c + k) * hw + i];
        y[n * c + k] = s / static_cast<double>(hw);
      }
    return y;
  }
  Tensor backward(const Tensor& g, std::span<const double>, const LayerCache& cache, std::span<double>,
                  bool need_input) const override {
    if (!need_input) return {};
    const Shape& s = cache.input.shape();
    const std::size_t c = s[1], hw = s[2] * s[3];
    Tensor dx(s);
    for (std::size_t n = 0; n < s[0]; ++n)
      for (std::size_t k = 0; k < c; ++k)
        for (std::size_t i = 0; i < hw; ++i) dx[(n * c + k) * hw + i] = g[n * c + k] / static_cast<double>(hw);
    return dx;
  }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }
};

class Quantize final : public Layer {
 public:
  explicit Quantize(int levels) : levels_(levels) {
    if (levels < 2) throw DomainError("quantize needs at least 2 levels");
  }
  std::string kind() const override { return "quantize"; }
  bool differentiable() const override { return false; }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& x, std::span<const double>, std::span<const double>, NormMode,
                 LayerCache&) const override {
    Tensor y(x.shape());
    const double q = levels_ - 1;
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::round(std::clamp(x[i], 0.0, 1.0) * q) / q;
    return y;
  }
  Tensor backward(const Tensor&, std::span<const double>, const LayerCache&, std::span<double>,
                  bool) const override {
    throw UnsupportedOperation("quantize layer has no gradient");
  }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Quantize>(*this); }

 private:
  int levels_;
};

}  // namespace

std::unique_ptr<Layer> make_flatten() { return std::make_unique<Flatten>(); }
std::unique_ptr<Layer> make_linear(std::size_t in, std::size_t out) { return std::make_unique<Linear>(in, out); }
std::unique_ptr<Layer> make_batch_norm(std::size_t channels, double momentum, double eps) {
  return std::make_unique<BatchNorm>(channels, momentum, eps);
}
std::unique_ptr<Layer> make_activation(const std::string& name) {
  if (name == "silu") return std::make_unique<Activation>(Activation::Fn::SiLU);
  if (name == "relu") return std::make_unique<Activation>(Activation::Fn::ReLU);
  if (name == "tanh") return std::make_unique<Activation>(Activation::Fn::Tanh);
  throw DomainError("unknown activation '" + name + "'");
}
std::unique_ptr<Layer> make_conv3x3(std::size_t in_channels, std::size_t out_channels) {
  return std::make_unique<Conv3x3>(in_channels, out_channels);
}
std::unique_ptr<Layer> make_avg_pool2() { return std::make_unique<AvgPool2>(); }
std::unique_ptr<Layer> make_global_avg_pool() { return std::make_unique<GlobalAvgPool>(); }
std::unique_ptr<Layer> make_quantize(int levels) { return std::make_unique<Quantize>(levels); }

}  // namespace dat
