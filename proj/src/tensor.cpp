#include "dat/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace dat {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw DomainError("tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                      shape_string(shape_));
  }
}

std::size_t Tensor::sample_size() const {
  if (shape_.empty()) return 0;
  return shape_numel(Shape(shape_.begin() + 1, shape_.end()));
}

std::span<double> Tensor::sample(std::size_t i) {
  const std::size_t n = sample_size();
  return {data_.data() + i * n, n};
}

std::span<const double> Tensor::sample(std::size_t i) const {
  const std::size_t n = sample_size();
  return {data_.data() + i * n, n};
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw DomainError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > batch()) throw DomainError("slice out of range");
  Shape s = shape_;
  s[0] = end - begin;
  const std::size_t n = sample_size();
  return Tensor(std::move(s), std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * n),
                                                  data_.begin() + static_cast<std::ptrdiff_t>(end * n)));
}

Tensor Tensor::gather(std::span<const std::size_t> rows) const {
  Shape s = shape_;
  s[0] = rows.size();
  Tensor out(std::move(s));
  const std::size_t n = sample_size();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= batch()) throw DomainError("gather index out of range");
    std::copy_n(data_.data() + rows[r] * n, n, out.data() + r * n);
  }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.sample_shape() != b.sample_shape()) {
    throw DomainError("concat shape mismatch: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  Shape s = a.shape();
  s[0] += b.batch();
  std::vector<double> d;
  d.reserve(a.size() + b.size());
  d.insert(d.end(), a.values().begin(), a.values().end());
  d.insert(d.end(), b.values().begin(), b.values().end());
  return Tensor(std::move(s), std::move(d));
}

Eigen::Map<const Matrix> as_matrix(const Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.batch()), static_cast<Eigen::Index>(t.sample_size())};
}

Eigen::Map<Matrix> as_matrix(Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.batch()), static_cast<Eigen::Index>(t.sample_size())};
}

Tensor from_matrix(const Matrix& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  as_matrix(t) = m;
  return t;
}

std::vector<double> sample_norms(const Tensor& t) {
  std::vector<double> out(t.batch());
  for (std::size_t i = 0; i < t.batch(); ++i) {
    double s = 0.0;
    for (double v : t.sample(i)) s += v * v;
    out[i] = std::sqrt(s);
  }
  return out;
}

}  // namespace dat
