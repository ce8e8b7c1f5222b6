#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dat {

using Shape = std::vector<std::size_t>;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using ParamVector = std::vector<double>;
using Labels = std::vector<int>;

class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UnsupportedOperation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major tensor of doubles. The leading dimension is the batch.
// A Batch is a rank-4 tensor [B, C, H, W]; 2D point data uses [B, 2, 1, 1].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t batch() const { return shape_.empty() ? 0 : shape_[0]; }
  // Number of values per leading-dimension entry.
  std::size_t sample_size() const;
  Shape sample_shape() const { return Shape(shape_.begin() + (shape_.empty() ? 0 : 1), shape_.end()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> sample(std::size_t i);
  std::span<const double> sample(std::size_t i) const;

  // Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const;
  // Rows [begin, end) of the leading dimension.
  Tensor slice(std::size_t begin, std::size_t end) const;
  Tensor gather(std::span<const std::size_t> rows) const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Concatenates along the batch dimension; trailing shapes must agree.
Tensor concat(const Tensor& a, const Tensor& b);

// Row-wise view of a tensor as [B, sample_size].
Eigen::Map<const Matrix> as_matrix(const Tensor& t);
Eigen::Map<Matrix> as_matrix(Tensor& t);

Tensor from_matrix(const Matrix& m);

// Per-sample L2 norms.
std::vector<double> sample_norms(const Tensor& t);

}  // namespace dat
