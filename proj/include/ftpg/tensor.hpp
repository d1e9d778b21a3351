#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ftpg {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kNormalizeEps = 1e-8;

/// Dense row-major tensor of doubles.
///
/// Every dimension is positive and the data length always equals the product
/// of the shape. Kernels treat a tensor of shape [..., n] as a matrix of
/// rows() rows with last_dim() columns.
class Tensor {
 public:
  /// A single zero, shape [1].
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t last_dim() const noexcept { return shape_.back(); }
  std::size_t rows() const noexcept { return data_.size() / shape_.back(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  // (row, column) access over the rows() x last_dim() view.
  double at(std::size_t r, std::size_t c) const { return data_[r * last_dim() + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * last_dim() + c]; }

  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);

  Tensor reshaped(Shape shape) const;
  bool all_finite() const noexcept;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Equality of shape and of every value's bit pattern.
bool bitwise_equal(const Tensor& a, const Tensor& b);

/// FNV-1a over shape and raw value bytes; stable across platforms.
std::uint64_t checksum(const Tensor& t, std::uint64_t seed = 0);

/// Throws NumericError naming `where` when any value is NaN or infinite.
void require_finite(const Tensor& t, std::string_view where);

// Value-level kernels. The differentiable versions in autograd.hpp wrap these.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = kLayerNormEps);
Tensor softmax(const Tensor& x);
double gelu(double x);
double gelu_derivative(double x);
Tensor gelu(const Tensor& x);
Tensor geglu(const Tensor& x);
Tensor l2_normalize(const Tensor& x, double eps = kNormalizeEps);
double cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

}  // namespace ftpg
