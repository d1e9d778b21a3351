#include "ftpg/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <functional>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "ftpg/errors.hpp"

namespace ftpg {

namespace {

std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

void validate_shape(const Shape& shape) {
  if (shape.empty()) {
    throw DimensionError("tensor shape must have at least one dimension");
  }
  for (auto d : shape) {
    if (d == 0) {
      throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    }
  }
}

void require_rank2(const Tensor& t, std::string_view op) {
  if (t.rank() != 2) {
    throw DimensionError(fmt::format("{}: expected a matrix, got shape {}", op, shape_str(t.shape())));
  }
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor() : shape_{1}, data_(1, 0.0) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != shape_product(shape_)) {
    throw DimensionError(fmt::format("data length {} does not match shape {}", data_.size(),
                                     shape_str(shape_)));
  }
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0) {
    throw DimensionError("matrix literal needs at least one row");
  }
  const std::size_t cols = rows.begin()->size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) {
      throw DimensionError("ragged matrix literal");
    }
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw IndexError(fmt::format("axis {} out of range for shape {}", axis, shape_str(shape_)));
  }
  return shape_[axis];
}

std::span<const double> Tensor::row(std::size_t r) const {
  return std::span<const double>(data_).subspan(r * last_dim(), last_dim());
}

std::span<double> Tensor::row(std::size_t r) {
  return std::span<double>(data_).subspan(r * last_dim(), last_dim());
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_product(shape) != data_.size()) {
    throw DimensionError(fmt::format("cannot reshape {} to {}", shape_str(shape_), shape_str(shape)));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

std::uint64_t checksum(const Tensor& t, std::uint64_t seed) {
  constexpr std::uint64_t kPrime = 0x100000001b3ULL;
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  auto mix = [&](std::uint64_t word) {
    for (int i = 0; i < 8; ++i) {
      h ^= (word >> (8 * i)) & 0xffU;
      h *= kPrime;
    }
  };
  for (auto d : t.shape()) mix(d);
  for (double v : t.data()) mix(std::bit_cast<std::uint64_t>(v));
  return h;
}

void require_finite(const Tensor& t, std::string_view where) {
  const auto data = t.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw NumericError(fmt::format("{}: non-finite value {} at flat index {}", where, data[i], i));
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError(fmt::format("matmul: inner dimensions disagree, {} x {}", shape_str(a.shape()),
                                     shape_str(b.shape())));
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    auto dst = out.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a.at(i, p);
      const auto src = b.row(p);
      for (std::size_t j = 0; j < n; ++j) dst[j] += aip * src[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  Tensor out({a.dim(1), a.dim(0)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t d = x.last_dim();
  if (gain.size() != d || bias.size() != d) {
    throw DimensionError(fmt::format("layer_norm: last dimension {} vs gain {} / bias {}", d,
                                     shape_str(gain.shape()), shape_str(bias.shape())));
  }
  if (!(eps > 0.0)) {
    throw ContractError("layer_norm: eps must be positive");
  }
  Tensor out(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto src = x.row(r);
    double mean = 0.0;
    for (double v : src) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : src) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    auto dst = out.row(r);
    for (std::size_t j = 0; j < d; ++j) dst[j] = gain[j] * ((src[j] - mean) * inv) + bias[j];
  }
  return out;
}

Tensor softmax(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto src = x.row(r);
    auto dst = out.row(r);
    const double mx = *std::max_element(src.begin(), src.end());
    double total = 0.0;
    for (std::size_t j = 0; j < src.size(); ++j) {
      dst[j] = std::exp(src[j] - mx);
      total += dst[j];
    }
    for (double& v : dst) v /= total;
  }
  return out;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2);
  return cdf + x * pdf;
}

Tensor gelu(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = gelu(x[i]);
  return out;
}

Tensor geglu(const Tensor& x) {
  const std::size_t width = x.last_dim();
  if (width % 2 != 0) {
    throw DimensionError(fmt::format("geglu: last dimension {} is odd", width));
  }
  const std::size_t h = width / 2;
  Shape shape = x.shape();
  shape.back() = h;
  Tensor out(shape);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto src = x.row(r);
    auto dst = out.row(r);
    for (std::size_t j = 0; j < h; ++j) dst[j] = src[j] * gelu(src[h + j]);
  }
  return out;
}

Tensor l2_normalize(const Tensor& x, double eps) {
  if (!(eps > 0.0)) {
    throw ContractError("l2_normalize: eps must be positive");
  }
  Tensor out(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto src = x.row(r);
    const double denom = std::max(norm(src), eps);
    auto dst = out.row(r);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] = src[j] / denom;
  }
  return out;
}

double cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  require_rank2(logits, "cross_entropy");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch) {
    throw DimensionError(fmt::format("cross_entropy: {} labels for {} logit rows", labels.size(), batch));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    if (labels[i] >= classes) {
      throw IndexError(fmt::format("cross_entropy: label {} in row {} is outside [0, {})", labels[i], i,
                                   classes));
    }
    const auto z = logits.row(i);
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - mx);
    total += (mx - z[labels[i]]) + std::log(s);
  }
  return total / static_cast<double>(batch);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace ftpg
