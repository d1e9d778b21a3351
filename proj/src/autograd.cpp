#include "ftpg/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <utility>

#include <fmt/format.h>

#include "ftpg/errors.hpp"

namespace ftpg {

using detail::Node;

namespace {

void require_same_shape(const Var& a, const Var& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(fmt::format("{}: shapes {} and {} differ", op, shape_str(a.shape()),
                                     shape_str(b.shape())));
  }
}

void require_matrix(const Var& x, std::string_view op) {
  if (x.shape().size() != 2) {
    throw DimensionError(fmt::format("{}: expected a matrix, got {}", op, shape_str(x.shape())));
  }
}

void accumulate(Node& parent, const Tensor& delta) {
  auto dst = parent.grad.data();
  auto src = delta.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Var make_var(std::string_view op, Tensor value, std::vector<Var> parents,
             std::function<void(Node&)> propagate) {
  require_finite(value, op);
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  node->parents.reserve(parents.size());
  for (auto& p : parents) {
    node->requires_grad = node->requires_grad || p.requires_grad();
    node->parents.push_back(p.node());
  }
  if (node->requires_grad) node->propagate = std::move(propagate);
  return Var(std::move(node));
}

Var constant(Tensor value) {
  require_finite(value, "constant");
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "constant";
  return Var(std::move(node));
}

Var leaf(Parameter& param) {
  require_finite(param.value, param.name);
  auto node = std::make_shared<Node>();
  node->value = param.value;
  node->op = "parameter";
  node->param = &param;
  node->requires_grad = true;
  return Var(std::move(node));
}

Var matmul(const Var& a, const Var& b) {
  Tensor out = matmul(a.value(), b.value());
  return make_var("matmul", std::move(out), {a, b}, [](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    const Tensor& g = self.grad;
    const std::size_t m = na.value.dim(0), k = na.value.dim(1), n = nb.value.dim(1);
    if (na.requires_grad) {
      // dA = dC * B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g.at(i, j) * nb.value.at(p, j);
          na.grad.at(i, p) += s;
        }
    }
    if (nb.requires_grad) {
      // dB = A^T * dC
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = na.value.at(i, p);
          for (std::size_t j = 0; j < n; ++j) nb.grad.at(p, j) += aip * g.at(i, j);
        }
    }
  });
}

Var transpose(const Var& a) {
  return make_var("transpose", transpose(a.value()), {a}, [](Node& self) {
    accumulate(*self.parents[0], transpose(self.grad));
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_var("add", std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) accumulate(*p, self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_var("sub", std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) accumulate(*self.parents[0], self.grad);
    if (self.parents[1]->requires_grad) {
      auto dst = self.parents[1]->grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_var("mul", std::move(out), {a, b}, [](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (na.requires_grad) na.grad[i] += self.grad[i] * nb.value[i];
      if (nb.requires_grad) nb.grad[i] += self.grad[i] * na.value[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  return make_var("scale", std::move(out), {a}, [factor](Node& self) {
    auto dst = self.parents[0]->grad.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * self.grad[i];
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return make_var("sum", Tensor::scalar(s), {a}, [](Node& self) {
    for (double& v : self.parents[0]->grad.data()) v += self.grad[0];
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  Tensor out = layer_norm(x.value(), gain.value(), bias.value(), eps);
  return make_var("layer_norm", std::move(out), {x, gain, bias}, [eps](Node& self) {
    Node& nx = *self.parents[0];
    Node& ng = *self.parents[1];
    Node& nb = *self.parents[2];
    const std::size_t d = nx.value.last_dim();
    const double inv_d = 1.0 / static_cast<double>(d);
    std::vector<double> xhat(d), dxhat(d);
    for (std::size_t r = 0; r < nx.value.rows(); ++r) {
      const auto src = nx.value.row(r);
      const auto dy = self.grad.row(r);
      double mean = 0.0;
      for (double v : src) mean += v;
      mean *= inv_d;
      double var = 0.0;
      for (double v : src) var += (v - mean) * (v - mean);
      var *= inv_d;
      const double inv = 1.0 / std::sqrt(var + eps);
      double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        xhat[j] = (src[j] - mean) * inv;
        dxhat[j] = dy[j] * ng.value[j];
        mean_dxhat += dxhat[j];
        mean_dxhat_xhat += dxhat[j] * xhat[j];
        if (ng.requires_grad) ng.grad[j] += dy[j] * xhat[j];
        if (nb.requires_grad) nb.grad[j] += dy[j];
      }
      if (nx.requires_grad) {
        mean_dxhat *= inv_d;
        mean_dxhat_xhat *= inv_d;
        auto dx = nx.grad.row(r);
        for (std::size_t j = 0; j < d; ++j) dx[j] += inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
      }
    }
  });
}

Var softmax(const Var& x) {
  Tensor out = softmax(x.value());
  return make_var("softmax", std::move(out), {x}, [](Node& self) {
    Node& nx = *self.parents[0];
    for (std::size_t r = 0; r < self.value.rows(); ++r) {
      const auto y = self.value.row(r);
      const auto dy = self.grad.row(r);
      const double inner = dot(y, dy);
      auto dx = nx.grad.row(r);
      for (std::size_t j = 0; j < y.size(); ++j) dx[j] += y[j] * (dy[j] - inner);
    }
  });
}

Var gelu(const Var& x) {
  return make_var("gelu", gelu(x.value()), {x}, [](Node& self) {
    Node& nx = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) nx.grad[i] += self.grad[i] * gelu_derivative(nx.value[i]);
  });
}

Var geglu(const Var& x) {
  return make_var("geglu", geglu(x.value()), {x}, [](Node& self) {
    Node& nx = *self.parents[0];
    const std::size_t h = self.value.last_dim();
    for (std::size_t r = 0; r < self.value.rows(); ++r) {
      const auto src = nx.value.row(r);
      const auto dy = self.grad.row(r);
      auto dx = nx.grad.row(r);
      for (std::size_t j = 0; j < h; ++j) {
        const double gate = src[h + j];
        dx[j] += dy[j] * gelu(gate);
        dx[h + j] += dy[j] * src[j] * gelu_derivative(gate);
      }
    }
  });
}

Var l2_normalize(const Var& x, double eps) {
  Tensor out = l2_normalize(x.value(), eps);
  return make_var("l2_normalize", std::move(out), {x}, [eps](Node& self) {
    Node& nx = *self.parents[0];
    for (std::size_t r = 0; r < self.value.rows(); ++r) {
      const double n = norm(nx.value.row(r));
      const auto y = self.value.row(r);
      const auto dy = self.grad.row(r);
      auto dx = nx.grad.row(r);
      if (n >= eps) {
        const double inner = dot(y, dy);
        for (std::size_t j = 0; j < y.size(); ++j) dx[j] += (dy[j] - y[j] * inner) / n;
      } else {
        for (std::size_t j = 0; j < y.size(); ++j) dx[j] += dy[j] / eps;
      }
    }
  });
}

Var cross_entropy(const Var& logits, std::span<const std::size_t> labels) {
  const double loss = cross_entropy(logits.value(), labels);
  std::vector<std::size_t> owned(labels.begin(), labels.end());
  return make_var("cross_entropy", Tensor::scalar(loss), {logits}, [owned = std::move(owned)](Node& self) {
    Node& nz = *self.parents[0];
    const Tensor probs = softmax(nz.value);
    const double factor = self.grad[0] / static_cast<double>(owned.size());
    for (std::size_t i = 0; i < owned.size(); ++i) {
      auto dz = nz.grad.row(i);
      const auto p = probs.row(i);
      for (std::size_t j = 0; j < p.size(); ++j) dz[j] += factor * (p[j] - (j == owned[i] ? 1.0 : 0.0));
    }
  });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_cols");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  if (count == 0 || begin + count > cols) {
    throw DimensionError(fmt::format("slice_cols: [{}, {}) outside {} columns", begin, begin + count, cols));
  }
  Tensor out({rows, count});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < count; ++j) out.at(r, j) = x.value().at(r, begin + j);
  return make_var("slice_cols", std::move(out), {x}, [begin, count](Node& self) {
    Node& nx = *self.parents[0];
    for (std::size_t r = 0; r < self.value.dim(0); ++r)
      for (std::size_t j = 0; j < count; ++j) nx.grad.at(r, begin + j) += self.grad.at(r, j);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  const std::size_t rows = parts.front().shape().at(0);
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.shape()[0] != rows) {
      throw DimensionError(fmt::format("concat_cols: row counts {} and {} differ", rows, p.shape()[0]));
    }
    cols += p.shape()[1];
  }
  Tensor out({rows, cols});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < p.shape()[1]; ++j) out.at(r, offset + j) = p.value().at(r, j);
    offset += p.shape()[1];
  }
  return make_var("concat_cols", std::move(out), {parts.begin(), parts.end()}, [](Node& self) {
    std::size_t offset = 0;
    for (auto& p : self.parents) {
      const std::size_t w = p->value.last_dim();
      if (p->requires_grad) {
        for (std::size_t r = 0; r < self.value.dim(0); ++r)
          for (std::size_t j = 0; j < w; ++j) p->grad.at(r, j) += self.grad.at(r, offset + j);
      }
      offset += w;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: nothing to concatenate");
  const std::size_t cols = parts.front().value().last_dim();
  std::vector<double> data;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.value().last_dim() != cols) {
      throw DimensionError(fmt::format("concat_rows: column counts {} and {} differ", cols, p.value().last_dim()));
    }
    rows += p.value().rows();
    data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  }
  return make_var("concat_rows", Tensor({rows, cols}, std::move(data)), {parts.begin(), parts.end()},
                  [](Node& self) {
                    std::size_t offset = 0;
                    for (auto& p : self.parents) {
                      const std::size_t n = p->value.size();
                      if (p->requires_grad) {
                        for (std::size_t i = 0; i < n; ++i) p->grad[i] += self.grad[offset + i];
                      }
                      offset += n;
                    }
                  });
}

Var mean_rows(const Var& x) {
  const std::size_t rows = x.value().rows(), cols = x.value().last_dim();
  Tensor out({1, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < cols; ++j) out[j] += x.value().at(r, j);
  for (double& v : out.data()) v /= static_cast<double>(rows);
  return make_var("mean_rows", std::move(out), {x}, [](Node& self) {
    Node& nx = *self.parents[0];
    const double inv = 1.0 / static_cast<double>(nx.value.rows());
    for (std::size_t r = 0; r < nx.value.rows(); ++r)
      for (std::size_t j = 0; j < nx.value.last_dim(); ++j) nx.grad.at(r, j) += self.grad[j] * inv;
  });
}

Var reshape(const Var& x, Shape shape) {
  return make_var("reshape", x.value().reshaped(std::move(shape)), {x}, [](Node& self) {
    accumulate(*self.parents[0], self.grad);
  });
}

void backward(const Var& loss) {
  if (!loss.valid() || loss.value().size() != 1) {
    throw ContractError(fmt::format("backward: loss must be a scalar, got shape {}",
                                    loss.valid() ? shape_str(loss.shape()) : "<empty>"));
  }
  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n->requires_grad) n->grad = Tensor(n->value.shape());
  }
  if (!loss.requires_grad()) return;
  loss.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->propagate) (*it)->propagate(**it);
  }

  for (Node* n : order) {
    if (n->param) {
      std::fill(n->param->grad.data().begin(), n->param->grad.data().end(), 0.0);
    }
  }
  for (Node* n : order) {
    if (n->param) {
      auto dst = n->param->grad.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n->grad[i];
      n->param->grad_ready = true;
    }
  }
}

GradCheckResult grad_check(const std::function<Var(ParameterSet&)>& loss_fn, ParameterSet& params, double h,
                           double rel_tol) {
  if (!(h > 0.0)) throw ContractError("grad_check: step h must be positive");
  auto evaluate = [&] {
    const double v = loss_fn(params).value()[0];
    if (!std::isfinite(v)) throw NumericError("grad_check: loss is not finite");
    return v;
  };

  params.zero_grad();
  backward(loss_fn(params));

  GradCheckResult result;
  for (auto& [name, p] : params) {
    const Tensor analytic = p.grad;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double up = evaluate();
      p.value[i] = saved - h;
      const double down = evaluate();
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      ++result.checked;
      if (rel > rel_tol) ++result.failed;
      if (rel > result.max_rel_error || result.worst_parameter.empty()) {
        result.max_rel_error = std::max(rel, result.max_rel_error);
        result.worst_parameter = name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace ftpg
