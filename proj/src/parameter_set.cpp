#include "ftpg/parameter_set.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "ftpg/errors.hpp"

namespace ftpg {

std::size_t schema_scalar_count(const Schema& schema) {
  std::size_t total = 0;
  for (const auto& e : schema) {
    std::size_t n = 1;
    for (auto d : e.shape) n *= d;
    total += n;
  }
  return total;
}

Parameter& ParameterSet::add(std::string name, Tensor value) {
  if (params_.contains(name)) {
    throw SchemaError(fmt::format("duplicate parameter name '{}'", name));
  }
  Tensor grad(value.shape());
  auto key = name;
  auto [it, inserted] =
      params_.emplace(std::move(key), Parameter{std::move(name), std::move(value), std::move(grad), false});
  return it->second;
}

bool ParameterSet::contains(std::string_view name) const { return params_.find(name) != params_.end(); }

Parameter& ParameterSet::at(std::string_view name) {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw LookupError(fmt::format("no parameter named '{}'", name));
  }
  return it->second;
}

const Parameter& ParameterSet::at(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw LookupError(fmt::format("no parameter named '{}'", name));
  }
  return it->second;
}

std::size_t ParameterSet::scalar_count() const noexcept {
  std::size_t total = 0;
  for (const auto& [_, p] : params_) total += p.value.size();
  return total;
}

void ParameterSet::zero_grad() {
  for (auto& [_, p] : params_) {
    std::fill(p.grad.data().begin(), p.grad.data().end(), 0.0);
    p.grad_ready = false;
  }
}

Schema ParameterSet::schema() const {
  Schema out;
  out.reserve(params_.size());
  for (const auto& [name, p] : params_) out.push_back({name, p.value.shape()});
  return out;
}

std::uint64_t ParameterSet::checksum() const {
  std::uint64_t h = 0;
  for (const auto& [name, p] : params_) {
    h = ftpg::checksum(p.value, h ^ std::hash<std::string>{}(name));
  }
  return h;
}

bool bitwise_equal(const ParameterSet& a, const ParameterSet& b) {
  if (a.count() != b.count()) return false;
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first || !bitwise_equal(ia->second.value, ib->second.value)) return false;
  }
  return true;
}

FlatParameters flatten(const ParameterSet& params) {
  FlatParameters flat;
  flat.schema = params.schema();
  flat.values.reserve(params.scalar_count());
  for (const auto& [_, p] : params) {
    flat.values.insert(flat.values.end(), p.value.data().begin(), p.value.data().end());
  }
  return flat;
}

ParameterSet unflatten(std::span<const double> values, const Schema& schema) {
  const auto expected = schema_scalar_count(schema);
  if (values.size() != expected) {
    throw SchemaError(
        fmt::format("unflatten: vector has {} values but the schema needs {}", values.size(), expected));
  }
  ParameterSet out;
  std::size_t offset = 0;
  for (const auto& entry : schema) {
    Tensor t(entry.shape);
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.data().begin());
    offset += t.size();
    out.add(entry.name, std::move(t));
  }
  return out;
}

}  // namespace ftpg
