#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ftpg/tensor.hpp"

namespace ftpg {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // same shape as value
  bool grad_ready = false;
};

struct SchemaEntry {
  std::string name;
  Shape shape;

  friend bool operator==(const SchemaEntry&, const SchemaEntry&) = default;
};

/// Names and shapes in lexicographic name order.
using Schema = std::vector<SchemaEntry>;

std::size_t schema_scalar_count(const Schema& schema);

/// Named tensors iterated in lexicographic name order. This is the unit of
/// aggregation, optimisation and checkpointing.
class ParameterSet {
 public:
  using Map = std::map<std::string, Parameter, std::less<>>;

  Parameter& add(std::string name, Tensor value);

  bool contains(std::string_view name) const;
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;

  std::size_t count() const noexcept { return params_.size(); }
  std::size_t scalar_count() const noexcept;
  bool empty() const noexcept { return params_.empty(); }

  Map::iterator begin() { return params_.begin(); }
  Map::iterator end() { return params_.end(); }
  Map::const_iterator begin() const { return params_.begin(); }
  Map::const_iterator end() const { return params_.end(); }

  void zero_grad();
  Schema schema() const;
  std::uint64_t checksum() const;

 private:
  Map params_;
};

bool bitwise_equal(const ParameterSet& a, const ParameterSet& b);

struct FlatParameters {
  std::vector<double> values;
  Schema schema;
};

/// Concatenates values in lexicographic name order.
FlatParameters flatten(const ParameterSet& params);

/// Inverse of flatten; throws SchemaError when the length disagrees with the schema.
ParameterSet unflatten(std::span<const double> values, const Schema& schema);

}  // namespace ftpg
