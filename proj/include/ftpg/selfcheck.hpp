#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ftpg/autograd.hpp"

namespace ftpg {

/// Gradient check of the full training composite (translator, text head,
/// cosine / 0.01 logits, cross-entropy) at d=16, m=4, 4 heads, 2 images,
/// 3 classes, one key row, at a random parameter point.
GradCheckResult composite_gradcheck(std::uint64_t seed = 7);

struct CheckLine {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Table arithmetic on the embedded reference fixture: averages and deltas
/// at two-decimal display precision.
std::vector<CheckLine> fixture_checks();

}  // namespace ftpg
