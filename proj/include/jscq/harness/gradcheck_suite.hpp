#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "jscq/gradcheck.hpp"

namespace jscq {

struct GradCheckCase {
  std::string name;
  GradCheckResult result;
  bool passed = false;
};

/// Finite-difference checks of every differentiable op on small random
/// inputs, including the AF gate, power normalization and the soft quantizer
/// path used by the straight-through backward.
std::vector<GradCheckCase> run_gradcheck_suite(double tolerance = 1e-4, std::uint64_t seed = 0);

}  // namespace jscq
