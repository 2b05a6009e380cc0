#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "jscq/tensor.hpp"

namespace jscq {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t entries_checked = 0;
};

struct GradCheckOptions {
  double eps = 1e-5;
  // Denominator floor for the relative error |a-n| / max(|a|, |n|, floor).
  double floor = 1e-3;
  // 0 checks every entry; otherwise the first `max_entries` entries of each input.
  std::size_t max_entries = 0;
};

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares backward() against central finite differences of `fn` for every
/// input that requires a gradient. Inputs are perturbed in place and restored.
GradCheckResult gradcheck(const ScalarFn& fn, std::vector<Tensor> inputs,
                          const GradCheckOptions& options = {});

}  // namespace jscq
