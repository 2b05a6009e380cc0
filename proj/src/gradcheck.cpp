#include "jscq/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace jscq {

GradCheckResult gradcheck(const ScalarFn& fn, std::vector<Tensor> inputs,
                          const GradCheckOptions& options) {
  for (auto& t : inputs) t.zero_grad();
  backward(fn(inputs));
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    if (t.requires_grad() && t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.numel(), 0.0);
    }
    t.zero_grad();
  }

  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& t = inputs[k];
    if (!t.requires_grad()) continue;
    auto values = t.mutable_data();
    const std::size_t limit =
        options.max_entries == 0 ? values.size() : std::min(values.size(), options.max_entries);
    for (std::size_t i = 0; i < limit; ++i) {
      const double saved = values[i];
      values[i] = saved + options.eps;
      const double plus = fn(inputs).item();
      values[i] = saved - options.eps;
      const double minus = fn(inputs).item();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * options.eps);
      const double a = analytic[k][i];
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      result.max_abs_error = std::max(result.max_abs_error, abs_err);
      result.max_rel_error = std::max(result.max_rel_error, abs_err / denom);
      ++result.entries_checked;
    }
  }
  return result;
}

}  // namespace jscq
