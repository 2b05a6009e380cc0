#include "jscq/harness/gradcheck_suite.hpp"

#include <cmath>

#include "jscq/channel.hpp"
#include "jscq/constellation.hpp"
#include "jscq/metrics.hpp"
#include "jscq/model.hpp"
#include "jscq/param_io.hpp"
#include "jscq/rng.hpp"
#include "jscq/training.hpp"

namespace jscq {

namespace {

Tensor random(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), true);
}

// A fixed random linear functional turns any tensor into a scalar loss.
Tensor project(const Tensor& t, std::uint64_t seed) {
  Rng rng(seed, 0x9c);
  std::vector<double> w(t.numel());
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  return sum(mul(t, Tensor::from(t.shape(), std::move(w))));
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(double tolerance, std::uint64_t seed) {
  Rng rng(seed, 0x6c);
  std::vector<GradCheckCase> out;
  auto check = [&](const std::string& name, const ScalarFn& fn, std::vector<Tensor> inputs) {
    GradCheckCase c;
    c.name = name;
    c.result = gradcheck(fn, std::move(inputs));
    c.passed = c.result.max_rel_error < tolerance;
    out.push_back(c);
  };
  const std::uint64_t s = seed;
  auto unary = [&](const std::string& name, auto op, Shape shape, double lo = -1.0, double hi = 1.0) {
    check(name, [op, s](const std::vector<Tensor>& in) { return project(op(in[0]), s); },
          {random(rng, shape, lo, hi)});
  };

  check("add", [s](const auto& in) { return project(add(in[0], in[1]), s); },
        {random(rng, {3, 4}), random(rng, {3, 4})});
  check("sub", [s](const auto& in) { return project(sub(in[0], in[1]), s); },
        {random(rng, {3, 4}), random(rng, {3, 4})});
  check("mul", [s](const auto& in) { return project(mul(in[0], in[1]), s); },
        {random(rng, {3, 4}), random(rng, {3, 4})});
  unary("scale", [](const Tensor& a) { return scale(a, -1.7); }, {5});
  unary("add_scalar", [](const Tensor& a) { return add_scalar(a, 0.3); }, {5});
  unary("square", [](const Tensor& a) { return square(a); }, {2, 3});
  check("matmul", [s](const auto& in) { return project(matmul(in[0], in[1]), s); },
        {random(rng, {3, 4}), random(rng, {4, 2})});
  check("linear", [s](const auto& in) { return project(linear(in[0], in[1], in[2]), s); },
        {random(rng, {3, 4}), random(rng, {5, 4}), random(rng, {5})});
  // Keep inputs away from the kink at 0.
  unary("relu", [](const Tensor& a) { return relu(a); }, {6}, 0.05, 1.0);
  unary("relu_negative", [](const Tensor& a) { return relu(a); }, {6}, -1.0, -0.05);
  unary("sigmoid", [](const Tensor& a) { return sigmoid(a); }, {2, 3}, -3.0, 3.0);
  check("prelu", [s](const auto& in) { return project(prelu(in[0], in[1]), s); },
        {random(rng, {2, 3, 2, 2}, 0.05, 1.0), random(rng, {3}, 0.1, 0.4)});
  check("prelu_negative", [s](const auto& in) { return project(prelu(in[0], in[1]), s); },
        {random(rng, {2, 3, 2, 2}, -1.0, -0.05), random(rng, {3}, 0.1, 0.4)});
  unary("sum", [](const Tensor& a) { return sum(a); }, {2, 3});
  unary("mean", [](const Tensor& a) { return mean(a); }, {2, 3});
  unary("reshape", [](const Tensor& a) { return reshape(a, {3, 2}); }, {2, 3});
  unary("permute", [](const Tensor& a) { return permute(a, {2, 0, 1}); }, {2, 3, 4});
  check("concat_columns", [s](const auto& in) { return project(concat_columns(in[0], in[1]), s); },
        {random(rng, {2, 3}), random(rng, {2, 1})});
  check("conv2d", [s](const auto& in) { return project(conv2d(in[0], in[1], in[2], 1, 1), s); },
        {random(rng, {2, 2, 5, 5}), random(rng, {3, 2, 3, 3}), random(rng, {3})});
  check("conv2d_stride2", [s](const auto& in) { return project(conv2d(in[0], in[1], in[2], 2, 1), s); },
        {random(rng, {1, 2, 6, 6}), random(rng, {2, 2, 3, 3}), random(rng, {2})});
  unary("pixel_shuffle", [](const Tensor& a) { return pixel_shuffle(a, 2); }, {1, 8, 2, 3});
  unary("global_avg_pool", [](const Tensor& a) { return global_avg_pool(a); }, {2, 3, 2, 2});
  check("mul_channels", [s](const auto& in) { return project(mul_channels(in[0], in[1]), s); },
        {random(rng, {2, 3, 2, 2}), random(rng, {2, 3})});

  {
    ParameterSet p;
    add_af_parameters(p, "af", 4, seed + 7);
    std::vector<Tensor> inputs{random(rng, {2, 4, 3, 3})};
    for (auto& e : p.entries()) inputs.push_back(e.second);
    check("af_gate",
          [s, p](const std::vector<Tensor>& in) {
            ParameterSet q;
            std::size_t i = 1;
            for (const auto& e : p.entries()) q.add(e.first, in[i++]);
            return project(af_gate(in[0], 4.0, q, "af"), s);
          },
          inputs);
  }
  unary("normalize_power", [](const Tensor& z) { return normalize_power(z, 2.0); }, {2, 5, 2});

  for (std::size_t M : {4, 16}) {
    const auto c = make_qam(M, 1.0);
    const QuantizerConfig q{5.0};
    const double a = c.a_max() * 1.2;
    check("soft_quantize_M" + std::to_string(M),
          [c, q, s](const auto& in) { return project(soft_quantize_tensor(in[0], c, q), s); },
          {random(rng, {3, 4, 2}, -a, a)});
    // KL of the usage histogram covers kl_to_uniform's backward as well.
    check("constellation_usage_kl_M" + std::to_string(M),
          [c, q](const auto& in) { return kl_to_uniform(constellation_usage(in[0], c, q)); },
          {random(rng, {2, 5, 2}, -a, a)});
  }
  {
    // The straight-through backward must equal the soft path's backward.
    const auto c = make_qam(16, 1.0);
    const QuantizerConfig q{5.0};
    const double a = c.a_max() * 1.2;
    auto z = random(rng, {4, 6, 2}, -a, a);
    auto zs = z.detach();
    zs.set_requires_grad(true);
    backward(project(quantize_straight_through(z, c, q), s));
    backward(project(soft_quantize_tensor(zs, c, q), s));
    GradCheckCase gc;
    gc.name = "quantize_straight_through_backward";
    for (std::size_t i = 0; i < z.numel(); ++i) {
      const double ga = z.grad()[i], gb = zs.grad()[i];
      const double abs_err = std::abs(ga - gb);
      gc.result.max_abs_error = std::max(gc.result.max_abs_error, abs_err);
      gc.result.max_rel_error =
          std::max(gc.result.max_rel_error, abs_err / std::max({std::abs(ga), std::abs(gb), 1e-3}));
      ++gc.result.entries_checked;
    }
    gc.passed = gc.result.max_rel_error < tolerance;
    out.push_back(gc);
  }
  check("mse_loss", [](const auto& in) { return mse_loss(in[0], in[1]); },
        {random(rng, {2, 4, 4, 3}, 0.0, 1.0), random(rng, {2, 4, 4, 3}, 0.0, 1.0)});
  check("ssim_loss", [](const auto& in) { return ssim_loss(in[0], in[1], 1.0); },
        {random(rng, {2, 4, 4, 3}, 0.0, 1.0), random(rng, {2, 4, 4, 3}, 0.0, 1.0)});
  return out;
}

}  // namespace jscq
