// Tensor-level quantizers. A square QAM grid lets the 2-D softmax over
// -sigma_q * |z - c|^2 factor into one softmax per axis, so the soft value and
// its Jacobian are computed per axis in O(L) instead of O(M). The Jacobian is
// diagonal: d(soft_re)/d(re) = 2 * sigma_q * Var_w(levels).

#include <cmath>
#include <stdexcept>

#include "jscq/constellation.hpp"

namespace jscq {

namespace {

struct AxisSoft {
  double mean;
  double var;
};

AxisSoft axis_softmax(double x, std::span<const double> levels, double sigma_q, double* w) {
  double peak = -INFINITY;
  for (std::size_t a = 0; a < levels.size(); ++a) {
    const double d = x - levels[a];
    w[a] = -sigma_q * d * d;
    peak = std::max(peak, w[a]);
  }
  double total = 0.0;
  for (std::size_t a = 0; a < levels.size(); ++a) {
    w[a] = std::exp(w[a] - peak);
    total += w[a];
  }
  double mean = 0.0;
  for (std::size_t a = 0; a < levels.size(); ++a) {
    w[a] /= total;
    mean += w[a] * levels[a];
  }
  double var = 0.0;
  for (std::size_t a = 0; a < levels.size(); ++a) var += w[a] * (levels[a] - mean) * (levels[a] - mean);
  return {mean, var};
}

void require_pairs(const char* op, const Tensor& z) {
  if (z.rank() == 0 || z.shape().back() != 2) {
    throw ShapeError(std::string(op) + ": expected trailing dimension 2 (re, im), got " +
                     shape_str(z.shape()));
  }
}

}  // namespace

Tensor quantize_straight_through(const Tensor& z, const Constellation& c, const QuantizerConfig& cfg) {
  require_pairs("quantize_straight_through", z);
  cfg.validate();
  const auto levels = c.levels();
  std::vector<double> out(z.numel());
  std::vector<double> jac(z.numel());
  std::vector<double> w(levels.size());
  auto in = z.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = levels[c.nearest_level(in[i])];
    jac[i] = 2.0 * cfg.sigma_q * axis_softmax(in[i], levels, cfg.sigma_q, w.data()).var;
  }
  return detail::make_result(z.shape(), std::move(out), {z}, "quantize_straight_through",
                             [jac = std::move(jac)](detail::Node& self) {
                               auto g = self.parents[0]->grad_buffer();
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] += jac[i] * self.grad[i];
                             });
}

Tensor soft_quantize_tensor(const Tensor& z, const Constellation& c, const QuantizerConfig& cfg) {
  require_pairs("soft_quantize", z);
  cfg.validate();
  const auto levels = c.levels();
  std::vector<double> out(z.numel());
  std::vector<double> jac(z.numel());
  std::vector<double> w(levels.size());
  auto in = z.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const auto s = axis_softmax(in[i], levels, cfg.sigma_q, w.data());
    out[i] = s.mean;
    jac[i] = 2.0 * cfg.sigma_q * s.var;
  }
  return detail::make_result(z.shape(), std::move(out), {z}, "soft_quantize",
                             [jac = std::move(jac)](detail::Node& self) {
                               auto g = self.parents[0]->grad_buffer();
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] += jac[i] * self.grad[i];
                             });
}

Tensor constellation_usage(const Tensor& z, const Constellation& c, const QuantizerConfig& cfg) {
  require_pairs("constellation_usage", z);
  cfg.validate();
  const std::size_t L = c.levels_per_axis();
  const std::size_t M = c.size();
  const std::size_t count = z.numel() / 2;
  if (count == 0) throw std::invalid_argument("constellation_usage: empty batch");
  const auto levels = c.levels();
  std::vector<double> p(M, 0.0);
  std::vector<double> wr(L), wi(L);
  auto in = z.data();
  for (std::size_t e = 0; e < count; ++e) {
    axis_softmax(in[2 * e], levels, cfg.sigma_q, wr.data());
    axis_softmax(in[2 * e + 1], levels, cfg.sigma_q, wi.data());
    for (std::size_t b = 0; b < L; ++b)
      for (std::size_t a = 0; a < L; ++a) p[b * L + a] += wr[a] * wi[b];
  }
  const double inv = 1.0 / static_cast<double>(count);
  for (auto& v : p) v *= inv;

  const double sigma_q = cfg.sigma_q;
  std::vector<double> lv(levels.begin(), levels.end());
  return detail::make_result(
      {M}, std::move(p), {z}, "constellation_usage",
      [L, count, inv, sigma_q, lv = std::move(lv)](detail::Node& self) {
        auto& pz = *self.parents[0];
        auto g = pz.grad_buffer();
        const auto& up = self.grad;  // [M], index b*L + a
        std::vector<double> wr(L), wi(L), gr(L), gi(L);
        for (std::size_t e = 0; e < count; ++e) {
          const auto sr = axis_softmax(pz.data[2 * e], lv, sigma_q, wr.data());
          const auto si = axis_softmax(pz.data[2 * e + 1], lv, sigma_q, wi.data());
          // gr[a] = sum_b up[a,b] wi[b];  gi[b] = sum_a up[a,b] wr[a]
          std::fill(gr.begin(), gr.end(), 0.0);
          std::fill(gi.begin(), gi.end(), 0.0);
          for (std::size_t b = 0; b < L; ++b)
            for (std::size_t a = 0; a < L; ++a) {
              const double u = up[b * L + a];
              gr[a] += u * wi[b];
              gi[b] += u * wr[a];
            }
          // dw_a/dx = 2 sigma_q w_a (level_a - mean)
          double dre = 0.0, dim = 0.0;
          for (std::size_t a = 0; a < L; ++a) {
            dre += gr[a] * wr[a] * (lv[a] - sr.mean);
            dim += gi[a] * wi[a] * (lv[a] - si.mean);
          }
          g[2 * e] += 2.0 * sigma_q * inv * dre;
          g[2 * e + 1] += 2.0 * sigma_q * inv * dim;
        }
      });
}

}  // namespace jscq
