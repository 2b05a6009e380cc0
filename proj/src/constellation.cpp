#include "jscq/constellation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>
#include <string>

namespace jscq {

namespace {

std::size_t isqrt_exact(std::size_t m) {
  auto r = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(m))));
  return r * r == m ? r : 0;
}

}  // namespace

Constellation::Constellation(std::size_t size, double power) : power_(power) {
  const std::size_t L = isqrt_exact(size);
  if (size < 4 || L == 0) {
    throw std::invalid_argument("make_qam: M=" + std::to_string(size) +
                                " is not a perfect square >= 4");
  }
  if (!(power > 0.0) || !std::isfinite(power)) {
    throw std::invalid_argument("make_qam: average power must be positive, got " + std::to_string(power));
  }
  const double Ld = static_cast<double>(L);
  d_sym_ = std::sqrt(6.0 * power / (Ld * Ld - 1.0));
  a_max_ = (Ld - 1.0) * d_sym_ / 2.0;
  levels_.resize(L);
  for (std::size_t a = 0; a < L; ++a) levels_[a] = (static_cast<double>(a) - (Ld - 1.0) / 2.0) * d_sym_;
  points_.reserve(size);
  for (std::size_t b = 0; b < L; ++b)
    for (std::size_t a = 0; a < L; ++a) points_.emplace_back(levels_[a], levels_[b]);
}

std::size_t Constellation::nearest_level(double x) const {
  std::size_t best = 0;
  double best_d = (x - levels_[0]) * (x - levels_[0]);
  for (std::size_t a = 1; a < levels_.size(); ++a) {
    const double d = (x - levels_[a]) * (x - levels_[a]);
    if (d < best_d) {
      best_d = d;
      best = a;
    }
  }
  return best;
}

std::size_t Constellation::nearest_index(Complex z) const {
  return nearest_level(z.imag()) * levels_.size() + nearest_level(z.real());
}

Constellation make_qam(std::size_t M, double P) {
  switch (M) {
    case 4: case 16: case 64: case 256: case 1024: case 4096:
      return Constellation(M, P);
    default:
      throw std::invalid_argument("make_qam: unsupported constellation size M=" + std::to_string(M) +
                                  " (expected 4, 16, 64, 256, 1024 or 4096)");
  }
}

void QuantizerConfig::validate() const {
  if (!(sigma_q > 0.0) || !std::isfinite(sigma_q)) {
    throw std::invalid_argument("quantizer: sigma_q must be positive, got " + std::to_string(sigma_q));
  }
}

std::vector<std::size_t> hard_indices(std::span<const Complex> z, const Constellation& c) {
  std::vector<std::size_t> idx(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) idx[i] = c.nearest_index(z[i]);
  return idx;
}

std::vector<Complex> hard_quantize(std::span<const Complex> z, const Constellation& c) {
  std::vector<Complex> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = c.point(c.nearest_index(z[i]));
  return out;
}

QuantizerOutput soft_quantize(std::span<const Complex> z, const Constellation& c,
                              const QuantizerConfig& cfg) {
  cfg.validate();
  const std::size_t M = c.size();
  QuantizerOutput out;
  out.M = M;
  out.hard = hard_quantize(z, c);
  out.soft.resize(z.size());
  out.weights.resize(z.size() * M);
  std::vector<double> logits(M);
  for (std::size_t i = 0; i < z.size(); ++i) {
    double peak = -INFINITY;
    for (std::size_t j = 0; j < M; ++j) {
      logits[j] = -cfg.sigma_q * std::norm(z[i] - c.point(j));
      peak = std::max(peak, logits[j]);
    }
    double total = 0.0;
    double* w = out.weights.data() + i * M;
    for (std::size_t j = 0; j < M; ++j) {
      w[j] = std::exp(logits[j] - peak);
      total += w[j];
    }
    Complex soft{0.0, 0.0};
    for (std::size_t j = 0; j < M; ++j) {
      w[j] /= total;
      soft += w[j] * c.point(j);
    }
    out.soft[i] = soft;
  }
  return out;
}

std::array<double, 4> soft_jacobian(Complex z, const Constellation& c, const QuantizerConfig& cfg) {
  const auto q = soft_quantize(std::span<const Complex>(&z, 1), c, cfg);
  const Complex m = q.soft[0];
  double rr = 0.0, ri = 0.0, ii = 0.0;
  for (std::size_t j = 0; j < c.size(); ++j) {
    const Complex d = c.point(j) - m;
    rr += q.weights[j] * d.real() * d.real();
    ri += q.weights[j] * d.real() * d.imag();
    ii += q.weights[j] * d.imag() * d.imag();
  }
  const double s = 2.0 * cfg.sigma_q;
  return {s * rr, s * ri, s * ri, s * ii};
}

std::vector<double> empirical_distribution(std::span<const double> weights, std::size_t M) {
  if (M == 0 || weights.empty()) throw std::invalid_argument("empirical_distribution: empty batch");
  if (weights.size() % M != 0) {
    throw std::invalid_argument("empirical_distribution: " + std::to_string(weights.size()) +
                                " weights do not form rows of width " + std::to_string(M));
  }
  const std::size_t rows = weights.size() / M;
  std::vector<double> p(M, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < M; ++j) p[j] += weights[r * M + j];
  for (auto& v : p) v /= static_cast<double>(rows);
  return p;
}

void write_constellation_csv(std::ostream& out, const Constellation& c) {
  out << "index,re,im\n";
  out << std::setprecision(17);
  for (std::size_t j = 0; j < c.size(); ++j) {
    out << j << ',' << c.point(j).real() << ',' << c.point(j).imag() << '\n';
  }
}

}  // namespace jscq
