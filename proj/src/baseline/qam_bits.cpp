#include "jscq/baseline/qam_bits.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace jscq {

namespace {

std::size_t axis_bits(const Constellation& c) { return bits_per_symbol(c) / 2; }

// ln(sum exp(v)) over entries with the chosen bit value.
double log_sum_exp(const std::vector<double>& v, const std::vector<bool>& keep) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (keep[i]) mx = std::max(mx, v[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (keep[i]) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

}  // namespace

std::size_t bits_per_symbol(const Constellation& c) {
  return static_cast<std::size_t>(std::countr_zero(c.size()));
}

std::uint32_t gray_label(std::uint32_t a) { return a ^ (a >> 1); }

std::uint32_t gray_level(std::uint32_t label) {
  std::uint32_t a = 0;
  for (; label; label >>= 1) a ^= label;
  return a;
}

std::vector<std::uint8_t> point_bits(const Constellation& c, std::size_t j) {
  const std::size_t L = c.levels_per_axis(), nb = axis_bits(c);
  const std::uint32_t lr = gray_label(static_cast<std::uint32_t>(j % L));
  const std::uint32_t li = gray_label(static_cast<std::uint32_t>(j / L));
  std::vector<std::uint8_t> bits(2 * nb);
  for (std::size_t i = 0; i < nb; ++i) {
    bits[i] = (lr >> (nb - 1 - i)) & 1u;
    bits[nb + i] = (li >> (nb - 1 - i)) & 1u;
  }
  return bits;
}

std::vector<Complex> qam_map(std::span<const std::uint8_t> bits, const Constellation& c) {
  const std::size_t b = bits_per_symbol(c), nb = b / 2;
  if (bits.size() % b != 0)
    throw std::invalid_argument("qam_map: " + std::to_string(bits.size()) + " bits do not fill whole " +
                                std::to_string(b) + "-bit symbols");
  const auto levels = c.levels();
  std::vector<Complex> out(bits.size() / b);
  for (std::size_t s = 0; s < out.size(); ++s) {
    std::uint32_t lr = 0, li = 0;
    for (std::size_t i = 0; i < nb; ++i) {
      lr = (lr << 1) | (bits[s * b + i] & 1u);
      li = (li << 1) | (bits[s * b + nb + i] & 1u);
    }
    out[s] = {levels[gray_level(lr)], levels[gray_level(li)]};
  }
  return out;
}

std::vector<double> qam_demap_llr(std::span<const Complex> y, const Constellation& c, double sigma2) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("qam_demap_llr: sigma2 must be positive");
  const std::size_t b = bits_per_symbol(c), nb = b / 2, L = c.levels_per_axis();
  const auto levels = c.levels();
  std::vector<std::vector<bool>> zero_set(nb, std::vector<bool>(L)), one_set(nb, std::vector<bool>(L));
  for (std::size_t a = 0; a < L; ++a) {
    const auto lab = gray_label(static_cast<std::uint32_t>(a));
    for (std::size_t i = 0; i < nb; ++i) {
      const bool bit = (lab >> (nb - 1 - i)) & 1u;
      zero_set[i][a] = !bit;
      one_set[i][a] = bit;
    }
  }
  std::vector<double> llr(y.size() * b);
  std::vector<double> metric(L);
  for (std::size_t s = 0; s < y.size(); ++s) {
    for (int axis = 0; axis < 2; ++axis) {
      const double v = axis == 0 ? y[s].real() : y[s].imag();
      for (std::size_t a = 0; a < L; ++a) metric[a] = -(v - levels[a]) * (v - levels[a]) / sigma2;
      for (std::size_t i = 0; i < nb; ++i)
        llr[s * b + axis * nb + i] = log_sum_exp(metric, zero_set[i]) - log_sum_exp(metric, one_set[i]);
    }
  }
  return llr;
}

}  // namespace jscq
