#include "jscq/channel.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace jscq {

double snr_to_sigma2(double snr_db, double power) {
  if (!(power > 0.0)) throw std::invalid_argument("snr_to_sigma2: power must be positive");
  return power * std::pow(10.0, -snr_db / 10.0);
}

double sigma2_to_snr(double sigma2, double power) {
  if (!(power > 0.0) || !(sigma2 > 0.0)) {
    throw std::invalid_argument("sigma2_to_snr: power and noise power must be positive");
  }
  return 10.0 * std::log10(power / sigma2);
}

ChannelModel ChannelModel::from_snr(double snr_db, double snr_est_db, double power,
                                    std::uint64_t seed) {
  ChannelModel m;
  m.power = power;
  m.sigma2 = snr_to_sigma2(snr_db, power);
  m.sigma2_est = snr_to_sigma2(snr_est_db, power);
  m.seed = seed;
  return m;
}

void ChannelModel::validate() const {
  if (!(sigma2 > 0.0) || !(sigma2_est > 0.0) || !(power > 0.0)) {
    throw std::invalid_argument("channel: sigma2, sigma2_est and power must all be positive");
  }
}

void add_awgn(std::span<double> interleaved, double sigma2, Rng& rng) {
  const double sd = std::sqrt(sigma2 / 2.0);
  for (auto& v : interleaved) v += sd * rng.normal();
}

std::vector<Complex> transmit(std::span<const Complex> symbols, const ChannelModel& model,
                              std::uint64_t stream) {
  model.validate();
  Rng rng(model.seed, stream);
  const double sd = std::sqrt(model.sigma2 / 2.0);
  std::vector<Complex> out(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const double re = rng.normal();
    const double im = rng.normal();
    out[i] = symbols[i] + Complex(sd * re, sd * im);
  }
  return out;
}

std::vector<Complex> normalize_power(std::span<const Complex> z, double power) {
  double energy = 0.0;
  for (const auto& v : z) energy += std::norm(v);
  if (!(energy > 0.0)) throw std::invalid_argument("normalize_power: input has zero norm");
  const double s = std::sqrt(static_cast<double>(z.size()) * power / energy);
  std::vector<Complex> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = s * z[i];
  return out;
}

Tensor normalize_power(const Tensor& z, double power) {
  if (z.rank() != 3 || z.dim(2) != 2) {
    throw ShapeError("normalize_power: expected [B, k, 2], got " + shape_str(z.shape()));
  }
  const std::size_t batch = z.dim(0), per = z.dim(1) * 2;
  const double k = static_cast<double>(z.dim(1));
  std::vector<double> out(z.numel());
  std::vector<double> scales(batch), energies(batch);
  auto in = z.data();
  for (std::size_t b = 0; b < batch; ++b) {
    double e = 0.0;
    for (std::size_t i = 0; i < per; ++i) e += in[b * per + i] * in[b * per + i];
    if (!(e > 0.0)) throw std::invalid_argument("normalize_power: sample " + std::to_string(b) + " has zero norm");
    energies[b] = e;
    scales[b] = std::sqrt(k * power / e);
    for (std::size_t i = 0; i < per; ++i) out[b * per + i] = scales[b] * in[b * per + i];
  }
  return detail::make_result(z.shape(), std::move(out), {z}, "normalize_power",
                             [batch, per, scales, energies](detail::Node& self) {
                               auto& pz = *self.parents[0];
                               auto g = pz.grad_buffer();
                               for (std::size_t b = 0; b < batch; ++b) {
                                 const double* x = pz.data.data() + b * per;
                                 const double* go = self.grad.data() + b * per;
                                 double dot = 0.0;
                                 for (std::size_t i = 0; i < per; ++i) dot += x[i] * go[i];
                                 const double s = scales[b];
                                 for (std::size_t i = 0; i < per; ++i) {
                                   g[b * per + i] += s * (go[i] - x[i] * dot / energies[b]);
                                 }
                               }
                             });
}

Tensor awgn(const Tensor& z, double sigma2, Rng& rng) {
  std::vector<double> noise(z.numel(), 0.0);
  add_awgn(noise, sigma2, rng);
  return add(z, Tensor::from(z.shape(), std::move(noise)));
}

}  // namespace jscq
