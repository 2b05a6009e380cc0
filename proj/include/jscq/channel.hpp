#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "jscq/constellation.hpp"
#include "jscq/rng.hpp"
#include "jscq/tensor.hpp"

namespace jscq {

// SNR = 10 log10(P / sigma^2)
double snr_to_sigma2(double snr_db, double power);
double sigma2_to_snr(double sigma2, double power);

/// AWGN channel configuration. `sigma2` is the true complex noise power (each
/// real axis gets sigma2 / 2); `sigma2_est` is what encoder and decoder are
/// told. Only `sigma2` ever reaches the noise generator.
struct ChannelModel {
  double sigma2 = 1.0;
  double sigma2_est = 1.0;
  double power = 1.0;
  std::uint64_t seed = 0;

  static ChannelModel from_snr(double snr_db, double snr_est_db, double power, std::uint64_t seed);
  double snr_db() const { return sigma2_to_snr(sigma2, power); }
  double snr_est_db() const { return sigma2_to_snr(sigma2_est, power); }
  void validate() const;
};

/// y = x + eta, eta ~ CN(0, sigma2). The noise sequence is a pure function of
/// (model.seed, stream).
std::vector<Complex> transmit(std::span<const Complex> symbols, const ChannelModel& model,
                              std::uint64_t stream);

// Adds N(0, sigma2/2) to every entry of an interleaved (re, im) buffer.
void add_awgn(std::span<double> interleaved, double sigma2, Rng& rng);

/// Scales z so that sum |z_i|^2 = k * P.
std::vector<Complex> normalize_power(std::span<const Complex> z, double power);

/// Differentiable per-sample power normalization of z [B, k, 2].
Tensor normalize_power(const Tensor& z, double power);

/// z + CN(0, sigma2) noise. The noise is a constant; gradients pass straight
/// through to z.
Tensor awgn(const Tensor& z, double sigma2, Rng& rng);

}  // namespace jscq
