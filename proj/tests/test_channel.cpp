#include <doctest.h>

#include <cmath>

#include "jscq/channel.hpp"
#include "jscq/constellation.hpp"
#include "jscq/rng.hpp"
#include "test_util.hpp"

using namespace jscq;

TEST_SUITE("channel") {

TEST_CASE("SNR and noise power conversions invert each other") {
  CHECK(snr_to_sigma2(0.0, 1.0) == doctest::Approx(1.0));
  CHECK(snr_to_sigma2(10.0, 1.0) == doctest::Approx(0.1));
  CHECK(snr_to_sigma2(10.0, 2.0) == doctest::Approx(0.2));
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double snr = rng.uniform(-10, 30), P = rng.uniform(0.1, 4);
    CHECK(sigma2_to_snr(snr_to_sigma2(snr, P), P) == doctest::Approx(snr).epsilon(1e-12));
  }
}

TEST_CASE("noise statistics match the configured power") {
  for (double sigma2 : {1.0, 0.1}) {
    ChannelModel ch;
    ch.sigma2 = ch.sigma2_est = sigma2;
    ch.seed = 42;
    const std::vector<Complex> zero(100000, Complex{0, 0});
    const auto y = transmit(zero, ch, 0);
    double re = 0, im = 0, mr = 0, mi = 0;
    for (const auto& v : y) {
      re += v.real() * v.real();
      im += v.imag() * v.imag();
      mr += v.real();
      mi += v.imag();
    }
    const double n = double(y.size());
    CHECK((re + im) / n / sigma2 == doctest::Approx(1.0).epsilon(0.02));
    CHECK(re / n / sigma2 == doctest::Approx(0.5).epsilon(0.03));  // split evenly over the axes
    CHECK(std::abs(mr / n) < 5 * std::sqrt(sigma2 / 2 / n));
    CHECK(std::abs(mi / n) < 5 * std::sqrt(sigma2 / 2 / n));
  }
}

TEST_CASE("noise streams are reproducible and distinct") {
  const auto ch = ChannelModel::from_snr(5.0, 5.0, 1.0, 7);
  const std::vector<Complex> x(64, Complex{0.5, -0.5});
  CHECK(transmit(x, ch, 3) == transmit(x, ch, 3));
  CHECK(transmit(x, ch, 3) != transmit(x, ch, 4));
  auto other = ch;
  other.seed = 8;
  CHECK(transmit(x, ch, 3) != transmit(x, other, 3));
}

TEST_CASE("the estimate never reaches the noise generator") {
  auto a = ChannelModel::from_snr(3.0, 3.0, 1.0, 1);
  auto b = ChannelModel::from_snr(3.0, 9.0, 1.0, 1);
  const std::vector<Complex> x(32, Complex{1.0, 0.0});
  CHECK(transmit(x, a, 0) == transmit(x, b, 0));
}

TEST_CASE("invalid channel parameters are rejected") {
  ChannelModel ch;
  ch.sigma2 = 0.0;
  CHECK_THROWS(ch.validate());
  ch.sigma2 = 1.0;
  ch.power = -1.0;
  CHECK_THROWS(ch.validate());
}

TEST_CASE("power normalization hits k*P exactly") {
  Rng rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<Complex> z(1 + rng.below(50));
    for (auto& v : z) v = {rng.normal() * 3, rng.normal() * 3};
    const double P = rng.uniform(0.2, 3.0);
    const auto n = normalize_power(z, P);
    double e = 0.0;
    for (const auto& v : n) e += std::norm(v);
    CHECK(e == doctest::Approx(double(z.size()) * P).epsilon(1e-12));
  }
  const std::vector<Complex> zero(4);
  CHECK_THROWS(normalize_power(zero, 1.0));
}

TEST_CASE("tensor normalization works per sample") {
  Rng rng(3);
  auto z = testutil::random_tensor(rng, {3, 7, 2}, -2, 2);
  auto n = normalize_power(z, 2.0);
  for (std::size_t b = 0; b < 3; ++b) {
    double e = 0.0;
    for (std::size_t i = 0; i < 14; ++i) e += n[b * 14 + i] * n[b * 14 + i];
    CHECK(e == doctest::Approx(7 * 2.0).epsilon(1e-12));
  }
}

TEST_CASE("awgn tensor op passes gradients straight through") {
  Rng rng(4), noise(5);
  auto z = testutil::random_tensor(rng, {2, 3, 2});
  auto y = awgn(z, 0.5, noise);
  backward(sum(y));
  for (double g : z.grad()) CHECK(g == 1.0);
}

}  // TEST_SUITE
