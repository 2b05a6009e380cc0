#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "jscq/tensor.hpp"

namespace jscq {

using Complex = std::complex<double>;

/// Square M-QAM constellation: an L x L grid (L = sqrt(M)) centred on the
/// origin, scaled so the mean of |c|^2 over all points equals `power`.
/// Points are ordered row-major with the real axis fastest, both ascending:
/// index = b * L + a for real level a and imaginary level b.
class Constellation {
 public:
  Constellation(std::size_t size, double power);

  std::size_t size() const { return points_.size(); }
  std::size_t levels_per_axis() const { return levels_.size(); }
  double power() const { return power_; }
  double d_sym() const { return d_sym_; }
  double a_max() const { return a_max_; }

  std::span<const Complex> points() const { return points_; }
  const Complex& point(std::size_t j) const { return points_[j]; }
  // Ascending per-axis amplitudes shared by both axes.
  std::span<const double> levels() const { return levels_; }

  // Nearest per-axis level; ties resolve to the lower level.
  std::size_t nearest_level(double x) const;
  std::size_t nearest_index(Complex z) const;

 private:
  double power_;
  double d_sym_;
  double a_max_;
  std::vector<double> levels_;
  std::vector<Complex> points_;
};

/// M must be one of 4, 16, 64, 256, 1024, 4096 and P > 0.
Constellation make_qam(std::size_t M, double P);

struct QuantizerConfig {
  double sigma_q = 100.0;
  void validate() const;
};

struct QuantizerOutput {
  std::vector<Complex> hard;
  std::vector<Complex> soft;
  std::vector<double> weights;  // k x M, row-major; each row sums to 1
  std::size_t M = 0;

  std::span<const double> row(std::size_t i) const { return {weights.data() + i * M, M}; }
};

std::vector<std::size_t> hard_indices(std::span<const Complex> z, const Constellation& c);
std::vector<Complex> hard_quantize(std::span<const Complex> z, const Constellation& c);

/// Softmax over -sigma_q * |z_i - c_j|^2 (row-max subtracted) and the
/// weighted symbol sum, evaluated over all M points.
QuantizerOutput soft_quantize(std::span<const Complex> z, const Constellation& c,
                              const QuantizerConfig& cfg);

/// Real 2x2 Jacobian d(soft)/d(z) at one point, row-major
/// [dRe/dRe, dRe/dIm, dIm/dRe, dIm/dIm]. Equals 2*sigma_q times the
/// weight-covariance of the constellation points.
std::array<double, 4> soft_jacobian(Complex z, const Constellation& c, const QuantizerConfig& cfg);

/// Column means of a (rows x M) weight matrix: the batch estimate of how often
/// each constellation point is selected.
std::vector<double> empirical_distribution(std::span<const double> weights, std::size_t M);

/// CSV with header `index,re,im`.
void write_constellation_csv(std::ostream& out, const Constellation& c);

// ---- tensor ops; z holds complex values as trailing pairs [..., 2] ----

/// Forward: hard symbols. Backward: exact Jacobian of the soft map.
Tensor quantize_straight_through(const Tensor& z, const Constellation& c, const QuantizerConfig& cfg);

/// Differentiable soft quantization (forward and backward both soft).
Tensor soft_quantize_tensor(const Tensor& z, const Constellation& c, const QuantizerConfig& cfg);

/// Differentiable empirical distribution [M] of the soft-assignment weights
/// over every complex element of z.
Tensor constellation_usage(const Tensor& z, const Constellation& c, const QuantizerConfig& cfg);

}  // namespace jscq
