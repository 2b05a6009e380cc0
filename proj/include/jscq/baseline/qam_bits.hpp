#pragma once

// Gray-labelled bit mapping onto the square QAM constellations.
//
// A symbol carries log2(M) bits: the first half select the real-axis level,
// the second half the imaginary-axis level, most significant bit first. Each
// half is a binary-reflected Gray label of the ascending level index, so
// neighbouring levels differ in exactly one bit.

#include <cstdint>
#include <span>
#include <vector>

#include "jscq/constellation.hpp"

namespace jscq {

std::size_t bits_per_symbol(const Constellation& c);

// Gray label of ascending level index `a`, and its inverse.
std::uint32_t gray_label(std::uint32_t a);
std::uint32_t gray_level(std::uint32_t label);

// Bits of constellation point j (index = imag_level * L + real_level).
std::vector<std::uint8_t> point_bits(const Constellation& c, std::size_t j);

/// bits.size() must be a multiple of log2(M).
std::vector<Complex> qam_map(std::span<const std::uint8_t> bits, const Constellation& c);

/// Exact per-bit LLRs ln(sum_{b=0} e^{-|y-c|^2/sigma2}) - ln(sum_{b=1} ...).
/// Evaluated per axis, which is exact because the labels and the noise both
/// separate over the two axes.
std::vector<double> qam_demap_llr(std::span<const Complex> y, const Constellation& c, double sigma2);

}  // namespace jscq
