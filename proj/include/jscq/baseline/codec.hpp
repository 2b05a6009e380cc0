#pragma once

// Small 8x8 block-DCT image codec used by the separation baseline.
// Byte layout: docs/codec_format.md.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "jscq/metrics.hpp"

namespace jscq {

class DecodeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kMinQuality = 1;
inline constexpr int kMaxQuality = 31;

struct CodecHeader {
  std::uint16_t height = 0;
  std::uint16_t width = 0;
  std::uint8_t channels = 0;
  std::uint8_t quality = 0;
};

inline constexpr std::size_t kCodecHeaderBytes = 6;

struct CodecStream {
  CodecHeader header;
  std::vector<std::uint8_t> bytes;  // header followed by the entropy-coded blocks

  std::size_t bit_length() const { return bytes.size() * 8; }
};

/// Encodes image `index` of `x` (channels 1 or 3, values rounded to 8 bits).
/// Larger q means coarser quantization and a shorter stream.
CodecStream codec_encode(const ImageBatch& x, std::size_t index, int quality);

/// Decodes a stream into a one-image batch. Any number of zero bytes may
/// follow the payload. Throws DecodeFailure on any malformed payload, or when the header disagrees with `expected` (fields
/// left at 0 are not checked).
ImageBatch codec_decode(std::span<const std::uint8_t> bytes, const CodecHeader& expected = {});

}  // namespace jscq
