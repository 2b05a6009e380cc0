#include "jscq/baseline/pipeline.hpp"

#include <stdexcept>

#include "jscq/baseline/qam_bits.hpp"

namespace jscq {

BudgetPlan plan_budget(const LdpcCode& code, const Constellation& c, std::size_t symbol_budget) {
  const std::size_t b = bits_per_symbol(c);
  BudgetPlan p;
  p.blocks = symbol_budget * b / code.length();
  p.info_bits = p.blocks * code.dimension();
  p.coded_bits = p.blocks * code.length();
  p.symbols = (p.coded_bits + b - 1) / b;
  return p;
}

int choose_quality(const ImageBatch& x, std::size_t index, std::size_t info_bits) {
  for (int q = kMinQuality; q <= kMaxQuality; ++q)
    if (codec_encode(x, index, q).bit_length() <= info_bits) return q;
  return 0;
}

ImageBatch mid_gray_like(const ImageBatch& x) {
  ImageBatch g(1, x.height, x.width, x.channels, x.peak);
  std::fill(g.data.begin(), g.data.end(), 128.0);
  return g;
}

SeparationPipeline::SeparationPipeline(LdpcCode code, Constellation constellation, std::size_t symbol_budget,
                                       std::size_t max_iters)
    : code_(std::move(code)),
      constellation_(std::move(constellation)),
      plan_(plan_budget(code_, constellation_, symbol_budget)),
      max_iters_(max_iters) {}

SeparationPipeline::Prepared SeparationPipeline::prepare(const ImageBatch& x, std::size_t index) const {
  Prepared p;
  p.header = {static_cast<std::uint16_t>(x.height), static_cast<std::uint16_t>(x.width),
              static_cast<std::uint8_t>(x.channels), 0};
  if (plan_.blocks == 0) return p;
  p.quality = choose_quality(x, index, plan_.info_bits);
  if (p.quality == 0) return p;
  const auto stream = codec_encode(x, index, p.quality);
  p.payload_bits = stream.bit_length();
  std::vector<std::uint8_t> info(plan_.info_bits, 0);
  for (std::size_t i = 0; i < p.payload_bits; ++i) info[i] = (stream.bytes[i / 8] >> (7 - i % 8)) & 1u;
  auto coded = ldpc_encode(info, code_);
  coded.resize(plan_.symbols * bits_per_symbol(constellation_), 0);
  p.symbols = qam_map(coded, constellation_);
  return p;
}

SeparationResult SeparationPipeline::transmit(const Prepared& p, const ChannelModel& channel,
                                              std::uint64_t stream) const {
  SeparationResult r;
  r.quality = p.quality;
  r.payload_bits = p.payload_bits;
  r.symbols_used = p.symbols.size();
  ImageBatch shape(1, p.header.height, p.header.width, p.header.channels, 255.0);
  r.image = mid_gray_like(shape);
  if (p.quality == 0) {
    r.failed_blocks = plan_.blocks;
    return r;
  }
  const auto y = jscq::transmit(p.symbols, channel, stream);
  const auto llr = qam_demap_llr(y, constellation_, channel.sigma2_est);
  const std::size_t n = code_.length(), k = code_.dimension();
  std::vector<std::uint8_t> info(plan_.info_bits);
  for (std::size_t b = 0; b < plan_.blocks; ++b) {
    const auto dec = ldpc_decode(std::span<const double>(llr).subspan(b * n, n), code_, max_iters_);
    if (!dec.converged) ++r.failed_blocks;
    std::copy_n(dec.bits.begin(), k, info.begin() + static_cast<std::ptrdiff_t>(b * k));
  }
  if (r.failed_blocks > 0) return r;
  std::vector<std::uint8_t> bytes(info.size() / 8, 0);
  for (std::size_t i = 0; i < bytes.size() * 8; ++i) bytes[i / 8] |= static_cast<std::uint8_t>(info[i] << (7 - i % 8));
  try {
    r.image = codec_decode(bytes, p.header);
    r.success = true;
  } catch (const DecodeFailure&) {
    // keep the mid-gray reconstruction
  }
  return r;
}

}  // namespace jscq
