#pragma once

// Separation baseline: codec -> LDPC -> Gray QAM -> AWGN -> LLR demap -> BP
// -> codec decode, under a fixed channel-symbol budget.

#include <cstdint>
#include <vector>

#include "jscq/baseline/codec.hpp"
#include "jscq/baseline/ldpc.hpp"
#include "jscq/channel.hpp"
#include "jscq/constellation.hpp"
#include "jscq/metrics.hpp"

namespace jscq {

/// How a symbol budget is spent: as many whole codewords as fit.
struct BudgetPlan {
  std::size_t blocks = 0;
  std::size_t info_bits = 0;   // blocks * k
  std::size_t coded_bits = 0;  // blocks * n
  std::size_t symbols = 0;     // ceil(coded_bits / log2 M), never above the budget
};

BudgetPlan plan_budget(const LdpcCode& code, const Constellation& c, std::size_t symbol_budget);

/// Smallest (finest) quality whose stream fits `info_bits`, or 0 if none does.
int choose_quality(const ImageBatch& x, std::size_t index, std::size_t info_bits);

// Constant 128 image used to score undecodable transmissions.
ImageBatch mid_gray_like(const ImageBatch& x);

struct SeparationResult {
  ImageBatch image;  // one image
  bool success = false;
  int quality = 0;
  std::size_t payload_bits = 0;
  std::size_t symbols_used = 0;
  std::size_t failed_blocks = 0;
};

class SeparationPipeline {
 public:
  SeparationPipeline(LdpcCode code, Constellation constellation, std::size_t symbol_budget,
                     std::size_t max_iters = 50);

  struct Prepared {
    int quality = 0;  // 0: nothing fits the budget
    CodecHeader header;
    std::size_t payload_bits = 0;
    std::vector<Complex> symbols;
  };

  // Channel-independent half: source coding, channel coding and mapping.
  Prepared prepare(const ImageBatch& x, std::size_t index) const;
  // Channel and receiver. Noise is drawn from Rng(channel.seed, stream); the
  // demapper uses channel.sigma2_est.
  SeparationResult transmit(const Prepared& p, const ChannelModel& channel, std::uint64_t stream) const;
  SeparationResult run(const ImageBatch& x, std::size_t index, const ChannelModel& channel,
                       std::uint64_t stream) const {
    return transmit(prepare(x, index), channel, stream);
  }

  const BudgetPlan& plan() const { return plan_; }
  const LdpcCode& code() const { return code_; }
  const Constellation& constellation() const { return constellation_; }

 private:
  LdpcCode code_;
  Constellation constellation_;
  BudgetPlan plan_;
  std::size_t max_iters_;
};

}  // namespace jscq
