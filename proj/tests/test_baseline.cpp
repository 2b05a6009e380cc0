#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "jscq/baseline/codec.hpp"
#include "jscq/baseline/ldpc.hpp"
#include "jscq/baseline/pipeline.hpp"
#include "jscq/baseline/qam_bits.hpp"
#include "jscq/harness/dataset.hpp"
#include "jscq/harness/experiments.hpp"
#include "jscq/rng.hpp"

using namespace jscq;

namespace {

ImageBatch noise_images(std::size_t n, std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed) {
  ImageBatch x(n, h, w, c);
  Rng rng(seed);
  for (auto& v : x.data) v = double(rng.below(256));
  return x;
}

std::vector<std::uint8_t> random_bits(Rng& rng, std::size_t n) {
  std::vector<std::uint8_t> b(n);
  for (auto& v : b) v = std::uint8_t(rng.below(2));
  return b;
}

const LdpcCode& half_rate() {
  static const LdpcCode code = load_standard_code(CodeRate::r1_2);
  return code;
}

// Full-constellation log-sum-exp, no axis factorisation.
std::vector<double> llr_oracle(Complex y, const Constellation& c, double sigma2) {
  const std::size_t b = bits_per_symbol(c);
  std::vector<double> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    double s0 = 0, s1 = 0;
    for (std::size_t j = 0; j < c.size(); ++j) {
      const double m = std::exp(-std::norm(y - c.point(j)) / sigma2);
      (point_bits(c, j)[i] ? s1 : s0) += m;
    }
    out[i] = std::log(s0) - std::log(s1);
  }
  return out;
}

}  // namespace

TEST_SUITE("baseline") {

TEST_CASE("codec: constant image at q=1 is near lossless") {
  for (double v : {0.0, 77.0, 128.0, 255.0}) {
    ImageBatch x(1, 16, 24, 3);
    std::fill(x.data.begin(), x.data.end(), v);
    const auto s = codec_encode(x, 0, 1);
    const auto y = codec_decode(s.bytes);
    CHECK(psnr(x, y, 255.0)[0] > 50.0);
  }
}

TEST_CASE("codec: payload never grows with q") {
  const auto imgs = synthetic_images(20, 32, 32, 3);
  const auto noisy = noise_images(5, 32, 32, 3, 4);
  for (const auto* set : {&imgs, &noisy})
    for (std::size_t i = 0; i < set->batch; ++i) {
      std::size_t prev = std::numeric_limits<std::size_t>::max();
      for (int q = kMinQuality; q <= kMaxQuality; ++q) {
        const auto n = codec_encode(*set, i, q).bytes.size();
        CHECK(n <= prev);
        prev = n;
      }
    }
}

TEST_CASE("codec: clean payloads always decode") {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t h = 1 + rng.below(20), w = 1 + rng.below(20), c = rng.below(2) ? 3 : 1;
    const auto x = noise_images(1, h, w, c, 100 + i);
    const int q = 1 + int(rng.below(31));
    const auto s = codec_encode(x, 0, q);
    ImageBatch y;
    REQUIRE_NOTHROW(y = codec_decode(s.bytes));
    CHECK(y.same_shape(x));
    CHECK_NOTHROW(y.validate());
    // trailing zero bytes are padding
    auto padded = s.bytes;
    padded.resize(padded.size() + 5, 0);
    CHECK(codec_decode(padded).data == y.data);
  }
}

TEST_CASE("codec: quality improves as q falls") {
  const auto x = synthetic_images(10, 32, 32, 7);
  for (std::size_t i = 0; i < x.batch; ++i) {
    const auto one = x.slice(i, 1);
    const double fine = psnr(one, codec_decode(codec_encode(x, i, 1).bytes), 255.0)[0];
    const double coarse = psnr(one, codec_decode(codec_encode(x, i, 31).bytes), 255.0)[0];
    CHECK(fine > coarse);
  }
}

TEST_CASE("codec: damage is detected or contained") {
  const auto x = synthetic_images(1, 32, 32, 9);
  const auto s = codec_encode(x, 0, 4);
  CodecHeader expect{32, 32, 3, 0};
  // header corruption
  auto bad = s.bytes;
  bad[1] ^= 0x01;
  CHECK_THROWS_AS(codec_decode(bad, expect), DecodeFailure);
  bad = s.bytes;
  bad[5] = 0;
  CHECK_THROWS_AS(codec_decode(bad), DecodeFailure);
  CHECK_THROWS_AS(codec_decode(std::vector<std::uint8_t>(s.bytes.begin(), s.bytes.begin() + 3)), DecodeFailure);
  // truncated body
  CHECK_THROWS_AS(codec_decode(std::vector<std::uint8_t>(s.bytes.begin(), s.bytes.end() - 4)), DecodeFailure);
  // random body flips either fail loudly or still give a valid image
  Rng rng(5);
  int failures = 0;
  for (int t = 0; t < 200; ++t) {
    bad = s.bytes;
    bad[kCodecHeaderBytes + rng.below(bad.size() - kCodecHeaderBytes)] ^= std::uint8_t(1u << rng.below(8));
    try {
      const auto y = codec_decode(bad, expect);
      CHECK_NOTHROW(y.validate());
    } catch (const DecodeFailure&) {
      ++failures;
    }
  }
  CHECK(failures > 0);
  CHECK_THROWS_AS(codec_encode(x, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(codec_encode(x, 0, 32), std::invalid_argument);
}

TEST_CASE("ldpc: shipped alist files match the generator") {
  for (auto rate : {CodeRate::r1_3, CodeRate::r1_2, CodeRate::r2_3}) {
    const auto shipped = load_standard_code(rate);
    const auto fresh = make_standard_code(rate);
    CHECK(shipped.columns() == fresh.columns());
    CHECK(shipped.dimension() == fresh.dimension());
    CHECK(shipped.length() == 1024);
    CHECK(std::abs(shipped.rate() - nominal_rate(rate)) < 2e-3);
    CHECK(shipped.four_cycles() == 0);
    for (const auto& col : shipped.columns()) CHECK(col.size() == 3);
  }
}

TEST_CASE("ldpc: alist text round trip") {
  const auto code = make_ldpc(96, 48, 5);
  std::stringstream ss;
  write_alist(ss, code);
  const auto back = read_alist(ss);
  CHECK(back.columns() == code.columns());
  std::stringstream broken("10 5\n3 6\n");
  CHECK_THROWS(read_alist(broken));
}

TEST_CASE("ldpc: encoding contract") {
  const auto& code = half_rate();
  const std::vector<std::uint8_t> zeros(code.dimension(), 0);
  const auto cw0 = code.encode(zeros);
  CHECK(std::all_of(cw0.begin(), cw0.end(), [](auto b) { return b == 0; }));
  Rng rng(6);
  for (auto rate : {CodeRate::r1_3, CodeRate::r1_2, CodeRate::r2_3}) {
    const auto c = load_standard_code(rate);
    for (int i = 0; i < 200; ++i) {
      const auto info = random_bits(rng, c.dimension());
      const auto cw = c.encode(info);
      REQUIRE(cw.size() == 1024);
      CHECK(c.is_codeword(cw));
      CHECK(std::equal(info.begin(), info.end(), cw.begin()));  // systematic
    }
  }
  // Linearity: the sum of two codewords is the codeword of the sum.
  const auto a = random_bits(rng, code.dimension()), b = random_bits(rng, code.dimension());
  auto ab = a;
  for (std::size_t i = 0; i < ab.size(); ++i) ab[i] ^= b[i];
  auto ca = code.encode(a), cb = code.encode(b), cab = code.encode(ab);
  for (std::size_t i = 0; i < ca.size(); ++i) CHECK((ca[i] ^ cb[i]) == cab[i]);
  // multi-block helper pads with zeros
  const auto stream = ldpc_encode(random_bits(rng, code.dimension() + 3), code);
  CHECK(stream.size() == 2 * code.length());
  CHECK_THROWS(code.encode(std::vector<std::uint8_t>(5)));
}

TEST_CASE("ldpc: noiseless decoding is the identity in one iteration") {
  const auto& code = half_rate();
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const auto cw = code.encode(random_bits(rng, code.dimension()));
    std::vector<double> llr(cw.size());
    for (std::size_t j = 0; j < cw.size(); ++j) llr[j] = cw[j] ? -20.0 : 20.0;
    const auto d = ldpc_decode(llr, code);
    CHECK(d.converged);
    CHECK(d.iterations == 1);
    CHECK(d.bits == cw);
  }
  CHECK_THROWS(ldpc_decode(std::vector<double>(10), code));
  std::vector<double> nan_llr(1024, 1.0);
  nan_llr[3] = std::nan("");
  CHECK_THROWS(ldpc_decode(nan_llr, code));
}

TEST_CASE("ldpc: waterfall sides for rate 1/2 QPSK") {
  const auto& code = half_rate();
  const auto c = make_qam(4, 1.0);
  const auto hi = measure_bler(code, c, {4.0}, 500, 21);
  CHECK(hi[0].bler < 1e-2);
  const auto lo = measure_bler(code, c, {-5.0}, 100, 22);
  CHECK(lo[0].bler > 0.5);
}

TEST_CASE("ldpc: decoder corrects a few flipped bits") {
  const auto& code = half_rate();
  Rng rng(8);
  const auto cw = code.encode(random_bits(rng, code.dimension()));
  std::vector<double> llr(cw.size());
  for (std::size_t j = 0; j < cw.size(); ++j) llr[j] = cw[j] ? -2.0 : 2.0;
  for (int f = 0; f < 5; ++f) llr[rng.below(llr.size())] *= -1;
  const auto d = ldpc_decode(llr, code);
  CHECK(d.converged);
  CHECK(d.bits == cw);
}

TEST_CASE("gray labels of neighbouring points differ in one bit") {
  for (std::size_t M : {4u, 16u, 64u, 256u, 1024u}) {
    const auto c = make_qam(M, 1.0);
    const std::size_t L = c.levels_per_axis();
    auto hamming = [&](std::size_t a, std::size_t b) {
      const auto x = point_bits(c, a), y = point_bits(c, b);
      int d = 0;
      for (std::size_t i = 0; i < x.size(); ++i) d += x[i] != y[i];
      return d;
    };
    for (std::size_t j = 0; j < M; ++j) {
      if (j % L + 1 < L) CHECK(hamming(j, j + 1) == 1);
      if (j + L < M) CHECK(hamming(j, j + L) == 1);
    }
    for (std::uint32_t a = 0; a < 64; ++a) CHECK(gray_level(gray_label(a)) == a);
  }
}

TEST_CASE("qam map and demap") {
  Rng rng(9);
  for (std::size_t M : {4u, 16u, 64u}) {
    const auto c = make_qam(M, 1.0);
    const auto bits = random_bits(rng, bits_per_symbol(c) * 50);
    const auto sym = qam_map(bits, c);
    for (std::size_t s = 0; s < sym.size(); ++s) {
      const auto j = c.nearest_index(sym[s]);
      const auto pb = point_bits(c, j);
      for (std::size_t i = 0; i < pb.size(); ++i) CHECK(pb[i] == bits[s * pb.size() + i]);
    }
    // noiseless limit
    const auto llr = qam_demap_llr(sym, c, 1e-4);
    for (std::size_t i = 0; i < bits.size(); ++i) CHECK((llr[i] < 0) == (bits[i] == 1));
    // factorised LLRs equal the full-constellation sum
    for (int t = 0; t < 20; ++t) {
      const Complex y{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
      const double s2 = rng.uniform(0.05, 2.0);
      const auto fast = qam_demap_llr(std::vector<Complex>{y}, c, s2);
      const auto ref = llr_oracle(y, c, s2);
      for (std::size_t i = 0; i < ref.size(); ++i) CHECK(fast[i] == doctest::Approx(ref[i]).epsilon(1e-9).scale(1e-9));
    }
  }
  CHECK_THROWS(qam_map(std::vector<std::uint8_t>(3), make_qam(16, 1.0)));
}

TEST_CASE("QPSK LLR magnitude and odd symmetry") {
  const auto c = make_qam(4, 1.0);
  for (std::size_t j = 0; j < 4; ++j) {
    const auto llr = qam_demap_llr(std::vector<Complex>{c.point(j)}, c, 0.01);
    const auto pb = point_bits(c, j);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK((llr[i] < 0) == (pb[i] == 1));
      CHECK(std::abs(llr[i]) > 50.0);
    }
  }
  Rng rng(10);
  for (int t = 0; t < 50; ++t) {
    const Complex y{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto a = qam_demap_llr(std::vector<Complex>{y}, c, 0.3);
    const auto b = qam_demap_llr(std::vector<Complex>{Complex{-y.real(), y.imag()}}, c, 0.3);
    CHECK(a[0] == doctest::Approx(-b[0]));
    CHECK(a[1] == doctest::Approx(b[1]));
  }
}

TEST_CASE("pipeline: budget and error-free channel") {
  const auto x = synthetic_images(8, 32, 32, 12);
  SeparationPipeline pipe(half_rate(), make_qam(4, 1.0), 1280);
  CHECK(pipe.plan().blocks == 2);
  CHECK(pipe.plan().symbols <= 1280);
  const auto clean = ChannelModel::from_snr(60.0, 60.0, 1.0, 1);
  for (std::size_t i = 0; i < x.batch; ++i) {
    const auto p = pipe.prepare(x, i);
    REQUIRE(p.quality > 0);
    CHECK(p.symbols.size() <= 1280);
    CHECK(p.payload_bits <= pipe.plan().info_bits);
    const auto r = pipe.transmit(p, clean, i);
    CHECK(r.success);
    const auto codec_only = codec_decode(codec_encode(x, i, p.quality).bytes);
    CHECK(psnr(x.slice(i, 1), r.image, 255.0)[0] == doctest::Approx(psnr(x.slice(i, 1), codec_only, 255.0)[0]));
    // the chosen quality is the finest that fits
    if (p.quality > 1) CHECK(codec_encode(x, i, p.quality - 1).bit_length() > pipe.plan().info_bits);
  }
}

TEST_CASE("pipeline: failures score as mid-gray") {
  const auto x = synthetic_images(3, 32, 32, 13);
  SeparationPipeline pipe(half_rate(), make_qam(4, 1.0), 1280);
  const auto bad = ChannelModel::from_snr(-6.0, -6.0, 1.0, 2);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto r = pipe.run(x, i, bad, 0);
    CHECK_FALSE(r.success);
    CHECK(r.failed_blocks > 0);
    CHECK(r.image.data == mid_gray_like(x).data);
  }
  // A budget too small for any codeword sends nothing.
  SeparationPipeline tiny(half_rate(), make_qam(4, 1.0), 100);
  CHECK(tiny.plan().blocks == 0);
  CHECK_FALSE(tiny.run(x, 0, ChannelModel::from_snr(20, 20, 1, 1), 0).success);
}

TEST_CASE("pipeline: PSNR is non-decreasing in SNR") {
  const auto x = synthetic_images(100, 32, 32, 14);
  SeparationPipeline pipe(half_rate(), make_qam(4, 1.0), 1280);
  EvalOptions opts;
  opts.trials = 1;
  opts.seed = 3;
  const auto rec = select_metric(baseline_sweep(pipe, x, {0.0, 1.0, 1.5, 2.0, 3.0, 5.0}, opts, "b"), "psnr");
  for (std::size_t i = 1; i < rec.size(); ++i) CHECK(rec[i].mean >= rec[i - 1].mean - 0.2);
}

}  // TEST_SUITE
