#include "jscq/baseline/codec.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <string>

namespace jscq {

namespace {

constexpr int N = 8;
constexpr double kDeadZone = 0.35;  // rounding offset; 0.5 would be plain rounding

struct Tables {
  std::array<std::array<double, N>, N> basis{};  // basis[u][x]
  std::array<int, N * N> zigzag{};               // scan position -> row-major index

  Tables() {
    const double pi = std::acos(-1.0);
    for (int u = 0; u < N; ++u)
      for (int x = 0; x < N; ++x)
        basis[u][x] = (u == 0 ? std::sqrt(1.0 / N) : std::sqrt(2.0 / N)) * std::cos((2 * x + 1) * u * pi / (2 * N));
    int pos = 0;
    for (int s = 0; s < 2 * N - 1; ++s) {
      if (s % 2 == 0) {
        for (int r = std::min(s, N - 1); r >= 0 && s - r < N; --r) zigzag[pos++] = r * N + (s - r);
      } else {
        for (int c = std::min(s, N - 1); c >= 0 && s - c < N; --c) zigzag[pos++] = (s - c) * N + c;
      }
    }
  }
};

const Tables& tables() {
  static const Tables t;
  return t;
}

// DC is quantized with a fixed step so its prediction residuals, and hence
// their code lengths, do not depend on q.
constexpr double kDcStep = 8.0;

double step_size(int quality, int u, int v, bool chroma) {
  const double s = (u == 0 && v == 0) ? kDcStep : quality * (1.0 + 0.75 * (u + v));
  return s * (chroma ? 1.5 : 1.0);
}

void fdct(const double* in, double* out) {
  const auto& b = tables().basis;
  double tmp[N * N];
  for (int y = 0; y < N; ++y)
    for (int u = 0; u < N; ++u) {
      double s = 0.0;
      for (int x = 0; x < N; ++x) s += b[u][x] * in[y * N + x];
      tmp[y * N + u] = s;
    }
  for (int v = 0; v < N; ++v)
    for (int u = 0; u < N; ++u) {
      double s = 0.0;
      for (int y = 0; y < N; ++y) s += b[v][y] * tmp[y * N + u];
      out[v * N + u] = s;
    }
}

void idct(const double* in, double* out) {
  const auto& b = tables().basis;
  double tmp[N * N];
  for (int v = 0; v < N; ++v)
    for (int x = 0; x < N; ++x) {
      double s = 0.0;
      for (int u = 0; u < N; ++u) s += b[u][x] * in[v * N + u];
      tmp[v * N + x] = s;
    }
  for (int y = 0; y < N; ++y)
    for (int x = 0; x < N; ++x) {
      double s = 0.0;
      for (int v = 0; v < N; ++v) s += b[v][y] * tmp[v * N + x];
      out[y * N + x] = s;
    }
}

class BitWriter {
 public:
  void put(std::uint32_t value, int nbits) {
    for (int i = nbits - 1; i >= 0; --i) {
      if (used_ == 0) bytes_.push_back(0);
      if ((value >> i) & 1u) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> used_);
      used_ = (used_ + 1) % 8;
    }
  }
  void ue(std::uint32_t v) {
    const std::uint32_t x = v + 1;
    const int n = std::bit_width(x);
    put(0, n - 1);
    put(x, n);
  }
  void se(int v) { ue(v > 0 ? static_cast<std::uint32_t>(2 * v - 1) : static_cast<std::uint32_t>(-2 * v)); }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
  int used_ = 0;
};

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint32_t bit() {
    if (pos_ >= bytes_.size() * 8) throw DecodeFailure("codec: payload ends inside a block");
    const std::uint32_t b = (bytes_[pos_ / 8] >> (7 - pos_ % 8)) & 1u;
    ++pos_;
    return b;
  }
  std::uint32_t ue() {
    int zeros = 0;
    while (bit() == 0)
      if (++zeros > 24) throw DecodeFailure("codec: exp-Golomb prefix too long at bit " + std::to_string(pos_));
    std::uint32_t x = 1;
    for (int i = 0; i < zeros; ++i) x = (x << 1) | bit();
    return x - 1;
  }
  int se() {
    const std::uint32_t k = ue();
    return (k & 1u) ? static_cast<int>((k + 1) / 2) : -static_cast<int>(k / 2);
  }
  // Only zero padding may follow the last block.
  void finish() const {
    for (std::size_t p = pos_; p < bytes_.size() * 8; ++p)
      if ((bytes_[p / 8] >> (7 - p % 8)) & 1u) throw DecodeFailure("codec: non-zero padding bits");
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

struct Plane {
  std::size_t h = 0, w = 0;
  std::vector<double> v;
  double at(std::size_t y, std::size_t x) const { return v[y * w + x]; }
};

struct Layout {
  std::size_t h, w;
  bool chroma;
};

std::vector<Layout> plane_layout(std::size_t h, std::size_t w, std::size_t c) {
  if (c == 1) return {{h, w, false}};
  const std::size_t ch = (h + 1) / 2, cw = (w + 1) / 2;
  return {{h, w, false}, {ch, cw, true}, {ch, cw, true}};
}

std::size_t padded(std::size_t n) { return (n + N - 1) / N * N; }

std::vector<Plane> to_planes(const ImageBatch& x, std::size_t index) {
  const std::size_t h = x.height, w = x.width;
  auto px = [&](std::size_t y, std::size_t xx, std::size_t c) {
    return std::clamp(std::round(x.at(index, y, xx, c)), 0.0, 255.0);
  };
  if (x.channels == 1) {
    Plane p{h, w, std::vector<double>(h * w)};
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) p.v[y * w + xx] = px(y, xx, 0);
    return {p};
  }
  Plane yp{h, w, std::vector<double>(h * w)};
  Plane cb_full{h, w, std::vector<double>(h * w)}, cr_full{h, w, std::vector<double>(h * w)};
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t xx = 0; xx < w; ++xx) {
      const double r = px(y, xx, 0), g = px(y, xx, 1), b = px(y, xx, 2);
      yp.v[y * w + xx] = 0.299 * r + 0.587 * g + 0.114 * b;
      cb_full.v[y * w + xx] = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
      cr_full.v[y * w + xx] = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
    }
  const std::size_t ch = (h + 1) / 2, cw = (w + 1) / 2;
  auto subsample = [&](const Plane& full) {
    Plane p{ch, cw, std::vector<double>(ch * cw)};
    for (std::size_t i = 0; i < ch; ++i)
      for (std::size_t j = 0; j < cw; ++j) {
        double s = 0.0;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx)
            s += full.at(std::min(2 * i + dy, h - 1), std::min(2 * j + dx, w - 1));
        p.v[i * cw + j] = s / 4.0;
      }
    return p;
  };
  return {yp, subsample(cb_full), subsample(cr_full)};
}

// Bilinear, chroma sample (i, j) centred at luma (2i + 0.5, 2j + 0.5).
double upsample(const Plane& p, std::size_t y, std::size_t x) {
  const double fy = std::clamp((y - 0.5) / 2.0, 0.0, static_cast<double>(p.h - 1));
  const double fx = std::clamp((x - 0.5) / 2.0, 0.0, static_cast<double>(p.w - 1));
  const auto y0 = static_cast<std::size_t>(fy), x0 = static_cast<std::size_t>(fx);
  const std::size_t y1 = std::min(y0 + 1, p.h - 1), x1 = std::min(x0 + 1, p.w - 1);
  const double ay = fy - y0, ax = fx - x0;
  return (1 - ay) * ((1 - ax) * p.at(y0, x0) + ax * p.at(y0, x1)) + ay * ((1 - ax) * p.at(y1, x0) + ax * p.at(y1, x1));
}

int quantize(double c, double step) {
  const double m = std::floor(std::abs(c) / step + kDeadZone);
  return c < 0 ? -static_cast<int>(m) : static_cast<int>(m);
}

}  // namespace

CodecStream codec_encode(const ImageBatch& x, std::size_t index, int quality) {
  if (quality < kMinQuality || quality > kMaxQuality)
    throw std::invalid_argument("codec: quality " + std::to_string(quality) + " outside [1, 31]");
  if (x.channels != 1 && x.channels != 3) throw std::invalid_argument("codec: images need 1 or 3 channels");
  if (x.height == 0 || x.width == 0 || x.height > 65535 || x.width > 65535)
    throw std::invalid_argument("codec: image dimensions must lie in [1, 65535]");
  if (index >= x.batch) throw std::out_of_range("codec: image index out of range");

  CodecStream s;
  s.header = {static_cast<std::uint16_t>(x.height), static_cast<std::uint16_t>(x.width),
              static_cast<std::uint8_t>(x.channels), static_cast<std::uint8_t>(quality)};
  BitWriter bw;
  bw.put(s.header.height, 16);
  bw.put(s.header.width, 16);
  bw.put(s.header.channels, 8);
  bw.put(s.header.quality, 8);

  const auto& zz = tables().zigzag;
  const auto planes = to_planes(x, index);
  const auto layout = plane_layout(x.height, x.width, x.channels);
  for (std::size_t pi = 0; pi < planes.size(); ++pi) {
    const auto& p = planes[pi];
    const bool chroma = layout[pi].chroma;
    int prev_dc = 0;
    for (std::size_t by = 0; by < padded(p.h); by += N)
      for (std::size_t bx = 0; bx < padded(p.w); bx += N) {
        double block[N * N], coef[N * N];
        for (int y = 0; y < N; ++y)
          for (int xx = 0; xx < N; ++xx)
            block[y * N + xx] = p.at(std::min(by + y, p.h - 1), std::min(bx + xx, p.w - 1)) - 128.0;
        fdct(block, coef);
        int levels[N * N];
        for (int k = 0; k < N * N; ++k) {
          const int idx = zz[k];
          levels[k] = quantize(coef[idx], step_size(quality, idx / N, idx % N, chroma));
        }
        bw.se(levels[0] - prev_dc);
        prev_dc = levels[0];
        int nnz = 0;
        for (int k = 1; k < N * N; ++k) nnz += levels[k] != 0;
        bw.ue(static_cast<std::uint32_t>(nnz));
        int run = 0;
        for (int k = 1; k < N * N; ++k) {
          if (levels[k] == 0) {
            ++run;
            continue;
          }
          bw.ue(static_cast<std::uint32_t>(run));
          bw.se(levels[k]);
          run = 0;
        }
      }
  }
  s.bytes = std::move(bw.bytes());
  return s;
}

ImageBatch codec_decode(std::span<const std::uint8_t> bytes, const CodecHeader& expected) {
  if (bytes.size() < kCodecHeaderBytes) throw DecodeFailure("codec: stream shorter than its header");
  CodecHeader h;
  h.height = static_cast<std::uint16_t>(bytes[0] << 8 | bytes[1]);
  h.width = static_cast<std::uint16_t>(bytes[2] << 8 | bytes[3]);
  h.channels = bytes[4];
  h.quality = bytes[5];
  if (h.height == 0 || h.width == 0) throw DecodeFailure("codec: zero image dimension in header");
  if (h.channels != 1 && h.channels != 3)
    throw DecodeFailure("codec: header declares " + std::to_string(h.channels) + " channels");
  if (h.quality < kMinQuality || h.quality > kMaxQuality)
    throw DecodeFailure("codec: header quality " + std::to_string(h.quality) + " out of range");
  if ((expected.height && expected.height != h.height) || (expected.width && expected.width != h.width) ||
      (expected.channels && expected.channels != h.channels) || (expected.quality && expected.quality != h.quality)) {
    throw DecodeFailure("codec: header " + std::to_string(h.height) + "x" + std::to_string(h.width) + "x" +
                        std::to_string(h.channels) + " q" + std::to_string(h.quality) +
                        " does not match the expected image");
  }

  const auto& zz = tables().zigzag;
  BitReader br(bytes.subspan(kCodecHeaderBytes));
  const auto layout = plane_layout(h.height, h.width, h.channels);
  std::vector<Plane> planes;
  for (const auto& l : layout) {
    Plane p{l.h, l.w, std::vector<double>(l.h * l.w)};
    int prev_dc = 0;
    for (std::size_t by = 0; by < padded(p.h); by += N)
      for (std::size_t bx = 0; bx < padded(p.w); bx += N) {
        int levels[N * N] = {};
        levels[0] = prev_dc + br.se();
        prev_dc = levels[0];
        const std::uint32_t nnz = br.ue();
        if (nnz > N * N - 1) throw DecodeFailure("codec: block claims " + std::to_string(nnz) + " AC coefficients");
        int k = 0;
        for (std::uint32_t i = 0; i < nnz; ++i) {
          k += static_cast<int>(br.ue()) + 1;
          if (k > N * N - 1) throw DecodeFailure("codec: AC run leaves the block");
          const int level = br.se();
          if (level == 0) throw DecodeFailure("codec: zero AC level");
          levels[k] = level;
        }
        double coef[N * N], block[N * N];
        for (int j = 0; j < N * N; ++j) {
          const int idx = zz[j];
          coef[idx] = levels[j] * step_size(h.quality, idx / N, idx % N, l.chroma);
        }
        idct(coef, block);
        for (int y = 0; y < N; ++y)
          for (int x = 0; x < N; ++x)
            if (by + y < p.h && bx + x < p.w) p.v[(by + y) * p.w + bx + x] = block[y * N + x] + 128.0;
      }
    planes.push_back(std::move(p));
  }
  br.finish();

  ImageBatch out(1, h.height, h.width, h.channels, 255.0);
  auto store = [](double v) { return std::clamp(std::round(v), 0.0, 255.0); };
  for (std::size_t y = 0; y < h.height; ++y)
    for (std::size_t x = 0; x < h.width; ++x) {
      if (h.channels == 1) {
        out.at(0, y, x, 0) = store(planes[0].at(y, x));
        continue;
      }
      const double Y = planes[0].at(y, x);
      const double cb = upsample(planes[1], y, x) - 128.0;
      const double cr = upsample(planes[2], y, x) - 128.0;
      out.at(0, y, x, 0) = store(Y + 1.402 * cr);
      out.at(0, y, x, 1) = store(Y - 0.344136 * cb - 0.714136 * cr);
      out.at(0, y, x, 2) = store(Y + 1.772 * cb);
    }
  return out;
}

}  // namespace jscq
