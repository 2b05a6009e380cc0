#include "jscq/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace jscq {

namespace {

void require_same(const char* op, const ImageBatch& a, const ImageBatch& b) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": image batches differ in shape (" + std::to_string(a.batch) +
                     "x" + std::to_string(a.height) + "x" + std::to_string(a.width) + "x" +
                     std::to_string(a.channels) + " vs " + std::to_string(b.batch) + "x" +
                     std::to_string(b.height) + "x" + std::to_string(b.width) + "x" +
                     std::to_string(b.channels) + ")");
  }
}

struct ChannelStats {
  double mx, my, vx, vy, cxy;
};

ChannelStats channel_stats(const double* x, const double* y, std::size_t n, std::size_t stride) {
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i * stride];
    sy += y[i * stride];
  }
  const double mx = sx / static_cast<double>(n), my = sy / static_cast<double>(n);
  double vx = 0.0, vy = 0.0, cxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i * stride] - mx, dy = y[i * stride] - my;
    vx += dx * dx;
    vy += dy * dy;
    cxy += dx * dy;
  }
  const double inv = 1.0 / static_cast<double>(n);
  return {mx, my, vx * inv, vy * inv, cxy * inv};
}

double ssim_from_stats(const ChannelStats& s, double peak) {
  const double v1 = (0.01 * peak) * (0.01 * peak);
  const double v2 = (0.03 * peak) * (0.03 * peak);
  const double lum = (2.0 * s.mx * s.my + v1) / (s.mx * s.mx + s.my * s.my + v1);
  const double st = (2.0 * s.cxy + v2) / (s.vx + s.vy + v2);
  return lum * st;
}

}  // namespace

ImageBatch::ImageBatch(std::size_t b, std::size_t h, std::size_t w, std::size_t c, double peak_value)
    : batch(b), height(h), width(w), channels(c), peak(peak_value), data(b * h * w * c, 0.0) {}

bool ImageBatch::same_shape(const ImageBatch& o) const {
  return batch == o.batch && height == o.height && width == o.width && channels == o.channels;
}

void ImageBatch::validate() const {
  if (height == 0 || width == 0 || channels == 0) throw ShapeError("image batch: empty dimensions");
  if (data.size() != batch * image_size()) throw ShapeError("image batch: data size mismatch");
  for (double v : data) {
    if (!(v >= 0.0 && v <= peak)) {
      throw std::invalid_argument("image batch: value " + std::to_string(v) + " outside [0, " +
                                  std::to_string(peak) + "]");
    }
  }
}

ImageBatch ImageBatch::slice(std::size_t first, std::size_t count) const {
  if (first + count > batch) throw std::out_of_range("image batch: slice past the end");
  ImageBatch out(count, height, width, channels, peak);
  std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(first * image_size()), count * image_size(),
              out.data.begin());
  return out;
}

Tensor ImageBatch::to_unit_tensor() const {
  std::vector<double> v(data.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = data[i] / peak;
  return Tensor::from({batch, height, width, channels}, std::move(v));
}

ImageBatch from_unit_tensor(const Tensor& t, double peak) {
  if (t.rank() != 4) throw ShapeError("from_unit_tensor: expected [B,H,W,C], got " + shape_str(t.shape()));
  ImageBatch out(t.dim(0), t.dim(1), t.dim(2), t.dim(3), peak);
  auto in = t.data();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = in[i] * peak;
  return out;
}

std::vector<double> mse(const ImageBatch& x, const ImageBatch& x_hat) {
  require_same("mse", x, x_hat);
  std::vector<double> out(x.batch);
  const std::size_t n = x.image_size();
  for (std::size_t b = 0; b < x.batch; ++b) {
    double s = 0.0;
    auto a = x.image(b);
    auto c = x_hat.image(b);
    for (std::size_t i = 0; i < n; ++i) s += (a[i] - c[i]) * (a[i] - c[i]);
    out[b] = s / static_cast<double>(n);
  }
  return out;
}

double psnr_from_mse(double mse_value, double peak) {
  if (mse_value <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse_value);
}

std::vector<double> psnr(const ImageBatch& x, const ImageBatch& x_hat, double peak) {
  auto m = mse(x, x_hat);
  for (auto& v : m) v = psnr_from_mse(v, peak);
  return m;
}

double ssim_global(std::span<const double> x, std::span<const double> y, double peak) {
  if (x.size() != y.size() || x.empty()) throw ShapeError("ssim: sequences differ in length or are empty");
  return ssim_from_stats(channel_stats(x.data(), y.data(), x.size(), 1), peak);
}

std::vector<double> ssim(const ImageBatch& x, const ImageBatch& x_hat, double peak) {
  require_same("ssim", x, x_hat);
  std::vector<double> out(x.batch);
  const std::size_t n = x.height * x.width;
  for (std::size_t b = 0; b < x.batch; ++b) {
    double acc = 0.0;
    for (std::size_t c = 0; c < x.channels; ++c) {
      acc += ssim_from_stats(
          channel_stats(x.image(b).data() + c, x_hat.image(b).data() + c, n, x.channels), peak);
    }
    out[b] = acc / static_cast<double>(x.channels);
  }
  return out;
}

Tensor mse_loss(const Tensor& x, const Tensor& x_hat) { return mean(square(sub(x_hat, x))); }

Tensor ssim_loss(const Tensor& x, const Tensor& x_hat, double peak) {
  if (x.shape() != x_hat.shape() || x.rank() != 4) {
    throw ShapeError("ssim_loss: expected equal [B,H,W,C] shapes, got " + shape_str(x.shape()) +
                     " and " + shape_str(x_hat.shape()));
  }
  const std::size_t batch = x.dim(0), n = x.dim(1) * x.dim(2), ch = x.dim(3);
  std::vector<ChannelStats> stats(batch * ch);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t off = b * n * ch + c;
      stats[b * ch + c] = channel_stats(x.data().data() + off, x_hat.data().data() + off, n, ch);
      total += 1.0 - ssim_from_stats(stats[b * ch + c], peak);
    }
  const double norm = 1.0 / static_cast<double>(batch * ch);
  return detail::make_result(
      {1}, {total * norm}, {x, x_hat}, "ssim_loss",
      [batch, n, ch, norm, peak, stats = std::move(stats)](detail::Node& self) {
        const double v1 = (0.01 * peak) * (0.01 * peak);
        const double v2 = (0.03 * peak) * (0.03 * peak);
        const double up = -self.grad[0] * norm;
        const double inv_n = 1.0 / static_cast<double>(n);
        auto& px = *self.parents[0];
        auto& py = *self.parents[1];
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < ch; ++c) {
            const auto& s = stats[b * ch + c];
            const double n1 = 2.0 * s.mx * s.my + v1, d1 = s.mx * s.mx + s.my * s.my + v1;
            const double n2 = 2.0 * s.cxy + v2, d2 = s.vx + s.vy + v2;
            const double lum = n1 / d1, st = n2 / d2;
            const double dl_dmx = (2.0 * s.my * d1 - n1 * 2.0 * s.mx) / (d1 * d1);
            const double dl_dmy = (2.0 * s.mx * d1 - n1 * 2.0 * s.my) / (d1 * d1);
            const double ds_dcov = 2.0 / d2;
            const double ds_dvar = -n2 / (d2 * d2);
            const std::size_t off = b * n * ch + c;
            for (std::size_t i = 0; i < n; ++i) {
              const std::size_t p = off + i * ch;
              const double dx = px.data[p] - s.mx, dy = py.data[p] - s.my;
              if (px.requires_grad) {
                const double d = st * dl_dmx * inv_n + lum * (ds_dcov * dy + ds_dvar * 2.0 * dx) * inv_n;
                px.grad_buffer()[p] += up * d;
              }
              if (py.requires_grad) {
                const double d = st * dl_dmy * inv_n + lum * (ds_dcov * dx + ds_dvar * 2.0 * dy) * inv_n;
                py.grad_buffer()[p] += up * d;
              }
            }
          }
      });
}

}  // namespace jscq
