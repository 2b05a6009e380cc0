#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "jscq/tensor.hpp"

namespace jscq {

/// B images of H x W x C values in [0, peak], stored B-H-W-C row-major.
struct ImageBatch {
  std::size_t batch = 0, height = 0, width = 0, channels = 0;
  double peak = 255.0;
  std::vector<double> data;

  ImageBatch() = default;
  ImageBatch(std::size_t b, std::size_t h, std::size_t w, std::size_t c, double peak_value = 255.0);

  std::size_t image_size() const { return height * width * channels; }
  std::span<double> image(std::size_t b) { return {data.data() + b * image_size(), image_size()}; }
  std::span<const double> image(std::size_t b) const {
    return {data.data() + b * image_size(), image_size()};
  }
  double& at(std::size_t b, std::size_t y, std::size_t x, std::size_t c) {
    return data[((b * height + y) * width + x) * channels + c];
  }
  double at(std::size_t b, std::size_t y, std::size_t x, std::size_t c) const {
    return data[((b * height + y) * width + x) * channels + c];
  }
  bool same_shape(const ImageBatch& other) const;
  // Checks dimensions and that every value lies in [0, peak].
  void validate() const;
  // Images [first, first + count) as a new batch.
  ImageBatch slice(std::size_t first, std::size_t count) const;
  // [B, H, W, C] tensor scaled to [0, 1].
  Tensor to_unit_tensor() const;
};

/// Builds an ImageBatch from a [B, H, W, C] tensor in [0, 1], rescaled to [0, peak].
ImageBatch from_unit_tensor(const Tensor& t, double peak);

// Per-image mean squared error (mean over H*W*C, not the sum).
std::vector<double> mse(const ImageBatch& x, const ImageBatch& x_hat);

// 10 log10(peak^2 / mse); +infinity when mse == 0.
double psnr_from_mse(double mse_value, double peak);
std::vector<double> psnr(const ImageBatch& x, const ImageBatch& x_hat, double peak);

/// Whole-image SSIM per colour channel (global statistics, no window),
/// averaged over channels. The structure term uses the covariance.
std::vector<double> ssim(const ImageBatch& x, const ImageBatch& x_hat, double peak);

/// SSIM of two equally sized single-channel sequences.
double ssim_global(std::span<const double> x, std::span<const double> y, double peak);

// ---- training losses on [B, H, W, C] tensors ----

Tensor mse_loss(const Tensor& x, const Tensor& x_hat);
// Batch mean of 1 - SSIM with channels averaged; differentiable in both inputs.
Tensor ssim_loss(const Tensor& x, const Tensor& x_hat, double peak);

}  // namespace jscq
