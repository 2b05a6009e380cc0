#include "jscq/harness/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>

#include "jscq/rng.hpp"

namespace jscq {

namespace fs = std::filesystem;

ImageBatch parse_cifar10(const std::vector<unsigned char>& bytes, const std::string& origin) {
  if (bytes.size() % kCifarRecordBytes != 0) {
    const std::size_t complete = bytes.size() / kCifarRecordBytes;
    throw DatasetError(origin + ": truncated CIFAR-10 record at byte offset " +
                       std::to_string(complete * kCifarRecordBytes) + " (file has " + std::to_string(bytes.size()) +
                       " bytes, records are " + std::to_string(kCifarRecordBytes) + ")");
  }
  const std::size_t n = bytes.size() / kCifarRecordBytes;
  constexpr std::size_t plane = kCifarSide * kCifarSide;
  ImageBatch out(n, kCifarSide, kCifarSide, 3, 255.0);
  for (std::size_t b = 0; b < n; ++b) {
    const unsigned char* rec = bytes.data() + b * kCifarRecordBytes + 1;
    auto img = out.image(b);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < plane; ++p) img[p * 3 + c] = rec[c * plane + p];
  }
  return out;
}

ImageBatch load_cifar10(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open CIFAR-10 file '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_cifar10(bytes, path);
}

ImageBatch load_cifar10_all(const std::string& path) {
  if (!fs::is_directory(path)) return load_cifar10(path);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(path))
    if (e.is_regular_file() && e.path().extension() == ".bin") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DatasetError("no .bin files under '" + path + "'");
  ImageBatch all(0, kCifarSide, kCifarSide, 3, 255.0);
  for (const auto& f : files) {
    auto part = load_cifar10(f.string());
    all.data.insert(all.data.end(), part.data.begin(), part.data.end());
    all.batch += part.batch;
  }
  return all;
}

ImageBatch synthetic_images(std::size_t count, std::size_t height, std::size_t width, std::uint64_t seed) {
  ImageBatch out(count, height, width, 3, 255.0);
  for (std::size_t b = 0; b < count; ++b) {
    Rng rng(seed, b);
    double base[3], gx[3], gy[3];
    for (int c = 0; c < 3; ++c) {
      base[c] = rng.uniform(0.15, 0.85);
      gx[c] = rng.uniform(-0.4, 0.4);
      gy[c] = rng.uniform(-0.4, 0.4);
    }
    const int blobs = 1 + static_cast<int>(rng.below(3));
    struct Blob {
      double cx, cy, r, color[3];
    } bl[3];
    for (int k = 0; k < blobs; ++k) {
      bl[k].cx = rng.uniform(0.2, 0.8);
      bl[k].cy = rng.uniform(0.2, 0.8);
      bl[k].r = rng.uniform(0.12, 0.3);
      for (double& v : bl[k].color) v = rng.uniform(0.0, 1.0);
    }
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const double u = (x + 0.5) / width, v = (y + 0.5) / height;
        double px[3];
        for (int c = 0; c < 3; ++c) px[c] = base[c] + gx[c] * (u - 0.5) + gy[c] * (v - 0.5);
        for (int k = 0; k < blobs; ++k) {
          const double d2 = (u - bl[k].cx) * (u - bl[k].cx) + (v - bl[k].cy) * (v - bl[k].cy);
          const double a = std::exp(-d2 / (2.0 * bl[k].r * bl[k].r));
          for (int c = 0; c < 3; ++c) px[c] = (1.0 - a) * px[c] + a * bl[k].color[c];
        }
        for (int c = 0; c < 3; ++c) out.at(b, y, x, c) = std::round(255.0 * std::clamp(px[c], 0.0, 1.0));
      }
  }
  return out;
}

ImageBatch gather(const ImageBatch& images, const std::vector<std::size_t>& indices) {
  ImageBatch out(indices.size(), images.height, images.width, images.channels, images.peak);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= images.batch) throw std::out_of_range("gather: image index out of range");
    auto src = images.image(indices[i]);
    std::copy(src.begin(), src.end(), out.image(i).begin());
  }
  return out;
}

SplitIndices split_indices(std::size_t n, std::size_t ratio, std::uint64_t seed) {
  if (ratio == 0) throw std::invalid_argument("split: ratio must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, 0x5b117);
  rng.shuffle(std::span<std::size_t>(order));
  const auto n_test = static_cast<std::ptrdiff_t>(n / (ratio + 1));
  SplitIndices s;
  s.test.assign(order.begin(), order.begin() + n_test);
  s.train.assign(order.begin() + n_test, order.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

DatasetSplit split_dataset(const ImageBatch& images, std::size_t ratio, std::uint64_t seed) {
  const auto idx = split_indices(images.batch, ratio, seed);
  return {gather(images, idx.train), gather(images, idx.test)};
}

DatasetSplit load_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  ImageBatch all;
  if (spec.source == DatasetSpec::Source::cifar10) {
    if (spec.path.empty()) throw DatasetError("dataset: cifar10 source needs a path");
    all = load_cifar10_all(spec.path);
  } else {
    all = synthetic_images(spec.synthetic_count, spec.height, spec.width, seed);
  }
  if (spec.subset > 0 && spec.subset < all.batch) all = all.slice(0, spec.subset);
  return split_dataset(all, spec.ratio, seed);
}

}  // namespace jscq
