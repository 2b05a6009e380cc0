#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "jscq/metrics.hpp"

namespace jscq {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarRecordBytes = 1 + 3 * kCifarSide * kCifarSide;

/// Reads CIFAR-10 binary records (1 label byte, then 1024 bytes per colour
/// plane in R, G, B order). Labels are dropped; pixels come back as
/// 32 x 32 x 3 values in [0, 255].
ImageBatch load_cifar10(const std::string& path);
ImageBatch parse_cifar10(const std::vector<unsigned char>& bytes, const std::string& origin = "<memory>");
// Every `*.bin` in a directory in name order, or the single file at `path`.
ImageBatch load_cifar10_all(const std::string& path);

/// Smooth colour gradients with a few soft blobs. Cheap stand-in data when no
/// CIFAR files are available; deterministic in (count, seed).
ImageBatch synthetic_images(std::size_t count, std::size_t height, std::size_t width, std::uint64_t seed);

struct DatasetSpec {
  enum class Source { cifar10, synthetic };
  Source source = Source::synthetic;
  std::string path;
  std::size_t ratio = 5;      // train : test
  std::size_t subset = 0;     // 0 = everything; otherwise total images kept
  std::size_t synthetic_count = 1200;
  std::size_t height = 32, width = 32;
};

struct DatasetSplit {
  ImageBatch train;
  ImageBatch test;
};

// Images picked by index.
ImageBatch gather(const ImageBatch& images, const std::vector<std::size_t>& indices);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Index-level split of n images; both parts sorted ascending.
SplitIndices split_indices(std::size_t n, std::size_t ratio, std::uint64_t seed);

/// Shuffles with `seed` and cuts off every (ratio+1)-th image for testing:
/// n / (ratio + 1) test images, the rest for training.
DatasetSplit split_dataset(const ImageBatch& images, std::size_t ratio, std::uint64_t seed);

DatasetSplit load_dataset(const DatasetSpec& spec, std::uint64_t seed);

}  // namespace jscq
