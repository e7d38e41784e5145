#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace uth {

struct ImageDims {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(channels);
  }
  friend bool operator==(const ImageDims&, const ImageDims&) = default;
};

inline constexpr ImageDims kMnistDims{28, 28, 1};
inline constexpr ImageDims kCifar10Dims{32, 32, 3};

// One image with values in [0,1]. Pixels are stored channel-major
// (c, y, x), which is also the network's input layout.
struct ImageSample {
  ImageDims dims;
  std::vector<double> pixels;
  std::optional<int> label;
  std::size_t index = 0;

  double at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * dims.height + y) * dims.width + x];
  }
};

// Immutable ordered image collection. Indices run 0..size()-1 and every
// sample shares dims().
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::string name, ImageDims dims, std::vector<ImageSample> samples);

  const std::string& name() const { return name_; }
  const ImageDims& dims() const { return dims_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const ImageSample& operator[](std::size_t i) const { return samples_[i]; }
  const std::vector<ImageSample>& samples() const { return samples_; }
  bool has_labels() const;

  // First n samples (all of them when n >= size()).
  Dataset head(std::size_t n) const;
  // Samples at the given positions, re-indexed 0..k-1 in the given order.
  Dataset select(const std::vector<std::size_t>& positions) const;
  // Copy with every label removed.
  Dataset without_labels() const;

 private:
  std::string name_;
  ImageDims dims_;
  std::vector<ImageSample> samples_;
};

// IDX (MNIST) images + labels. Throws FormatError on bad magic,
// ConsistencyError on count mismatch, IoError on missing or truncated files.
Dataset load_mnist_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path);

// Writes dataset as IDX; pixels are re-quantized to round(255 p).
void write_mnist_idx(const Dataset& dataset, const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path);

// CIFAR-10 binary batches (3073-byte records, label byte first).
Dataset load_cifar10(const std::vector<std::filesystem::path>& batch_paths);

void write_cifar10(const Dataset& dataset, const std::filesystem::path& path);

struct RotationConfig {
  std::vector<double> degrees{-10.0, -5.0, 5.0, 10.0};

  void validate() const;
};

// Rotates about the image center with bilinear interpolation. Source
// positions outside the image read as 0; output is clamped to [0,1].
ImageSample rotate_image(const ImageSample& image, double degrees);

struct Triplet {
  std::size_t anchor_index = 0;
  ImageSample positive;
  std::size_t negative_index = 0;
  double rotation_degrees = 0.0;
};

// Anchors walk successive random permutations of the dataset; each
// positive is the anchor rotated by a uniformly drawn configured degree and
// each negative is uniform over the other indices.
std::vector<Triplet> sample_triplets(const Dataset& dataset, const RotationConfig& config,
                                     std::uint64_t seed, std::size_t count);

}  // namespace uth
