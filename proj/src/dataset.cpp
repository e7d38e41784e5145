#include "uth/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "binary_io.hpp"
#include "uth/error.hpp"
#include "uth/rng.hpp"

namespace uth {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::size_t kCifarPixels = 32 * 32 * 3;
constexpr std::size_t kCifarRecord = 1 + kCifarPixels;

std::uint8_t to_byte(double p) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0));
}

}  // namespace

Dataset::Dataset(std::string name, ImageDims dims, std::vector<ImageSample> samples)
    : name_(std::move(name)), dims_(dims), samples_(std::move(samples)) {
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto& s = samples_[i];
    if (!(s.dims == dims_) || s.pixels.size() != dims_.size()) {
      throw ShapeError("dataset " + name_ + ": sample " + std::to_string(i) +
                       " does not match dataset dims");
    }
    if (s.index != i) {
      throw ConsistencyError("dataset " + name_ + ": sample indices must be 0..n-1");
    }
  }
}

bool Dataset::has_labels() const {
  return !samples_.empty() &&
         std::all_of(samples_.begin(), samples_.end(),
                     [](const ImageSample& s) { return s.label.has_value(); });
}

Dataset Dataset::head(std::size_t n) const {
  n = std::min(n, samples_.size());
  return Dataset(name_, dims_, {samples_.begin(), samples_.begin() + static_cast<std::ptrdiff_t>(n)});
}

Dataset Dataset::select(const std::vector<std::size_t>& positions) const {
  std::vector<ImageSample> out;
  out.reserve(positions.size());
  for (std::size_t pos : positions) {
    if (pos >= samples_.size()) throw ShapeError("Dataset::select: position out of range");
    out.push_back(samples_[pos]);
    out.back().index = out.size() - 1;
  }
  return Dataset(name_, dims_, std::move(out));
}

Dataset Dataset::without_labels() const {
  auto copy = samples_;
  for (auto& s : copy) s.label.reset();
  return Dataset(name_, dims_, std::move(copy));
}

Dataset load_mnist_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path) {
  const auto image_bytes = detail::read_file(images_path);
  const auto label_bytes = detail::read_file(labels_path);

  detail::Reader<IoError> images(image_bytes, images_path.string());
  if (images.u32_be() != kIdxImagesMagic) {
    throw FormatError(images_path.string() + ": bad IDX image magic");
  }
  const std::uint32_t count = images.u32_be();
  const auto rows = static_cast<int>(images.u32_be());
  const auto cols = static_cast<int>(images.u32_be());
  if (rows <= 0 || cols <= 0) throw FormatError(images_path.string() + ": empty image dims");

  detail::Reader<IoError> labels(label_bytes, labels_path.string());
  if (labels.u32_be() != kIdxLabelsMagic) {
    throw FormatError(labels_path.string() + ": bad IDX label magic");
  }
  const std::uint32_t label_count = labels.u32_be();
  if (label_count != count) {
    throw ConsistencyError("IDX image count " + std::to_string(count) +
                           " != label count " + std::to_string(label_count));
  }

  const ImageDims dims{rows, cols, 1};
  const std::size_t per_image = dims.size();
  images.need(per_image * count);
  labels.need(count);
  if (images.remaining() != per_image * count || labels.remaining() != count) {
    throw FormatError("IDX files carry trailing bytes");
  }

  std::vector<ImageSample> samples(count);
  const std::uint8_t* label_data = labels.take(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t* px = images.take(per_image);
    auto& s = samples[i];
    s.dims = dims;
    s.index = i;
    s.label = label_data[i];
    s.pixels.resize(per_image);
    for (std::size_t k = 0; k < per_image; ++k) s.pixels[k] = px[k] / 255.0;
  }
  return Dataset("mnist", dims, std::move(samples));
}

void write_mnist_idx(const Dataset& dataset, const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path) {
  if (dataset.dims().channels != 1) throw ShapeError("IDX writer needs single-channel images");
  if (!dataset.has_labels()) throw UsageError("IDX writer needs labels");
  detail::Writer images;
  images.u32_be(kIdxImagesMagic);
  images.u32_be(static_cast<std::uint32_t>(dataset.size()));
  images.u32_be(static_cast<std::uint32_t>(dataset.dims().height));
  images.u32_be(static_cast<std::uint32_t>(dataset.dims().width));
  detail::Writer labels;
  labels.u32_be(kIdxLabelsMagic);
  labels.u32_be(static_cast<std::uint32_t>(dataset.size()));
  for (const auto& s : dataset.samples()) {
    for (double p : s.pixels) images.u8(to_byte(p));
    labels.u8(static_cast<std::uint8_t>(*s.label));
  }
  detail::write_file(images_path, images.buffer());
  detail::write_file(labels_path, labels.buffer());
}

Dataset load_cifar10(const std::vector<std::filesystem::path>& batch_paths) {
  if (batch_paths.empty()) throw UsageError("load_cifar10: no batch files given");
  std::vector<ImageSample> samples;
  for (const auto& path : batch_paths) {
    const auto bytes = detail::read_file(path);
    if (bytes.size() % kCifarRecord != 0) {
      throw FormatError(path.string() + ": length is not a multiple of 3073");
    }
    const std::size_t records = bytes.size() / kCifarRecord;
    samples.reserve(samples.size() + records);
    for (std::size_t r = 0; r < records; ++r) {
      const std::uint8_t* rec = bytes.data() + r * kCifarRecord;
      if (rec[0] > 9) {
        throw FormatError(path.string() + ": label byte " + std::to_string(rec[0]) +
                          " out of range");
      }
      ImageSample s;
      s.dims = kCifar10Dims;
      s.index = samples.size();
      s.label = rec[0];
      s.pixels.resize(kCifarPixels);
      for (std::size_t k = 0; k < kCifarPixels; ++k) s.pixels[k] = rec[1 + k] / 255.0;
      samples.push_back(std::move(s));
    }
  }
  return Dataset("cifar10", kCifar10Dims, std::move(samples));
}

void write_cifar10(const Dataset& dataset, const std::filesystem::path& path) {
  if (!(dataset.dims() == kCifar10Dims)) throw ShapeError("CIFAR-10 writer needs 32x32x3 images");
  if (!dataset.has_labels()) throw UsageError("CIFAR-10 writer needs labels");
  detail::Writer out;
  for (const auto& s : dataset.samples()) {
    out.u8(static_cast<std::uint8_t>(*s.label));
    for (double p : s.pixels) out.u8(to_byte(p));
  }
  detail::write_file(path, out.buffer());
}

void RotationConfig::validate() const {
  if (degrees.empty()) throw ConfigError("rotation set is empty");
  for (double d : degrees) {
    if (d == 0.0) throw ConfigError("rotation set contains 0 degrees");
    if (!std::isfinite(d) || std::abs(d) >= 360.0) {
      throw ConfigError("rotation degrees must be finite with |d| < 360");
    }
  }
}

ImageSample rotate_image(const ImageSample& image, double degrees) {
  if (degrees == 0.0) return image;

  // Positive angles rotate counter-clockwise as displayed (y grows down).
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const int h = image.dims.height;
  const int w = image.dims.width;
  const double cy = (h - 1) / 2.0;
  const double cx = (w - 1) / 2.0;

  ImageSample out = image;
  for (int c = 0; c < image.dims.channels; ++c) {
    auto src = [&](int y, int x) -> double {
      if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
      return image.at(c, y, x);
    };
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double dx = x - cx;
        const double dy = y - cy;
        const double sx = cx + cos_t * dx - sin_t * dy;
        const double sy = cy + sin_t * dx + cos_t * dy;
        const double fx = std::floor(sx);
        const double fy = std::floor(sy);
        const double ax = sx - fx;
        const double ay = sy - fy;
        const int x0 = static_cast<int>(fx);
        const int y0 = static_cast<int>(fy);
        const double v = (1 - ay) * ((1 - ax) * src(y0, x0) + ax * src(y0, x0 + 1)) +
                         ay * ((1 - ax) * src(y0 + 1, x0) + ax * src(y0 + 1, x0 + 1));
        out.pixels[(static_cast<std::size_t>(c) * h + y) * w + x] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

std::vector<Triplet> sample_triplets(const Dataset& dataset, const RotationConfig& config,
                                     std::uint64_t seed, std::size_t count) {
  if (dataset.size() < 2) {
    throw InsufficientDataError("triplet sampling needs at least 2 samples");
  }
  if (count == 0) throw UsageError("triplet count must be >= 1");
  config.validate();

  Rng rng(seed);
  const std::size_t n = dataset.size();
  std::vector<Triplet> triplets;
  triplets.reserve(count);
  std::vector<std::size_t> order;
  std::size_t cursor = n;
  for (std::size_t t = 0; t < count; ++t) {
    if (cursor == n) {
      order = rng.permutation(n);
      cursor = 0;
    }
    const std::size_t anchor = order[cursor++];
    const double deg = config.degrees[rng.uniform_index(config.degrees.size())];
    auto negative = static_cast<std::size_t>(rng.uniform_index(n - 1));
    if (negative >= anchor) ++negative;
    triplets.push_back({anchor, rotate_image(dataset[anchor], deg), negative, deg});
  }
  return triplets;
}

}  // namespace uth
