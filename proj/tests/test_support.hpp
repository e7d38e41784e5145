#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "uth/dataset.hpp"

namespace uth::test {

inline std::filesystem::path data_dir() { return UTH_TEST_DATA_DIR; }

inline std::filesystem::path mnist_file(const std::string& name) { return data_dir() / "mnist" / name; }

// The first 5,000 MNIST training images.
inline const Dataset& mnist5k() {
  static const Dataset ds =
      load_mnist_idx(mnist_file("train-images-idx3-ubyte"), mnist_file("train-labels-idx1-ubyte")).head(5000);
  return ds;
}

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("uth_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline ImageSample random_image(ImageDims dims, std::mt19937_64& gen, std::size_t index = 0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageSample s;
  s.dims = dims;
  s.index = index;
  s.pixels.resize(dims.size());
  for (double& p : s.pixels) p = u(gen);
  return s;
}

inline Dataset random_dataset(std::size_t n, ImageDims dims, std::uint64_t seed, bool labels = true) {
  std::mt19937_64 gen(seed);
  std::vector<ImageSample> samples;
  for (std::size_t i = 0; i < n; ++i) {
    samples.push_back(random_image(dims, gen, i));
    if (labels) samples.back().label = static_cast<int>(i % 10);
  }
  return Dataset("random", dims, std::move(samples));
}

// |a - b| relative to the larger magnitude, with a floor for near-zero values.
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline std::vector<std::uint8_t> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace uth::test
