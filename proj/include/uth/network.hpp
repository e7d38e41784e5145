#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "uth/dataset.hpp"
#include "uth/matrix.hpp"

namespace uth {

enum class LayerKind : std::uint8_t { convolution = 0, max_pool = 1, fully_connected = 2, relu = 3 };

std::string to_string(LayerKind kind);

// One layer of the feature network. Convolutions are "valid" (no padding);
// max pooling uses non-overlapping windows.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int out_channels = 0;  // convolution
  int kernel = 0;        // convolution
  int stride = 1;        // convolution
  int window = 0;        // max_pool
  int out_dim = 0;       // fully_connected

  static LayerSpec conv(int out_channels, int kernel, int stride = 1) {
    return {LayerKind::convolution, out_channels, kernel, stride, 0, 0};
  }
  static LayerSpec max_pool(int window) { return {LayerKind::max_pool, 0, 0, 1, window, 0}; }
  static LayerSpec fully_connected(int out_dim) {
    return {LayerKind::fully_connected, 0, 0, 1, 0, out_dim};
  }
  static LayerSpec relu() { return {}; }

  bool has_params() const {
    return kind == LayerKind::convolution || kind == LayerKind::fully_connected;
  }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// conv(8,5) relu pool(2) conv(16,5) relu pool(2) fc(64) relu fc(M) relu
std::vector<LayerSpec> default_layer_spec(int bit_width);

struct TensorShape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(width);
  }
  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

// Activation shapes through the chain: element 0 is the input, element i+1
// the output of layer i. Throws ConfigError for an inconsistent chain,
// including one that does not end in fully_connected(M), relu.
std::vector<TensorShape> layer_shapes(const std::vector<LayerSpec>& spec, ImageDims input);

// Weights are [out][in][ky][kx] for convolutions and [out][in] for fully
// connected layers. Parameter-free layers hold empty vectors.
struct LayerParams {
  std::vector<double> weights;
  std::vector<double> bias;
  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

using ParamTensors = std::vector<LayerParams>;

struct NetworkParams {
  std::vector<LayerSpec> spec;
  ImageDims input;
  ParamTensors layers;

  int bit_width() const { return spec.empty() ? 0 : spec[spec.size() - 2].out_dim; }
  std::size_t parameter_count() const;
  // Hash of spec, dims and every parameter bit; identifies the exact
  // parameter state a trace was computed with.
  std::uint64_t fingerprint() const;
  // Same-shape tensors filled with zeros.
  ParamTensors zeros_like() const;

  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

// He-uniform initialisation (std = sqrt(2 / fan_in)), zero biases.
NetworkParams build_network(const std::vector<LayerSpec>& spec, ImageDims input,
                            std::uint64_t seed);

// Activations cached by forward for backward. Move it into backward; it is
// tied to the exact parameter state and batch that produced it.
struct ForwardTrace {
  std::uint64_t params_fingerprint = 0;
  std::vector<TensorShape> shapes;
  // activations[s] concatenates every layer's output for sample s
  // (input first); argmax[s] holds the max-pool winners.
  std::vector<std::vector<double>> activations;
  std::vector<std::vector<std::uint32_t>> argmax;

  std::size_t batch_size() const { return activations.size(); }
};

struct ForwardResult {
  Matrix features;  // batch x M, all entries >= 0
  ForwardTrace trace;
};

ForwardResult forward(const NetworkParams& params, std::span<const ImageSample* const> batch);
ForwardResult forward(const NetworkParams& params, std::span<const ImageSample> batch);

// Features only; nothing is cached.
Matrix compute_features(const NetworkParams& params, std::span<const ImageSample* const> batch);
Matrix compute_features(const NetworkParams& params, std::span<const ImageSample> batch);

// Parameter gradients of the scalar loss whose feature gradient is dloss.
// Per-sample gradients are reduced in batch order, so the result does not
// depend on the thread count.
ParamTensors backward(const NetworkParams& params, ForwardTrace&& trace, const Matrix& dloss);

struct OptimizerState {
  double learning_rate = 0.01;
  double momentum = 0.9;
  ParamTensors velocity;

  static OptimizerState for_params(const NetworkParams& params, double learning_rate,
                                   double momentum);
};

// velocity = momentum * velocity - lr * grad; params += velocity.
// Throws NumericError (leaving params untouched) on a non-finite gradient.
void sgd_step(NetworkParams& params, const ParamTensors& gradients, OptimizerState& state);

void save_params(const NetworkParams& params, const std::filesystem::path& path);
NetworkParams load_params(const std::filesystem::path& path);

}  // namespace uth
