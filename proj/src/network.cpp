#include "uth/network.hpp"

#include <cmath>
#include <cstring>

#include "binary_io.hpp"
#include "uth/error.hpp"
#include "uth/kernels.hpp"
#include "uth/parallel.hpp"
#include "uth/rng.hpp"

namespace uth {

namespace {

constexpr char kParamsMagic[4] = {'U', 'T', 'H', 'N'};
constexpr std::uint32_t kParamsVersion = 1;

struct Offsets {
  std::vector<std::size_t> act;     // start of each activation in the trace buffer
  std::vector<std::size_t> argmax;  // start of each pool layer's winners
  std::size_t act_total = 0;
  std::size_t argmax_total = 0;
};

Offsets trace_offsets(const std::vector<LayerSpec>& spec, const std::vector<TensorShape>& shapes) {
  Offsets off;
  for (const auto& s : shapes) {
    off.act.push_back(off.act_total);
    off.act_total += s.size();
  }
  for (std::size_t l = 0; l < spec.size(); ++l) {
    off.argmax.push_back(off.argmax_total);
    if (spec[l].kind == LayerKind::max_pool) off.argmax_total += shapes[l + 1].size();
  }
  return off;
}

void check_batch(const NetworkParams& params, std::span<const ImageSample* const> batch) {
  if (batch.empty()) throw ShapeError("forward: empty batch");
  for (const ImageSample* s : batch) {
    if (!(s->dims == params.input) || s->pixels.size() != params.input.size()) {
      throw ShapeError("forward: image dims do not match network input");
    }
  }
}

// Runs the whole chain for one sample, writing every activation into buf.
void run_sample(const NetworkParams& params, const std::vector<TensorShape>& shapes,
                const Offsets& off, const ImageSample& image, std::span<double> buf,
                std::span<std::uint32_t> argmax) {
  std::copy(image.pixels.begin(), image.pixels.end(), buf.begin());
  for (std::size_t l = 0; l < params.spec.size(); ++l) {
    const auto& spec = params.spec[l];
    auto in = std::span<const double>(buf.subspan(off.act[l], shapes[l].size()));
    auto out = buf.subspan(off.act[l + 1], shapes[l + 1].size());
    switch (spec.kind) {
      case LayerKind::convolution:
        kernels::conv_forward(in, shapes[l], spec, params.layers[l], out, shapes[l + 1]);
        break;
      case LayerKind::max_pool:
        kernels::max_pool_forward(in, shapes[l], spec.window, out, shapes[l + 1],
                                  argmax.subspan(off.argmax[l], shapes[l + 1].size()));
        break;
      case LayerKind::fully_connected:
        kernels::fc_forward(in, params.layers[l], out);
        break;
      case LayerKind::relu:
        kernels::relu_forward(in, out);
        break;
    }
  }
}

std::vector<const ImageSample*> pointers(std::span<const ImageSample> batch) {
  std::vector<const ImageSample*> out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(&s);
  return out;
}

void check_finite(const ParamTensors& tensors) {
  for (std::size_t l = 0; l < tensors.size(); ++l) {
    for (double v : tensors[l].weights) {
      if (!std::isfinite(v)) throw NumericError("non-finite weight gradient in layer " + std::to_string(l));
    }
    for (double v : tensors[l].bias) {
      if (!std::isfinite(v)) throw NumericError("non-finite bias gradient in layer " + std::to_string(l));
    }
  }
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::convolution: return "conv";
    case LayerKind::max_pool: return "max_pool";
    case LayerKind::fully_connected: return "fully_connected";
    case LayerKind::relu: return "relu";
  }
  return "unknown";
}

std::vector<LayerSpec> default_layer_spec(int bit_width) {
  return {LayerSpec::conv(8, 5),
          LayerSpec::relu(),
          LayerSpec::max_pool(2),
          LayerSpec::conv(16, 5),
          LayerSpec::relu(),
          LayerSpec::max_pool(2),
          LayerSpec::fully_connected(64),
          LayerSpec::relu(),
          LayerSpec::fully_connected(bit_width),
          LayerSpec::relu()};
}

std::vector<TensorShape> layer_shapes(const std::vector<LayerSpec>& spec, ImageDims input) {
  if (input.height <= 0 || input.width <= 0 || input.channels <= 0) {
    throw ConfigError("network input dims must be positive");
  }
  if (spec.size() < 2 || spec[spec.size() - 2].kind != LayerKind::fully_connected ||
      spec.back().kind != LayerKind::relu) {
    throw ConfigError("layer spec must end with fully_connected(M), relu");
  }
  std::vector<TensorShape> shapes{{input.channels, input.height, input.width}};
  for (std::size_t l = 0; l < spec.size(); ++l) {
    const auto& s = spec[l];
    const TensorShape in = shapes.back();
    const std::string where = "layer " + std::to_string(l) + " (" + to_string(s.kind) + "): ";
    switch (s.kind) {
      case LayerKind::convolution: {
        if (s.out_channels <= 0 || s.kernel <= 0 || s.stride <= 0) {
          throw ConfigError(where + "out_channels, kernel and stride must be positive");
        }
        if (in.height < s.kernel || in.width < s.kernel) {
          throw ConfigError(where + "kernel larger than input");
        }
        shapes.push_back({s.out_channels, (in.height - s.kernel) / s.stride + 1,
                          (in.width - s.kernel) / s.stride + 1});
        break;
      }
      case LayerKind::max_pool:
        if (s.window <= 0) throw ConfigError(where + "window must be positive");
        if (in.height < s.window || in.width < s.window) {
          throw ConfigError(where + "window larger than input");
        }
        shapes.push_back({in.channels, in.height / s.window, in.width / s.window});
        break;
      case LayerKind::fully_connected:
        if (s.out_dim <= 0) throw ConfigError(where + "out_dim must be positive");
        shapes.push_back({s.out_dim, 1, 1});
        break;
      case LayerKind::relu:
        shapes.push_back(in);
        break;
    }
  }
  return shapes;
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

std::uint64_t NetworkParams::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  // Field by field: LayerSpec has padding after its kind byte.
  const int dims[3] = {input.height, input.width, input.channels};
  feed(dims, sizeof dims);
  for (const auto& s : spec) {
    const int fields[6] = {static_cast<int>(s.kind), s.out_channels, s.kernel, s.stride, s.window, s.out_dim};
    feed(fields, sizeof fields);
  }
  for (const auto& l : layers) {
    feed(l.weights.data(), l.weights.size() * sizeof(double));
    feed(l.bias.data(), l.bias.size() * sizeof(double));
  }
  return h;
}

ParamTensors NetworkParams::zeros_like() const {
  ParamTensors z(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    z[l].weights.assign(layers[l].weights.size(), 0.0);
    z[l].bias.assign(layers[l].bias.size(), 0.0);
  }
  return z;
}

NetworkParams build_network(const std::vector<LayerSpec>& spec, ImageDims input,
                            std::uint64_t seed) {
  const auto shapes = layer_shapes(spec, input);
  NetworkParams params{spec, input, ParamTensors(spec.size())};
  Rng rng(seed);
  for (std::size_t l = 0; l < spec.size(); ++l) {
    const auto& s = spec[l];
    std::size_t fan_in = 0;
    std::size_t outputs = 0;
    if (s.kind == LayerKind::convolution) {
      fan_in = static_cast<std::size_t>(shapes[l].channels) * s.kernel * s.kernel;
      outputs = static_cast<std::size_t>(s.out_channels);
    } else if (s.kind == LayerKind::fully_connected) {
      fan_in = shapes[l].size();
      outputs = static_cast<std::size_t>(s.out_dim);
    } else {
      continue;
    }
    // Uniform on [-a, a] has std a / sqrt(3).
    const double bound = std::sqrt(3.0) * std::sqrt(2.0 / static_cast<double>(fan_in));
    auto& layer = params.layers[l];
    layer.weights.resize(outputs * fan_in);
    for (double& w : layer.weights) w = rng.uniform(-bound, bound);
    layer.bias.assign(outputs, 0.0);
  }
  return params;
}

ForwardResult forward(const NetworkParams& params, std::span<const ImageSample* const> batch) {
  check_batch(params, batch);
  ForwardResult result;
  auto& trace = result.trace;
  trace.shapes = layer_shapes(params.spec, params.input);
  trace.params_fingerprint = params.fingerprint();
  const Offsets off = trace_offsets(params.spec, trace.shapes);
  const std::size_t n = batch.size();
  trace.activations.assign(n, std::vector<double>(off.act_total));
  trace.argmax.assign(n, std::vector<std::uint32_t>(off.argmax_total));

  const std::size_t m = static_cast<std::size_t>(params.bit_width());
  result.features = Matrix(n, m);
  parallel_for(n, [&](std::size_t i) {
    run_sample(params, trace.shapes, off, *batch[i], trace.activations[i], trace.argmax[i]);
    const double* last = trace.activations[i].data() + off.act.back();
    std::copy(last, last + m, result.features.row(i).begin());
  });
  return result;
}

ForwardResult forward(const NetworkParams& params, std::span<const ImageSample> batch) {
  const auto ptrs = pointers(batch);
  return forward(params, ptrs);
}

Matrix compute_features(const NetworkParams& params, std::span<const ImageSample* const> batch) {
  check_batch(params, batch);
  const auto shapes = layer_shapes(params.spec, params.input);
  const Offsets off = trace_offsets(params.spec, shapes);
  const std::size_t n = batch.size();
  const std::size_t m = static_cast<std::size_t>(params.bit_width());
  Matrix features(n, m);
  parallel_for(n, [&](std::size_t i) {
    std::vector<double> buf(off.act_total);
    std::vector<std::uint32_t> argmax(off.argmax_total);
    run_sample(params, shapes, off, *batch[i], buf, argmax);
    std::copy(buf.end() - static_cast<std::ptrdiff_t>(m), buf.end(), features.row(i).begin());
  });
  return features;
}

Matrix compute_features(const NetworkParams& params, std::span<const ImageSample> batch) {
  const auto ptrs = pointers(batch);
  return compute_features(params, ptrs);
}

ParamTensors backward(const NetworkParams& params, ForwardTrace&& trace, const Matrix& dloss) {
  const ForwardTrace consumed = std::move(trace);
  trace = ForwardTrace{};
  if (consumed.activations.empty()) throw UsageError("backward: empty or already consumed trace");
  if (consumed.params_fingerprint != params.fingerprint()) {
    throw UsageError("backward: trace was produced by different parameters");
  }
  const std::size_t n = consumed.batch_size();
  const std::size_t m = static_cast<std::size_t>(params.bit_width());
  if (dloss.rows() != n || dloss.cols() != m) {
    throw ShapeError("backward: loss gradient must be batch x M");
  }

  const auto& shapes = consumed.shapes;
  const Offsets off = trace_offsets(params.spec, shapes);
  std::size_t max_act = 0;
  for (const auto& s : shapes) max_act = std::max(max_act, s.size());

  std::vector<ParamTensors> per_sample(n, params.zeros_like());
  parallel_for(n, [&](std::size_t i) {
    const auto& acts = consumed.activations[i];
    const auto& argmax = consumed.argmax[i];
    ParamTensors& grad = per_sample[i];
    std::vector<double> upstream(max_act);
    std::copy(dloss.row(i).begin(), dloss.row(i).end(), upstream.begin());
    std::vector<double> downstream(max_act);
    for (std::size_t l = params.spec.size(); l-- > 0;) {
      const auto& spec = params.spec[l];
      const std::span<const double> in(acts.data() + off.act[l], shapes[l].size());
      const std::span<const double> out(acts.data() + off.act[l + 1], shapes[l + 1].size());
      const std::span<const double> dout(upstream.data(), shapes[l + 1].size());
      // The input image needs no gradient.
      const std::span<double> din =
          l == 0 && spec.has_params() ? std::span<double>{}
                                      : std::span<double>(downstream.data(), shapes[l].size());
      switch (spec.kind) {
        case LayerKind::convolution:
          kernels::conv_backward(in, shapes[l], spec, params.layers[l], dout, shapes[l + 1], din,
                                 grad[l]);
          break;
        case LayerKind::max_pool:
          kernels::max_pool_backward(
              dout, std::span<const std::uint32_t>(argmax.data() + off.argmax[l], shapes[l + 1].size()),
              din);
          break;
        case LayerKind::fully_connected:
          kernels::fc_backward(in, params.layers[l], dout, din, grad[l]);
          break;
        case LayerKind::relu:
          kernels::relu_backward(out, dout, din);
          break;
      }
      upstream.swap(downstream);
    }
  });

  ParamTensors total = params.zeros_like();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < total.size(); ++l) {
      auto& tw = total[l].weights;
      const auto& sw = per_sample[i][l].weights;
      for (std::size_t k = 0; k < tw.size(); ++k) tw[k] += sw[k];
      auto& tb = total[l].bias;
      const auto& sb = per_sample[i][l].bias;
      for (std::size_t k = 0; k < tb.size(); ++k) tb[k] += sb[k];
    }
  }
  return total;
}

OptimizerState OptimizerState::for_params(const NetworkParams& params, double learning_rate,
                                          double momentum) {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be finite and >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0,1)");
  return {learning_rate, momentum, params.zeros_like()};
}

void sgd_step(NetworkParams& params, const ParamTensors& gradients, OptimizerState& state) {
  if (gradients.size() != params.layers.size() || state.velocity.size() != params.layers.size()) {
    throw ShapeError("sgd_step: tensor count mismatch");
  }
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    if (gradients[l].weights.size() != params.layers[l].weights.size() ||
        gradients[l].bias.size() != params.layers[l].bias.size() ||
        state.velocity[l].weights.size() != params.layers[l].weights.size() ||
        state.velocity[l].bias.size() != params.layers[l].bias.size()) {
      throw ShapeError("sgd_step: tensor shape mismatch in layer " + std::to_string(l));
    }
  }
  check_finite(gradients);

  auto update = [&](std::vector<double>& p, std::vector<double>& v, const std::vector<double>& g) {
    for (std::size_t k = 0; k < p.size(); ++k) {
      v[k] = state.momentum * v[k] - state.learning_rate * g[k];
      p[k] += v[k];
    }
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    update(params.layers[l].weights, state.velocity[l].weights, gradients[l].weights);
    update(params.layers[l].bias, state.velocity[l].bias, gradients[l].bias);
  }
}

void save_params(const NetworkParams& params, const std::filesystem::path& path) {
  detail::Writer w;
  w.bytes(kParamsMagic, 4);
  w.u32(kParamsVersion);
  w.u32(static_cast<std::uint32_t>(params.input.height));
  w.u32(static_cast<std::uint32_t>(params.input.width));
  w.u32(static_cast<std::uint32_t>(params.input.channels));
  w.u32(static_cast<std::uint32_t>(params.bit_width()));
  w.u32(static_cast<std::uint32_t>(params.spec.size()));
  for (const auto& s : params.spec) {
    w.u8(static_cast<std::uint8_t>(s.kind));
    w.i32(s.out_channels);
    w.i32(s.kernel);
    w.i32(s.stride);
    w.i32(s.window);
    w.i32(s.out_dim);
  }
  for (const auto& l : params.layers) {
    w.u64(l.weights.size());
    for (double v : l.weights) w.f64(v);
    w.u64(l.bias.size());
    for (double v : l.bias) w.f64(v);
  }
  detail::write_file(path, w.buffer());
}

NetworkParams load_params(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  detail::Reader<FormatError> r(bytes, path.string());
  const std::uint8_t* magic = r.take(4);
  if (std::memcmp(magic, kParamsMagic, 4) != 0) throw FormatError(path.string() + ": not a params file");
  const std::uint32_t version = r.u32();
  if (version != kParamsVersion) {
    throw FormatError(path.string() + ": unsupported params version " + std::to_string(version));
  }
  NetworkParams params;
  params.input.height = static_cast<int>(r.u32());
  params.input.width = static_cast<int>(r.u32());
  params.input.channels = static_cast<int>(r.u32());
  const auto bits = static_cast<int>(r.u32());
  const std::uint32_t layer_count = r.u32();
  if (layer_count > 4096) throw FormatError(path.string() + ": implausible layer count");
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    LayerSpec s;
    const std::uint8_t kind = r.u8();
    if (kind > static_cast<std::uint8_t>(LayerKind::relu)) throw FormatError(path.string() + ": bad layer kind");
    s.kind = static_cast<LayerKind>(kind);
    s.out_channels = r.i32();
    s.kernel = r.i32();
    s.stride = r.i32();
    s.window = r.i32();
    s.out_dim = r.i32();
    params.spec.push_back(s);
  }
  std::vector<TensorShape> shapes;
  try {
    shapes = layer_shapes(params.spec, params.input);
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (params.bit_width() != bits) throw FormatError(path.string() + ": bit width disagrees with layers");

  const NetworkParams expected = build_network(params.spec, params.input, 0);
  params.layers.resize(layer_count);
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    auto read_vec = [&](std::vector<double>& v, std::size_t want) {
      const std::uint64_t n = r.u64();
      if (n != want) throw FormatError(path.string() + ": tensor size mismatch in layer " + std::to_string(l));
      r.need(n * 8);
      v.resize(n);
      for (auto& x : v) x = r.f64();
    };
    read_vec(params.layers[l].weights, expected.layers[l].weights.size());
    read_vec(params.layers[l].bias, expected.layers[l].bias.size());
  }
  if (r.remaining() != 0) throw FormatError(path.string() + ": trailing bytes");
  return params;
}

}  // namespace uth
