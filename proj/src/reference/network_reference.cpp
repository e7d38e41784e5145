#include <cstddef>

#include "uth/error.hpp"
#include "uth/reference.hpp"

namespace uth::reference {

namespace {

// Activation tensor with explicit (c, y, x) indexing.
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}
  double& at(int ci, int y, int x) { return v[(static_cast<std::size_t>(ci) * h + y) * w + x]; }
  double at(int ci, int y, int x) const { return v[(static_cast<std::size_t>(ci) * h + y) * w + x]; }
};

double conv_weight(const LayerParams& p, const LayerSpec& s, int in_c, int o, int c, int ky, int kx) {
  return p.weights[((static_cast<std::size_t>(o) * in_c + c) * s.kernel + ky) * s.kernel + kx];
}

Tensor apply(const LayerSpec& s, const LayerParams& p, const Tensor& in) {
  switch (s.kind) {
    case LayerKind::convolution: {
      Tensor out(s.out_channels, (in.h - s.kernel) / s.stride + 1, (in.w - s.kernel) / s.stride + 1);
      for (int o = 0; o < out.c; ++o)
        for (int y = 0; y < out.h; ++y)
          for (int x = 0; x < out.w; ++x) {
            double sum = p.bias[o];
            for (int c = 0; c < in.c; ++c)
              for (int ky = 0; ky < s.kernel; ++ky)
                for (int kx = 0; kx < s.kernel; ++kx)
                  sum += conv_weight(p, s, in.c, o, c, ky, kx) *
                         in.at(c, y * s.stride + ky, x * s.stride + kx);
            out.at(o, y, x) = sum;
          }
      return out;
    }
    case LayerKind::max_pool: {
      Tensor out(in.c, in.h / s.window, in.w / s.window);
      for (int c = 0; c < out.c; ++c)
        for (int y = 0; y < out.h; ++y)
          for (int x = 0; x < out.w; ++x) {
            double best = in.at(c, y * s.window, x * s.window);
            for (int dy = 0; dy < s.window; ++dy)
              for (int dx = 0; dx < s.window; ++dx)
                if (in.at(c, y * s.window + dy, x * s.window + dx) > best)
                  best = in.at(c, y * s.window + dy, x * s.window + dx);
            out.at(c, y, x) = best;
          }
      return out;
    }
    case LayerKind::fully_connected: {
      Tensor out(s.out_dim, 1, 1);
      const std::size_t n_in = in.v.size();
      for (int j = 0; j < s.out_dim; ++j) {
        double sum = p.bias[j];
        for (std::size_t i = 0; i < n_in; ++i) sum += p.weights[j * n_in + i] * in.v[i];
        out.v[j] = sum;
      }
      return out;
    }
    case LayerKind::relu: {
      Tensor out = in;
      for (double& x : out.v) x = x > 0.0 ? x : 0.0;
      return out;
    }
  }
  throw UsageError("reference: unknown layer kind");
}

// Returns the gradient w.r.t. in, accumulating parameter gradients into g.
Tensor apply_backward(const LayerSpec& s, const LayerParams& p, const Tensor& in,
                      const Tensor& out, const Tensor& dout, LayerParams& g) {
  Tensor din(in.c, in.h, in.w);
  switch (s.kind) {
    case LayerKind::convolution:
      for (int o = 0; o < out.c; ++o)
        for (int y = 0; y < out.h; ++y)
          for (int x = 0; x < out.w; ++x) {
            const double d = dout.at(o, y, x);
            g.bias[o] += d;
            for (int c = 0; c < in.c; ++c)
              for (int ky = 0; ky < s.kernel; ++ky)
                for (int kx = 0; kx < s.kernel; ++kx) {
                  const int iy = y * s.stride + ky;
                  const int ix = x * s.stride + kx;
                  const std::size_t wi =
                      ((static_cast<std::size_t>(o) * in.c + c) * s.kernel + ky) * s.kernel + kx;
                  g.weights[wi] += d * in.at(c, iy, ix);
                  din.at(c, iy, ix) += p.weights[wi] * d;
                }
          }
      break;
    case LayerKind::max_pool:
      for (int c = 0; c < out.c; ++c)
        for (int y = 0; y < out.h; ++y)
          for (int x = 0; x < out.w; ++x) {
            // First maximal element in scan order receives the gradient.
            bool routed = false;
            for (int dy = 0; dy < s.window && !routed; ++dy)
              for (int dx = 0; dx < s.window && !routed; ++dx)
                if (in.at(c, y * s.window + dy, x * s.window + dx) == out.at(c, y, x)) {
                  din.at(c, y * s.window + dy, x * s.window + dx) += dout.at(c, y, x);
                  routed = true;
                }
          }
      break;
    case LayerKind::fully_connected: {
      const std::size_t n_in = in.v.size();
      for (int j = 0; j < s.out_dim; ++j) {
        g.bias[j] += dout.v[j];
        for (std::size_t i = 0; i < n_in; ++i) {
          g.weights[j * n_in + i] += dout.v[j] * in.v[i];
          din.v[i] += p.weights[j * n_in + i] * dout.v[j];
        }
      }
      break;
    }
    case LayerKind::relu:
      for (std::size_t i = 0; i < in.v.size(); ++i) din.v[i] = in.v[i] > 0.0 ? dout.v[i] : 0.0;
      break;
  }
  return din;
}

std::vector<Tensor> run(const NetworkParams& params, const ImageSample& image) {
  std::vector<Tensor> acts;
  Tensor x(image.dims.channels, image.dims.height, image.dims.width);
  x.v = image.pixels;
  acts.push_back(std::move(x));
  for (std::size_t l = 0; l < params.spec.size(); ++l) {
    acts.push_back(apply(params.spec[l], params.layers[l], acts.back()));
  }
  return acts;
}

}  // namespace

Matrix forward(const NetworkParams& params, std::span<const ImageSample* const> batch) {
  const auto m = static_cast<std::size_t>(params.bit_width());
  Matrix out(batch.size(), m);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto acts = run(params, *batch[i]);
    for (std::size_t j = 0; j < m; ++j) out(i, j) = acts.back().v[j];
  }
  return out;
}

ParamTensors backward(const NetworkParams& params, std::span<const ImageSample* const> batch,
                      const Matrix& dloss) {
  ParamTensors grads = params.zeros_like();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto acts = run(params, *batch[i]);
    Tensor d = acts.back();
    for (std::size_t j = 0; j < d.v.size(); ++j) d.v[j] = dloss(i, j);
    for (std::size_t l = params.spec.size(); l-- > 0;) {
      d = apply_backward(params.spec[l], params.layers[l], acts[l], acts[l + 1], d, grads[l]);
    }
  }
  return grads;
}

}  // namespace uth::reference
