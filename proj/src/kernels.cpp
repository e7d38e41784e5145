#include "uth/kernels.hpp"

#include <algorithm>
#include <vector>

namespace uth::kernels {

namespace {

// Eight independent partial sums combined in a fixed order: vectorisable
// without reassociation flags, and deterministic.
double dot(const double* a, const double* b, std::size_t n) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int k = 0; k < 8; ++k) acc[k] += a[i + k] * b[i + k];
  }
  for (; i < n; ++i) acc[i % 8] += a[i] * b[i];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// cols[(c * k + ky) * k + kx][y * out_w + x] = in[c][y * s + ky][x * s + kx]
void im2col(const double* in, TensorShape in_shape, int k, int s, TensorShape out_shape,
            double* cols) {
  const std::size_t plane_out = static_cast<std::size_t>(out_shape.height) * out_shape.width;
  for (int c = 0; c < in_shape.channels; ++c) {
    const double* plane = in + static_cast<std::size_t>(c) * in_shape.height * in_shape.width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* dst = cols + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * plane_out;
        for (int y = 0; y < out_shape.height; ++y) {
          const double* src = plane + static_cast<std::size_t>(y * s + ky) * in_shape.width + kx;
          for (int x = 0; x < out_shape.width; ++x) *dst++ = src[x * s];
        }
      }
    }
  }
}

// Inverse scatter of im2col, accumulating into din (zeroed by the caller).
void col2im(const double* cols, TensorShape in_shape, int k, int s, TensorShape out_shape,
            double* din) {
  const std::size_t plane_out = static_cast<std::size_t>(out_shape.height) * out_shape.width;
  for (int c = 0; c < in_shape.channels; ++c) {
    double* plane = din + static_cast<std::size_t>(c) * in_shape.height * in_shape.width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* src = cols + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * plane_out;
        for (int y = 0; y < out_shape.height; ++y) {
          double* dst = plane + static_cast<std::size_t>(y * s + ky) * in_shape.width + kx;
          for (int x = 0; x < out_shape.width; ++x) dst[x * s] += *src++;
        }
      }
    }
  }
}

thread_local std::vector<double> tl_cols;
thread_local std::vector<double> tl_dcols;

}  // namespace

void conv_forward(std::span<const double> in, TensorShape in_shape, const LayerSpec& spec,
                  const LayerParams& params, std::span<double> out, TensorShape out_shape) {
  const int k = spec.kernel;
  const std::size_t patch = static_cast<std::size_t>(in_shape.channels) * k * k;
  const std::size_t plane_out = static_cast<std::size_t>(out_shape.height) * out_shape.width;
  tl_cols.resize(patch * plane_out);
  im2col(in.data(), in_shape, k, spec.stride, out_shape, tl_cols.data());
  const double* cols = tl_cols.data();

  for (int o = 0; o < out_shape.channels; ++o) {
    double* dst = out.data() + o * plane_out;
    std::fill(dst, dst + plane_out, params.bias[o]);
    const double* w = params.weights.data() + o * patch;
    for (std::size_t r = 0; r < patch; ++r) axpy(w[r], cols + r * plane_out, dst, plane_out);
  }
}

void conv_backward(std::span<const double> in, TensorShape in_shape, const LayerSpec& spec,
                   const LayerParams& params, std::span<const double> dout,
                   TensorShape out_shape, std::span<double> din, LayerParams& grad) {
  const int k = spec.kernel;
  const std::size_t patch = static_cast<std::size_t>(in_shape.channels) * k * k;
  const std::size_t plane_out = static_cast<std::size_t>(out_shape.height) * out_shape.width;
  tl_cols.resize(patch * plane_out);
  im2col(in.data(), in_shape, k, spec.stride, out_shape, tl_cols.data());
  const double* cols = tl_cols.data();

  for (int o = 0; o < out_shape.channels; ++o) {
    const double* g = dout.data() + o * plane_out;
    double bsum = 0.0;
    for (std::size_t i = 0; i < plane_out; ++i) bsum += g[i];
    grad.bias[o] += bsum;
    double* gw = grad.weights.data() + o * patch;
    for (std::size_t r = 0; r < patch; ++r) gw[r] += dot(g, cols + r * plane_out, plane_out);
  }

  if (din.empty()) return;
  tl_dcols.assign(patch * plane_out, 0.0);
  double* dcols = tl_dcols.data();
  for (int o = 0; o < out_shape.channels; ++o) {
    const double* g = dout.data() + o * plane_out;
    const double* w = params.weights.data() + o * patch;
    for (std::size_t r = 0; r < patch; ++r) axpy(w[r], g, dcols + r * plane_out, plane_out);
  }
  std::fill(din.begin(), din.end(), 0.0);
  col2im(dcols, in_shape, k, spec.stride, out_shape, din.data());
}

void max_pool_forward(std::span<const double> in, TensorShape in_shape, int window,
                      std::span<double> out, TensorShape out_shape,
                      std::span<std::uint32_t> argmax) {
  std::size_t oi = 0;
  for (int c = 0; c < out_shape.channels; ++c) {
    for (int y = 0; y < out_shape.height; ++y) {
      for (int x = 0; x < out_shape.width; ++x, ++oi) {
        std::size_t best = (static_cast<std::size_t>(c) * in_shape.height + y * window) *
                               in_shape.width + x * window;
        double best_v = in[best];
        for (int dy = 0; dy < window; ++dy) {
          for (int dx = 0; dx < window; ++dx) {
            const std::size_t idx =
                (static_cast<std::size_t>(c) * in_shape.height + y * window + dy) *
                    in_shape.width + x * window + dx;
            if (in[idx] > best_v) {
              best_v = in[idx];
              best = idx;
            }
          }
        }
        out[oi] = best_v;
        argmax[oi] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

void max_pool_backward(std::span<const double> dout, std::span<const std::uint32_t> argmax,
                       std::span<double> din) {
  std::fill(din.begin(), din.end(), 0.0);
  for (std::size_t i = 0; i < dout.size(); ++i) din[argmax[i]] += dout[i];
}

void fc_forward(std::span<const double> in, const LayerParams& params, std::span<double> out) {
  const std::size_t n_in = in.size();
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = params.bias[j] + dot(params.weights.data() + j * n_in, in.data(), n_in);
  }
}

void fc_backward(std::span<const double> in, const LayerParams& params,
                 std::span<const double> dout, std::span<double> din, LayerParams& grad) {
  const std::size_t n_in = in.size();
  if (!din.empty()) std::fill(din.begin(), din.end(), 0.0);
  for (std::size_t j = 0; j < dout.size(); ++j) {
    const double g = dout[j];
    grad.bias[j] += g;
    if (g == 0.0) continue;
    axpy(g, in.data(), grad.weights.data() + j * n_in, n_in);
    if (!din.empty()) axpy(g, params.weights.data() + j * n_in, din.data(), n_in);
  }
}

void relu_forward(std::span<const double> in, std::span<double> out) {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
}

void relu_backward(std::span<const double> out, std::span<const double> dout,
                   std::span<double> din) {
  for (std::size_t i = 0; i < out.size(); ++i) din[i] = out[i] > 0.0 ? dout[i] : 0.0;
}

}  // namespace uth::kernels
