#pragma once

// Single-sample layer kernels used by the batch network driver. Each call
// touches only its own buffers, so the driver can run samples in parallel.

#include <cstdint>
#include <span>

#include "uth/network.hpp"

namespace uth::kernels {

void conv_forward(std::span<const double> in, TensorShape in_shape, const LayerSpec& spec,
                  const LayerParams& params, std::span<double> out, TensorShape out_shape);

// din may be empty when the input gradient is not needed.
void conv_backward(std::span<const double> in, TensorShape in_shape, const LayerSpec& spec,
                   const LayerParams& params, std::span<const double> dout,
                   TensorShape out_shape, std::span<double> din, LayerParams& grad);

void max_pool_forward(std::span<const double> in, TensorShape in_shape, int window,
                      std::span<double> out, TensorShape out_shape,
                      std::span<std::uint32_t> argmax);

void max_pool_backward(std::span<const double> dout, std::span<const std::uint32_t> argmax,
                       std::span<double> din);

void fc_forward(std::span<const double> in, const LayerParams& params, std::span<double> out);

void fc_backward(std::span<const double> in, const LayerParams& params,
                 std::span<const double> dout, std::span<double> din, LayerParams& grad);

void relu_forward(std::span<const double> in, std::span<double> out);

// Gradient passes where the cached output is positive.
void relu_backward(std::span<const double> out, std::span<const double> dout,
                   std::span<double> din);

}  // namespace uth::kernels
