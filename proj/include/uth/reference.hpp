#pragma once

// Serial textbook implementations kept as test oracles and benchmark
// baselines. They recompute everything from definitions and share no code
// with the optimised kernels.

#include <span>
#include <vector>

#include "uth/network.hpp"
#include "uth/retrieval.hpp"

namespace uth::reference {

Matrix forward(const NetworkParams& params, std::span<const ImageSample* const> batch);

// Gradients accumulated directly in sample order.
ParamTensors backward(const NetworkParams& params, std::span<const ImageSample* const> batch,
                      const Matrix& dloss);

// Bit-by-bit Hamming distance of query against every database entry.
std::vector<int> hamming_scan(const CodeDatabase& db, const HashCode& query);

}  // namespace uth::reference
