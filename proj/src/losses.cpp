#include "uth/losses.hpp"

#include <algorithm>
#include <cmath>

#include "uth/error.hpp"

namespace uth {

namespace {

void same_length(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) throw ShapeError(std::string(what) + ": feature length mismatch");
}

void check_finite(const Matrix& m, const char* what) {
  for (double v : m.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite feature");
  }
}

// Stacks row blocks into one matrix.
Matrix stack(std::initializer_list<const Matrix*> parts) {
  std::size_t rows = 0;
  std::size_t cols = 0;
  for (const Matrix* p : parts) {
    if (p->empty()) continue;
    if (cols != 0 && p->cols() != cols) throw ShapeError("combined_loss: feature width mismatch");
    cols = p->cols();
    rows += p->rows();
  }
  Matrix out(rows, cols);
  std::size_t r = 0;
  for (const Matrix* p : parts) {
    for (std::size_t i = 0; i < p->rows(); ++i, ++r) {
      std::copy(p->row(i).begin(), p->row(i).end(), out.row(r).begin());
    }
  }
  return out;
}

}  // namespace

void LossWeights::validate() const {
  if (!(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0)) {
    throw ConfigError("loss weights must be >= 0");
  }
  if (alpha == 0.0 && beta == 0.0 && gamma == 0.0) throw ConfigError("loss weights are all zero");
}

void TripletConfig::validate() const {
  if (!(margin > 0.0) || !std::isfinite(margin)) throw ConfigError("triplet margin must be > 0");
}

double euclidean_sq(std::span<const double> x, std::span<const double> y) {
  same_length(x, y, "euclidean_sq");
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    sum += d * d;
  }
  return sum;
}

TripletLoss triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                         std::span<const double> negative, const TripletConfig& config) {
  same_length(anchor, positive, "triplet_loss");
  same_length(anchor, negative, "triplet_loss");
  const std::size_t m = anchor.size();
  TripletLoss out{0.0, std::vector<double>(m, 0.0), std::vector<double>(m, 0.0),
                  std::vector<double>(m, 0.0)};
  const double hinge =
      config.margin + euclidean_sq(anchor, positive) - euclidean_sq(anchor, negative);
  if (hinge <= 0.0) return out;
  out.loss = hinge;
  for (std::size_t i = 0; i < m; ++i) {
    out.d_anchor[i] = 2.0 * (negative[i] - positive[i]);
    out.d_positive[i] = -2.0 * (anchor[i] - positive[i]);
    out.d_negative[i] = 2.0 * (anchor[i] - negative[i]);
  }
  return out;
}

PairLoss rotation_invariance_loss(std::span<const double> anchor, std::span<const double> positive) {
  same_length(anchor, positive, "rotation_invariance_loss");
  PairLoss out{euclidean_sq(anchor, positive), std::vector<double>(anchor.size()),
               std::vector<double>(anchor.size())};
  for (std::size_t i = 0; i < anchor.size(); ++i) {
    out.d_anchor[i] = 2.0 * (anchor[i] - positive[i]);
    out.d_positive[i] = -out.d_anchor[i];
  }
  return out;
}

BatchLoss quantization_loss(const Matrix& features) {
  if (features.rows() == 0) throw UsageError("quantization_loss: empty batch");
  check_finite(features, "quantization_loss");
  const double n = static_cast<double>(features.rows());
  BatchLoss out{0.0, Matrix(features.rows(), features.cols())};
  for (std::size_t r = 0; r < features.rows(); ++r) {
    for (std::size_t c = 0; c < features.cols(); ++c) {
      const double f = features(r, c);
      const double b = f > kBinarizeThreshold ? 1.0 : 0.0;
      out.loss += (f - b) * (f - b);
      out.grad(r, c) = 2.0 / n * (f - b);
    }
  }
  out.loss /= n;
  return out;
}

EntropyLoss entropy_loss(const Matrix& features) {
  if (features.rows() == 0) throw UsageError("entropy_loss: empty batch");
  check_finite(features, "entropy_loss");
  const std::size_t rows = features.rows();
  const std::size_t cols = features.cols();
  const double n = static_cast<double>(rows);
  EntropyLoss out{0.0, Matrix(rows, cols), 0.0};
  for (std::size_t c = 0; c < cols; ++c) {
    double relaxed = 0.0;
    double hard = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double f = features(r, c);
      relaxed += std::clamp(f, 0.0, 1.0);
      hard += f > kBinarizeThreshold ? 1.0 : 0.0;
    }
    relaxed /= n;
    hard /= n;
    out.loss += (relaxed - 0.5) * (relaxed - 0.5);
    out.loss_binary += (hard - 0.5) * (hard - 0.5);
    const double g = 2.0 / n * (relaxed - 0.5);
    for (std::size_t r = 0; r < rows; ++r) {
      const double f = features(r, c);
      out.grad(r, c) = (f > 0.0 && f < 1.0) ? g : 0.0;
    }
  }
  return out;
}

RegularizerLoss regularizer_loss(const Matrix& features, const LossWeights& weights) {
  const auto q = quantization_loss(features);
  const auto e = entropy_loss(features);
  RegularizerLoss out;
  out.report.l_quant = q.loss;
  out.report.l_entropy = e.loss;
  out.report.l_entropy_binary = e.loss_binary;
  out.report.l_total = weights.beta * q.loss + weights.gamma * e.loss;
  out.grad = Matrix(features.rows(), features.cols());
  for (std::size_t i = 0; i < out.grad.data().size(); ++i) {
    out.grad.data()[i] = weights.beta * q.grad.data()[i] + weights.gamma * e.grad.data()[i];
  }
  return out;
}

CombinedLoss combined_loss(const Matrix& anchors, const Matrix& positives, const Matrix& negatives,
                           const LossWeights& weights, const TripletConfig& config, PairTerm term) {
  weights.validate();
  config.validate();
  const std::size_t b = anchors.rows();
  if (b == 0) throw UsageError("combined_loss: empty batch");
  if (positives.rows() != b || positives.cols() != anchors.cols()) {
    throw ShapeError("combined_loss: positives must match anchors");
  }
  const bool with_negatives = term == PairTerm::triplet;
  if (with_negatives && (negatives.rows() != b || negatives.cols() != anchors.cols())) {
    throw ShapeError("combined_loss: negatives must match anchors");
  }

  const std::size_t m = anchors.cols();
  CombinedLoss out;
  out.d_anchor = Matrix(b, m);
  out.d_positive = Matrix(b, m);
  if (with_negatives) out.d_negative = Matrix(b, m);

  const double scale = weights.alpha / static_cast<double>(b);
  double pair_sum = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (with_negatives) {
      const auto t = triplet_loss(anchors.row(i), positives.row(i), negatives.row(i), config);
      pair_sum += t.loss;
      for (std::size_t j = 0; j < m; ++j) {
        out.d_anchor(i, j) = scale * t.d_anchor[j];
        out.d_positive(i, j) = scale * t.d_positive[j];
        out.d_negative(i, j) = scale * t.d_negative[j];
      }
    } else {
      const auto p = rotation_invariance_loss(anchors.row(i), positives.row(i));
      pair_sum += p.loss;
      for (std::size_t j = 0; j < m; ++j) {
        out.d_anchor(i, j) = scale * p.d_anchor[j];
        out.d_positive(i, j) = scale * p.d_positive[j];
      }
    }
  }

  const Matrix all = with_negatives ? stack({&anchors, &positives, &negatives})
                                    : stack({&anchors, &positives});
  const auto reg = regularizer_loss(all, weights);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      out.d_anchor(i, j) += reg.grad(i, j);
      out.d_positive(i, j) += reg.grad(b + i, j);
      if (with_negatives) out.d_negative(i, j) += reg.grad(2 * b + i, j);
    }
  }

  out.report = reg.report;
  out.report.l_triplet = pair_sum / static_cast<double>(b);
  out.report.l_total = weights.alpha * out.report.l_triplet + weights.beta * out.report.l_quant +
                       weights.gamma * out.report.l_entropy;
  return out;
}

}  // namespace uth
