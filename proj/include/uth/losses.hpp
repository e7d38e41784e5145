#pragma once

#include <span>
#include <vector>

#include "uth/matrix.hpp"

namespace uth {

inline constexpr double kBinarizeThreshold = 0.5;

struct LossWeights {
  double alpha = 1.0;  // triplet (or rotation-invariance) term
  double beta = 1.0;   // quantization term
  double gamma = 1.0;  // entropy term

  void validate() const;
};

struct TripletConfig {
  double margin = 1.0;

  void validate() const;
};

// Which pairwise term fills the alpha slot of the combined objective.
enum class PairTerm { triplet, rotation_invariance };

struct LossReport {
  double l_total = 0.0;
  double l_triplet = 0.0;  // holds the rotation-invariance term in the ablation
  double l_quant = 0.0;
  double l_entropy = 0.0;
  double l_entropy_binary = 0.0;  // reporting only, from hard bits
};

double euclidean_sq(std::span<const double> x, std::span<const double> y);

struct TripletLoss {
  double loss = 0.0;
  std::vector<double> d_anchor, d_positive, d_negative;
};

// max{0, m + |a - p|^2 - |a - n|^2}; gradients are zero when the hinge is
// inactive.
TripletLoss triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                         std::span<const double> negative, const TripletConfig& config);

struct PairLoss {
  double loss = 0.0;
  std::vector<double> d_anchor, d_positive;
};

// |a - p|^2, the rotation-invariance objective of the ablation baseline.
PairLoss rotation_invariance_loss(std::span<const double> anchor, std::span<const double> positive);

struct BatchLoss {
  double loss = 0.0;
  Matrix grad;
};

// (1/N) sum (F - b)^2 with b = [F > 0.5] held constant in the gradient.
BatchLoss quantization_loss(const Matrix& features);

struct EntropyLoss {
  double loss = 0.0;  // relaxed: column means of clamp(F, 0, 1)
  Matrix grad;
  double loss_binary = 0.0;  // column means of hard bits
};

// sum_m (mean_m - 0.5)^2 over bit columns.
EntropyLoss entropy_loss(const Matrix& features);

struct CombinedLoss {
  LossReport report;
  Matrix d_anchor, d_positive, d_negative;  // d_negative empty for rotation_invariance
};

// alpha * pair term (averaged over rows) + beta * L_Q + gamma * L_E, where
// the quantization and entropy terms run over every feature row passed in.
// negatives may be empty for PairTerm::rotation_invariance.
CombinedLoss combined_loss(const Matrix& anchors, const Matrix& positives, const Matrix& negatives,
                           const LossWeights& weights, const TripletConfig& config,
                           PairTerm term = PairTerm::triplet);

// beta * L_Q + gamma * L_E over a single batch of features; the pair term
// of the report is 0.
struct RegularizerLoss {
  LossReport report;
  Matrix grad;
};
RegularizerLoss regularizer_loss(const Matrix& features, const LossWeights& weights);

}  // namespace uth
