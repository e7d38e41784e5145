#include "uth/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "uth/error.hpp"
#include "uth/rng.hpp"

namespace uth {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;  // "SHUFF"

using Clock = std::chrono::steady_clock;

void check_report(const LossReport& r, int phase, int epoch, std::size_t batch) {
  if (!std::isfinite(r.l_total)) {
    char msg[160];
    std::snprintf(msg, sizeof msg,
                  "non-finite loss in phase %d epoch %d batch %zu (triplet %g quant %g entropy %g)",
                  phase, epoch, batch, r.l_triplet, r.l_quant, r.l_entropy);
    throw NumericError(msg);
  }
}

void accumulate(LossReport& sum, const LossReport& r) {
  sum.l_total += r.l_total;
  sum.l_triplet += r.l_triplet;
  sum.l_quant += r.l_quant;
  sum.l_entropy += r.l_entropy;
  sum.l_entropy_binary += r.l_entropy_binary;
}

LossReport mean(LossReport sum, std::size_t batches) {
  const double n = static_cast<double>(batches);
  sum.l_total /= n;
  sum.l_triplet /= n;
  sum.l_quant /= n;
  sum.l_entropy /= n;
  sum.l_entropy_binary /= n;
  return sum;
}

// Rethrows with phase/epoch context; keeps the error class.
template <typename F>
void with_context(int phase, int epoch, F&& f) {
  try {
    f();
  } catch (const NumericError& e) {
    throw NumericError("phase " + std::to_string(phase) + " epoch " + std::to_string(epoch) +
                       ": " + e.what());
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (bit_width != 16 && bit_width != 32 && bit_width != 64 && bit_width != 128 && bit_width != 256) {
    throw ConfigError("bit_width must be one of 16, 32, 64, 128, 256");
  }
  if (phase1_epochs < 0 || phase2_epochs < 0) throw ConfigError("epoch counts must be >= 0");
  if (phase1_epochs == 0 && phase2_epochs == 0) throw ConfigError("at least one phase needs an epoch");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be finite and >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0,1)");
  if (triplets_per_epoch == 0) throw ConfigError("triplets_per_epoch must be >= 1");
  weights.validate();
  triplet.validate();
  rotations.validate();
}

TrainResult train_phase1(NetworkParams params, const Dataset& dataset, const TrainConfig& config,
                         const EpochCallback& on_epoch) {
  config.validate();
  if (config.phase1_epochs > 0 && dataset.empty()) throw InsufficientDataError("phase 1 needs a non-empty dataset");
  if (params.bit_width() != config.bit_width) throw ConfigError("network width differs from bit_width");

  TrainResult result{std::move(params), {}};
  auto& net = result.params;
  auto opt = OptimizerState::for_params(net, config.learning_rate, config.momentum);
  const std::size_t n = dataset.size();

  for (int epoch = 0; epoch < config.phase1_epochs; ++epoch) {
    const auto start = Clock::now();
    Rng rng(Rng::mix(config.seed ^ kShuffleStream) + static_cast<std::uint64_t>(epoch));
    const auto order = rng.permutation(n);
    LossReport sum;
    std::size_t batches = 0;
    with_context(1, epoch, [&] {
      for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
        const std::size_t end = std::min(n, begin + config.batch_size);
        std::vector<const ImageSample*> batch;
        for (std::size_t i = begin; i < end; ++i) batch.push_back(&dataset[order[i]]);
        auto fwd = forward(net, batch);
        const auto loss = regularizer_loss(fwd.features, config.weights);
        check_report(loss.report, 1, epoch, batches);
        const auto grads = backward(net, std::move(fwd.trace), loss.grad);
        sgd_step(net, grads, opt);
        accumulate(sum, loss.report);
        ++batches;
      }
    });
    TrainLogEntry entry{epoch, 1, mean(sum, batches),
                        std::chrono::duration<double>(Clock::now() - start).count()};
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return result;
}

TrainResult train_phase2(NetworkParams params, const Dataset& dataset, const TrainConfig& config,
                         const EpochCallback& on_epoch) {
  config.validate();
  if (config.phase2_epochs > 0 && dataset.size() < 2) throw InsufficientDataError("phase 2 needs at least 2 samples");
  if (params.bit_width() != config.bit_width) throw ConfigError("network width differs from bit_width");

  TrainResult result{std::move(params), {}};
  auto& net = result.params;
  auto opt = OptimizerState::for_params(net, config.learning_rate, config.momentum);
  const bool with_negatives = config.pair_term == PairTerm::triplet;
  const auto m = static_cast<std::size_t>(config.bit_width);

  for (int epoch = 0; epoch < config.phase2_epochs; ++epoch) {
    const auto start = Clock::now();
    const int global_epoch = config.phase1_epochs + epoch;
    const auto triplets = sample_triplets(dataset, config.rotations,
                                          config.seed + static_cast<std::uint64_t>(epoch),
                                          config.triplets_per_epoch);
    LossReport sum;
    std::size_t batches = 0;
    with_context(2, global_epoch, [&] {
      for (std::size_t begin = 0; begin < triplets.size(); begin += config.batch_size) {
        const std::size_t end = std::min(triplets.size(), begin + config.batch_size);
        const std::size_t b = end - begin;
        // Rows: anchors, then positives, then negatives.
        std::vector<const ImageSample*> batch;
        for (std::size_t i = begin; i < end; ++i) batch.push_back(&dataset[triplets[i].anchor_index]);
        for (std::size_t i = begin; i < end; ++i) batch.push_back(&triplets[i].positive);
        if (with_negatives) {
          for (std::size_t i = begin; i < end; ++i) batch.push_back(&dataset[triplets[i].negative_index]);
        }
        auto fwd = forward(net, batch);

        Matrix anchors(b, m), positives(b, m), negatives;
        if (with_negatives) negatives = Matrix(b, m);
        for (std::size_t i = 0; i < b; ++i) {
          for (std::size_t j = 0; j < m; ++j) {
            anchors(i, j) = fwd.features(i, j);
            positives(i, j) = fwd.features(b + i, j);
            if (with_negatives) negatives(i, j) = fwd.features(2 * b + i, j);
          }
        }
        const auto loss = combined_loss(anchors, positives, negatives, config.weights,
                                        config.triplet, config.pair_term);
        check_report(loss.report, 2, global_epoch, batches);

        Matrix dloss(batch.size(), m);
        for (std::size_t i = 0; i < b; ++i) {
          for (std::size_t j = 0; j < m; ++j) {
            dloss(i, j) = loss.d_anchor(i, j);
            dloss(b + i, j) = loss.d_positive(i, j);
            if (with_negatives) dloss(2 * b + i, j) = loss.d_negative(i, j);
          }
        }
        const auto grads = backward(net, std::move(fwd.trace), dloss);
        sgd_step(net, grads, opt);
        accumulate(sum, loss.report);
        ++batches;
      }
    });
    TrainLogEntry entry{global_epoch, 2, mean(sum, batches),
                        std::chrono::duration<double>(Clock::now() - start).count()};
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return result;
}

TrainResult train(NetworkParams params, const Dataset& dataset, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  auto first = train_phase1(std::move(params), dataset, config, on_epoch);
  auto second = train_phase2(std::move(first.params), dataset, config, on_epoch);
  first.log.insert(first.log.end(), second.log.begin(), second.log.end());
  return {std::move(second.params), std::move(first.log)};
}

void write_trainlog_csv(const TrainLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out << "epoch,phase,l_total,l_triplet,l_quant,l_entropy,l_entropy_binary,seconds\n";
  char line[512];
  for (const auto& e : log) {
    std::snprintf(line, sizeof line, "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.6f\n", e.epoch, e.phase,
                  e.report.l_total, e.report.l_triplet, e.report.l_quant, e.report.l_entropy,
                  e.report.l_entropy_binary, e.seconds);
    out << line;
  }
  if (!out) throw IoError("write failed on " + path.string());
}

}  // namespace uth
