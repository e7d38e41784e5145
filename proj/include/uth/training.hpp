#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "uth/dataset.hpp"
#include "uth/losses.hpp"
#include "uth/network.hpp"

namespace uth {

struct TrainConfig {
  int bit_width = 16;
  int phase1_epochs = 15;
  int phase2_epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  LossWeights weights;
  TripletConfig triplet;
  RotationConfig rotations;
  std::size_t triplets_per_epoch = 2000;
  // Pair term used in phase 2; rotation_invariance gives the ablation.
  PairTerm pair_term = PairTerm::triplet;

  // Throws ConfigError on any violated field constraint.
  void validate() const;
};

struct TrainLogEntry {
  int epoch = 0;  // global, 0-based across both phases
  int phase = 1;
  LossReport report;  // batch means over the epoch
  double seconds = 0.0;
};

using TrainLog = std::vector<TrainLogEntry>;

// Called after every epoch; used by the CLI for progress output.
using EpochCallback = std::function<void(const TrainLogEntry&)>;

struct TrainResult {
  NetworkParams params;
  TrainLog log;
};

// Quantization + entropy on shuffled mini-batches of the original images.
TrainResult train_phase1(NetworkParams params, const Dataset& dataset, const TrainConfig& config,
                         const EpochCallback& on_epoch = {});

// Adds the pair term over fresh triplets each epoch (sub-seed seed + epoch).
TrainResult train_phase2(NetworkParams params, const Dataset& dataset, const TrainConfig& config,
                         const EpochCallback& on_epoch = {});

// Phase 1 then phase 2; the log covers both.
TrainResult train(NetworkParams params, const Dataset& dataset, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// epoch,phase,l_total,l_triplet,l_quant,l_entropy,l_entropy_binary,seconds
void write_trainlog_csv(const TrainLog& log, const std::filesystem::path& path);

}  // namespace uth
