#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uth/dataset.hpp"
#include "uth/eval.hpp"
#include "uth/network.hpp"
#include "uth/training.hpp"

namespace uth {

struct DatasetConfig {
  std::string format = "mnist";  // mnist | cifar10
  std::filesystem::path images;  // mnist
  std::filesystem::path labels;  // mnist
  std::vector<std::filesystem::path> batches;  // cifar10
  std::optional<std::size_t> limit;  // keep only the first `limit` samples
};

// JSON run configuration. Relative paths are resolved against the config
// file's directory. Unknown keys are rejected.
struct RunConfig {
  DatasetConfig dataset;
  TrainConfig train;
  std::optional<std::vector<LayerSpec>> layers;  // default_layer_spec(M) when absent
  EvalConfig eval;
  std::filesystem::path output_dir = "out";

  std::vector<LayerSpec> layer_spec() const;
  // Field constraints plus: referenced dataset files exist, and the final
  // hashing layer width equals train.bit_width.
  void validate() const;
};

RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json layer_spec_to_json(const std::vector<LayerSpec>& spec);
std::vector<LayerSpec> layer_spec_from_json(const nlohmann::json& j);

Dataset load_dataset(const DatasetConfig& config);

// FNV-1a 64 of the file bytes, as 16 hex digits.
std::string file_hash_hex(const std::filesystem::path& path);

}  // namespace uth
