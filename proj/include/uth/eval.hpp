#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "uth/retrieval.hpp"

namespace uth {

struct EvalConfig {
  std::size_t query_count = 1000;
  std::size_t top_k = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PRPoint {
  int radius = 0;
  double precision = 1.0;
  double recall = 0.0;
  bool retrieved_empty = false;  // nothing within radius; precision set to 1
  friend bool operator==(const PRPoint&, const PRPoint&) = default;
};

struct EvalReport {
  double map = 0.0;
  std::vector<double> per_query_ap;
  std::vector<PRPoint> pr_curve;
  EvalConfig config;
  int bit_width = 0;
};

// Positions of the query rows for a database of n entries, sampled uniformly
// without replacement; the gallery is every other position, in order.
struct SplitPositions {
  std::vector<std::size_t> queries;
  std::vector<std::size_t> gallery;
};
SplitPositions split_positions(std::size_t n, std::size_t query_count, std::uint64_t seed);

// ConfigError when the database is unlabeled or not larger than query_count.
std::pair<CodeDatabase, CodeDatabase> split_query_gallery(const CodeDatabase& db,
                                                          const EvalConfig& config);

// Mean of precision@i over the relevant ranks i <= k, divided by the number
// of relevant entries within the top k (0 when there are none).
double average_precision(std::span<const std::uint8_t> relevance, std::size_t k);

struct MapResult {
  double map = 0.0;
  std::vector<double> per_query_ap;
};

MapResult mean_ap(const CodeDatabase& queries, const CodeDatabase& gallery, std::size_t top_k);

// Micro-averaged precision and recall for Hamming radii 0..M.
std::vector<PRPoint> pr_curve(const CodeDatabase& queries, const CodeDatabase& gallery);

// Split, mAP and PR curve in one call.
EvalReport evaluate(const CodeDatabase& db, const EvalConfig& config);

// Writes radius,precision,recall,retrieved_empty to csv_path and the
// summary {map, top_k, query_count, bit_width, seed} to csv_path with a
// .json extension.
void export_report(const EvalReport& report, const std::filesystem::path& csv_path);

std::vector<PRPoint> read_pr_csv(const std::filesystem::path& csv_path);

}  // namespace uth
