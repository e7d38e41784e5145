#include "uth/eval.hpp"

#include <bit>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "uth/error.hpp"
#include "uth/parallel.hpp"
#include "uth/rng.hpp"

namespace uth {

void EvalConfig::validate() const {
  if (query_count == 0) throw ConfigError("query_count must be >= 1");
  if (top_k == 0) throw ConfigError("top_k must be >= 1");
}

SplitPositions split_positions(std::size_t n, std::size_t query_count, std::uint64_t seed) {
  if (query_count >= n) {
    throw ConfigError("database of " + std::to_string(n) + " entries cannot supply " +
                      std::to_string(query_count) + " queries plus a gallery");
  }
  Rng rng(seed);
  auto order = rng.permutation(n);
  SplitPositions split;
  split.queries.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(query_count));
  std::vector<bool> is_query(n, false);
  for (std::size_t q : split.queries) is_query[q] = true;
  for (std::size_t i = 0; i < n; ++i) {
    if (!is_query[i]) split.gallery.push_back(i);
  }
  return split;
}

std::pair<CodeDatabase, CodeDatabase> split_query_gallery(const CodeDatabase& db,
                                                          const EvalConfig& config) {
  config.validate();
  if (!db.has_labels()) throw ConfigError("evaluation needs a labeled code database");
  const auto split = split_positions(db.size(), config.query_count, config.seed);
  return {db.select(split.queries), db.select(split.gallery)};
}

double average_precision(std::span<const std::uint8_t> relevance, std::size_t k) {
  const std::size_t n = std::min(k, relevance.size());
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (relevance[i]) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return hits == 0 ? 0.0 : sum / static_cast<double>(hits);
}

MapResult mean_ap(const CodeDatabase& queries, const CodeDatabase& gallery, std::size_t top_k) {
  if (!queries.has_labels() || !gallery.has_labels()) throw ConfigError("mean_ap needs labels");
  if (queries.bit_width() != gallery.bit_width()) throw ShapeError("mean_ap: width mismatch");
  if (queries.empty()) throw UsageError("mean_ap: no queries");
  if (top_k == 0) throw UsageError("mean_ap: top_k must be >= 1");

  // Gallery ids are unique, so a position lookup recovers labels.
  std::vector<std::pair<std::uint64_t, int>> label_of(gallery.size());
  for (std::size_t i = 0; i < gallery.size(); ++i) label_of[i] = {gallery.id(i), gallery.label(i)};
  std::sort(label_of.begin(), label_of.end());
  auto lookup = [&](std::uint64_t id) {
    return std::lower_bound(label_of.begin(), label_of.end(), std::pair<std::uint64_t, int>{id, INT32_MIN})->second;
  };

  MapResult result;
  result.per_query_ap.resize(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto ranked = knn_search(gallery, queries.code(q), top_k);
    std::vector<std::uint8_t> rel(ranked.size());
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      rel[i] = lookup(ranked[i].id) == queries.label(q) ? 1 : 0;
    }
    result.per_query_ap[q] = average_precision(rel, top_k);
  }
  double sum = 0.0;
  for (double ap : result.per_query_ap) sum += ap;
  result.map = sum / static_cast<double>(result.per_query_ap.size());
  return result;
}

std::vector<PRPoint> pr_curve(const CodeDatabase& queries, const CodeDatabase& gallery) {
  if (!queries.has_labels() || !gallery.has_labels()) throw ConfigError("pr_curve needs labels");
  if (queries.bit_width() != gallery.bit_width()) throw ShapeError("pr_curve: width mismatch");
  const int m = gallery.bit_width();
  const auto bins = static_cast<std::size_t>(m) + 1;

  // Per-query histograms of distances, split by relevance; summed in query
  // order afterwards.
  std::vector<std::vector<std::uint64_t>> rel_hist(queries.size(), std::vector<std::uint64_t>(bins, 0));
  std::vector<std::vector<std::uint64_t>> all_hist(queries.size(), std::vector<std::uint64_t>(bins, 0));
  parallel_for(queries.size(), [&](std::size_t q) {
    const HashCode query = queries.code(q);
    const auto qw = query.words();
    for (std::size_t g = 0; g < gallery.size(); ++g) {
      const auto gw = gallery.words(g);
      int d = 0;
      for (std::size_t k = 0; k < qw.size(); ++k) d += std::popcount(qw[k] ^ gw[k]);
      ++all_hist[q][static_cast<std::size_t>(d)];
      if (gallery.label(g) == queries.label(q)) ++rel_hist[q][static_cast<std::size_t>(d)];
    }
  });

  std::vector<std::uint64_t> rel(bins, 0), all(bins, 0);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    for (std::size_t d = 0; d < bins; ++d) {
      rel[d] += rel_hist[q][d];
      all[d] += all_hist[q][d];
    }
  }
  std::uint64_t total_relevant = 0;
  for (auto v : rel) total_relevant += v;

  std::vector<PRPoint> curve;
  std::uint64_t rel_cum = 0, all_cum = 0;
  for (int r = 0; r <= m; ++r) {
    rel_cum += rel[static_cast<std::size_t>(r)];
    all_cum += all[static_cast<std::size_t>(r)];
    PRPoint p;
    p.radius = r;
    p.retrieved_empty = all_cum == 0;
    p.precision = all_cum == 0 ? 1.0 : static_cast<double>(rel_cum) / static_cast<double>(all_cum);
    p.recall = total_relevant == 0 ? 0.0
                                   : static_cast<double>(rel_cum) / static_cast<double>(total_relevant);
    curve.push_back(p);
  }
  return curve;
}

EvalReport evaluate(const CodeDatabase& db, const EvalConfig& config) {
  const auto [queries, gallery] = split_query_gallery(db, config);
  auto map = mean_ap(queries, gallery, config.top_k);
  EvalReport report;
  report.map = map.map;
  report.per_query_ap = std::move(map.per_query_ap);
  report.pr_curve = pr_curve(queries, gallery);
  report.config = config;
  report.bit_width = db.bit_width();
  return report;
}

void export_report(const EvalReport& report, const std::filesystem::path& csv_path) {
  {
    std::ofstream out(csv_path, std::ios::trunc);
    if (!out) throw IoError("cannot create " + csv_path.string());
    out << "radius,precision,recall,retrieved_empty\n";
    char line[128];
    for (const auto& p : report.pr_curve) {
      std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%d\n", p.radius, p.precision, p.recall,
                    p.retrieved_empty ? 1 : 0);
      out << line;
    }
    if (!out) throw IoError("write failed on " + csv_path.string());
  }
  nlohmann::ordered_json summary;
  summary["map"] = report.map;
  summary["top_k"] = report.config.top_k;
  summary["query_count"] = report.config.query_count;
  summary["bit_width"] = report.bit_width;
  summary["seed"] = report.config.seed;
  auto json_path = csv_path;
  json_path.replace_extension(".json");
  std::ofstream out(json_path, std::ios::trunc);
  if (!out) throw IoError("cannot create " + json_path.string());
  out << summary.dump(2) << "\n";
  if (!out) throw IoError("write failed on " + json_path.string());
}

std::vector<PRPoint> read_pr_csv(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot open " + csv_path.string());
  std::string line;
  if (!std::getline(in, line) || line != "radius,precision,recall,retrieved_empty") {
    throw FormatError(csv_path.string() + ": unexpected header");
  }
  std::vector<PRPoint> points;
  while (std::getline(in, line)) {
    PRPoint p;
    int empty = 0;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%d", &p.radius, &p.precision, &p.recall, &empty) != 4) {
      throw FormatError(csv_path.string() + ": malformed row '" + line + "'");
    }
    p.retrieved_empty = empty != 0;
    points.push_back(p);
  }
  return points;
}

}  // namespace uth
