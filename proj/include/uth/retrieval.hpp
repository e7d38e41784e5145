#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "uth/dataset.hpp"
#include "uth/matrix.hpp"
#include "uth/network.hpp"

namespace uth {

// Packed M-bit code. Bit i lives in word i / 64 at position i % 64; bits at
// positions >= M are always zero.
class HashCode {
 public:
  HashCode() = default;
  explicit HashCode(int bit_width);

  static HashCode from_bits(const std::vector<bool>& bits);
  // Takes ownership of packed words; throws ShapeError when the word count
  // or padding is not canonical.
  static HashCode from_words(int bit_width, std::vector<std::uint64_t> words);

  int bit_width() const { return bit_width_; }
  std::span<const std::uint64_t> words() const { return words_; }
  bool bit(int i) const { return (words_[static_cast<std::size_t>(i) / 64] >> (i % 64)) & 1U; }
  void set(int i, bool value);
  std::vector<bool> to_bits() const;

  friend bool operator==(const HashCode&, const HashCode&) = default;

 private:
  int bit_width_ = 0;
  std::vector<std::uint64_t> words_;
};

inline std::size_t words_for(int bit_width) { return (static_cast<std::size_t>(bit_width) + 63) / 64; }

// bit m = 1 iff features[m] > threshold.
HashCode binarize(std::span<const double> features, double threshold = 0.5);

int hamming_distance(const HashCode& a, const HashCode& b);

// Codes stored back to back in one word array.
class CodeDatabase {
 public:
  CodeDatabase() = default;
  explicit CodeDatabase(int bit_width) : bit_width_(bit_width) {}

  void add(const HashCode& code, std::uint64_t id, std::optional<int> label = std::nullopt);

  int bit_width() const { return bit_width_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  std::size_t words_per_code() const { return words_for(bit_width_); }
  std::span<const std::uint64_t> words(std::size_t i) const {
    return {words_.data() + i * words_per_code(), words_per_code()};
  }
  HashCode code(std::size_t i) const;
  std::uint64_t id(std::size_t i) const { return ids_[i]; }
  const std::vector<std::uint64_t>& ids() const { return ids_; }
  bool has_labels() const { return labels_.has_value(); }
  int label(std::size_t i) const { return labels_->at(i); }
  // Position of id, if present.
  std::optional<std::size_t> find(std::uint64_t id) const;
  // Entries at the given positions, in that order.
  CodeDatabase select(const std::vector<std::size_t>& positions) const;

  friend bool operator==(const CodeDatabase&, const CodeDatabase&) = default;

 private:
  int bit_width_ = 0;
  std::vector<std::uint64_t> words_;
  std::vector<std::uint64_t> ids_;
  std::optional<std::vector<int>> labels_;
};

// Little-endian: "UTHC", u32 version, u32 M, u64 count, then per entry
// u64 id + packed words, then u8 has_labels and, if set, count x i32 labels.
void save_codes(const CodeDatabase& db, const std::filesystem::path& path);
CodeDatabase load_codes(const std::filesystem::path& path);

struct Neighbor {
  std::uint64_t id = 0;
  int distance = 0;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Distance from query to every entry, in database order. Runs in parallel.
std::vector<int> hamming_scan(const CodeDatabase& db, const HashCode& query);

// k nearest entries ordered by (distance, id).
std::vector<Neighbor> knn_search(const CodeDatabase& db, const HashCode& query, std::size_t k);

// Every entry within distance r, ordered by (distance, id).
std::vector<Neighbor> radius_search(const CodeDatabase& db, const HashCode& query, int radius);

// Random-hyperplane LSH: M x D standard normal projections, zero offsets,
// bit m = 1 iff projection m > 0.
std::vector<HashCode> lsh_encode(const Matrix& features, int bit_width, std::uint64_t seed);

// Flattened pixels of every sample, one row each.
Matrix flatten_pixels(const Dataset& dataset);

CodeDatabase encode_dataset(const NetworkParams& params, const Dataset& dataset,
                            double threshold = 0.5);

// LSH codes over flattened pixels, carrying ids and labels like encode_dataset.
CodeDatabase lsh_encode_dataset(const Dataset& dataset, int bit_width, std::uint64_t seed);

}  // namespace uth
