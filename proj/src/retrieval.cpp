#include "uth/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "binary_io.hpp"
#include "uth/error.hpp"
#include "uth/parallel.hpp"
#include "uth/rng.hpp"

namespace uth {

namespace {

constexpr char kCodesMagic[4] = {'U', 'T', 'H', 'C'};
constexpr std::uint32_t kCodesVersion = 1;
constexpr std::size_t kEncodeChunk = 256;

std::uint64_t tail_mask(int bit_width) {
  const int rem = bit_width % 64;
  return rem == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << rem) - 1;
}

bool by_distance_then_id(const Neighbor& a, const Neighbor& b) {
  return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
}

void check_width(const CodeDatabase& db, const HashCode& query) {
  if (db.bit_width() != query.bit_width()) throw ShapeError("query width differs from database width");
}

}  // namespace

HashCode::HashCode(int bit_width) : bit_width_(bit_width), words_(words_for(bit_width), 0) {
  if (bit_width <= 0) throw ShapeError("hash code width must be positive");
}

HashCode HashCode::from_bits(const std::vector<bool>& bits) {
  HashCode code(static_cast<int>(bits.size()));
  for (std::size_t i = 0; i < bits.size(); ++i) code.set(static_cast<int>(i), bits[i]);
  return code;
}

HashCode HashCode::from_words(int bit_width, std::vector<std::uint64_t> words) {
  HashCode code(bit_width);
  if (words.size() != code.words_.size()) throw ShapeError("hash code word count mismatch");
  if ((words.back() & ~tail_mask(bit_width)) != 0) throw ShapeError("hash code padding bits set");
  code.words_ = std::move(words);
  return code;
}

void HashCode::set(int i, bool value) {
  auto& w = words_[static_cast<std::size_t>(i) / 64];
  const std::uint64_t mask = std::uint64_t{1} << (i % 64);
  w = value ? (w | mask) : (w & ~mask);
}

std::vector<bool> HashCode::to_bits() const {
  std::vector<bool> bits(static_cast<std::size_t>(bit_width_));
  for (int i = 0; i < bit_width_; ++i) bits[static_cast<std::size_t>(i)] = bit(i);
  return bits;
}

HashCode binarize(std::span<const double> features, double threshold) {
  HashCode code(static_cast<int>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i] > threshold) code.set(static_cast<int>(i), true);
  }
  return code;
}

int hamming_distance(const HashCode& a, const HashCode& b) {
  if (a.bit_width() != b.bit_width()) throw ShapeError("hamming_distance: width mismatch");
  int d = 0;
  const auto wa = a.words();
  const auto wb = b.words();
  for (std::size_t i = 0; i < wa.size(); ++i) d += std::popcount(wa[i] ^ wb[i]);
  return d;
}

void CodeDatabase::add(const HashCode& code, std::uint64_t id, std::optional<int> label) {
  if (code.bit_width() != bit_width_) throw ShapeError("CodeDatabase::add: width mismatch");
  if (ids_.empty()) {
    if (label) labels_.emplace();
  } else if (label.has_value() != labels_.has_value()) {
    throw ConsistencyError("CodeDatabase::add: labels must be given for all entries or none");
  }
  words_.insert(words_.end(), code.words().begin(), code.words().end());
  ids_.push_back(id);
  if (label) labels_->push_back(*label);
}

HashCode CodeDatabase::code(std::size_t i) const {
  const auto w = words(i);
  return HashCode::from_words(bit_width_, {w.begin(), w.end()});
}

std::optional<std::size_t> CodeDatabase::find(std::uint64_t id) const {
  const auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - ids_.begin());
}

CodeDatabase CodeDatabase::select(const std::vector<std::size_t>& positions) const {
  CodeDatabase out(bit_width_);
  for (std::size_t p : positions) {
    if (p >= size()) throw ShapeError("CodeDatabase::select: position out of range");
    out.add(code(p), ids_[p], labels_ ? std::optional<int>((*labels_)[p]) : std::nullopt);
  }
  return out;
}

void save_codes(const CodeDatabase& db, const std::filesystem::path& path) {
  detail::Writer w;
  w.bytes(kCodesMagic, 4);
  w.u32(kCodesVersion);
  w.u32(static_cast<std::uint32_t>(db.bit_width()));
  w.u64(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) {
    w.u64(db.id(i));
    for (std::uint64_t word : db.words(i)) w.u64(word);
  }
  w.u8(db.has_labels() ? 1 : 0);
  if (db.has_labels()) {
    for (std::size_t i = 0; i < db.size(); ++i) w.i32(db.label(i));
  }
  detail::write_file(path, w.buffer());
}

CodeDatabase load_codes(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  detail::Reader<FormatError> r(bytes, path.string());
  if (std::memcmp(r.take(4), kCodesMagic, 4) != 0) throw FormatError(path.string() + ": not a code file");
  const std::uint32_t version = r.u32();
  if (version != kCodesVersion) {
    throw FormatError(path.string() + ": unsupported code file version " + std::to_string(version));
  }
  const auto bit_width = static_cast<int>(r.u32());
  if (bit_width <= 0) throw FormatError(path.string() + ": bad bit width");
  const std::uint64_t count = r.u64();
  const std::size_t wpc = words_for(bit_width);
  r.need(count * (8 + 8 * wpc));

  std::vector<HashCode> codes;
  std::vector<std::uint64_t> ids;
  codes.reserve(count);
  ids.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    ids.push_back(r.u64());
    std::vector<std::uint64_t> words(wpc);
    for (auto& w : words) w = r.u64();
    try {
      codes.push_back(HashCode::from_words(bit_width, std::move(words)));
    } catch (const ShapeError& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }
  const std::uint8_t has_labels = r.u8();
  if (has_labels > 1) throw FormatError(path.string() + ": bad label flag");
  std::vector<int> labels;
  if (has_labels) {
    r.need(count * 4);
    for (std::uint64_t i = 0; i < count; ++i) labels.push_back(r.i32());
  }
  if (r.remaining() != 0) throw FormatError(path.string() + ": trailing bytes");

  CodeDatabase db(bit_width);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    db.add(codes[i], ids[i], has_labels ? std::optional<int>(labels[i]) : std::nullopt);
  }
  return db;
}

std::vector<int> hamming_scan(const CodeDatabase& db, const HashCode& query) {
  check_width(db, query);
  std::vector<int> dist(db.size());
  const auto q = query.words();
  const std::size_t wpc = db.words_per_code();
  if (wpc == 1) {
    const std::uint64_t q0 = q[0];
    parallel_for(db.size(), [&](std::size_t i) { dist[i] = std::popcount(db.words(i)[0] ^ q0); });
  } else {
    parallel_for(db.size(), [&](std::size_t i) {
      const auto w = db.words(i);
      int d = 0;
      for (std::size_t k = 0; k < wpc; ++k) d += std::popcount(w[k] ^ q[k]);
      dist[i] = d;
    });
  }
  return dist;
}

std::vector<Neighbor> knn_search(const CodeDatabase& db, const HashCode& query, std::size_t k) {
  if (k == 0) throw UsageError("knn_search: k must be >= 1");
  const auto dist = hamming_scan(db, query);
  std::vector<Neighbor> all(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) all[i] = {db.id(i), dist[i]};
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(),
                    by_distance_then_id);
  all.resize(k);
  return all;
}

std::vector<Neighbor> radius_search(const CodeDatabase& db, const HashCode& query, int radius) {
  if (radius < 0 || radius > query.bit_width()) throw UsageError("radius_search: radius outside [0, M]");
  const auto dist = hamming_scan(db, query);
  std::vector<Neighbor> hits;
  for (std::size_t i = 0; i < db.size(); ++i) {
    if (dist[i] <= radius) hits.push_back({db.id(i), dist[i]});
  }
  std::sort(hits.begin(), hits.end(), by_distance_then_id);
  return hits;
}

std::vector<HashCode> lsh_encode(const Matrix& features, int bit_width, std::uint64_t seed) {
  if (features.cols() == 0) throw ShapeError("lsh_encode: feature dimension must be >= 1");
  if (bit_width <= 0) throw ShapeError("lsh_encode: bit width must be >= 1");
  const std::size_t d = features.cols();
  Rng rng(seed);
  Matrix planes(static_cast<std::size_t>(bit_width), d);
  for (double& v : planes.data()) v = rng.normal();

  std::vector<HashCode> codes(features.rows(), HashCode(bit_width));
  parallel_for(features.rows(), [&](std::size_t r) {
    const auto x = features.row(r);
    for (int m = 0; m < bit_width; ++m) {
      const auto p = planes.row(static_cast<std::size_t>(m));
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += p[j] * x[j];
      if (dot > 0.0) codes[r].set(m, true);
    }
  });
  return codes;
}

Matrix flatten_pixels(const Dataset& dataset) {
  Matrix out(dataset.size(), dataset.dims().size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    std::copy(dataset[i].pixels.begin(), dataset[i].pixels.end(), out.row(i).begin());
  }
  return out;
}

CodeDatabase encode_dataset(const NetworkParams& params, const Dataset& dataset, double threshold) {
  if (!(dataset.dims() == params.input)) throw ShapeError("encode_dataset: dataset dims differ from network input");
  CodeDatabase db(params.bit_width());
  const auto& samples = dataset.samples();
  for (std::size_t start = 0; start < samples.size(); start += kEncodeChunk) {
    const std::size_t n = std::min(kEncodeChunk, samples.size() - start);
    const auto features = compute_features(params, std::span(samples).subspan(start, n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = samples[start + i];
      db.add(binarize(features.row(i), threshold), s.index, s.label);
    }
  }
  return db;
}

CodeDatabase lsh_encode_dataset(const Dataset& dataset, int bit_width, std::uint64_t seed) {
  const auto codes = lsh_encode(flatten_pixels(dataset), bit_width, seed);
  CodeDatabase db(bit_width);
  for (std::size_t i = 0; i < codes.size(); ++i) db.add(codes[i], dataset[i].index, dataset[i].label);
  return db;
}

}  // namespace uth
