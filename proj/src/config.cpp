#include "uth/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "binary_io.hpp"
#include "uth/error.hpp"

namespace uth {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

DatasetConfig parse_dataset(const json& j, const std::filesystem::path& base) {
  reject_unknown(j, {"format", "images", "labels", "batches", "limit"}, "dataset");
  DatasetConfig d;
  read(j, "format", d.format, "dataset");
  std::string images, labels;
  read(j, "images", images, "dataset");
  read(j, "labels", labels, "dataset");
  if (!images.empty()) d.images = resolve(base, images);
  if (!labels.empty()) d.labels = resolve(base, labels);
  std::vector<std::string> batches;
  read(j, "batches", batches, "dataset");
  for (const auto& b : batches) d.batches.push_back(resolve(base, b));
  if (j.contains("limit")) {
    std::size_t limit = 0;
    read(j, "limit", limit, "dataset");
    d.limit = limit;
  }
  return d;
}

TrainConfig parse_train(const json& j, std::optional<std::vector<LayerSpec>>& layers) {
  reject_unknown(j,
                 {"bit_width", "phase1_epochs", "phase2_epochs", "batch_size", "learning_rate",
                  "momentum", "seed", "weights", "margin", "rotations", "triplets_per_epoch",
                  "layers"},
                 "train");
  TrainConfig t;
  read(j, "bit_width", t.bit_width, "train");
  read(j, "phase1_epochs", t.phase1_epochs, "train");
  read(j, "phase2_epochs", t.phase2_epochs, "train");
  read(j, "batch_size", t.batch_size, "train");
  read(j, "learning_rate", t.learning_rate, "train");
  read(j, "momentum", t.momentum, "train");
  read(j, "seed", t.seed, "train");
  read(j, "margin", t.triplet.margin, "train");
  read(j, "rotations", t.rotations.degrees, "train");
  read(j, "triplets_per_epoch", t.triplets_per_epoch, "train");
  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    reject_unknown(w, {"alpha", "beta", "gamma"}, "train.weights");
    read(w, "alpha", t.weights.alpha, "train.weights");
    read(w, "beta", t.weights.beta, "train.weights");
    read(w, "gamma", t.weights.gamma, "train.weights");
  }
  if (j.contains("layers")) layers = layer_spec_from_json(j.at("layers"));
  return t;
}

EvalConfig parse_eval(const json& j) {
  reject_unknown(j, {"query_count", "top_k", "seed"}, "eval");
  EvalConfig e;
  read(j, "query_count", e.query_count, "eval");
  read(j, "top_k", e.top_k, "eval");
  read(j, "seed", e.seed, "eval");
  return e;
}

void require_file(const std::filesystem::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("dataset.") + what + " is required");
  if (!std::filesystem::is_regular_file(p)) {
    throw ConfigError(std::string("dataset.") + what + " not found: " + p.string());
  }
}

}  // namespace

nlohmann::json layer_spec_to_json(const std::vector<LayerSpec>& spec) {
  json out = json::array();
  for (const auto& s : spec) {
    json l{{"type", to_string(s.kind)}};
    switch (s.kind) {
      case LayerKind::convolution:
        l["out_channels"] = s.out_channels;
        l["kernel"] = s.kernel;
        l["stride"] = s.stride;
        break;
      case LayerKind::max_pool: l["window"] = s.window; break;
      case LayerKind::fully_connected: l["out_dim"] = s.out_dim; break;
      case LayerKind::relu: break;
    }
    out.push_back(l);
  }
  return out;
}

std::vector<LayerSpec> layer_spec_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ConfigError("train.layers must be an array");
  std::vector<LayerSpec> spec;
  for (const auto& l : j) {
    std::string type;
    read(l, "type", type, "train.layers");
    if (type == "conv") {
      reject_unknown(l, {"type", "out_channels", "kernel", "stride"}, "conv layer");
      LayerSpec s = LayerSpec::conv(0, 0, 1);
      read(l, "out_channels", s.out_channels, "conv layer");
      read(l, "kernel", s.kernel, "conv layer");
      read(l, "stride", s.stride, "conv layer");
      spec.push_back(s);
    } else if (type == "max_pool") {
      reject_unknown(l, {"type", "window"}, "max_pool layer");
      LayerSpec s = LayerSpec::max_pool(0);
      read(l, "window", s.window, "max_pool layer");
      spec.push_back(s);
    } else if (type == "fully_connected") {
      reject_unknown(l, {"type", "out_dim"}, "fully_connected layer");
      LayerSpec s = LayerSpec::fully_connected(0);
      read(l, "out_dim", s.out_dim, "fully_connected layer");
      spec.push_back(s);
    } else if (type == "relu") {
      reject_unknown(l, {"type"}, "relu layer");
      spec.push_back(LayerSpec::relu());
    } else {
      throw ConfigError("unknown layer type '" + type + "'");
    }
  }
  return spec;
}

std::vector<LayerSpec> RunConfig::layer_spec() const {
  return layers ? *layers : default_layer_spec(train.bit_width);
}

void RunConfig::validate() const {
  train.validate();
  eval.validate();
  const auto spec = layer_spec();
  if (spec.size() < 2 || spec[spec.size() - 2].kind != LayerKind::fully_connected ||
      spec[spec.size() - 2].out_dim != train.bit_width) {
    throw ConfigError("hashing layer width must equal train.bit_width");
  }
  if (dataset.format == "mnist") {
    require_file(dataset.images, "images");
    require_file(dataset.labels, "labels");
    layer_shapes(spec, kMnistDims);
  } else if (dataset.format == "cifar10") {
    if (dataset.batches.empty()) throw ConfigError("dataset.batches is required for cifar10");
    for (const auto& b : dataset.batches) require_file(b, "batches");
    layer_shapes(spec, kCifar10Dims);
  } else {
    throw ConfigError("dataset.format must be mnist or cifar10");
  }
  if (dataset.limit && *dataset.limit == 0) throw ConfigError("dataset.limit must be >= 1");
}

RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  reject_unknown(j, {"dataset", "train", "eval", "output_dir"}, "config");
  RunConfig c;
  if (!j.contains("dataset")) throw ConfigError("config needs a dataset section");
  c.dataset = parse_dataset(j.at("dataset"), base_dir);
  if (j.contains("train")) c.train = parse_train(j.at("train"), c.layers);
  if (j.contains("eval")) c.eval = parse_eval(j.at("eval"));
  std::string out;
  read(j, "output_dir", out, "config");
  if (!out.empty()) c.output_dir = resolve(base_dir, out);
  else c.output_dir = base_dir / "out";
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_run_config(j, std::filesystem::absolute(path).parent_path());
}

Dataset load_dataset(const DatasetConfig& config) {
  Dataset d = config.format == "cifar10" ? load_cifar10(config.batches)
                                         : load_mnist_idx(config.images, config.labels);
  return config.limit ? d.head(*config.limit) : d;
}

std::string file_hash_hex(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace uth
