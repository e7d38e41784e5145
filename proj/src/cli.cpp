#include "uth/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>

#include "uth/config.hpp"
#include "uth/error.hpp"
#include "uth/eval.hpp"
#include "uth/retrieval.hpp"
#include "uth/training.hpp"

namespace uth::cli {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> bits;
  std::optional<std::string> out;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seed", o.seed, "Override the seed");
  cmd->add_option("--bits", o.bits, "Override train.bit_width");
  cmd->add_option("--out", o.out, "Override output_dir");
}

RunConfig load_config(const std::string& path, const Overrides& o, bool seed_is_eval = false) {
  RunConfig config = load_run_config(path);
  if (o.seed) (seed_is_eval ? config.eval.seed : config.train.seed) = *o.seed;
  if (o.bits) {
    config.train.bit_width = *o.bits;
    if (config.layers && config.layers->size() >= 2) {
      (*config.layers)[config.layers->size() - 2].out_dim = *o.bits;
    }
  }
  if (o.out) config.output_dir = *o.out;
  config.validate();
  return config;
}

void write_manifest(const fs::path& path, const std::string& command, const std::string& config_path,
                    const RunConfig& config, double seconds) {
  nlohmann::ordered_json m;
  m["command"] = command;
  m["config_hash"] = file_hash_hex(config_path);
  m["seed"] = config.train.seed;
  m["bit_width"] = config.train.bit_width;
  m["wall_clock_seconds"] = seconds;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out << m.dump(2) << "\n";
}

int train_and_save(const RunConfig& base, PairTerm term, const std::string& config_path,
                   const std::string& suffix, std::ostream& err) {
  RunConfig config = base;
  config.train.pair_term = term;
  // Training never sees labels.
  const Dataset dataset = load_dataset(config.dataset).without_labels();
  const auto start = Clock::now();
  auto params = build_network(config.layer_spec(), dataset.dims(), config.train.seed);
  auto result = train(std::move(params), dataset, config.train, [&](const TrainLogEntry& e) {
    char line[160];
    std::snprintf(line, sizeof line, "phase %d epoch %d loss %.6f (T %.4f Q %.4f E %.4f)\n", e.phase,
                  e.epoch, e.report.l_total, e.report.l_triplet, e.report.l_quant, e.report.l_entropy);
    err << line;
  });
  const double seconds = std::chrono::duration<double>(Clock::now() - start).count();

  fs::create_directories(config.output_dir);
  save_params(result.params, config.output_dir / ("params" + suffix + ".bin"));
  write_trainlog_csv(result.log, config.output_dir / ("trainlog" + suffix + ".csv"));
  write_manifest(config.output_dir / ("manifest" + suffix + ".json"),
                 term == PairTerm::triplet ? "train" : "baseline rotinv", config_path, config, seconds);
  return kExitOk;
}

int cmd_train(const std::string& config_path, const Overrides& o, std::ostream& err) {
  return train_and_save(load_config(config_path, o), PairTerm::triplet, config_path, "", err);
}

int cmd_encode(const std::string& params_path, const std::string& config_path, const Overrides& o) {
  const RunConfig config = load_config(config_path, o);
  const NetworkParams params = load_params(params_path);
  const Dataset dataset = load_dataset(config.dataset);
  if (!(dataset.dims() == params.input)) throw ShapeError("params input dims do not match the dataset");
  if (params.bit_width() != config.train.bit_width) throw ShapeError("params width differs from train.bit_width");
  const CodeDatabase db = encode_dataset(params, dataset, kBinarizeThreshold);
  fs::create_directories(config.output_dir);
  save_codes(db, config.output_dir / "codes.uthc");
  return kExitOk;
}

int cmd_search(const std::string& codes_path, std::uint64_t query_id, std::size_t k, std::ostream& out) {
  const CodeDatabase db = load_codes(codes_path);
  const auto pos = db.find(query_id);
  if (!pos) throw UsageError("query id " + std::to_string(query_id) + " not in database");
  out << "rank,neighbor_id,distance\n";
  const auto hits = knn_search(db, db.code(*pos), k);
  for (std::size_t r = 0; r < hits.size(); ++r) {
    out << r + 1 << ',' << hits[r].id << ',' << hits[r].distance << '\n';
  }
  return kExitOk;
}

int cmd_eval(const std::string& codes_path, const std::string& config_path, const Overrides& o) {
  const RunConfig config = load_config(config_path, o, /*seed_is_eval=*/true);
  const CodeDatabase db = load_codes(codes_path);
  const EvalReport report = evaluate(db, config.eval);
  fs::create_directories(config.output_dir);
  export_report(report, config.output_dir / "report.csv");
  return kExitOk;
}

int cmd_baseline(const std::string& config_path, const std::string& method, const Overrides& o,
                 std::ostream& err) {
  if (method != "lsh" && method != "rotinv") throw UsageError("unknown baseline method '" + method + "'");
  const RunConfig config = load_config(config_path, o);
  if (method == "rotinv") {
    return train_and_save(config, PairTerm::rotation_invariance, config_path, "_rotinv", err);
  }
  const Dataset dataset = load_dataset(config.dataset);
  const CodeDatabase db = lsh_encode_dataset(dataset, config.train.bit_width, config.train.seed);
  fs::create_directories(config.output_dir);
  save_codes(db, config.output_dir / "codes_lsh.uthc");
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Unsupervised triplet hashing: train, encode, search and evaluate binary codes"};
  app.require_subcommand(1);

  std::string config_path, params_path, codes_path, method;
  std::uint64_t query_id = 0;
  std::size_t k = 10;
  Overrides train_o, encode_o, eval_o, baseline_o;

  auto* train = app.add_subcommand("train", "Train a hashing network (writes params, trainlog, manifest)");
  train->add_option("--config", config_path, "JSON run config")->required();
  add_overrides(train, train_o);

  auto* encode = app.add_subcommand("encode", "Encode the configured dataset into a code database");
  encode->add_option("--params", params_path, "Params file from train")->required();
  encode->add_option("--config", config_path, "JSON run config")->required();
  add_overrides(encode, encode_o);

  auto* search = app.add_subcommand("search", "Print the k nearest codes to a database entry as CSV");
  search->add_option("--codes", codes_path, "Code database file")->required();
  search->add_option("--query-id", query_id, "Id of the query entry")->required();
  search->add_option("-k,--k", k, "Number of neighbors")->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("eval", "Evaluate mAP and PR curve of a labeled code database");
  eval->add_option("--codes", codes_path, "Code database file")->required();
  eval->add_option("--config", config_path, "JSON run config")->required();
  add_overrides(eval, eval_o);

  auto* baseline = app.add_subcommand("baseline", "Run a baseline: lsh codes or rotinv training");
  baseline->add_option("--config", config_path, "JSON run config")->required();
  baseline->add_option("--method", method, "lsh | rotinv")->required();
  add_overrides(baseline, baseline_o);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n" << app.help();
    return kExitConfig;
  }

  try {
    if (*train) return cmd_train(config_path, train_o, err);
    if (*encode) return cmd_encode(params_path, config_path, encode_o);
    if (*search) return cmd_search(codes_path, query_id, k, out);
    if (*eval) return cmd_eval(codes_path, config_path, eval_o);
    if (*baseline) return cmd_baseline(config_path, method, baseline_o, err);
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace uth::cli
