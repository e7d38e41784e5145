#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "test_support.hpp"
#include "uth/cli.hpp"
#include "uth/config.hpp"
#include "uth/error.hpp"
#include "uth/eval.hpp"
#include "uth/retrieval.hpp"

using namespace uth;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// The first 60 bundled MNIST digits plus a config pointing at them.
struct Workspace {
  fs::path dir;
  fs::path config;

  explicit Workspace(const std::string& name, nlohmann::json train_overrides = {}) {
    dir = test::temp_dir("cli_" + name);
    const auto digits = test::mnist5k().head(60);
    write_mnist_idx(digits, dir / "images.idx", dir / "labels.idx");
    nlohmann::json train{{"bit_width", 16},  {"phase1_epochs", 1}, {"phase2_epochs", 1},
                         {"batch_size", 8},  {"seed", 7},          {"triplets_per_epoch", 16},
                         {"learning_rate", 0.01}};
    if (train_overrides.is_object()) train.update(train_overrides);
    nlohmann::json j{{"dataset", {{"format", "mnist"}, {"images", "images.idx"}, {"labels", "labels.idx"}}},
                     {"train", train},
                     {"eval", {{"query_count", 10}, {"top_k", 20}, {"seed", 1}}},
                     {"output_dir", "out"}};
    write(j);
  }

  void write(const nlohmann::json& j) {
    config = dir / "config.json";
    std::ofstream(config) << j.dump(2);
  }

  fs::path out(const std::string& file) const { return dir / "out" / file; }
};

int run_binary(const std::string& args) {
  const std::string cmd = std::string(UTH_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, TrainWritesLoadableOutputs) {
  Workspace ws("train");
  const auto r = run_cli({"train", "--config", ws.config.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto params = load_params(ws.out("params.bin"));
  EXPECT_EQ(params.bit_width(), 16);
  std::ifstream log(ws.out("trainlog.csv"));
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) ++lines;
  EXPECT_EQ(lines, 3);
  std::ifstream mf(ws.out("manifest.json"));
  const auto m = nlohmann::json::parse(mf);
  EXPECT_EQ(m["seed"], 7);
  EXPECT_EQ(m["bit_width"], 16);
  EXPECT_EQ(m["config_hash"], file_hash_hex(ws.config));
  EXPECT_TRUE(m.contains("wall_clock_seconds"));
}

TEST(Cli, TrainIsDeterministic) {
  Workspace ws("train_det");
  ASSERT_EQ(run_cli({"train", "--config", ws.config.string()}).code, 0);
  const auto first = test::file_bytes(ws.out("params.bin"));
  ASSERT_EQ(run_cli({"train", "--config", ws.config.string()}).code, 0);
  EXPECT_EQ(test::file_bytes(ws.out("params.bin")), first);
}

TEST(Cli, OverridesApply) {
  Workspace ws("overrides");
  const auto alt = ws.dir / "alt";
  ASSERT_EQ(run_cli({"train", "--config", ws.config.string(), "--bits", "32", "--seed", "9", "--out", alt.string()}).code,
            0);
  EXPECT_EQ(load_params(alt / "params.bin").bit_width(), 32);
  std::ifstream mf(alt / "manifest.json");
  EXPECT_EQ(nlohmann::json::parse(mf)["seed"], 9);
  EXPECT_FALSE(fs::exists(ws.out("params.bin")));
}

TEST(Cli, MissingDatasetIsExitTwoWithoutOutputs) {
  Workspace ws("missing");
  fs::remove(ws.dir / "images.idx");
  const auto r = run_cli({"train", "--config", ws.config.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("images"), std::string::npos);
  EXPECT_FALSE(fs::exists(ws.dir / "out"));
}

TEST(Cli, InvalidConfigsAreExitTwo) {
  Workspace ws("invalid");
  EXPECT_EQ(run_cli({"train", "--config", (ws.dir / "nope.json").string()}).code, 2);
  std::ofstream(ws.dir / "broken.json") << "{ not json";
  EXPECT_EQ(run_cli({"train", "--config", (ws.dir / "broken.json").string()}).code, 2);
  Workspace unknown("invalid_key", {{"learning_rat", 0.1}});
  EXPECT_EQ(run_cli({"train", "--config", unknown.config.string()}).code, 2);
  Workspace bits("invalid_bits", {{"bit_width", 24}});
  EXPECT_EQ(run_cli({"train", "--config", bits.config.string()}).code, 2);
  Workspace phases("invalid_phases", {{"phase1_epochs", 0}, {"phase2_epochs", 0}});
  EXPECT_EQ(run_cli({"train", "--config", phases.config.string()}).code, 2);
  EXPECT_FALSE(fs::exists(phases.dir / "out"));
}

TEST(Cli, DivergenceIsExitThree) {
  Workspace ws("diverge", {{"learning_rate", 1e200}, {"phase1_epochs", 3}});
  const auto r = run_cli({"train", "--config", ws.config.string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_FALSE(fs::exists(ws.out("params.bin")));
}

TEST(Cli, UsageErrorsAreExitTwo) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({"train"}).code, 2);
  EXPECT_EQ(run_cli({"search", "--codes", "x", "--query-id", "1", "-k", "0"}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST(Cli, EncodeMatchesLibraryAndIsDeterministic) {
  Workspace ws("encode");
  ASSERT_EQ(run_cli({"train", "--config", ws.config.string()}).code, 0);
  const auto params = ws.out("params.bin").string();
  ASSERT_EQ(run_cli({"encode", "--params", params, "--config", ws.config.string()}).code, 0);
  const auto first = test::file_bytes(ws.out("codes.uthc"));
  ASSERT_EQ(run_cli({"encode", "--params", params, "--config", ws.config.string()}).code, 0);
  EXPECT_EQ(test::file_bytes(ws.out("codes.uthc")), first);

  const auto config = load_run_config(ws.config);
  const auto want = encode_dataset(load_params(params), load_dataset(config.dataset));
  EXPECT_EQ(load_codes(ws.out("codes.uthc")), want);
}

TEST(Cli, EncodeZeroNetworkGivesZeroCodes) {
  Workspace ws("encode_zero");
  auto p = build_network(default_layer_spec(16), kMnistDims, 0);
  for (auto& l : p.layers) {
    std::fill(l.weights.begin(), l.weights.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
  save_params(p, ws.dir / "zero.bin");
  ASSERT_EQ(run_cli({"encode", "--params", (ws.dir / "zero.bin").string(), "--config", ws.config.string()}).code, 0);
  const auto db = load_codes(ws.out("codes.uthc"));
  ASSERT_EQ(db.size(), 60u);
  for (std::size_t i = 0; i < db.size(); ++i) {
    for (auto w : db.words(i)) EXPECT_EQ(w, 0u);
  }
}

TEST(Cli, EncodeWidthMismatchIsExitTwo) {
  Workspace ws("encode_mismatch");
  save_params(build_network(default_layer_spec(32), kMnistDims, 0), ws.dir / "p32.bin");
  EXPECT_EQ(run_cli({"encode", "--params", (ws.dir / "p32.bin").string(), "--config", ws.config.string()}).code, 2);
  save_params(build_network(default_layer_spec(16), kCifar10Dims, 0), ws.dir / "pc.bin");
  EXPECT_EQ(run_cli({"encode", "--params", (ws.dir / "pc.bin").string(), "--config", ws.config.string()}).code, 2);
}

TEST(Cli, SearchMatchesLibrary) {
  const auto dir = test::temp_dir("cli_search");
  CodeDatabase db(16);
  std::mt19937_64 gen(3);
  for (std::uint64_t i = 0; i < 40; ++i) {
    std::vector<bool> bits(16);
    for (std::size_t b = 0; b < 16; ++b) bits[b] = (gen() & 1) != 0;
    if (i % 10 == 3) bits = db.code(0).to_bits();  // duplicates of entry 0
    db.add(HashCode::from_bits(bits), 100 + i, static_cast<int>(i % 3));
  }
  save_codes(db, dir / "c.uthc");
  const auto path = (dir / "c.uthc").string();

  auto r = run_cli({"search", "--codes", path, "--query-id", "100", "-k", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ostringstream want;
  want << "rank,neighbor_id,distance\n";
  const auto hits = knn_search(db, db.code(0), 5);
  for (std::size_t i = 0; i < hits.size(); ++i) want << i + 1 << ',' << hits[i].id << ',' << hits[i].distance << '\n';
  EXPECT_EQ(r.out, want.str());
  EXPECT_NE(r.out.find("\n1,100,0\n"), std::string::npos);

  r = run_cli({"search", "--codes", path, "--query-id", "100", "-k", "1000"});
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 41);
  EXPECT_EQ(run_cli({"search", "--codes", path, "--query-id", "7"}).code, 2);
  EXPECT_EQ(run_cli({"search", "--codes", (dir / "none").string(), "--query-id", "7"}).code, 2);
}

TEST(Cli, EvalMatchesLibrary) {
  Workspace ws("eval");
  CodeDatabase db(16);
  std::mt19937_64 gen(4);
  for (std::uint64_t i = 0; i < 50; ++i) {
    std::vector<bool> bits(16);
    for (std::size_t b = 0; b < 16; ++b) bits[b] = (gen() & 1) != 0;
    db.add(HashCode::from_bits(bits), i, static_cast<int>(i % 4));
  }
  save_codes(db, ws.dir / "c.uthc");
  const auto codes = (ws.dir / "c.uthc").string();
  ASSERT_EQ(run_cli({"eval", "--codes", codes, "--config", ws.config.string()}).code, 0);
  const auto want = evaluate(db, {10, 20, 1});
  std::ifstream js(ws.out("report.json"));
  EXPECT_EQ(nlohmann::json::parse(js)["map"].get<double>(), want.map);
  EXPECT_EQ(read_pr_csv(ws.out("report.csv")), want.pr_curve);

  const auto csv = test::file_bytes(ws.out("report.csv"));
  const auto json = test::file_bytes(ws.out("report.json"));
  ASSERT_EQ(run_cli({"eval", "--codes", codes, "--config", ws.config.string()}).code, 0);
  EXPECT_EQ(test::file_bytes(ws.out("report.csv")), csv);
  EXPECT_EQ(test::file_bytes(ws.out("report.json")), json);

  ASSERT_EQ(run_cli({"eval", "--codes", codes, "--config", ws.config.string(), "--seed", "2"}).code, 0);
  std::ifstream js2(ws.out("report.json"));
  EXPECT_EQ(nlohmann::json::parse(js2)["seed"], 2);
}

TEST(Cli, EvalValidation) {
  Workspace ws("eval_bad");
  CodeDatabase unlabeled(16);
  for (std::uint64_t i = 0; i < 50; ++i) unlabeled.add(HashCode(16), i);
  save_codes(unlabeled, ws.dir / "u.uthc");
  EXPECT_EQ(run_cli({"eval", "--codes", (ws.dir / "u.uthc").string(), "--config", ws.config.string()}).code, 2);

  CodeDatabase small(16);
  for (std::uint64_t i = 0; i < 10; ++i) small.add(HashCode(16), i, 0);
  save_codes(small, ws.dir / "s.uthc");
  EXPECT_EQ(run_cli({"eval", "--codes", (ws.dir / "s.uthc").string(), "--config", ws.config.string()}).code, 2);
}

TEST(Cli, BaselineLshMatchesLibrary) {
  Workspace ws("lsh");
  ASSERT_EQ(run_cli({"baseline", "--config", ws.config.string(), "--method", "lsh"}).code, 0);
  const auto first = test::file_bytes(ws.out("codes_lsh.uthc"));
  ASSERT_EQ(run_cli({"baseline", "--config", ws.config.string(), "--method", "lsh"}).code, 0);
  EXPECT_EQ(test::file_bytes(ws.out("codes_lsh.uthc")), first);
  const auto config = load_run_config(ws.config);
  EXPECT_EQ(load_codes(ws.out("codes_lsh.uthc")), lsh_encode_dataset(load_dataset(config.dataset), 16, 7));
  EXPECT_EQ(run_cli({"baseline", "--config", ws.config.string(), "--method", "pca"}).code, 2);
}

TEST(Cli, BaselineRotinvWithoutPhaseTwoEqualsPhaseOneTraining) {
  Workspace ws("rotinv", {{"phase2_epochs", 0}, {"phase1_epochs", 2}});
  ASSERT_EQ(run_cli({"baseline", "--config", ws.config.string(), "--method", "rotinv"}).code, 0);
  ASSERT_EQ(run_cli({"train", "--config", ws.config.string()}).code, 0);
  EXPECT_EQ(test::file_bytes(ws.out("params_rotinv.bin")), test::file_bytes(ws.out("params.bin")));
  EXPECT_EQ(test::file_bytes(ws.out("trainlog_rotinv.csv")).size() > 0, true);
}

TEST(Cli, BaselineRotinvDiffersFromUth) {
  Workspace ws("rotinv_full");
  ASSERT_EQ(run_cli({"baseline", "--config", ws.config.string(), "--method", "rotinv"}).code, 0);
  ASSERT_EQ(run_cli({"train", "--config", ws.config.string()}).code, 0);
  EXPECT_NE(test::file_bytes(ws.out("params_rotinv.bin")), test::file_bytes(ws.out("params.bin")));
}

TEST(Cli, CifarConfig) {
  const auto dir = test::temp_dir("cli_cifar");
  write_cifar10(test::random_dataset(30, kCifar10Dims, 2), dir / "b1.bin");
  nlohmann::json j{{"dataset", {{"format", "cifar10"}, {"batches", {"b1.bin"}}}},
                   {"train", {{"bit_width", 16}, {"phase1_epochs", 1}, {"phase2_epochs", 0}, {"batch_size", 10}}}};
  std::ofstream(dir / "c.json") << j.dump();
  ASSERT_EQ(run_cli({"train", "--config", (dir / "c.json").string()}).code, 0);
  EXPECT_EQ(load_params(dir / "out" / "params.bin").input, kCifar10Dims);
}

TEST(CliBinary, ExitCodes) {
  Workspace ws("binary");
  EXPECT_EQ(run_binary("--help"), 0);
  EXPECT_EQ(run_binary(""), 2);
  EXPECT_EQ(run_binary("train --config " + (ws.dir / "missing.json").string()), 2);
  EXPECT_EQ(run_binary("baseline --config " + ws.config.string() + " --method lsh"), 0);
  EXPECT_TRUE(fs::exists(ws.out("codes_lsh.uthc")));
  Workspace bad("binary_diverge", {{"learning_rate", 1e200}, {"phase1_epochs", 3}});
  EXPECT_EQ(run_binary("train --config " + bad.config.string()), 3);
}
