#include <gtest/gtest.h>

#include <fstream>

#include "test_support.hpp"
#include "uth/error.hpp"
#include "uth/parallel.hpp"
#include "uth/training.hpp"

using namespace uth;

namespace {

const Dataset& mnist() { return test::mnist5k(); }

Dataset mnist200() {
  // Every 25th image: 200 images, 20 per class.
  std::vector<std::size_t> pos;
  for (std::size_t i = 0; i < 5000; i += 25) pos.push_back(i);
  return mnist().select(pos);
}

TrainConfig small_config() {
  TrainConfig c;
  c.bit_width = 16;
  c.phase1_epochs = 2;
  c.phase2_epochs = 2;
  c.batch_size = 8;
  c.triplets_per_epoch = 24;
  c.seed = 3;
  return c;
}

NetworkParams net16(std::uint64_t seed = 1) { return build_network(default_layer_spec(16), kMnistDims, seed); }

double smoothed(const TrainLog& log, std::size_t i) {
  return (log[i - 1].report.l_total + log[i].report.l_total + log[i + 1].report.l_total) / 3.0;
}

}  // namespace

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.phase1_epochs = c.phase2_epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  for (int m : {0, 8, 24, 512}) {
    c.bit_width = m;
    EXPECT_THROW(c.validate(), ConfigError) << m;
  }
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.triplets_per_epoch = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.weights = {0, 0, 0};
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.rotations.degrees = {0.0};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, BothPhasesEmptyRejected) {
  auto c = small_config();
  c.phase1_epochs = c.phase2_epochs = 0;
  EXPECT_THROW(train(net16(), mnist200(), c), ConfigError);
}

TEST(Train, EmptyPhasesLeaveParamsUnchanged) {
  const auto ds = test::random_dataset(20, kMnistDims, 1);
  auto c = small_config();
  c.phase1_epochs = 0;
  const auto p0 = net16();
  auto r1 = train_phase1(p0, ds, c);
  EXPECT_EQ(r1.params, p0);
  EXPECT_TRUE(r1.log.empty());
  c.phase1_epochs = 2;
  c.phase2_epochs = 0;
  auto r2 = train_phase2(p0, ds, c);
  EXPECT_EQ(r2.params, p0);
  EXPECT_TRUE(r2.log.empty());
}

TEST(Train, ZeroLearningRateLeavesParamsUnchanged) {
  const auto ds = test::random_dataset(20, kMnistDims, 2);
  auto c = small_config();
  c.learning_rate = 0.0;
  const auto p0 = net16();
  const auto r = train(p0, ds, c);
  EXPECT_EQ(r.params, p0);
  EXPECT_EQ(r.log.size(), 4u);
}

TEST(Train, WidthMismatchRejected) {
  auto c = small_config();
  c.bit_width = 32;
  EXPECT_THROW(train(net16(), mnist200(), c), ConfigError);
}

TEST(Train, InsufficientData) {
  auto c = small_config();
  const auto one = test::random_dataset(1, kMnistDims, 3);
  EXPECT_THROW(train_phase2(net16(), one, c), InsufficientDataError);
  EXPECT_THROW(train_phase1(net16(), one.head(0), c), InsufficientDataError);
  c.phase2_epochs = 0;
  EXPECT_NO_THROW(train(net16(), one, c));
}

TEST(Train, PhaseOneOnlyEqualsTrainPhaseOne) {
  auto c = small_config();
  c.phase2_epochs = 0;
  const auto ds = mnist200();
  const auto a = train(net16(), ds, c);
  const auto b = train_phase1(net16(), ds, c);
  EXPECT_EQ(a.params, b.params);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(a.log[i].report.l_total, b.log[i].report.l_total);
}

TEST(Train, LogStructure) {
  auto c = small_config();
  c.phase1_epochs = 3;
  c.phase2_epochs = 2;
  std::vector<int> seen;
  const auto r = train(net16(), mnist200(), c, [&](const TrainLogEntry& e) { seen.push_back(e.epoch); });
  ASSERT_EQ(r.log.size(), 5u);
  EXPECT_EQ(seen, (std::vector<int>{0, 1, 2, 3, 4}));
  for (std::size_t i = 0; i < r.log.size(); ++i) {
    const auto& e = r.log[i];
    EXPECT_EQ(e.epoch, static_cast<int>(i));
    EXPECT_EQ(e.phase, i < 3 ? 1 : 2);
    EXPECT_GE(e.seconds, 0.0);
    const auto& rep = e.report;
    if (e.phase == 1) {
      EXPECT_EQ(rep.l_triplet, 0.0);
    }
    EXPECT_NEAR(rep.l_total, rep.l_triplet + rep.l_quant + rep.l_entropy, 1e-12);
  }
}

TEST(Train, DeterministicGivenSeed) {
  const auto c = small_config();
  const auto ds = mnist200();
  const auto a = train(net16(), ds, c);
  const auto b = train(net16(), ds, c);
  EXPECT_EQ(a.params, b.params);
  auto c2 = c;
  c2.seed = 4;
  EXPECT_NE(train(net16(), ds, c2).params, a.params);
}

TEST(Train, IndependentOfThreadCount) {
  const auto c = small_config();
  const auto ds = mnist200();
  const int saved = max_threads();
  set_threads(1);
  const auto a = train(net16(), ds, c);
  set_threads(3);
  const auto b = train(net16(), ds, c);
  set_threads(saved);
  EXPECT_EQ(a.params, b.params);
}

TEST(Train, RotationInvarianceAblationRuns) {
  auto c = small_config();
  c.pair_term = PairTerm::rotation_invariance;
  const auto ds = mnist200();
  const auto a = train(net16(), ds, c);
  EXPECT_EQ(a.params, train(net16(), ds, c).params);
  EXPECT_NE(a.params, train(net16(), ds, small_config()).params);
}

TEST(Train, DivergenceIsNumericError) {
  auto c = small_config();
  c.learning_rate = 1e200;
  c.phase1_epochs = 3;
  EXPECT_THROW(train(net16(), mnist200(), c), NumericError);
}

TEST(Train, PhaseOneReducesRegulariser) {
  auto c = small_config();
  c.phase1_epochs = 10;
  c.phase2_epochs = 0;
  c.batch_size = 32;
  const auto r = train_phase1(net16(), mnist200(), c);
  ASSERT_EQ(r.log.size(), 10u);
  EXPECT_LT(r.log.back().report.l_total, r.log.front().report.l_total);
}

TEST(Train, PhaseTwoReducesSmoothedTotal) {
  auto c = small_config();
  c.phase1_epochs = 10;
  c.phase2_epochs = 10;
  c.batch_size = 32;
  c.triplets_per_epoch = 200;
  // 200 images at lr 0.01 drive every output unit to zero within a few
  // epochs, after which the loss is a constant.
  c.learning_rate = 0.003;
  const auto r = train(net16(), mnist200(), c);
  ASSERT_EQ(r.log.size(), 20u);
  EXPECT_LT(smoothed(r.log, 18), smoothed(r.log, 11));
}

TEST(Train, DeskScaleRunEmitsOneReportPerEpoch) {
  auto c = small_config();
  c.phase1_epochs = 1;
  c.phase2_epochs = 1;
  c.batch_size = 32;
  c.triplets_per_epoch = 500;
  const auto r = train(net16(), mnist(), c);
  ASSERT_EQ(r.log.size(), 2u);
  for (const auto& e : r.log) EXPECT_TRUE(std::isfinite(e.report.l_total));
}

TEST(TrainLogCsv, Format) {
  TrainLog log{{0, 1, {0.5, 0.0, 0.25, 0.25, 0.125}, 1.5}, {1, 2, {1.0 / 3, 0.1, 0.2, 0.3, 0.4}, 2.0}};
  const auto dir = test::temp_dir("trainlog");
  write_trainlog_csv(log, dir / "t.csv");
  std::ifstream in(dir / "t.csv");
  std::string header, row1, row2, extra;
  std::getline(in, header);
  std::getline(in, row1);
  std::getline(in, row2);
  EXPECT_FALSE(std::getline(in, extra));
  EXPECT_EQ(header, "epoch,phase,l_total,l_triplet,l_quant,l_entropy,l_entropy_binary,seconds");
  EXPECT_EQ(row1, "0,1,0.5,0,0.25,0.25,0.125,1.500000");
  double total = 0;
  ASSERT_EQ(std::sscanf(row2.c_str(), "1,2,%lf", &total), 1);
  EXPECT_EQ(total, 1.0 / 3);
  EXPECT_THROW(write_trainlog_csv(log, "/nonexistent/dir/t.csv"), IoError);
}
