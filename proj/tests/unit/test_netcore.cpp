#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "../support/oracles.hpp"
#include "nlab/error.hpp"
#include "nlab/netcore.hpp"

using namespace nlab;

namespace {

Matrix random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.data) v = n(g);
  return m;
}

std::vector<int> random_labels(std::size_t n, int classes, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_int_distribution<int> d(0, classes - 1);
  std::vector<int> y(n);
  for (int& v : y) v = d(g);
  return y;
}

}  // namespace

TEST(InitNetwork, SameSeedGivesIdenticalParameters) {
  const std::vector<std::size_t> dims{2, 4, 2};
  EXPECT_EQ(init_network(dims, 7), init_network(dims, 7));
}

TEST(InitNetwork, DifferentSeedsDiffer) {
  const std::vector<std::size_t> dims{2, 4, 2};
  EXPECT_NE(init_network(dims, 7), init_network(dims, 8));
}

TEST(InitNetwork, SingleLayerIsConfigError) {
  const std::vector<std::size_t> dims{5};
  EXPECT_THROW(init_network(dims, 1), ConfigError);
  const std::vector<std::size_t> zero{3, 0, 2};
  EXPECT_THROW(init_network(zero, 1), ConfigError);
}

TEST(InitNetwork, ShapesAndZeroBiases) {
  const std::vector<std::size_t> dims{3, 5, 4, 2};
  const auto p = init_network(dims, 3);
  ASSERT_EQ(p.layer_count(), 3u);
  EXPECT_EQ(p.weights[0].rows, 5u);
  EXPECT_EQ(p.weights[0].cols, 3u);
  EXPECT_EQ(p.parameter_count(), 3u * 5 + 5 + 5 * 4 + 4 + 4 * 2 + 2);
  for (const auto& b : p.biases) {
    for (double v : b) EXPECT_EQ(v, 0.0);
  }
}

TEST(Forward, RowsSumToOneAndShapeIsPreserved) {
  const std::vector<std::size_t> dims{4, 6, 3};
  const auto p = init_network(dims, 11);
  const Matrix x = random_batch(17, 4, 5);
  const Matrix probs = forward(p, x);
  ASSERT_EQ(probs.rows, 17u);
  ASSERT_EQ(probs.cols, 3u);
  for (std::size_t b = 0; b < probs.rows; ++b) {
    double s = 0.0;
    for (double v : probs.row(b)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Forward, ZeroWeightsGiveUniformBinaryOutput) {
  const std::vector<std::size_t> dims{3, 4, 2};
  auto p = init_network(dims, 1);
  for (auto& w : p.weights) std::fill(w.data.begin(), w.data.end(), 0.0);
  const Matrix probs = forward(p, random_batch(5, 3, 2));
  for (double v : probs.data) EXPECT_EQ(v, 0.5);
}

TEST(Forward, MatchesLoopOracle) {
  for (auto act : {Activation::relu, Activation::tanh}) {
    const std::vector<std::size_t> dims{5, 7, 4, 3};
    const auto p = init_network(dims, 21, act);
    const Matrix x = random_batch(9, 5, 8);
    const Matrix got = forward(p, x);
    const Matrix want = oracle::forward(p, x);
    for (std::size_t k = 0; k < got.data.size(); ++k) EXPECT_NEAR(got.data[k], want.data[k], 1e-14);
  }
}

TEST(FocalLoss, KnownValues) {
  EXPECT_EQ(focal_loss(1.0, 2.0), 0.0);
  EXPECT_NEAR(focal_loss(0.5, 0.0), oracle::kCrossEntropyHalf, 1e-15);
  EXPECT_NEAR(focal_loss(0.5, 2.0), oracle::kFocalHalfGamma2, 1e-15);
  EXPECT_NEAR(oracle::focal(0.5, 2.0), oracle::kFocalHalfGamma2, 1e-15);
}

TEST(FocalLoss, GammaZeroEqualsCrossEntropyOnGrid) {
  for (int i = 1; i <= 1000; ++i) {
    const double p = static_cast<double>(i) / 1000.0;
    EXPECT_NEAR(focal_loss(p, 0.0), cross_entropy_loss(p), 1e-12) << p;
  }
}

TEST(FocalLoss, ClampsZeroProbability) {
  EXPECT_TRUE(std::isfinite(focal_loss(0.0, 2.0)));
  EXPECT_NEAR(cross_entropy_loss(0.0), -std::log(kMinProbability), 1e-9);
}

TEST(FocalLoss, WeightDecreasesWithConfidence) {
  // (1 - p)^gamma strictly decreases in p for gamma > 0, so low-confidence
  // samples carry more weight than confident ones.
  for (double gamma : {0.5, 1.0, 2.0, 5.0}) {
    double prev = 2.0;
    for (int i = 0; i < 100; ++i) {
      const double p = 0.005 + 0.0099 * i;
      const double w = std::pow(1.0 - p, gamma);
      EXPECT_LT(w, prev);
      prev = w;
    }
  }
}

class GradientCheck : public ::testing::TestWithParam<int> {};

TEST_P(GradientCheck, AnalyticMatchesCentralDifferences) {
  const int net = GetParam();
  std::mt19937_64 g(static_cast<std::uint64_t>(net) + 100);
  std::uniform_int_distribution<std::size_t> width(2, 5);
  std::vector<std::size_t> dims{width(g), width(g), width(g)};
  if (net % 2 == 0) dims.insert(dims.begin() + 1, width(g));
  const auto p = init_network(dims, static_cast<std::uint64_t>(net), Activation::tanh);
  const Matrix x = random_batch(5, dims.front(), static_cast<std::uint64_t>(net) * 3);
  const auto y = random_labels(5, static_cast<int>(dims.back()), static_cast<std::uint64_t>(net));
  for (const LossConfig& loss : {LossConfig::cross_entropy(), LossConfig::focal(0.0),
                                 LossConfig::focal(1.0), LossConfig::focal(2.0)}) {
    const auto lg = loss_and_gradient(p, x, y, loss);
    EXPECT_NEAR(lg.loss, oracle::mean_loss(p, x, y, loss), 1e-12);
    EXPECT_LT(oracle::max_gradient_error(p, x, y, loss, lg.grad), 1e-4)
        << "net " << net << " gamma " << loss.gamma;
  }
}

INSTANTIATE_TEST_SUITE_P(RandomNetworks, GradientCheck, ::testing::Range(0, 20));

TEST(Gradient, ReluNetworkOnTwoThreeTwo) {
  const std::vector<std::size_t> dims{2, 3, 2};
  const auto p = init_network(dims, 5);
  const Matrix x = random_batch(5, 2, 6);
  const std::vector<int> y{0, 1, 1, 0, 1};
  const auto lg = loss_and_gradient(p, x, y, LossConfig::cross_entropy());
  EXPECT_LT(oracle::max_gradient_error(p, x, y, LossConfig::cross_entropy(), lg.grad), 1e-4);
}

TEST(Gradient, SampleWeightsScaleContributions) {
  const std::vector<std::size_t> dims{3, 4, 2};
  const auto p = init_network(dims, 9);
  const Matrix x = random_batch(4, 3, 1);
  const std::vector<int> y{0, 1, 0, 1};
  const std::vector<double> ones(4, 1.0);
  const std::vector<double> twos(4, 2.0);
  const auto a = loss_and_gradient(p, x, y, LossConfig::cross_entropy(), ones);
  const auto b = loss_and_gradient(p, x, y, LossConfig::cross_entropy(), twos);
  const auto c = loss_and_gradient(p, x, y, LossConfig::cross_entropy());
  EXPECT_DOUBLE_EQ(b.loss, 2.0 * a.loss);
  EXPECT_EQ(a.loss, c.loss);
  EXPECT_EQ(a.grad.weights[0], c.grad.weights[0]);
}

TEST(Gradient, FocalGammaZeroIsBitIdenticalToCrossEntropy) {
  const std::vector<std::size_t> dims{4, 5, 3};
  const auto p = init_network(dims, 2);
  const Matrix x = random_batch(8, 4, 3);
  const auto y = random_labels(8, 3, 4);
  const auto ce = loss_and_gradient(p, x, y, LossConfig::cross_entropy());
  const auto fl = loss_and_gradient(p, x, y, LossConfig::focal(0.0));
  EXPECT_EQ(ce.loss, fl.loss);
  for (std::size_t l = 0; l < ce.grad.weights.size(); ++l) {
    EXPECT_EQ(ce.grad.weights[l], fl.grad.weights[l]);
    EXPECT_EQ(ce.grad.biases[l], fl.grad.biases[l]);
  }
}

TEST(TrainStep, ZeroLearningRateLeavesParameters) {
  const std::vector<std::size_t> dims{3, 4, 2};
  auto p = init_network(dims, 4);
  const auto before = p;
  auto opt = OptimizerState::for_network(p, 0.0, 0.9);
  const std::vector<int> y{0, 1, 1};
  train_step(p, opt, random_batch(3, 3, 7), y, LossConfig::cross_entropy());
  EXPECT_EQ(p, before);
}

TEST(TrainStep, DeterministicAndReducesLoss) {
  const std::vector<std::size_t> dims{3, 8, 2};
  const Matrix x = random_batch(32, 3, 7);
  std::vector<int> y(32);
  for (std::size_t b = 0; b < 32; ++b) y[b] = x(b, 0) > 0.0 ? 1 : 0;
  auto run = [&] {
    auto p = init_network(dims, 4);
    auto opt = OptimizerState::for_network(p, 0.1, 0.9);
    double first = 0.0;
    for (int i = 0; i < 50; ++i) {
      const auto r = train_step(p, opt, x, y, LossConfig::cross_entropy());
      if (i == 0) first = r.loss;
    }
    return std::pair{p, first};
  };
  const auto [a, first] = run();
  const auto [b, unused] = run();
  EXPECT_EQ(a, b);
  EXPECT_LT(loss_and_gradient(a, x, y, LossConfig::cross_entropy()).loss, first);
  EXPECT_TRUE(a.all_finite());
}

TEST(TrainStep, MomentumUpdateRule) {
  const std::vector<std::size_t> dims{2, 2};
  auto p = init_network(dims, 1);
  const Matrix x = random_batch(3, 2, 2);
  const std::vector<int> y{0, 1, 0};
  const auto g1 = loss_and_gradient(p, x, y, LossConfig::cross_entropy()).grad;
  auto opt = OptimizerState::for_network(p, 0.1, 0.5);
  const auto start = p;
  train_step(p, opt, x, y, LossConfig::cross_entropy());
  for (std::size_t k = 0; k < p.weights[0].data.size(); ++k) {
    EXPECT_DOUBLE_EQ(p.weights[0].data[k], start.weights[0].data[k] - 0.1 * g1.weights[0].data[k]);
  }
  const auto mid = p;
  const auto g2 = loss_and_gradient(p, x, y, LossConfig::cross_entropy()).grad;
  train_step(p, opt, x, y, LossConfig::cross_entropy());
  for (std::size_t k = 0; k < p.weights[0].data.size(); ++k) {
    const double v = 0.5 * (-0.1 * g1.weights[0].data[k]) - 0.1 * g2.weights[0].data[k];
    EXPECT_DOUBLE_EQ(p.weights[0].data[k], mid.weights[0].data[k] + v);
  }
}

TEST(TrainStep, EmptyBatchIsNoOp) {
  const std::vector<std::size_t> dims{2, 3, 2};
  auto p = init_network(dims, 1);
  const auto before = p;
  auto opt = OptimizerState::for_network(p, 0.1, 0.9);
  const auto r = train_step(p, opt, Matrix(0, 2), std::vector<int>{}, LossConfig::cross_entropy());
  EXPECT_TRUE(r.empty_batch);
  EXPECT_EQ(p, before);
}

TEST(TrainStep, RejectsMismatchedShapes) {
  const std::vector<std::size_t> dims{2, 3, 2};
  auto p = init_network(dims, 1);
  auto opt = OptimizerState::for_network(p, 0.1, 0.9);
  const std::vector<int> y{0, 1};
  EXPECT_THROW(train_step(p, opt, random_batch(2, 3, 1), y, LossConfig::cross_entropy()),
               DimensionError);
  const std::vector<int> bad{0, 5};
  EXPECT_THROW(train_step(p, opt, random_batch(2, 2, 1), bad, LossConfig::cross_entropy()),
               ContractError);
}

TEST(EmaUpdate, MomentumZeroCopiesStudent) {
  const std::vector<std::size_t> dims{3, 4, 2};
  const auto t2 = init_network(dims, 1);
  const auto t1 = init_network(dims, 2);
  EXPECT_EQ(ema_update(t2, t1, 0.0), t1);
}

TEST(EmaUpdate, FixedPoint) {
  const std::vector<std::size_t> dims{3, 4, 2};
  const auto t = init_network(dims, 1);
  EXPECT_EQ(ema_update(t, t, 0.9), t);
}

TEST(EmaUpdate, ScalarCase) {
  const std::vector<std::size_t> dims{1, 1};
  auto t2 = init_network(dims, 1);
  auto t1 = init_network(dims, 2);
  t2.weights[0].data[0] = 1.0;
  t1.weights[0].data[0] = 0.0;
  EXPECT_DOUBLE_EQ(ema_update(t2, t1, 0.9).weights[0].data[0], 0.9);
}

TEST(EmaUpdate, RejectsMismatchAndBadMomentum) {
  const std::vector<std::size_t> a{3, 4, 2};
  const std::vector<std::size_t> b{3, 5, 2};
  EXPECT_THROW(ema_update(init_network(a, 1), init_network(b, 1), 0.5), DimensionError);
  EXPECT_THROW(ema_update(init_network(a, 1), init_network(a, 2), 1.0), ConfigError);
  EXPECT_THROW(ema_update(init_network(a, 1), init_network(a, 2), -0.1), ConfigError);
}

TEST(LrSchedule, ConstantThenLinearDecay) {
  EXPECT_EQ(lr_schedule(10, 30, 0.001, 15), 0.001);
  EXPECT_EQ(lr_schedule(15, 30, 0.001, 15), 0.001);
  EXPECT_LT(lr_schedule(16, 30, 0.001, 15), 0.001);
  EXPECT_NEAR(lr_schedule(30, 30, 0.001, 15), oracle::kLrAtLastEpoch, 1e-18);
  for (int e = 1; e <= 30; ++e) {
    EXPECT_NEAR(lr_schedule(e, 30, 0.001, 15), oracle::lr_by_walk(e, 30, 0.001, 15), 1e-15);
  }
}

TEST(Argmax, TiesGoToLowestClass) {
  Matrix p(3, 3);
  p.data = {0.5, 0.5, 0.0, 0.1, 0.9, 0.0, 0.2, 0.4, 0.4};
  EXPECT_EQ(argmax_rows(p), (std::vector<int>{0, 1, 1}));
}

TEST(BatchSchedule, EpochsCoverAllRowsOnce) {
  BatchSchedule s(103, 10, 5);
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::vector<int> seen(103, 0);
    const auto batches = s.next_epoch();
    EXPECT_EQ(batches.size(), 11u);
    for (const auto& b : batches) {
      for (std::size_t i : b) ++seen[i];
    }
    for (int v : seen) EXPECT_EQ(v, 1);
  }
}

TEST(Checkpoint, RoundTripAndRejectsCorruption) {
  const std::vector<std::size_t> dims{3, 4, 2};
  const auto p = init_network(dims, 12, Activation::tanh);
  const auto path = std::filesystem::temp_directory_path() / "nlab_ckpt_test.ckpt";
  save_checkpoint(p, path);
  EXPECT_EQ(load_checkpoint(path), p);

  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 5);
  EXPECT_THROW(load_checkpoint(path), ParseError);

  {
    std::ofstream out(path, std::ios::binary);
    out << "XXXX";
  }
  EXPECT_THROW(load_checkpoint(path), ParseError);
  std::filesystem::remove(path);
}
