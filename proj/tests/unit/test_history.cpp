#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "../support/oracles.hpp"
#include "nlab/error.hpp"
#include "nlab/history.hpp"

using namespace nlab;

namespace {

TrainingHistory history_of(const std::vector<std::vector<double>>& rows) {
  std::vector<std::int64_t> ids(rows.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int64_t>(i);
  TrainingHistory h(ids);
  for (std::size_t t = 0; t < rows.front().size(); ++t) {
    std::vector<double> col;
    for (const auto& r : rows) col.push_back(r[t]);
    h.append(static_cast<int>(t) + 1, col);
  }
  return h;
}

std::vector<double> random_row(std::mt19937_64& g, std::size_t k) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution exact(0.1);
  std::vector<double> r(k);
  for (double& v : r) v = exact(g) ? 0.5 : u(g);
  return r;
}

}  // namespace

TEST(TrainingHistory, RecordsForwardProbabilities) {
  const Dataset ds = make_gaussian_dataset(20, 3, 2, 1.0, 1);
  const std::vector<std::size_t> dims{3, 4, 2};
  const auto model = init_network(dims, 2);
  TrainingHistory h(ds.ids);
  for (int e = 1; e <= 3; ++e) record_epoch(h, e, model, ds);
  EXPECT_EQ(h.epoch_count(), 3u);
  const Matrix probs = forward(model, ds.features);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(h.at(i, 0), probs(i, static_cast<std::size_t>(ds.labels[i])));
  }
}

TEST(TrainingHistory, UntrainedSymmetricNetIsHalf) {
  const Dataset ds = make_gaussian_dataset(10, 3, 2, 1.0, 1);
  const std::vector<std::size_t> dims{3, 4, 2};
  auto model = init_network(dims, 2);
  for (auto& w : model.weights) std::fill(w.data.begin(), w.data.end(), 0.0);
  TrainingHistory h(ds.ids);
  record_epoch(h, 1, model, ds);
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(h.at(i, 0), 0.5);
}

TEST(TrainingHistory, RejectsOutOfOrderEpochsAndBadValues) {
  TrainingHistory h({0, 1});
  EXPECT_THROW(h.append(2, {0.1, 0.2}), StateError);
  h.append(1, {0.1, 0.2});
  EXPECT_THROW(h.append(1, {0.1, 0.2}), StateError);
  EXPECT_THROW(h.append(2, {0.1}), DimensionError);
  EXPECT_THROW(h.append(2, {0.1, 1.5}), ContractError);
}

TEST(MeanHistory, KnownRowsAndEmptyHistory) {
  const auto h = history_of({{1.0, 1.0, 1.0}, {0.2, 0.4, 0.9}});
  const auto m = mean_history(h);
  EXPECT_EQ(m[0], 1.0);
  EXPECT_NEAR(m[1], 0.5, 1e-15);
  EXPECT_THROW(mean_history(TrainingHistory({0, 1})), StateError);
}

TEST(MeanHistory, InvariantToEpochPermutationUnlikeEvents) {
  const auto a = history_of({{0.3, 0.6, 0.4, 0.7}});
  const auto b = history_of({{0.3, 0.4, 0.6, 0.7}});
  EXPECT_NEAR(mean_history(a)[0], mean_history(b)[0], 1e-15);
  EXPECT_NE(count_events(a.row(0)), count_events(b.row(0)));
}

TEST(RankByMean, DescendingWithIdTies) {
  EXPECT_EQ(rank_by_mean(history_of({{0.9}, {0.1}, {0.5}})), (std::vector<std::size_t>{0, 2, 1}));
  EXPECT_EQ(rank_by_mean(history_of({{0.4}, {0.4}, {0.4}})), (std::vector<std::size_t>{0, 1, 2}));
  const std::vector<double> means{0.2, 0.2, 0.9};
  const std::vector<std::int64_t> ids{7, 3, 5};
  EXPECT_EQ(rank_by_mean(means, ids), (std::vector<std::size_t>{2, 1, 0}));
}

TEST(RankByMean, IsPermutation) {
  std::mt19937_64 g(3);
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 200; ++i) rows.push_back(random_row(g, 4));
  auto order = rank_by_mean(history_of(rows));
  std::sort(order.begin(), order.end());
  for (std::size_t i = 0; i < order.size(); ++i) EXPECT_EQ(order[i], i);
}

TEST(CountEvents, KnownRows) {
  EXPECT_EQ(count_events(std::vector<double>{0.3, 0.6, 0.4, 0.7}), (EventCounts{2, 1}));
  EXPECT_EQ(count_events(std::vector<double>{0.1, 0.2, 0.3, 0.4}), (EventCounts{0, 0}));
  EXPECT_EQ(count_events(std::vector<double>{0.6, 0.4}), (EventCounts{0, 1}));
  EXPECT_EQ(count_events(std::vector<double>{0.5, 0.6, 0.5}), (EventCounts{1, 1}));
  EXPECT_EQ(event_sequence(std::vector<double>{0.3, 0.6, 0.4}), (std::vector<int>{1, -1}));
}

TEST(GradientMagnitudes, KnownRows) {
  EXPECT_EQ(gradient_magnitudes(std::vector<double>{0.4, 0.4, 0.4}), (std::vector<double>{0, 0}));
  const auto g = gradient_magnitudes(std::vector<double>{0.2, 0.7});
  ASSERT_EQ(g.size(), 1u);
  EXPECT_NEAR(g[0], 0.5, 1e-15);
  EXPECT_THROW(gradient_magnitudes(std::vector<double>{0.2}), StateError);
}

TEST(EventStatistics, MatchBruteForceRescan) {
  std::mt19937_64 g(11);
  std::uniform_int_distribution<std::size_t> len(2, 40);
  for (int i = 0; i < 1000; ++i) {
    const auto row = random_row(g, len(g));
    const auto ev = count_events(row);
    const auto want = oracle::scan_events(row);
    EXPECT_EQ(ev.learning, want.learning);
    EXPECT_EQ(ev.forgetting, want.forgetting);
    EXPECT_EQ(gradient_magnitudes(row), oracle::scan_gradients(row));
  }
}

TEST(EventStatistics, CrossingParity) {
  std::mt19937_64 g(12);
  for (int i = 0; i < 500; ++i) {
    const auto row = random_row(g, 15);
    const auto ev = count_events(row);
    const int diff = ev.learning - ev.forgetting;
    const int expected = (row.back() > 0.5 ? 1 : 0) - (row.front() > 0.5 ? 1 : 0);
    EXPECT_EQ(diff, expected);
  }
}

TEST(EventStatistics, SummaryIsPure) {
  std::mt19937_64 g(13);
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 50; ++i) rows.push_back(random_row(g, 10));
  const auto h = history_of(rows);
  const auto a = summarize(h);
  const auto b = summarize(h);
  EXPECT_EQ(a.learning_events, b.learning_events);
  EXPECT_EQ(a.mean_abs_gradient, b.mean_abs_gradient);
}

TEST(GroupDynamics, PoolsMembers) {
  const auto h = history_of({{0.3, 0.6, 0.4, 0.7}, {0.1, 0.2, 0.3, 0.4}, {0.6, 0.4, 0.4, 0.4}});
  const std::vector<std::size_t> members{0, 2};
  const auto d = group_dynamics(h, members, 10);
  EXPECT_EQ(d.samples, 2u);
  EXPECT_DOUBLE_EQ(d.learning_per_sample, 1.0);
  EXPECT_DOUBLE_EQ(d.forgetting_per_sample, 1.0);
  EXPECT_DOUBLE_EQ(d.events_per_sample, 2.0);
  EXPECT_EQ(d.learning_by_transition, (std::vector<double>{0.5, 0.0, 0.5}));
  EXPECT_EQ(d.forgetting_by_transition, (std::vector<double>{0.5, 0.5, 0.0}));
  double total = 0.0;
  for (double v : d.gradient_histogram) total += v;
  EXPECT_NEAR(total, 1.0, 1e-12);
}
