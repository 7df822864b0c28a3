#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "nlab/error.hpp"
#include "nlab/nshe.hpp"

using namespace nlab;

namespace {

Dataset noisy(std::size_t per_class, double rho, std::uint64_t seed) {
  return inject_noise(make_gaussian_dataset(per_class, 10, 2, 2.0, seed),
                      {NoiseKind::symmetric, rho, seed});
}

NsheConfig quick(double tau, double m, double gamma) {
  NsheConfig cfg;
  cfg.tau = tau;
  cfg.m = m;
  cfg.gamma = gamma;
  cfg.train.epochs = 6;
  cfg.train.decay_start = 3;
  cfg.seed = 9;
  return cfg;
}

double max_abs_diff(const NetworkParameters& a, const NetworkParameters& b) {
  double d = 0.0;
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    for (std::size_t k = 0; k < a.weights[l].data.size(); ++k) {
      d = std::max(d, std::abs(a.weights[l].data[k] - b.weights[l].data[k]));
    }
    for (std::size_t k = 0; k < a.biases[l].size(); ++k) {
      d = std::max(d, std::abs(a.biases[l][k] - b.biases[l][k]));
    }
  }
  return d;
}

}  // namespace

TEST(DiscardRatio, Rule) {
  EXPECT_NEAR(discard_ratio(0.2), 0.02, 1e-15);
  EXPECT_EQ(discard_ratio(0.0), 0.0);
  EXPECT_NEAR(discard_ratio(0.4), 0.04, 1e-15);
}

TEST(SelectDiscardSet, CountsAndOrdering) {
  const Dataset ds = noisy(50, 0.2, 1);
  const std::vector<std::size_t> dims{10, 4, 2};
  const auto teacher = init_network(dims, 3);
  EXPECT_TRUE(select_discard_set(teacher, ds, 0.0).empty());
  const auto drop = select_discard_set(teacher, ds, 0.03);
  ASSERT_EQ(drop.size(), 3u);
  const auto p = labeled_class_probabilities(teacher, ds.features, ds.labels);
  const std::set<std::size_t> dropped(drop.begin(), drop.end());
  double worst_kept = 1.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!dropped.count(i)) worst_kept = std::min(worst_kept, p[i]);
  }
  for (std::size_t i : drop) EXPECT_LE(p[i], worst_kept);
}

TEST(RunNshe, MomentumZeroTeacherTracksStudent) {
  const Dataset ds = noisy(60, 0.2, 2);
  std::size_t iterations = 0;
  NsheHooks hooks;
  hooks.on_iteration = [&](const NetworkParameters& s, const NetworkParameters&,
                           const NetworkParameters& after) {
    EXPECT_EQ(after, s);
    ++iterations;
  };
  run_nshe(ds, quick(0.02, 0.0, 2.0), nullptr, hooks);
  EXPECT_GT(iterations, 0u);
}

TEST(RunNshe, TeacherStepIsContraction) {
  const Dataset ds = noisy(60, 0.2, 3);
  const double m = 0.9;
  NsheHooks hooks;
  hooks.on_iteration = [&](const NetworkParameters& s, const NetworkParameters& before,
                           const NetworkParameters& after) {
    EXPECT_LE(max_abs_diff(after, before), (1.0 - m) * max_abs_diff(s, before) * (1 + 1e-12) + 1e-15);
    for (std::size_t l = 0; l < s.weights.size(); ++l) {
      for (std::size_t k = 0; k < s.weights[l].data.size(); ++k) {
        const double want = m * std::abs(before.weights[l].data[k] - s.weights[l].data[k]);
        EXPECT_NEAR(std::abs(after.weights[l].data[k] - s.weights[l].data[k]), want, 1e-12);
      }
    }
  };
  run_nshe(ds, quick(0.02, m, 2.0), nullptr, hooks);
}

TEST(RunNshe, DiscardedSamplesNeverReachTheStudent) {
  const Dataset ds = noisy(100, 0.3, 4);
  std::set<std::size_t> current;
  std::vector<std::set<std::size_t>> per_epoch;
  NsheHooks hooks;
  hooks.on_discard = [&](int, std::span<const std::size_t> d) {
    current = std::set<std::size_t>(d.begin(), d.end());
    per_epoch.push_back(current);
  };
  hooks.on_batch = [&](int, std::span<const std::size_t> rows) {
    for (std::size_t r : rows) EXPECT_EQ(current.count(r), 0u);
  };
  run_nshe(ds, quick(0.05, 0.9, 2.0), nullptr, hooks);
  ASSERT_EQ(per_epoch.size(), 6u);
  for (const auto& s : per_epoch) EXPECT_EQ(s.size(), 10u);
  bool changed = false;
  for (std::size_t e = 1; e < per_epoch.size(); ++e) changed |= per_epoch[e] != per_epoch[0];
  EXPECT_TRUE(changed);
}

TEST(RunNshe, DegenerateSettingsMatchPlainTraining) {
  const Dataset ds = noisy(80, 0.2, 5);
  const NsheConfig cfg = quick(0.0, 0.0, 0.0);
  std::vector<NetworkParameters> nshe_traj;
  std::vector<NetworkParameters> plain_traj;
  NsheHooks hooks;
  hooks.on_epoch = [&](int, const NetworkParameters& p) { nshe_traj.push_back(p); };
  const auto r = run_nshe(ds, cfg, nullptr, hooks);
  const auto plain = train_plain(ds, cfg, [&](int, const NetworkParameters& p) { plain_traj.push_back(p); });
  ASSERT_EQ(nshe_traj.size(), plain_traj.size());
  for (std::size_t e = 0; e < nshe_traj.size(); ++e) EXPECT_EQ(nshe_traj[e], plain_traj[e]) << e;
  EXPECT_EQ(r.teacher, plain);
}

TEST(RunNshe, RejectsBadSettingsAndStarvation) {
  const Dataset ds = noisy(20, 0.2, 6);
  EXPECT_THROW(run_nshe(ds, quick(1.0, 0.9, 2.0)), ConfigError);
  EXPECT_THROW(run_nshe(ds, quick(0.1, 1.0, 2.0)), ConfigError);
  EXPECT_THROW(run_nshe(ds, quick(0.1, 0.9, -1.0)), ConfigError);
  const Dataset one = ds.subset(std::vector<std::size_t>{0});
  EXPECT_NO_THROW(run_nshe(one, quick(0.5, 0.9, 2.0)));  // floor(0.5) = 0 discarded
  const Dataset two = ds.subset(std::vector<std::size_t>{0, 1});
  NsheConfig cfg = quick(0.99, 0.9, 2.0);
  cfg.train.batch_size = 1;
  EXPECT_NO_THROW(run_nshe(two, cfg));  // one of two discarded, the other still trains
}

TEST(RunNshe, LogsTestAccuracy) {
  const Dataset ds = noisy(80, 0.2, 7);
  const Dataset test = make_gaussian_dataset(50, 10, 2, 2.0, 70);
  const auto r = run_nshe(ds, quick(0.02, 0.9, 2.0), &test);
  ASSERT_EQ(r.log.size(), 6u);
  EXPECT_TRUE(r.log.back().teacher_test_accuracy.has_value());
  EXPECT_EQ(r.log.back().discarded, 3u);
}
