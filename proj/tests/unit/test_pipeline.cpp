#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nlab/error.hpp"
#include "nlab/pipeline.hpp"

using namespace nlab;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.out = "";
  cfg.n_per_class = 120;
  cfg.test_per_class = 40;
  cfg.dims = 8;
  cfg.history_epochs = 8;
  cfg.decay_start = 4;
  cfg.classifier_epochs = 40;
  cfg.correction_epochs = 3;
  cfg.nshe_epochs = 15;  // the m = 0.99 teacher lags badly over fewer steps
  return cfg;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nlab_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(Pipeline, RepeatedRunsWriteIdenticalOutputs) {
  ExperimentConfig a = small_config();
  ExperimentConfig b = small_config();
  a.out = scratch("det_a").string();
  b.out = scratch("det_b").string();
  run_pipeline(a);
  run_pipeline(b);
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(a.out)) {
    const std::string name = entry.path().filename().string();
    if (name == "timing.txt" || name == "config.resolved") continue;
    EXPECT_EQ(slurp(entry.path()), slurp(fs::path(b.out) / name)) << name;
    ++compared;
  }
  EXPECT_GE(compared, 10u);
  fs::remove_all(a.out);
  fs::remove_all(b.out);
}

TEST(Pipeline, ReportAccountsForEverySample) {
  const RunReport r = run_pipeline(small_config());
  EXPECT_EQ(r.ablation, "full");
  EXPECT_EQ(r.train_size, 240u);
  EXPECT_EQ(r.test_size, 80u);
  EXPECT_EQ(r.easy + r.hard + r.noisy, r.train_size);
  EXPECT_EQ(r.retained + r.dropped, r.train_size);
  EXPECT_NEAR(r.tau_e, 0.55, 1e-12);
  EXPECT_NEAR(r.tau, 0.03, 1e-15);
  ASSERT_TRUE(r.injected_noise_ratio.has_value());
  EXPECT_NEAR(*r.injected_noise_ratio, 0.3, 1e-12);
  EXPECT_GT(r.test.accuracy, 0.5);
}

TEST(Pipeline, AblationWithEverythingOffTrainsOnRawLabels) {
  ExperimentConfig cfg = small_config();
  cfg.disable_correction = true;
  cfg.disable_nshe = true;
  const RunReport r = run_pipeline(cfg);
  EXPECT_EQ(r.ablation, "no_whole");
  EXPECT_EQ(r.retained, r.train_size);
  EXPECT_EQ(r.dropped, 0u);
  ASSERT_TRUE(r.final_noise_ratio.has_value());
  EXPECT_NEAR(*r.final_noise_ratio, 0.3, 1e-12);
}

TEST(Pipeline, EstimatedRhoIsReported) {
  ExperimentConfig cfg = small_config();
  cfg.rho_mode = ExperimentConfig::RhoMode::estimate;
  const RunReport r = run_pipeline(cfg);
  ASSERT_TRUE(r.estimated_rho.has_value());
  EXPECT_EQ(r.rho_used, *r.estimated_rho);
}

TEST(Pipeline, PhaseFailureNamesThePhase) {
  ExperimentConfig cfg = small_config();
  cfg.data_path = "/nonexistent/train.csv";
  try {
    run_pipeline(cfg);
    FAIL() << "expected PhaseError";
  } catch (const PhaseError& e) {
    EXPECT_EQ(e.phase(), "data");
  }
}

TEST(Sweep, OneRowPerValueAndCsvHeader) {
  ExperimentConfig cfg = small_config();
  cfg.out = scratch("sweep").string();
  const std::vector<double> ks{4, 6, 8, 10};
  const auto rows = run_sweep(cfg, "k", ks, 1, 2);
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(rows[i].value, ks[i]);
  const fs::path csv = fs::path(cfg.out) / "sweep.csv";
  save_sweep_csv(rows, csv);
  const std::string text = slurp(csv);
  EXPECT_EQ(text.substr(0, text.find('\n')), "value,seed,test_acc,final_noise_ratio");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
  fs::remove_all(cfg.out);
}

TEST(Sweep, ParallelMatchesSerial) {
  const std::vector<double> taus{0.0, 0.05};
  const auto serial = run_sweep(small_config(), "tau", taus, 2, 1);
  const auto parallel = run_sweep(small_config(), "tau", taus, 2, 4);
  ASSERT_EQ(serial.size(), parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(serial[i].seed, parallel[i].seed);
    EXPECT_EQ(serial[i].test_accuracy, parallel[i].test_accuracy);
  }
}

TEST(Sweep, RejectsEmptyValuesAndUnknownAxes) {
  EXPECT_THROW(run_sweep(small_config(), "k", std::vector<double>{}), ContractError);
  ExperimentConfig cfg;
  EXPECT_THROW(apply_sweep_value(cfg, "bogus", 1.0), ConfigError);
}
