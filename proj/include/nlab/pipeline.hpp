#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nlab/config.hpp"
#include "nlab/correction.hpp"
#include "nlab/data.hpp"
#include "nlab/history.hpp"
#include "nlab/metrics.hpp"

namespace nlab {

// Which ablation the flags select: "full", "no_nshe", "no_nshe_ehn",
// "no_correction" (only NSHE on raw data) or "no_whole".
std::string ablation_name(const ExperimentConfig& cfg);

struct PhaseTiming {
  std::string phase;
  double seconds = 0.0;
};

struct RunReport {
  std::string ablation;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::optional<double> injected_noise_ratio;  // measured on the noisy training set
  double rho_used = 0.0;
  std::optional<double> estimated_rho;
  double tau_e = 0.0;
  double tau = 0.0;

  std::vector<RoundSummary> rounds;
  std::size_t easy = 0;
  std::size_t hard = 0;
  std::size_t noisy = 0;
  std::size_t relabeled = 0;
  std::size_t dropped = 0;
  std::size_t retained = 0;
  std::optional<double> final_noise_ratio;  // of the set the final model trains on
  std::optional<std::size_t> retained_noisy;
  std::optional<std::size_t> baseline_retained_noisy;  // drop-by-mean at equal retained count

  std::optional<double> ehn_holdout_accuracy;
  std::optional<double> noisy_set_purity;  // share of D_n that is truly noisy
  std::optional<double> noisy_set_recall;  // share of truly noisy samples placed in D_n

  // Clean samples below the easy cut vs truly noisy samples, first-round history.
  std::optional<GroupDynamics> hard_dynamics;
  std::optional<GroupDynamics> noisy_dynamics;

  ClassificationReport test;
  std::vector<PhaseTiming> timings;
};

// Builds the train/test sets named by the config, noise included.
std::pair<Dataset, Dataset> prepare_data(const ExperimentConfig& cfg);

// Runs every enabled phase. Writes outputs into cfg.out unless it is empty.
// Phase failures are rethrown as PhaseError (ConfigError keeps its type)
// after report.txt records them.
RunReport run_pipeline(const ExperimentConfig& cfg);

void save_report_txt(const RunReport& report, const std::filesystem::path& path);

// Parameters a sweep can vary.
std::vector<std::string> sweep_axes();
void apply_sweep_value(ExperimentConfig& cfg, std::string_view axis, double value);

struct SweepRow {
  double value = 0.0;
  std::uint64_t seed = 0;
  double test_accuracy = 0.0;
  std::optional<double> final_noise_ratio;
};

// One pipeline per (value, seed). Seed j is derive_seed(base.seed, "sweep", j)
// for every value. Runs land in base.out/<axis>_<value>/seed_<j>. `jobs > 1`
// runs pipelines concurrently.
std::vector<SweepRow> run_sweep(const ExperimentConfig& base, std::string_view axis,
                                std::span<const double> values, std::size_t seed_count = 1,
                                int jobs = 1);

// `value,seed,test_acc,final_noise_ratio`
void save_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

}  // namespace nlab
