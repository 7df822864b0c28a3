#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "nlab/data.hpp"
#include "nlab/history.hpp"
#include "nlab/netcore.hpp"

// Easy / hard / noisy sample detection from per-sample training histories.
namespace nlab {

enum class SampleGroup : std::uint8_t { easy, hard, noisy };

const char* to_string(SampleGroup g);

struct EHNPartition {
  std::vector<SampleGroup> group;  // by dataset position
  std::vector<std::int64_t> easy;  // ids, ascending
  std::vector<std::int64_t> hard;
  std::vector<std::int64_t> noisy;

  static EHNPartition from_groups(std::vector<SampleGroup> group,
                                  std::span<const std::int64_t> ids);
  std::vector<std::size_t> positions(SampleGroup g) const;
  std::size_t size() const { return group.size(); }
};

// Synthetic corruption of the easy subset, with a record of which labels
// were changed.
struct SyntheticNoiseRecord {
  Dataset dataset;
  std::vector<bool> is_noise;
};

// 0.1 at rho >= 0.8, otherwise max(0.1, 1 - 1.5 * rho).
double easy_ratio(double rho);

// floor(n * ratio), tolerant of representation error just below an integer.
std::size_t fraction_count(std::size_t n, double ratio);

// Positions of the floor(N * tau_e) samples with the highest mean history.
std::vector<std::size_t> select_easy(const Dataset& ds, const TrainingHistory& hist,
                                     double tau_e);

// Symmetric relabeling of exactly round(rho_hat * |easy|) samples, relative to
// their current labels.
SyntheticNoiseRecord synthesize_noisy_easy(const Dataset& easy, double rho_hat,
                                           std::uint64_t seed);

struct HistoryClassifierOptions {
  std::vector<std::size_t> hidden = {64, 32};
  int epochs = 400;
  double learning_rate = 0.01;
  std::size_t batch_size = 64;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

// Binary MLP over history rows: 0 = hard, 1 = noisy. Classes are weighted by
// inverse frequency.
NetworkParameters train_history_classifier(const Matrix& history_rows,
                                           const std::vector<bool>& is_noise,
                                           const HistoryClassifierOptions& options);

struct EhnConfig {
  int history_epochs = 30;  // k
  double tau_e = 0.55;
  double rho_hat = 0.3;     // rate of synthetic corruption of the easy set
  std::vector<std::size_t> hidden = {32, 16};
  TrainOptions train = [] {  // epochs is replaced by history_epochs
    TrainOptions t;
    t.learning_rate = 0.01;
    return t;
  }();
  HistoryClassifierOptions history_classifier;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct EhnDiagnostics {
  TrainingHistory history;            // H, on the input dataset
  TrainingHistory synthetic_history;  // H_a, on the corrupted easy set
  NetworkParameters first_model;
  NetworkParameters retrained_model;
  SyntheticNoiseRecord synthetic;
  std::size_t classifier_train_rows = 0;
  std::size_t classifier_holdout_rows = 0;
  std::optional<double> classifier_holdout_accuracy;
  // Mean of per-sample mean history over clean / corrupted members of the
  // synthetic set.
  double synthetic_clean_mean = 0.0;
  double synthetic_noisy_mean = 0.0;
  // [truly clean, truly noisy] x [easy, hard, noisy]; needs ground truth.
  std::optional<std::array<std::array<std::size_t, 3>, 2>> confusion;
};

struct EhnResult {
  EHNPartition partition;
  std::optional<NetworkParameters> history_classifier;  // absent if nothing left below the cut
  EhnDiagnostics diagnostics;
};

EhnResult run_ehn(const Dataset& ds, const EhnConfig& cfg);

// `id,mean_H,assigned,true_noisy`
void save_ehn_assignments_csv(const Dataset& ds, const EhnResult& result,
                              const std::filesystem::path& path);
// `truth,easy,hard,noisy`
void save_ehn_confusion_csv(const EhnResult& result, const std::filesystem::path& path);

}  // namespace nlab
