#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "nlab/data.hpp"
#include "nlab/ehn.hpp"
#include "nlab/history.hpp"
#include "nlab/netcore.hpp"

// Label correction: correction model, pseudo-labels, post-processing, the
// multi-round self-learning loop, and the drop-by-mean comparator.
namespace nlab {

enum class SampleAction : std::uint8_t { kept, relabeled, dropped };

const char* to_string(SampleAction a);

// Sample id -> argmax class of the correction model.
struct PseudoLabels {
  std::map<std::int64_t, int> by_id;
};

struct CorrectionOutcome {
  Dataset dataset;                     // retained samples with their final labels
  std::vector<std::int64_t> dropped;   // ascending
  // Indexed by position in the input dataset.
  std::vector<std::int64_t> ids;
  std::vector<SampleAction> action;
  std::vector<int> old_labels;
  std::vector<int> new_labels;         // equals old_labels for dropped samples
};

struct CorrectionModelConfig {
  std::vector<std::size_t> hidden = {32, 16};
  TrainOptions train = [] {
    TrainOptions t;
    t.epochs = 10;
    t.learning_rate = 0.01;
    return t;
  }();
  std::uint64_t seed = 0;
};

// Receives the ids entering every gradient step.
using IdBatchHook = std::function<void(const std::vector<std::int64_t>& ids)>;

// Trained from a fresh initialization on the easy and hard samples only.
NetworkParameters train_correction_model(const Dataset& ds, const EHNPartition& partition,
                                         const CorrectionModelConfig& cfg,
                                         const IdBatchHook& on_batch = {});

// Trains on every sample of `ds` (used when detection is disabled).
NetworkParameters train_on_all(const Dataset& ds, const CorrectionModelConfig& cfg,
                               const IdBatchHook& on_batch = {});

// Pseudo-labels for the hard and noisy samples.
PseudoLabels generate_pseudo_labels(const NetworkParameters& model, const Dataset& ds,
                                    const EHNPartition& partition);

// Drops noisy samples whose label the model confirms and hard samples whose
// label it contradicts; every other hard/noisy sample takes its pseudo-label.
// Easy samples pass through untouched.
CorrectionOutcome post_process(const Dataset& ds, const EHNPartition& partition,
                               const PseudoLabels& pseudo);

// Replaces every label by the model's argmax.
Dataset relabel_all(const Dataset& ds, const NetworkParameters& model);

struct RoundSummary {
  int round = 0;
  double rho_used = 0.0;
  double tau_e = 0.0;
  std::optional<double> estimated_rho;
  std::size_t easy = 0;
  std::size_t hard = 0;
  std::size_t noisy = 0;
  std::size_t relabeled = 0;
  std::optional<double> noise_before;  // of the dataset entering the round
  std::optional<double> noise_after;   // after relabeling (final round: after post-processing)
  std::size_t retained = 0;
};

struct LabelCorrectionConfig {
  int rounds = 1;
  // Noise rate for the first round; estimated when absent. Later rounds
  // always re-estimate on the relabeled data.
  std::optional<double> rho;
  std::optional<double> tau_e;  // overrides easy_ratio(rho)
  EhnConfig ehn;                // tau_e / rho_hat / seed are filled per round
  CorrectionModelConfig correction;
  NoiseEstimatorOptions estimator;
  std::uint64_t seed = 0;
};

struct LabelCorrectionResult {
  CorrectionOutcome outcome;
  std::vector<RoundSummary> rounds;
  EhnResult last_ehn;
  NetworkParameters last_correction_model;
  Dataset last_round_input;  // dataset the final EHN pass ran on
};

LabelCorrectionResult run_label_correction(const Dataset& ds, const LabelCorrectionConfig& cfg);

// Comparator: relabel everything by `model`, then keep the `keep_count`
// samples with the highest mean history.
CorrectionOutcome baseline_drop_by_mean(const Dataset& ds, const TrainingHistory& hist,
                                        std::size_t keep_count, const NetworkParameters& model);

// `id,action,old_label,new_label,partition,true_noisy`
void save_outcome_csv(const Dataset& original, const CorrectionOutcome& outcome,
                      const EHNPartition* partition, const std::filesystem::path& path);
// `round,est_rho,noise_ratio_D,noise_ratio_Do`
void save_round_summary_csv(const std::vector<RoundSummary>& rounds,
                            const std::filesystem::path& path);

}  // namespace nlab
