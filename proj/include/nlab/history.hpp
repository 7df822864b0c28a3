#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nlab/data.hpp"
#include "nlab/matrix.hpp"
#include "nlab/netcore.hpp"

namespace nlab {

// Crossing threshold for learning/forgetting events. A value exactly at the
// threshold counts as "below".
inline constexpr double kEventThreshold = 0.5;

// Per-sample probability of the observed label, one column per epoch.
class TrainingHistory {
 public:
  TrainingHistory() = default;
  explicit TrainingHistory(std::vector<std::int64_t> sample_ids);

  std::size_t sample_count() const { return sample_ids_.size(); }
  std::size_t epoch_count() const { return columns_.size(); }
  const std::vector<std::int64_t>& sample_ids() const { return sample_ids_; }

  double at(std::size_t sample, std::size_t epoch) const { return columns_[epoch][sample]; }
  std::vector<double> row(std::size_t sample) const;
  // N x k matrix of all rows.
  Matrix as_matrix() const;

  // Appends one epoch; `epoch` must be epoch_count() + 1.
  void append(int epoch, std::vector<double> probs);

 private:
  std::vector<std::int64_t> sample_ids_;
  std::vector<std::vector<double>> columns_;
};

struct EventCounts {
  int learning = 0;
  int forgetting = 0;

  friend bool operator==(const EventCounts&, const EventCounts&) = default;
};

struct DynamicsSummary {
  std::vector<double> mean_prob;
  std::vector<int> learning_events;
  std::vector<int> forgetting_events;
  std::vector<double> mean_abs_gradient;  // 0 when k < 2
};

// Records the model's probability of each sample's observed label.
void record_epoch(TrainingHistory& hist, int epoch, const NetworkParameters& model,
                  const Dataset& ds);

std::vector<double> mean_history(const TrainingHistory& hist);

// Sample positions by descending mean, ties by ascending id.
std::vector<std::size_t> rank_by_mean(const TrainingHistory& hist);
std::vector<std::size_t> rank_by_mean(std::span<const double> means,
                                      std::span<const std::int64_t> ids);

EventCounts count_events(std::span<const double> row, double threshold = kEventThreshold);

// Event flags per transition t-1 -> t (length k-1): +1 learning, -1 forgetting, 0 none.
std::vector<int> event_sequence(std::span<const double> row, double threshold = kEventThreshold);

// |p_t - p_{t-1}| for t = 2..k.
std::vector<double> gradient_magnitudes(std::span<const double> row);

DynamicsSummary summarize(const TrainingHistory& hist);

// Event and gradient statistics pooled over a group of samples.
struct GroupDynamics {
  std::size_t samples = 0;
  // Fraction of members with an event at transition t -> t+1 (length k-1).
  std::vector<double> learning_by_transition;
  std::vector<double> forgetting_by_transition;
  double learning_per_sample = 0.0;
  double forgetting_per_sample = 0.0;
  double events_per_sample = 0.0;
  double mean_abs_gradient = 0.0;
  // Relative frequency of |p_t - p_{t-1}| in equal-width bins over [0, 1].
  std::vector<double> gradient_histogram;
};

GroupDynamics group_dynamics(const TrainingHistory& hist, std::span<const std::size_t> members,
                             std::size_t bins = 20);

// CSV `id,epoch_1..epoch_k`.
void save_history_csv(const TrainingHistory& hist, const std::filesystem::path& path);

}  // namespace nlab
