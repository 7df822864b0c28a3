#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "nlab/matrix.hpp"
#include "nlab/netcore.hpp"

namespace nlab {

struct Dataset {
  Matrix features;                               // N x F
  std::vector<int> labels;                       // observed, possibly noisy
  std::optional<std::vector<int>> clean_labels;  // hidden ground truth
  std::optional<std::vector<bool>> noise_mask;   // labels[i] != clean_labels[i]
  int class_count = 2;
  std::vector<std::int64_t> ids;

  std::size_t size() const { return labels.size(); }
  std::size_t feature_count() const { return features.cols; }
  bool has_ground_truth() const { return clean_labels.has_value(); }

  // Throws ValidationError when an invariant is broken.
  void validate() const;

  // Recomputes noise_mask from labels and clean_labels.
  void refresh_noise_mask();

  // Rows at the given positions, in that order.
  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset with_labels(std::vector<int> new_labels) const;

  std::size_t noisy_count() const;
  double noise_ratio() const;  // requires ground truth

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

enum class NoiseKind { symmetric, asymmetric };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::symmetric;
  double ratio = 0.0;
  std::uint64_t seed = 0;
};

// Gaussian blobs with unit variance. Neighbouring class means sit
// 8 / (1 + overlap) standard deviations apart, so overlap = 0 is separable in
// practice and larger values push more samples towards the boundaries.
// Labels are clean; ids are 0..N-1 in class-major order.
Dataset make_gaussian_dataset(std::size_t n_per_class, std::size_t dims, int class_count,
                              double overlap, std::uint64_t seed);

// Splits off `test_per_class` samples of each class (the last ones of that
// class in row order). Returns {train, test}.
std::pair<Dataset, Dataset> split_per_class(const Dataset& ds, std::size_t test_per_class);

double max_noise_ratio(NoiseKind kind, int class_count);

// Corrupts exactly round(ratio * N) samples chosen uniformly at random.
// Symmetric: the new label is uniform over the classes other than the clean
// label. Asymmetric: c -> (c + 1) mod C. Unselected samples keep their labels.
Dataset inject_noise(const Dataset& ds, const NoiseSpec& spec);

// How held-out predictions are compared with observed labels: `hard` counts
// argmax matches, `soft` averages the probability given to the observed label.
enum class AgreementKind { hard, soft };

struct NoiseEstimatorOptions {
  AgreementKind agreement = AgreementKind::hard;
  std::vector<std::size_t> hidden = {32, 16};
  TrainOptions train = [] {
    TrainOptions t;
    t.learning_rate = 0.03;
    return t;
  }();
  std::uint64_t seed = 0;
};

struct NoiseEstimate {
  double estimate = 0.0;
  double agreement = 0.0;  // held-out agreement of predictions with observed labels
  std::optional<double> true_ratio;
};

// Two-fold agreement estimator. A classifier trained on one half predicts the
// other half (and vice versa); the pooled agreement a with the observed labels
// is converted to a symmetric noise rate. See docs in data.cpp.
NoiseEstimate estimate_noise_ratio(const Dataset& ds, const NoiseEstimatorOptions& options);

void save_dataset_csv(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset_csv(const std::filesystem::path& path);
void save_dataset_binary(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset_binary(const std::filesystem::path& path);

// Dispatches on extension: ".bin"/".nlf" binary, anything else CSV.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace nlab
