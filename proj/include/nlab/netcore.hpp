#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "nlab/matrix.hpp"

// Feedforward softmax classifier: parameters, losses, SGD with momentum,
// learning-rate schedule, and the exponential moving average used for the
// teacher network.
namespace nlab {

enum class Activation { relu, tanh };

struct NetworkParameters {
  std::vector<std::size_t> layer_dims;
  std::vector<Matrix> weights;              // layer l: dims[l+1] x dims[l]
  std::vector<std::vector<double>> biases;  // layer l: dims[l+1]
  Activation activation = Activation::relu;

  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t class_count() const { return layer_dims.back(); }
  std::size_t layer_count() const { return weights.size(); }
  std::size_t parameter_count() const;

  bool same_shape(const NetworkParameters& other) const;
  bool all_finite() const;

  friend bool operator==(const NetworkParameters&, const NetworkParameters&) = default;
};

// Same layout as NetworkParameters, used for gradients and velocities.
struct ParameterBuffers {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  static ParameterBuffers zeros_like(const NetworkParameters& p);
};

struct OptimizerState {
  double learning_rate = 0.01;
  double momentum = 0.9;
  ParameterBuffers velocity;

  static OptimizerState for_network(const NetworkParameters& p, double learning_rate,
                                    double momentum);
};

enum class LossKind { cross_entropy, focal };

struct LossConfig {
  LossKind kind = LossKind::cross_entropy;
  double gamma = 0.0;  // ignored for cross_entropy

  static LossConfig cross_entropy() { return {}; }
  static LossConfig focal(double gamma) { return {LossKind::focal, gamma}; }
};

inline constexpr double kMinProbability = 1e-12;

NetworkParameters init_network(std::span<const std::size_t> layer_dims, std::uint64_t seed,
                               Activation activation = Activation::relu);

// Row-wise softmax probabilities for a batch.
Matrix forward(const NetworkParameters& params, const Matrix& batch);

// -(1 - p)^gamma * ln(p), with p clamped to [kMinProbability, 1].
double focal_loss(double prob_of_label, double gamma);
double cross_entropy_loss(double prob_of_label);
double sample_loss(double prob_of_label, const LossConfig& cfg);

struct LossGradient {
  double loss = 0.0;  // weighted mean over the batch
  ParameterBuffers grad;
};

// Mean per-sample loss and its gradient. `sample_weights` is optional; when
// given, sample b contributes weight[b] * loss_b / batch_size.
LossGradient loss_and_gradient(const NetworkParameters& params, const Matrix& batch,
                               std::span<const int> labels, const LossConfig& loss,
                               std::span<const double> sample_weights = {});

struct StepResult {
  double loss = 0.0;  // at the pre-update parameters
  bool empty_batch = false;
};

// One SGD-with-momentum step on the mean batch loss:
//   v <- momentum * v - lr * g;  theta <- theta + v
StepResult train_step(NetworkParameters& params, OptimizerState& opt, const Matrix& batch,
                      std::span<const int> labels, const LossConfig& loss,
                      std::span<const double> sample_weights = {});

// theta2 <- m * theta2 + (1 - m) * theta1, elementwise.
NetworkParameters ema_update(const NetworkParameters& theta2, const NetworkParameters& theta1,
                             double m);

// Constant until `decay_start`, then linear down to
// initial_lr / (total_epochs - decay_start + 1) at the final epoch.
double lr_schedule(int epoch, int total_epochs, double initial_lr, int decay_start);

// Probability each row assigns to the given label.
std::vector<double> labeled_class_probabilities(const NetworkParameters& params,
                                                const Matrix& features,
                                                std::span<const int> labels);

// Argmax per row, ties to the lowest class id.
std::vector<int> argmax_rows(const Matrix& probs);
std::vector<int> predict(const NetworkParameters& params, const Matrix& features);

// Per-epoch mini-batch partition of [0, n) by a seeded shuffle. The generator
// persists across epochs, so epoch t's order depends on the seed and t only.
class BatchSchedule {
 public:
  BatchSchedule(std::size_t n, std::size_t batch_size, std::uint64_t seed);

  std::vector<std::vector<std::size_t>> next_epoch();

 private:
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::mt19937_64 engine_;
};

struct TrainOptions {
  int epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 0.05;
  int decay_start = 15;
  double momentum = 0.9;
  LossConfig loss;
  std::uint64_t shuffle_seed = 0;
};

// Called after every epoch with the 1-based epoch number.
using EpochHook = std::function<void(int epoch, const NetworkParameters&)>;
// Called with the dataset rows that enter each gradient step.
using BatchHook = std::function<void(std::span<const std::size_t> rows)>;

// Mini-batch training loop shared by every model in the pipeline.
NetworkParameters fit(NetworkParameters params, const Matrix& features,
                      std::span<const int> labels, const TrainOptions& options,
                      std::span<const double> sample_weights = {},
                      const EpochHook& on_epoch = {}, const BatchHook& on_batch = {});

void save_checkpoint(const NetworkParameters& params, const std::filesystem::path& path);
NetworkParameters load_checkpoint(const std::filesystem::path& path);

}  // namespace nlab
