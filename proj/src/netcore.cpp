#include "nlab/netcore.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "binary_io.hpp"
#include "nlab/error.hpp"
#include "nlab/kernels.hpp"

namespace nlab {

std::size_t NetworkParameters::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].data.size() + biases[l].size();
  return n;
}

bool NetworkParameters::same_shape(const NetworkParameters& other) const {
  return layer_dims == other.layer_dims;
}

bool NetworkParameters::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (double v : weights[l].data) {
      if (!std::isfinite(v)) return false;
    }
    for (double v : biases[l]) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

ParameterBuffers ParameterBuffers::zeros_like(const NetworkParameters& p) {
  ParameterBuffers z;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    z.weights.emplace_back(p.weights[l].rows, p.weights[l].cols);
    z.biases.emplace_back(p.biases[l].size(), 0.0);
  }
  return z;
}

OptimizerState OptimizerState::for_network(const NetworkParameters& p, double learning_rate,
                                           double momentum) {
  if (!(learning_rate >= 0.0) || !(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("optimizer: learning_rate must be >= 0 and momentum in [0, 1)");
  }
  return {learning_rate, momentum, ParameterBuffers::zeros_like(p)};
}

NetworkParameters init_network(std::span<const std::size_t> layer_dims, std::uint64_t seed,
                               Activation activation) {
  if (layer_dims.size() < 2) {
    throw ConfigError("init_network: need at least an input and an output layer");
  }
  if (std::any_of(layer_dims.begin(), layer_dims.end(), [](std::size_t d) { return d == 0; })) {
    throw ConfigError("init_network: layer dimensions must be >= 1");
  }
  NetworkParameters p;
  p.layer_dims.assign(layer_dims.begin(), layer_dims.end());
  p.activation = activation;
  std::mt19937_64 engine(seed);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const std::size_t fan_in = layer_dims[l];
    const std::size_t fan_out = layer_dims[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix w(fan_out, fan_in);
    for (double& v : w.data) v = dist(engine);
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(fan_out, 0.0);
  }
  return p;
}

namespace {

void check_input(const NetworkParameters& params, const Matrix& batch) {
  if (batch.cols != params.input_dim()) {
    throw DimensionError("forward: batch has " + std::to_string(batch.cols) +
                         " features, network expects " + std::to_string(params.input_dim()));
  }
}

void activate(Matrix& z, Activation act) {
  if (act == Activation::relu) {
    for (double& v : z.data) v = v > 0.0 ? v : 0.0;
  } else {
    for (double& v : z.data) v = std::tanh(v);
  }
}

// Multiplies `delta` by the activation derivative, given the activated values.
void activation_backward(Matrix& delta, const Matrix& activated, Activation act) {
  if (act == Activation::relu) {
    for (std::size_t i = 0; i < delta.data.size(); ++i) {
      if (!(activated.data[i] > 0.0)) delta.data[i] = 0.0;
    }
  } else {
    for (std::size_t i = 0; i < delta.data.size(); ++i) {
      const double a = activated.data[i];
      delta.data[i] *= 1.0 - a * a;
    }
  }
}

// Hidden activations a_0 = input, ..., a_{L-1}; returns the softmax output.
Matrix forward_with_activations(const NetworkParameters& params, const Matrix& batch,
                                std::vector<Matrix>& acts) {
  acts.clear();
  acts.push_back(batch);
  Matrix z;
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    kernels::affine(acts.back(), params.weights[l], params.biases[l], z);
    if (l + 1 < params.layer_count()) {
      activate(z, params.activation);
      acts.push_back(std::move(z));
      z = Matrix();
    }
  }
  kernels::softmax_rows(z);
  return z;
}

double clamp_prob(double p) { return std::clamp(p, kMinProbability, 1.0); }

// d loss / d logit_j = scale * (p_j - [j == label]).
double logit_scale(double p, const LossConfig& cfg) {
  if (cfg.kind == LossKind::cross_entropy || cfg.gamma == 0.0) return 1.0;
  const double pc = clamp_prob(p);
  const double q = 1.0 - pc;
  double scale = std::pow(q, cfg.gamma);
  if (q > 0.0) scale -= cfg.gamma * pc * std::pow(q, cfg.gamma - 1.0) * std::log(pc);
  return scale;
}

}  // namespace

Matrix forward(const NetworkParameters& params, const Matrix& batch) {
  check_input(params, batch);
  std::vector<Matrix> acts;
  return forward_with_activations(params, batch, acts);
}

double cross_entropy_loss(double prob_of_label) { return -std::log(clamp_prob(prob_of_label)); }

double focal_loss(double prob_of_label, double gamma) {
  const double p = clamp_prob(prob_of_label);
  const double loss = -std::pow(1.0 - p, gamma) * std::log(p);
  // -0.0 at p == 1
  return loss == 0.0 ? 0.0 : loss;
}

double sample_loss(double prob_of_label, const LossConfig& cfg) {
  return cfg.kind == LossKind::cross_entropy ? cross_entropy_loss(prob_of_label)
                                             : focal_loss(prob_of_label, cfg.gamma);
}

LossGradient loss_and_gradient(const NetworkParameters& params, const Matrix& batch,
                               std::span<const int> labels, const LossConfig& loss,
                               std::span<const double> sample_weights) {
  check_input(params, batch);
  if (labels.size() != batch.rows) throw DimensionError("loss_and_gradient: labels/batch mismatch");
  if (!sample_weights.empty() && sample_weights.size() != batch.rows) {
    throw DimensionError("loss_and_gradient: sample_weights/batch mismatch");
  }
  if (loss.kind == LossKind::focal && !(loss.gamma >= 0.0)) {
    throw ConfigError("focal loss gamma must be >= 0");
  }
  const std::size_t classes = params.class_count();
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ContractError("loss_and_gradient: label out of range");
    }
  }

  LossGradient out;
  out.grad = ParameterBuffers::zeros_like(params);
  if (batch.rows == 0) return out;

  std::vector<Matrix> acts;
  Matrix delta = forward_with_activations(params, batch, acts);
  const double inv_batch = 1.0 / static_cast<double>(batch.rows);
  double total = 0.0;
  for (std::size_t b = 0; b < batch.rows; ++b) {
    const auto y = static_cast<std::size_t>(labels[b]);
    const double w = sample_weights.empty() ? 1.0 : sample_weights[b];
    const double p = delta(b, y);
    total += w * sample_loss(p, loss);
    const double scale = w * inv_batch * logit_scale(p, loss);
    auto row = delta.row(b);
    for (std::size_t j = 0; j < classes; ++j) {
      row[j] = scale * (row[j] - (j == y ? 1.0 : 0.0));
    }
  }
  out.loss = total * inv_batch;

  for (std::size_t l = params.layer_count(); l-- > 0;) {
    kernels::weight_grad(delta, acts[l], out.grad.weights[l], out.grad.biases[l]);
    if (l > 0) {
      Matrix prev;
      kernels::input_grad(delta, params.weights[l], prev);
      activation_backward(prev, acts[l], params.activation);
      delta = std::move(prev);
    }
  }
  return out;
}

StepResult train_step(NetworkParameters& params, OptimizerState& opt, const Matrix& batch,
                      std::span<const int> labels, const LossConfig& loss,
                      std::span<const double> sample_weights) {
  if (batch.rows == 0) return {0.0, true};
  LossGradient lg = loss_and_gradient(params, batch, labels, loss, sample_weights);
  if (opt.velocity.weights.size() != params.layer_count()) {
    throw DimensionError("train_step: optimizer state does not match network");
  }
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    auto& w = params.weights[l].data;
    auto& vw = opt.velocity.weights[l].data;
    const auto& gw = lg.grad.weights[l].data;
    for (std::size_t i = 0; i < w.size(); ++i) {
      vw[i] = opt.momentum * vw[i] - opt.learning_rate * gw[i];
      w[i] += vw[i];
    }
    auto& b = params.biases[l];
    auto& vb = opt.velocity.biases[l];
    const auto& gb = lg.grad.biases[l];
    for (std::size_t i = 0; i < b.size(); ++i) {
      vb[i] = opt.momentum * vb[i] - opt.learning_rate * gb[i];
      b[i] += vb[i];
    }
  }
  return {lg.loss, false};
}

NetworkParameters ema_update(const NetworkParameters& theta2, const NetworkParameters& theta1,
                             double m) {
  if (!theta2.same_shape(theta1)) throw DimensionError("ema_update: parameter shapes differ");
  if (!(m >= 0.0 && m < 1.0)) throw ConfigError("ema_update: momentum must be in [0, 1)");
  // Evaluated as theta1 + m * (theta2 - theta1): m = 0 and theta1 == theta2
  // both return their input bit for bit.
  NetworkParameters out = theta2;
  for (std::size_t l = 0; l < out.layer_count(); ++l) {
    auto& w = out.weights[l].data;
    const auto& w1 = theta1.weights[l].data;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = w1[i] + m * (w[i] - w1[i]);
    auto& b = out.biases[l];
    const auto& b1 = theta1.biases[l];
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = b1[i] + m * (b[i] - b1[i]);
  }
  return out;
}

double lr_schedule(int epoch, int total_epochs, double initial_lr, int decay_start) {
  epoch = std::clamp(epoch, 1, std::max(total_epochs, 1));
  if (epoch <= decay_start || decay_start >= total_epochs) return initial_lr;
  const double span = static_cast<double>(total_epochs - decay_start + 1);
  return initial_lr * static_cast<double>(total_epochs - epoch + 1) / span;
}

std::vector<double> labeled_class_probabilities(const NetworkParameters& params,
                                                const Matrix& features,
                                                std::span<const int> labels) {
  if (labels.size() != features.rows) {
    throw DimensionError("labeled_class_probabilities: labels/features mismatch");
  }
  const Matrix probs = forward(params, features);
  std::vector<double> out(features.rows);
  for (std::size_t i = 0; i < features.rows; ++i) {
    out[i] = probs(i, static_cast<std::size_t>(labels[i]));
  }
  return out;
}

std::vector<int> argmax_rows(const Matrix& probs) {
  std::vector<int> out(probs.rows, 0);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    auto r = probs.row(i);
    // max_element returns the first maximum, i.e. the lowest class id.
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

std::vector<int> predict(const NetworkParameters& params, const Matrix& features) {
  return argmax_rows(forward(params, features));
}

BatchSchedule::BatchSchedule(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : batch_size_(batch_size), order_(n), engine_(seed) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
}

std::vector<std::vector<std::size_t>> BatchSchedule::next_epoch() {
  std::shuffle(order_.begin(), order_.end(), engine_);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order_.size(); start += batch_size_) {
    const std::size_t end = std::min(order_.size(), start + batch_size_);
    batches.emplace_back(order_.begin() + static_cast<std::ptrdiff_t>(start),
                         order_.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

NetworkParameters fit(NetworkParameters params, const Matrix& features,
                      std::span<const int> labels, const TrainOptions& options,
                      std::span<const double> sample_weights, const EpochHook& on_epoch,
                      const BatchHook& on_batch) {
  if (labels.size() != features.rows) throw DimensionError("fit: labels/features mismatch");
  if (!sample_weights.empty() && sample_weights.size() != features.rows) {
    throw DimensionError("fit: sample_weights/features mismatch");
  }
  if (options.epochs < 0) throw ConfigError("fit: epochs must be >= 0");
  OptimizerState opt =
      OptimizerState::for_network(params, options.learning_rate, options.momentum);
  BatchSchedule schedule(features.rows, options.batch_size, options.shuffle_seed);
  std::vector<int> batch_labels;
  std::vector<double> batch_weights;
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    opt.learning_rate =
        lr_schedule(epoch, options.epochs, options.learning_rate, options.decay_start);
    for (const auto& rows : schedule.next_epoch()) {
      if (on_batch) on_batch(rows);
      const Matrix batch = gather_rows(features, rows);
      batch_labels.clear();
      batch_weights.clear();
      for (std::size_t r : rows) {
        batch_labels.push_back(labels[r]);
        if (!sample_weights.empty()) batch_weights.push_back(sample_weights[r]);
      }
      train_step(params, opt, batch, batch_labels, options.loss, batch_weights);
    }
    if (on_epoch) on_epoch(epoch, params);
  }
  return params;
}

namespace {
constexpr char kCheckpointMagic[5] = "NLCK";
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const NetworkParameters& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open checkpoint for writing: " + path.string());
  out.write(kCheckpointMagic, 4);
  detail::write_le<std::uint32_t>(out, kCheckpointVersion);
  detail::write_le<std::uint32_t>(out, params.activation == Activation::relu ? 0U : 1U);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.layer_dims.size()));
  for (std::size_t d : params.layer_dims) detail::write_le<std::uint64_t>(out, d);
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    for (double v : params.weights[l].data) detail::write_le(out, v);
    for (double v : params.biases[l]) detail::write_le(out, v);
  }
  if (!out) throw Error("failed writing checkpoint: " + path.string());
}

NetworkParameters load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  detail::LeReader r(in);
  r.expect_magic(kCheckpointMagic);
  const auto version = r.read<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version), r.offset() - 4);
  }
  const auto act = r.read<std::uint32_t>("activation");
  if (act > 1) throw ParseError("unknown activation code", r.offset() - 4);
  const auto depth = r.read<std::uint32_t>("layer count");
  if (depth < 2 || depth > 64) throw ParseError("implausible layer count", r.offset() - 4);
  std::vector<std::size_t> dims;
  for (std::uint32_t i = 0; i < depth; ++i) {
    const auto d = r.read<std::uint64_t>("layer dimension");
    if (d == 0 || d > (1U << 24)) throw ParseError("implausible layer dimension", r.offset() - 8);
    dims.push_back(static_cast<std::size_t>(d));
  }
  NetworkParameters p = init_network(dims, 0, act == 0 ? Activation::relu : Activation::tanh);
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    for (double& v : p.weights[l].data) v = r.read<double>("weight");
    for (double& v : p.biases[l]) v = r.read<double>("bias");
  }
  if (!r.at_end()) throw ParseError("trailing bytes after checkpoint body", r.offset());
  return p;
}

}  // namespace nlab
