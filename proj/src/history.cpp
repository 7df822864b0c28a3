#include "nlab/history.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "nlab/error.hpp"

namespace nlab {

TrainingHistory::TrainingHistory(std::vector<std::int64_t> sample_ids)
    : sample_ids_(std::move(sample_ids)) {}

std::vector<double> TrainingHistory::row(std::size_t sample) const {
  std::vector<double> out(columns_.size());
  for (std::size_t t = 0; t < columns_.size(); ++t) out[t] = columns_[t][sample];
  return out;
}

Matrix TrainingHistory::as_matrix() const {
  Matrix m(sample_count(), epoch_count());
  for (std::size_t t = 0; t < columns_.size(); ++t) {
    for (std::size_t i = 0; i < sample_ids_.size(); ++i) m(i, t) = columns_[t][i];
  }
  return m;
}

void TrainingHistory::append(int epoch, std::vector<double> probs) {
  if (epoch != static_cast<int>(columns_.size()) + 1) {
    throw StateError("history: expected epoch " + std::to_string(columns_.size() + 1) +
                     ", got " + std::to_string(epoch));
  }
  if (probs.size() != sample_ids_.size()) {
    throw DimensionError("history: epoch column has wrong length");
  }
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw ContractError("history: probability outside [0, 1]");
  }
  columns_.push_back(std::move(probs));
}

void record_epoch(TrainingHistory& hist, int epoch, const NetworkParameters& model,
                  const Dataset& ds) {
  if (ds.size() != hist.sample_count()) {
    throw DimensionError("record_epoch: dataset and history differ in size");
  }
  hist.append(epoch, labeled_class_probabilities(model, ds.features, ds.labels));
}

std::vector<double> mean_history(const TrainingHistory& hist) {
  if (hist.epoch_count() == 0) throw StateError("mean_history: history is empty");
  const std::size_t k = hist.epoch_count();
  std::vector<double> means(hist.sample_count());
  for (std::size_t i = 0; i < means.size(); ++i) {
    double sum = 0.0;
    for (std::size_t t = 0; t < k; ++t) sum += hist.at(i, t);
    means[i] = sum / static_cast<double>(k);
  }
  return means;
}

std::vector<std::size_t> rank_by_mean(std::span<const double> means,
                                      std::span<const std::int64_t> ids) {
  if (means.size() != ids.size()) throw DimensionError("rank_by_mean: length mismatch");
  std::vector<std::size_t> order(means.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (means[a] != means[b]) return means[a] > means[b];
    return ids[a] < ids[b];
  });
  return order;
}

std::vector<std::size_t> rank_by_mean(const TrainingHistory& hist) {
  const auto means = mean_history(hist);
  return rank_by_mean(means, hist.sample_ids());
}

std::vector<int> event_sequence(std::span<const double> row, double threshold) {
  std::vector<int> out;
  for (std::size_t t = 1; t < row.size(); ++t) {
    const bool before = row[t - 1] > threshold;
    const bool after = row[t] > threshold;
    out.push_back(before == after ? 0 : (after ? 1 : -1));
  }
  return out;
}

EventCounts count_events(std::span<const double> row, double threshold) {
  EventCounts counts;
  for (int e : event_sequence(row, threshold)) {
    if (e > 0) ++counts.learning;
    if (e < 0) ++counts.forgetting;
  }
  return counts;
}

std::vector<double> gradient_magnitudes(std::span<const double> row) {
  if (row.size() < 2) throw StateError("gradient_magnitudes: need at least two epochs");
  std::vector<double> out(row.size() - 1);
  for (std::size_t t = 1; t < row.size(); ++t) out[t - 1] = std::abs(row[t] - row[t - 1]);
  return out;
}

DynamicsSummary summarize(const TrainingHistory& hist) {
  DynamicsSummary s;
  s.mean_prob = mean_history(hist);
  const std::size_t n = hist.sample_count();
  s.learning_events.resize(n);
  s.forgetting_events.resize(n);
  s.mean_abs_gradient.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = hist.row(i);
    const auto ev = count_events(r);
    s.learning_events[i] = ev.learning;
    s.forgetting_events[i] = ev.forgetting;
    if (r.size() >= 2) {
      const auto g = gradient_magnitudes(r);
      s.mean_abs_gradient[i] = std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
    }
  }
  return s;
}

GroupDynamics group_dynamics(const TrainingHistory& hist, std::span<const std::size_t> members,
                             std::size_t bins) {
  if (bins == 0) throw ContractError("group_dynamics: bins must be >= 1");
  GroupDynamics g;
  g.samples = members.size();
  const std::size_t k = hist.epoch_count();
  const std::size_t transitions = k >= 2 ? k - 1 : 0;
  g.learning_by_transition.assign(transitions, 0.0);
  g.forgetting_by_transition.assign(transitions, 0.0);
  g.gradient_histogram.assign(bins, 0.0);
  if (members.empty() || transitions == 0) return g;

  std::size_t learning = 0;
  std::size_t forgetting = 0;
  std::size_t gradient_count = 0;
  double gradient_sum = 0.0;
  for (std::size_t i : members) {
    if (i >= hist.sample_count()) throw DimensionError("group_dynamics: member out of range");
    const auto r = hist.row(i);
    const auto seq = event_sequence(r);
    for (std::size_t t = 0; t < transitions; ++t) {
      if (seq[t] > 0) {
        g.learning_by_transition[t] += 1.0;
        ++learning;
      } else if (seq[t] < 0) {
        g.forgetting_by_transition[t] += 1.0;
        ++forgetting;
      }
    }
    for (double d : gradient_magnitudes(r)) {
      const auto bin = std::min(bins - 1, static_cast<std::size_t>(d * static_cast<double>(bins)));
      g.gradient_histogram[bin] += 1.0;
      gradient_sum += d;
      ++gradient_count;
    }
  }
  const double n = static_cast<double>(members.size());
  for (double& v : g.learning_by_transition) v /= n;
  for (double& v : g.forgetting_by_transition) v /= n;
  for (double& v : g.gradient_histogram) v /= static_cast<double>(gradient_count);
  g.learning_per_sample = static_cast<double>(learning) / n;
  g.forgetting_per_sample = static_cast<double>(forgetting) / n;
  g.events_per_sample = static_cast<double>(learning + forgetting) / n;
  g.mean_abs_gradient = gradient_sum / static_cast<double>(gradient_count);
  return g;
}

void save_history_csv(const TrainingHistory& hist, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << "id";
  for (std::size_t t = 1; t <= hist.epoch_count(); ++t) out << ",epoch_" << t;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < hist.sample_count(); ++i) {
    out << hist.sample_ids()[i];
    for (std::size_t t = 0; t < hist.epoch_count(); ++t) {
      std::snprintf(buf, sizeof buf, "%.17g", hist.at(i, t));
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace nlab
