#include "nlab/nshe.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "nlab/ehn.hpp"
#include "nlab/error.hpp"
#include "nlab/rng.hpp"

namespace nlab {

double discard_ratio(double rho) { return 0.1 * rho; }

std::vector<std::size_t> select_discard_set(const NetworkParameters& teacher, const Dataset& ds,
                                            double tau) {
  if (!(tau >= 0.0 && tau < 1.0)) throw ConfigError("discard ratio must be in [0, 1)");
  const std::size_t count = fraction_count(ds.size(), tau);
  if (count == 0) return {};
  const std::vector<double> p = labeled_class_probabilities(teacher, ds.features, ds.labels);
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (p[a] != p[b]) return p[a] < p[b];
                      return ds.ids[a] < ds.ids[b];
                    });
  order.resize(count);
  return order;
}

NetworkParameters nshe_initial_parameters(const Dataset& ds, const NsheConfig& cfg) {
  std::vector<std::size_t> dims{ds.feature_count()};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(static_cast<std::size_t>(ds.class_count));
  return init_network(dims, derive_seed(cfg.seed, "final-model-init"));
}

TrainOptions nshe_train_options(const NsheConfig& cfg) {
  TrainOptions opts = cfg.train;
  opts.shuffle_seed = derive_seed(cfg.seed, "final-model-shuffle");
  return opts;
}

namespace {
double test_accuracy(const NetworkParameters& model, const Dataset& test) {
  const std::vector<int> pred = predict(model, test.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == test.labels[i] ? 1 : 0;
  return pred.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(pred.size());
}
}  // namespace

NsheResult run_nshe(const Dataset& ds, const NsheConfig& cfg, const Dataset* test,
                    const NsheHooks& hooks) {
  if (ds.size() == 0) throw StateError("nshe: dataset is empty");
  if (!(cfg.tau >= 0.0 && cfg.tau < 1.0)) throw ConfigError("nshe: tau must be in [0, 1)");
  if (!(cfg.m >= 0.0 && cfg.m < 1.0)) throw ConfigError("nshe: m must be in [0, 1)");
  if (!(cfg.gamma >= 0.0)) throw ConfigError("nshe: gamma must be >= 0");

  const TrainOptions opts = nshe_train_options(cfg);
  const LossConfig loss = LossConfig::focal(cfg.gamma);
  NsheResult result;
  result.student = nshe_initial_parameters(ds, cfg);
  result.teacher = result.student;

  OptimizerState opt = OptimizerState::for_network(result.student, opts.learning_rate, opts.momentum);
  BatchSchedule schedule(ds.size(), opts.batch_size, opts.shuffle_seed);
  std::vector<bool> discarded(ds.size(), false);
  std::vector<std::size_t> rows;
  std::vector<int> labels;

  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    opt.learning_rate = lr_schedule(epoch, opts.epochs, opts.learning_rate, opts.decay_start);

    // The teacher ranks the samples once per epoch.
    const std::vector<std::size_t> drop = select_discard_set(result.teacher, ds, cfg.tau);
    std::fill(discarded.begin(), discarded.end(), false);
    for (std::size_t i : drop) discarded[i] = true;
    if (hooks.on_discard) hooks.on_discard(epoch, drop);

    double loss_sum = 0.0;
    std::size_t updates = 0;
    for (const auto& batch : schedule.next_epoch()) {
      rows.clear();
      labels.clear();
      for (std::size_t r : batch) {
        if (discarded[r]) continue;
        rows.push_back(r);
        labels.push_back(ds.labels[r]);
      }
      if (rows.empty()) continue;
      if (hooks.on_batch) hooks.on_batch(epoch, rows);
      const StepResult step =
          train_step(result.student, opt, gather_rows(ds.features, rows), labels, loss);
      loss_sum += step.loss;
      ++updates;
      NetworkParameters updated = ema_update(result.teacher, result.student, cfg.m);
      if (hooks.on_iteration) hooks.on_iteration(result.student, result.teacher, updated);
      result.teacher = std::move(updated);
    }
    if (updates == 0) {
      throw StateError("nshe: every sample of epoch " + std::to_string(epoch) + " was discarded");
    }

    NsheEpochLog entry;
    entry.epoch = epoch;
    entry.learning_rate = opt.learning_rate;
    entry.discarded = drop.size();
    entry.mean_train_loss = loss_sum / static_cast<double>(updates);
    if (test != nullptr) {
      entry.student_test_accuracy = test_accuracy(result.student, *test);
      entry.teacher_test_accuracy = test_accuracy(result.teacher, *test);
    }
    result.log.push_back(entry);
    if (hooks.on_epoch) hooks.on_epoch(epoch, result.teacher);
  }
  return result;
}

NetworkParameters train_plain(const Dataset& ds, const NsheConfig& cfg, const EpochHook& on_epoch) {
  if (ds.size() == 0) throw StateError("train_plain: dataset is empty");
  TrainOptions opts = nshe_train_options(cfg);
  opts.loss = LossConfig::cross_entropy();
  return fit(nshe_initial_parameters(ds, cfg), ds.features, ds.labels, opts, {}, on_epoch);
}

void save_nshe_log_csv(const std::vector<NsheEpochLog>& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << "epoch,lr,discarded,mean_train_loss,test_acc_m1,test_acc_m2\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.10g", v);
    out << buf;
  };
  for (const NsheEpochLog& e : log) {
    out << e.epoch << ',';
    put(e.learning_rate);
    out << ',' << e.discarded << ',';
    put(e.mean_train_loss);
    out << ',';
    if (e.student_test_accuracy) put(*e.student_test_accuracy);
    out << ',';
    if (e.teacher_test_accuracy) put(*e.teacher_test_accuracy);
    out << '\n';
  }
}

}  // namespace nlab
