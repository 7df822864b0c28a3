#include "nlab/ehn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "nlab/error.hpp"
#include "nlab/rng.hpp"

namespace nlab {

const char* to_string(SampleGroup g) {
  switch (g) {
    case SampleGroup::easy: return "easy";
    case SampleGroup::hard: return "hard";
    case SampleGroup::noisy: return "noisy";
  }
  return "?";
}

EHNPartition EHNPartition::from_groups(std::vector<SampleGroup> group,
                                       std::span<const std::int64_t> ids) {
  if (group.size() != ids.size()) throw DimensionError("partition: group/ids mismatch");
  EHNPartition p;
  for (std::size_t i = 0; i < group.size(); ++i) {
    switch (group[i]) {
      case SampleGroup::easy: p.easy.push_back(ids[i]); break;
      case SampleGroup::hard: p.hard.push_back(ids[i]); break;
      case SampleGroup::noisy: p.noisy.push_back(ids[i]); break;
    }
  }
  std::sort(p.easy.begin(), p.easy.end());
  std::sort(p.hard.begin(), p.hard.end());
  std::sort(p.noisy.begin(), p.noisy.end());
  p.group = std::move(group);
  return p;
}

std::vector<std::size_t> EHNPartition::positions(SampleGroup g) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < group.size(); ++i) {
    if (group[i] == g) out.push_back(i);
  }
  return out;
}

double easy_ratio(double rho) {
  if (rho >= 0.8) return 0.1;
  return std::max(0.1, 1.0 - 1.5 * rho);
}

std::size_t fraction_count(std::size_t n, double ratio) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 1e-9));
}

std::vector<std::size_t> select_easy(const Dataset& ds, const TrainingHistory& hist,
                                     double tau_e) {
  if (hist.sample_count() != ds.size()) throw DimensionError("select_easy: history not aligned");
  if (!(tau_e > 0.0 && tau_e <= 1.0)) throw ConfigError("tau_e must be in (0, 1]");
  const std::size_t count = fraction_count(ds.size(), tau_e);
  if (count == 0) throw ConfigError("select_easy: floor(N * tau_e) is zero");
  std::vector<std::size_t> order = rank_by_mean(hist);
  order.resize(count);
  return order;
}

SyntheticNoiseRecord synthesize_noisy_easy(const Dataset& easy, double rho_hat,
                                           std::uint64_t seed) {
  if (easy.size() == 0) throw StateError("synthesize_noisy_easy: easy set is empty");
  if (!(rho_hat >= 0.0) || rho_hat > max_noise_ratio(NoiseKind::symmetric, easy.class_count)) {
    throw ConfigError("synthesize_noisy_easy: rho_hat out of range");
  }
  const std::size_t n = easy.size();
  const auto corrupt = static_cast<std::size_t>(std::llround(rho_hat * static_cast<double>(n)));
  std::mt19937_64 engine(derive_seed(seed, "synthetic-easy-noise"));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), engine);

  SyntheticNoiseRecord rec;
  rec.is_noise.assign(n, false);
  std::vector<int> labels = easy.labels;
  std::uniform_int_distribution<int> other(0, easy.class_count - 2);
  for (std::size_t k = 0; k < corrupt; ++k) {
    const std::size_t i = order[k];
    const int draw = other(engine);
    labels[i] = draw >= easy.labels[i] ? draw + 1 : draw;
    rec.is_noise[i] = true;
  }
  rec.dataset = easy.with_labels(std::move(labels));
  return rec;
}

namespace {

std::vector<std::size_t> network_dims(std::size_t input, const std::vector<std::size_t>& hidden,
                                      std::size_t classes) {
  std::vector<std::size_t> dims{input};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(classes);
  return dims;
}

std::vector<int> as_int_labels(const std::vector<bool>& flags) {
  std::vector<int> out(flags.size());
  for (std::size_t i = 0; i < flags.size(); ++i) out[i] = flags[i] ? 1 : 0;
  return out;
}

// Trains on `ds` for `epochs`, recording the labeled-class probability after
// every epoch.
std::pair<NetworkParameters, TrainingHistory> train_with_history(
    const Dataset& ds, const EhnConfig& cfg, std::uint64_t init_seed,
    std::uint64_t shuffle_seed) {
  TrainingHistory hist(ds.ids);
  TrainOptions opts = cfg.train;
  opts.epochs = cfg.history_epochs;
  opts.shuffle_seed = shuffle_seed;
  NetworkParameters init = init_network(
      network_dims(ds.feature_count(), cfg.hidden, static_cast<std::size_t>(ds.class_count)),
      init_seed);
  NetworkParameters trained =
      fit(std::move(init), ds.features, ds.labels, opts, {},
          [&](int epoch, const NetworkParameters& p) { record_epoch(hist, epoch, p, ds); });
  return {std::move(trained), std::move(hist)};
}

double mean_of(const std::vector<double>& v, const std::vector<bool>& pick, bool want) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (pick[i] == want) {
      sum += v[i];
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

}  // namespace

NetworkParameters train_history_classifier(const Matrix& history_rows,
                                           const std::vector<bool>& is_noise,
                                           const HistoryClassifierOptions& options) {
  if (history_rows.rows != is_noise.size()) {
    throw DimensionError("train_history_classifier: rows/labels mismatch");
  }
  const auto noisy = static_cast<std::size_t>(std::count(is_noise.begin(), is_noise.end(), true));
  const std::size_t hard = is_noise.size() - noisy;
  if (history_rows.rows < 2 || noisy == 0 || hard == 0) {
    throw DegenerateDataError("train_history_classifier: need both hard and noisy rows");
  }
  // Inverse class frequency, normalised so the mean weight is 1.
  const double n = static_cast<double>(is_noise.size());
  const double w_noisy = n / (2.0 * static_cast<double>(noisy));
  const double w_hard = n / (2.0 * static_cast<double>(hard));
  std::vector<double> weights(is_noise.size());
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = is_noise[i] ? w_noisy : w_hard;

  TrainOptions opts;
  opts.epochs = options.epochs;
  opts.batch_size = options.batch_size;
  opts.learning_rate = options.learning_rate;
  opts.decay_start = options.epochs;  // constant rate
  opts.momentum = options.momentum;
  opts.loss = LossConfig::cross_entropy();
  opts.shuffle_seed = derive_seed(options.seed, "history-classifier-shuffle");
  NetworkParameters init = init_network(network_dims(history_rows.cols, options.hidden, 2),
                                        derive_seed(options.seed, "history-classifier-init"));
  return fit(std::move(init), history_rows, as_int_labels(is_noise), opts, weights);
}

EhnResult run_ehn(const Dataset& ds, const EhnConfig& cfg) {
  ds.validate();
  if (cfg.history_epochs < 1) throw ConfigError("ehn: history epochs must be >= 1");
  if (!(cfg.holdout_fraction >= 0.0 && cfg.holdout_fraction < 1.0)) {
    throw ConfigError("ehn: holdout_fraction must be in [0, 1)");
  }
  EhnResult result;
  EhnDiagnostics& diag = result.diagnostics;

  // Classification model on the observed labels, with its history.
  auto [first_model, history] =
      train_with_history(ds, cfg, derive_seed(cfg.seed, "ehn-first-init"),
                         derive_seed(cfg.seed, "ehn-first-shuffle"));
  diag.first_model = std::move(first_model);
  diag.history = std::move(history);

  const std::vector<std::size_t> easy_pos = select_easy(ds, diag.history, cfg.tau_e);
  std::vector<SampleGroup> group(ds.size(), SampleGroup::hard);
  for (std::size_t i : easy_pos) group[i] = SampleGroup::easy;

  // Corrupt a copy of the easy set, retrain from scratch, and learn what
  // corrupted histories look like below the same easy cut.
  const Dataset easy = ds.subset(easy_pos);
  diag.synthetic = synthesize_noisy_easy(easy, cfg.rho_hat, derive_seed(cfg.seed, "ehn-synthetic"));
  auto [retrained, synthetic_history] =
      train_with_history(diag.synthetic.dataset, cfg, derive_seed(cfg.seed, "ehn-retrain-init"),
                         derive_seed(cfg.seed, "ehn-retrain-shuffle"));
  diag.retrained_model = std::move(retrained);
  diag.synthetic_history = std::move(synthetic_history);

  const std::vector<double> synthetic_means = mean_history(diag.synthetic_history);
  diag.synthetic_clean_mean = mean_of(synthetic_means, diag.synthetic.is_noise, false);
  diag.synthetic_noisy_mean = mean_of(synthetic_means, diag.synthetic.is_noise, true);

  std::vector<std::size_t> rest_pos;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (group[i] != SampleGroup::easy) rest_pos.push_back(i);
  }

  if (!rest_pos.empty()) {
    const std::vector<std::size_t> synthetic_order = rank_by_mean(diag.synthetic_history);
    const std::size_t cut = fraction_count(synthetic_order.size(), cfg.tau_e);
    std::vector<std::size_t> below(synthetic_order.begin() + static_cast<std::ptrdiff_t>(cut),
                                   synthetic_order.end());

    // Hold-out split of the rows below the cut.
    std::mt19937_64 engine(derive_seed(cfg.seed, "ehn-holdout"));
    std::shuffle(below.begin(), below.end(), engine);
    const std::size_t holdout = fraction_count(below.size(), cfg.holdout_fraction);
    const std::vector<std::size_t> train_rows(below.begin() + static_cast<std::ptrdiff_t>(holdout),
                                              below.end());
    const std::vector<std::size_t> holdout_rows(below.begin(),
                                                below.begin() + static_cast<std::ptrdiff_t>(holdout));

    const Matrix synthetic_matrix = diag.synthetic_history.as_matrix();
    std::vector<bool> train_flags;
    for (std::size_t r : train_rows) train_flags.push_back(diag.synthetic.is_noise[r]);
    HistoryClassifierOptions mm_opts = cfg.history_classifier;
    mm_opts.seed = derive_seed(cfg.seed, "ehn-history-classifier");
    NetworkParameters mm =
        train_history_classifier(gather_rows(synthetic_matrix, train_rows), train_flags, mm_opts);
    diag.classifier_train_rows = train_rows.size();
    diag.classifier_holdout_rows = holdout_rows.size();
    if (!holdout_rows.empty()) {
      const std::vector<int> pred = predict(mm, gather_rows(synthetic_matrix, holdout_rows));
      std::size_t correct = 0;
      for (std::size_t k = 0; k < holdout_rows.size(); ++k) {
        correct += (pred[k] == 1) == diag.synthetic.is_noise[holdout_rows[k]] ? 1 : 0;
      }
      diag.classifier_holdout_accuracy =
          static_cast<double>(correct) / static_cast<double>(holdout_rows.size());
    }

    const std::vector<int> verdict = predict(mm, gather_rows(diag.history.as_matrix(), rest_pos));
    for (std::size_t k = 0; k < rest_pos.size(); ++k) {
      group[rest_pos[k]] = verdict[k] == 1 ? SampleGroup::noisy : SampleGroup::hard;
    }
    result.history_classifier = std::move(mm);
  }

  result.partition = EHNPartition::from_groups(std::move(group), ds.ids);

  if (ds.has_ground_truth()) {
    std::array<std::array<std::size_t, 3>, 2> cm{};
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const std::size_t truth = (*ds.noise_mask)[i] ? 1 : 0;
      cm[truth][static_cast<std::size_t>(result.partition.group[i])] += 1;
    }
    diag.confusion = cm;
  }
  return result;
}

void save_ehn_assignments_csv(const Dataset& ds, const EhnResult& result,
                              const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  const std::vector<double> means = mean_history(result.diagnostics.history);
  out << "id,mean_H,assigned,true_noisy\n";
  char buf[32];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.10g", means[i]);
    out << ds.ids[i] << ',' << buf << ',' << to_string(result.partition.group[i]) << ',';
    if (ds.noise_mask) out << ((*ds.noise_mask)[i] ? 1 : 0);
    out << '\n';
  }
}

void save_ehn_confusion_csv(const EhnResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << "truth,easy,hard,noisy\n";
  if (!result.diagnostics.confusion) return;
  const auto& cm = *result.diagnostics.confusion;
  const char* names[2] = {"clean", "noisy"};
  for (std::size_t t = 0; t < 2; ++t) {
    out << names[t] << ',' << cm[t][0] << ',' << cm[t][1] << ',' << cm[t][2] << '\n';
  }
}

}  // namespace nlab
