#include "nlab/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>

#include "nlab/ehn.hpp"
#include "nlab/error.hpp"
#include "nlab/nshe.hpp"
#include "nlab/rng.hpp"

namespace nlab {

std::string ablation_name(const ExperimentConfig& cfg) {
  if (cfg.disable_correction) return cfg.disable_nshe ? "no_whole" : "no_correction";
  if (cfg.disable_ehn) return cfg.disable_nshe ? "no_nshe_ehn" : "no_ehn";
  return cfg.disable_nshe ? "no_nshe" : "full";
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  return out;
}

TrainOptions base_train(const ExperimentConfig& cfg, int epochs) {
  TrainOptions t;
  t.epochs = epochs;
  t.batch_size = cfg.batch_size;
  t.learning_rate = cfg.learning_rate;
  t.decay_start = cfg.decay_start;
  t.momentum = cfg.momentum;
  return t;
}

NoiseEstimatorOptions estimator_options(const ExperimentConfig& cfg) {
  NoiseEstimatorOptions est;
  est.hidden = cfg.hidden;
  est.train = base_train(cfg, cfg.estimator_epochs);
  est.train.learning_rate = cfg.estimator_lr;
  est.agreement = cfg.estimator_agreement;
  est.seed = derive_seed(cfg.seed, "estimate");
  return est;
}

LabelCorrectionConfig correction_options(const ExperimentConfig& cfg, double rho) {
  LabelCorrectionConfig lc;
  lc.rounds = cfg.rounds;
  lc.rho = rho;
  lc.tau_e = cfg.tau_e;
  lc.ehn.history_epochs = cfg.history_epochs;
  lc.ehn.hidden = cfg.hidden;
  lc.ehn.train = base_train(cfg, cfg.history_epochs);
  lc.ehn.history_classifier.hidden = cfg.classifier_hidden;
  lc.ehn.history_classifier.epochs = cfg.classifier_epochs;
  lc.ehn.history_classifier.learning_rate = cfg.classifier_lr;
  lc.ehn.history_classifier.batch_size = cfg.batch_size;
  lc.ehn.history_classifier.momentum = cfg.momentum;
  lc.ehn.holdout_fraction = cfg.classifier_holdout;
  lc.correction.hidden = cfg.hidden;
  lc.correction.train = base_train(cfg, cfg.correction_epochs);
  lc.estimator = estimator_options(cfg);
  lc.seed = derive_seed(cfg.seed, "correction");
  return lc;
}

NsheConfig nshe_options(const ExperimentConfig& cfg, double tau) {
  NsheConfig n;
  n.tau = tau;
  n.m = cfg.m;
  n.gamma = cfg.gamma;
  n.hidden = cfg.hidden;
  n.train = base_train(cfg, cfg.nshe_epochs);
  if (cfg.final_learning_rate) n.train.learning_rate = *cfg.final_learning_rate;
  n.seed = derive_seed(cfg.seed, "nshe");
  return n;
}

// Runs `body` as the named phase: times it and tags failures with the name.
template <typename F>
auto phase(RunReport& report, std::string name, F&& body) {
  const auto start = std::chrono::steady_clock::now();
  auto finish = [&] {
    const std::chrono::duration<double> d = std::chrono::steady_clock::now() - start;
    report.timings.push_back({name, d.count()});
  };
  try {
    if constexpr (std::is_void_v<decltype(body())>) {
      body();
      finish();
    } else {
      auto result = body();
      finish();
      return result;
    }
  } catch (const ConfigError& e) {
    throw ConfigError(name + ": " + e.what());
  } catch (const PhaseError&) {
    throw;
  } catch (const std::exception& e) {
    throw PhaseError(name, e.what());
  }
}

void save_dynamics_csvs(const GroupDynamics& hard, const GroupDynamics& noisy,
                        const std::filesystem::path& dir) {
  {
    auto out = open_out(dir / "events.csv");
    out << "transition,group,learning,forgetting\n";
    for (const auto& [name, g] : {std::pair{"hard", &hard}, std::pair{"noisy", &noisy}}) {
      for (std::size_t t = 0; t < g->learning_by_transition.size(); ++t) {
        out << t + 1 << ',' << name << ',' << num(g->learning_by_transition[t]) << ','
            << num(g->forgetting_by_transition[t]) << '\n';
      }
    }
  }
  {
    auto out = open_out(dir / "event_totals.csv");
    out << "group,samples,learning_per_sample,forgetting_per_sample,events_per_sample,"
           "mean_abs_gradient\n";
    for (const auto& [name, g] : {std::pair{"hard", &hard}, std::pair{"noisy", &noisy}}) {
      out << name << ',' << g->samples << ',' << num(g->learning_per_sample) << ','
          << num(g->forgetting_per_sample) << ',' << num(g->events_per_sample) << ','
          << num(g->mean_abs_gradient) << '\n';
    }
  }
  {
    auto out = open_out(dir / "gradient_hist.csv");
    out << "bin_lo,bin_hi,group,frequency\n";
    for (const auto& [name, g] : {std::pair{"hard", &hard}, std::pair{"noisy", &noisy}}) {
      const std::size_t bins = g->gradient_histogram.size();
      for (std::size_t b = 0; b < bins; ++b) {
        out << num(static_cast<double>(b) / static_cast<double>(bins)) << ','
            << num(static_cast<double>(b + 1) / static_cast<double>(bins)) << ',' << name << ','
            << num(g->gradient_histogram[b]) << '\n';
      }
    }
  }
}

void save_ehn_summary_csv(const RunReport& report, const EhnDiagnostics& diag,
                          const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "metric,value\n";
  out << "classifier_train_rows," << diag.classifier_train_rows << '\n';
  out << "classifier_holdout_rows," << diag.classifier_holdout_rows << '\n';
  if (diag.classifier_holdout_accuracy) {
    out << "classifier_holdout_accuracy," << num(*diag.classifier_holdout_accuracy) << '\n';
  }
  out << "synthetic_clean_mean," << num(diag.synthetic_clean_mean) << '\n';
  out << "synthetic_noisy_mean," << num(diag.synthetic_noisy_mean) << '\n';
  if (report.noisy_set_purity) out << "noisy_set_purity," << num(*report.noisy_set_purity) << '\n';
  if (report.noisy_set_recall) out << "noisy_set_recall," << num(*report.noisy_set_recall) << '\n';
}

void save_baseline_csv(const RunReport& report, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "method,retained,retained_noisy\n";
  out << "post_process," << report.retained << ',' << *report.retained_noisy << '\n';
  out << "drop_by_mean," << report.retained << ',' << *report.baseline_retained_noisy << '\n';
}

}  // namespace

std::pair<Dataset, Dataset> prepare_data(const ExperimentConfig& cfg) {
  Dataset train;
  Dataset test;
  if (cfg.data_path.empty()) {
    Dataset all = make_gaussian_dataset(cfg.n_per_class + cfg.test_per_class, cfg.dims,
                                        cfg.classes, cfg.overlap, derive_seed(cfg.seed, "data"));
    std::tie(train, test) = split_per_class(all, cfg.test_per_class);
  } else {
    Dataset all = load_dataset(cfg.data_path);
    if (cfg.test_path.empty()) {
      std::tie(train, test) = split_per_class(all, cfg.test_per_class);
    } else {
      train = std::move(all);
      test = load_dataset(cfg.test_path);
      if (test.feature_count() != train.feature_count() || test.class_count != train.class_count) {
        throw ConfigError("data.test_path: shape does not match data.path");
      }
    }
  }
  if (cfg.noise_rho > 0.0) {
    if (!train.has_ground_truth()) {
      throw ConfigError("noise.rho: the training data has no clean labels to corrupt");
    }
    if (cfg.noise_rho > max_noise_ratio(cfg.noise_kind, train.class_count)) {
      throw ConfigError("noise.rho: exceeds the identifiable limit for this dataset");
    }
    train = inject_noise(train, {cfg.noise_kind, cfg.noise_rho, derive_seed(cfg.seed, "noise")});
  }
  return {std::move(train), std::move(test)};
}

RunReport run_pipeline(const ExperimentConfig& cfg) {
  validate_config(cfg);
  RunReport report;
  report.ablation = ablation_name(cfg);
  const bool write = !cfg.out.empty();
  const std::filesystem::path dir = cfg.out;

  try {
    if (write) {
      std::filesystem::create_directories(dir);
      auto out = open_out(dir / "config.resolved");
      out << render_config(cfg);
    }

    auto [train, test] = phase(report, "data", [&] { return prepare_data(cfg); });
    report.train_size = train.size();
    report.test_size = test.size();
    if (train.has_ground_truth()) report.injected_noise_ratio = train.noise_ratio();

    // Noise rate for tau_e and tau.
    phase(report, "estimate", [&] {
      if (const auto known = cfg.known_rho()) {
        report.rho_used = *known;
      } else {
        const NoiseEstimate est = estimate_noise_ratio(train, estimator_options(cfg));
        report.estimated_rho = est.estimate;
        report.rho_used = est.estimate;
        if (write) {
          auto out = open_out(dir / "noise_estimate.csv");
          out << "estimate,agreement,true_ratio\n"
              << num(est.estimate) << ',' << num(est.agreement) << ','
              << (est.true_ratio ? num(*est.true_ratio) : std::string()) << '\n';
        }
      }
    });
    report.tau_e = cfg.effective_tau_e(report.rho_used);
    report.tau = cfg.effective_tau(report.rho_used);

    Dataset cleaned = train;
    if (cfg.disable_correction) {
      // Raw noisy data goes straight to the final phase.
    } else if (cfg.disable_ehn) {
      phase(report, "correction", [&] {
        CorrectionModelConfig corr = correction_options(cfg, report.rho_used).correction;
        corr.seed = derive_seed(cfg.seed, "correction-all");
        const NetworkParameters model = train_on_all(train, corr);
        cleaned = relabel_all(train, model);
        for (std::size_t i = 0; i < train.size(); ++i) {
          report.relabeled += cleaned.labels[i] != train.labels[i] ? 1 : 0;
        }
        if (write) save_checkpoint(model, dir / "correction_model.ckpt");
      });
    } else {
      phase(report, "correction", [&] {
        const LabelCorrectionResult lc =
            run_label_correction(train, correction_options(cfg, report.rho_used));
        cleaned = lc.outcome.dataset;
        report.rounds = lc.rounds;
        const EHNPartition& part = lc.last_ehn.partition;
        report.easy = part.easy.size();
        report.hard = part.hard.size();
        report.noisy = part.noisy.size();
        report.dropped = lc.outcome.dropped.size();
        for (SampleAction a : lc.outcome.action) report.relabeled += a == SampleAction::relabeled;
        const EhnDiagnostics& diag = lc.last_ehn.diagnostics;
        report.ehn_holdout_accuracy = diag.classifier_holdout_accuracy;

        const Dataset& round_input = lc.last_round_input;
        if (round_input.has_ground_truth()) {
          const auto& mask = *round_input.noise_mask;
          std::size_t noisy_total = 0;
          std::size_t noisy_in_dn = 0;
          std::vector<std::size_t> hard_members;
          std::vector<std::size_t> noisy_members;
          for (std::size_t i = 0; i < round_input.size(); ++i) {
            const bool in_dn = part.group[i] == SampleGroup::noisy;
            if (mask[i]) {
              ++noisy_total;
              noisy_in_dn += in_dn;
              noisy_members.push_back(i);
            } else if (part.group[i] != SampleGroup::easy) {
              hard_members.push_back(i);
            }
          }
          if (report.noisy > 0) {
            report.noisy_set_purity =
                static_cast<double>(noisy_in_dn) / static_cast<double>(report.noisy);
          }
          if (noisy_total > 0) {
            report.noisy_set_recall =
                static_cast<double>(noisy_in_dn) / static_cast<double>(noisy_total);
          }
          report.hard_dynamics = group_dynamics(diag.history, hard_members);
          report.noisy_dynamics = group_dynamics(diag.history, noisy_members);

          const CorrectionOutcome base = baseline_drop_by_mean(
              round_input, diag.history, cleaned.size(), diag.first_model);
          report.retained_noisy = cleaned.noisy_count();
          report.baseline_retained_noisy = base.dataset.noisy_count();
        }

        if (write) {
          save_round_summary_csv(lc.rounds, dir / "rounds.csv");
          save_history_csv(diag.history, dir / "history.csv");
          save_history_csv(diag.synthetic_history, dir / "synthetic_history.csv");
          save_ehn_assignments_csv(round_input, lc.last_ehn, dir / "ehn_assignments.csv");
          if (diag.confusion) save_ehn_confusion_csv(lc.last_ehn, dir / "ehn_confusion.csv");
          save_ehn_summary_csv(report, diag, dir / "ehn_summary.csv");
          save_outcome_csv(train, lc.outcome, cfg.rounds == 1 ? &part : nullptr,
                           dir / "outcome.csv");
          if (report.hard_dynamics) {
            save_dynamics_csvs(*report.hard_dynamics, *report.noisy_dynamics, dir);
            save_baseline_csv(report, dir / "baseline.csv");
          }
          save_checkpoint(lc.last_correction_model, dir / "correction_model.ckpt");
        }
      });
    }
    report.retained = cleaned.size();
    if (cleaned.has_ground_truth() && !cleaned.labels.empty()) {
      report.final_noise_ratio = cleaned.noise_ratio();
    }

    const NetworkParameters model = phase(report, "train", [&] {
      const NsheConfig ncfg = nshe_options(cfg, report.tau);
      if (cfg.disable_nshe) return train_plain(cleaned, ncfg);
      NsheResult r = run_nshe(cleaned, ncfg, &test);
      if (write) save_nshe_log_csv(r.log, dir / "nshe_log.csv");
      return std::move(r.teacher);
    });

    phase(report, "evaluate", [&] {
      report.test = evaluate(forward(model, test.features), test.labels);
      if (write) {
        save_checkpoint(model, dir / "model.ckpt");
        save_metrics_csv(report.test, dir / "metrics.csv");
        save_roc_csv(report.test, dir / "roc.csv");
      }
    });
  } catch (const std::exception& e) {
    if (write) {
      auto out = open_out(dir / "report.txt");
      out << "status: failed\nerror: " << e.what() << '\n';
    }
    throw;
  }

  if (write) {
    save_report_txt(report, dir / "report.txt");
    auto out = open_out(dir / "timing.txt");
    for (const PhaseTiming& t : report.timings) out << t.phase << ' ' << t.seconds << " s\n";
  }
  return report;
}

void save_report_txt(const RunReport& r, const std::filesystem::path& path) {
  auto out = open_out(path);
  auto opt = [](const std::optional<double>& v) { return v ? num(*v) : std::string("n/a"); };
  out << "status: ok\n";
  out << "ablation: " << r.ablation << '\n';
  out << "train_size: " << r.train_size << '\n';
  out << "test_size: " << r.test_size << '\n';
  out << "injected_noise_ratio: " << opt(r.injected_noise_ratio) << '\n';
  out << "estimated_rho: " << opt(r.estimated_rho) << '\n';
  out << "rho_used: " << num(r.rho_used) << '\n';
  out << "tau_e: " << num(r.tau_e) << '\n';
  out << "tau: " << num(r.tau) << '\n';
  out << "easy: " << r.easy << '\n';
  out << "hard: " << r.hard << '\n';
  out << "noisy: " << r.noisy << '\n';
  out << "relabeled: " << r.relabeled << '\n';
  out << "dropped: " << r.dropped << '\n';
  out << "retained: " << r.retained << '\n';
  out << "final_noise_ratio: " << opt(r.final_noise_ratio) << '\n';
  out << "ehn_holdout_accuracy: " << opt(r.ehn_holdout_accuracy) << '\n';
  out << "noisy_set_purity: " << opt(r.noisy_set_purity) << '\n';
  out << "noisy_set_recall: " << opt(r.noisy_set_recall) << '\n';
  if (r.retained_noisy) {
    out << "retained_noisy: " << *r.retained_noisy << '\n';
    out << "baseline_retained_noisy: " << *r.baseline_retained_noisy << '\n';
  }
  if (r.hard_dynamics) {
    out << "hard_events_per_sample: " << num(r.hard_dynamics->events_per_sample) << '\n';
    out << "noisy_events_per_sample: " << num(r.noisy_dynamics->events_per_sample) << '\n';
  }
  out << "test_accuracy: " << num(r.test.accuracy) << '\n';
  out << "test_macro_precision: " << num(r.test.macro_precision) << '\n';
  out << "test_macro_recall: " << num(r.test.macro_recall) << '\n';
  out << "test_macro_f1: " << num(r.test.macro_f1) << '\n';
  out << "test_macro_auc: " << num(r.test.macro_auc) << '\n';
}

std::vector<std::string> sweep_axes() { return {"rho", "tau_e", "k", "m", "gamma", "tau"}; }

void apply_sweep_value(ExperimentConfig& cfg, std::string_view axis, double value) {
  const std::string v = shortest(value);
  if (axis == "rho") set_config_value(cfg, "noise.rho", v);
  else if (axis == "tau_e") set_config_value(cfg, "ehn.tau_e", v);
  else if (axis == "k") set_config_value(cfg, "ehn.k", v);
  else if (axis == "m") set_config_value(cfg, "nshe.m", v);
  else if (axis == "gamma") set_config_value(cfg, "nshe.gamma", v);
  else if (axis == "tau") set_config_value(cfg, "nshe.tau", v);
  else throw ConfigError("sweep axis '" + std::string(axis) + "' is not one of rho, tau_e, k, m, gamma, tau");
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& base, std::string_view axis,
                                std::span<const double> values, std::size_t seed_count,
                                int jobs) {
  if (values.empty()) throw ContractError("sweep: no values given");
  if (seed_count == 0) throw ContractError("sweep: seed count must be >= 1");

  std::vector<ExperimentConfig> runs;
  for (double value : values) {
    for (std::size_t j = 0; j < seed_count; ++j) {
      ExperimentConfig cfg = base;
      apply_sweep_value(cfg, axis, value);
      validate_config(cfg);
      cfg.seed = derive_seed(base.seed, "sweep", j);
      if (!base.out.empty()) {
        cfg.out = (std::filesystem::path(base.out) /
                   (std::string(axis) + "_" + shortest(value)) / ("seed_" + std::to_string(j)))
                      .string();
      }
      runs.push_back(std::move(cfg));
    }
  }

  std::vector<SweepRow> rows(runs.size());
  std::vector<std::exception_ptr> errors(runs.size());
  const long n = static_cast<long>(runs.size());
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, jobs))
  for (long i = 0; i < n; ++i) {
    try {
      const RunReport r = run_pipeline(runs[i]);
      rows[i] = {values[static_cast<std::size_t>(i) / seed_count], runs[i].seed, r.test.accuracy,
                 r.final_noise_ratio};
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

void save_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "value,seed,test_acc,final_noise_ratio\n";
  for (const SweepRow& r : rows) {
    out << shortest(r.value) << ',' << r.seed << ',' << num(r.test_accuracy) << ','
        << (r.final_noise_ratio ? num(*r.final_noise_ratio) : std::string()) << '\n';
  }
}

}  // namespace nlab
