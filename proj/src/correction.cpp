#include "nlab/correction.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "nlab/error.hpp"
#include "nlab/rng.hpp"

namespace nlab {

const char* to_string(SampleAction a) {
  switch (a) {
    case SampleAction::kept: return "kept";
    case SampleAction::relabeled: return "relabeled";
    case SampleAction::dropped: return "dropped";
  }
  return "?";
}

namespace {

std::vector<std::size_t> dims_for(const Dataset& ds, const std::vector<std::size_t>& hidden) {
  std::vector<std::size_t> dims{ds.feature_count()};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(static_cast<std::size_t>(ds.class_count));
  return dims;
}

NetworkParameters train_subset(const Dataset& ds, const std::vector<std::size_t>& positions,
                               const CorrectionModelConfig& cfg, const IdBatchHook& on_batch) {
  const Dataset train = ds.subset(positions);
  std::vector<int> present(static_cast<std::size_t>(ds.class_count), 0);
  for (int y : train.labels) present[static_cast<std::size_t>(y)] = 1;
  if (std::count(present.begin(), present.end(), 1) < 2) {
    throw DegenerateDataError("correction model: training subset has fewer than two classes");
  }
  TrainOptions opts = cfg.train;
  opts.loss = LossConfig::cross_entropy();
  opts.shuffle_seed = derive_seed(cfg.seed, "correction-shuffle");
  BatchHook hook;
  if (on_batch) {
    hook = [&](std::span<const std::size_t> rows) {
      std::vector<std::int64_t> ids;
      for (std::size_t r : rows) ids.push_back(train.ids[r]);
      on_batch(ids);
    };
  }
  return fit(init_network(dims_for(ds, cfg.hidden), derive_seed(cfg.seed, "correction-init")),
             train.features, train.labels, opts, {}, {}, hook);
}

std::vector<std::size_t> all_positions(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = i;
  return out;
}

}  // namespace

NetworkParameters train_correction_model(const Dataset& ds, const EHNPartition& partition,
                                         const CorrectionModelConfig& cfg,
                                         const IdBatchHook& on_batch) {
  if (partition.size() != ds.size()) throw ContractError("partition does not cover dataset");
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (partition.group[i] != SampleGroup::noisy) positions.push_back(i);
  }
  if (positions.empty()) throw DegenerateDataError("correction model: no easy or hard samples");
  return train_subset(ds, positions, cfg, on_batch);
}

NetworkParameters train_on_all(const Dataset& ds, const CorrectionModelConfig& cfg,
                               const IdBatchHook& on_batch) {
  return train_subset(ds, all_positions(ds.size()), cfg, on_batch);
}

PseudoLabels generate_pseudo_labels(const NetworkParameters& model, const Dataset& ds,
                                    const EHNPartition& partition) {
  if (partition.size() != ds.size()) throw ContractError("partition does not cover dataset");
  std::vector<std::size_t> positions;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (partition.group[i] != SampleGroup::easy) positions.push_back(i);
  }
  PseudoLabels out;
  if (positions.empty()) return out;
  const std::vector<int> pred = predict(model, gather_rows(ds.features, positions));
  for (std::size_t k = 0; k < positions.size(); ++k) out.by_id.emplace(ds.ids[positions[k]], pred[k]);
  return out;
}

CorrectionOutcome post_process(const Dataset& ds, const EHNPartition& partition,
                               const PseudoLabels& pseudo) {
  if (partition.size() != ds.size()) throw ContractError("partition does not cover dataset");
  std::size_t expected = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (partition.group[i] == SampleGroup::easy) continue;
    ++expected;
    if (!pseudo.by_id.contains(ds.ids[i])) {
      throw ContractError("post_process: no pseudo-label for sample " + std::to_string(ds.ids[i]));
    }
  }
  if (expected != pseudo.by_id.size()) {
    throw ContractError("post_process: pseudo-labels cover samples outside hard and noisy sets");
  }

  CorrectionOutcome out;
  out.ids = ds.ids;
  out.old_labels = ds.labels;
  out.new_labels = ds.labels;
  out.action.assign(ds.size(), SampleAction::kept);
  std::vector<std::size_t> retained;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const SampleGroup g = partition.group[i];
    if (g == SampleGroup::easy) {
      retained.push_back(i);
      continue;
    }
    const int y = ds.labels[i];
    const int pseudo_label = pseudo.by_id.at(ds.ids[i]);
    const bool agree = y == pseudo_label;
    if ((agree && g == SampleGroup::noisy) || (!agree && g == SampleGroup::hard)) {
      out.action[i] = SampleAction::dropped;
      out.dropped.push_back(ds.ids[i]);
    } else {
      out.new_labels[i] = pseudo_label;
      out.action[i] = agree ? SampleAction::kept : SampleAction::relabeled;
      retained.push_back(i);
    }
  }
  std::sort(out.dropped.begin(), out.dropped.end());
  Dataset relabeled = ds.with_labels(out.new_labels);
  out.dataset = relabeled.subset(retained);
  return out;
}

Dataset relabel_all(const Dataset& ds, const NetworkParameters& model) {
  return ds.with_labels(predict(model, ds.features));
}

LabelCorrectionResult run_label_correction(const Dataset& ds, const LabelCorrectionConfig& cfg) {
  if (cfg.rounds < 1) throw ConfigError("label correction: rounds must be >= 1");
  ds.validate();
  LabelCorrectionResult result;
  Dataset current = ds;
  for (int round = 1; round <= cfg.rounds; ++round) {
    RoundSummary summary;
    summary.round = round;
    if (current.has_ground_truth()) summary.noise_before = current.noise_ratio();

    double rho = 0.0;
    if (round == 1 && cfg.rho) {
      rho = *cfg.rho;
    } else {
      NoiseEstimatorOptions est = cfg.estimator;
      est.seed = derive_seed(cfg.seed, "round-estimate", static_cast<std::uint64_t>(round));
      rho = estimate_noise_ratio(current, est).estimate;
      summary.estimated_rho = rho;
    }
    summary.rho_used = rho;
    summary.tau_e = cfg.tau_e ? *cfg.tau_e : easy_ratio(rho);

    EhnConfig ehn = cfg.ehn;
    ehn.tau_e = summary.tau_e;
    ehn.rho_hat = std::min(rho, max_noise_ratio(NoiseKind::symmetric, current.class_count));
    ehn.seed = derive_seed(cfg.seed, "round-ehn", static_cast<std::uint64_t>(round));
    EhnResult ehn_result = run_ehn(current, ehn);
    summary.easy = ehn_result.partition.easy.size();
    summary.hard = ehn_result.partition.hard.size();
    summary.noisy = ehn_result.partition.noisy.size();

    CorrectionModelConfig corr = cfg.correction;
    corr.seed = derive_seed(cfg.seed, "round-correction", static_cast<std::uint64_t>(round));
    NetworkParameters model = train_correction_model(current, ehn_result.partition, corr);
    const PseudoLabels pseudo = generate_pseudo_labels(model, current, ehn_result.partition);

    result.last_round_input = current;
    if (round < cfg.rounds) {
      // Intermediate rounds only relabel; nothing is dropped until the end.
      std::vector<int> labels = current.labels;
      for (std::size_t i = 0; i < current.size(); ++i) {
        const auto it = pseudo.by_id.find(current.ids[i]);
        if (it != pseudo.by_id.end() && it->second != labels[i]) {
          labels[i] = it->second;
          ++summary.relabeled;
        }
      }
      current = current.with_labels(std::move(labels));
      if (current.has_ground_truth()) summary.noise_after = current.noise_ratio();
      summary.retained = current.size();
    } else {
      result.outcome = post_process(current, ehn_result.partition, pseudo);
      for (SampleAction a : result.outcome.action) {
        summary.relabeled += a == SampleAction::relabeled ? 1 : 0;
      }
      if (result.outcome.dataset.has_ground_truth()) {
        summary.noise_after = result.outcome.dataset.noise_ratio();
      }
      summary.retained = result.outcome.dataset.size();
      result.last_ehn = std::move(ehn_result);
      result.last_correction_model = std::move(model);
    }
    result.rounds.push_back(summary);
  }
  // Report labels relative to the caller's dataset, not the last round's.
  result.outcome.old_labels = ds.labels;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (result.outcome.action[i] == SampleAction::dropped) continue;
    result.outcome.action[i] = result.outcome.new_labels[i] == ds.labels[i]
                                   ? SampleAction::kept
                                   : SampleAction::relabeled;
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (result.outcome.action[i] == SampleAction::dropped) result.outcome.new_labels[i] = ds.labels[i];
  }
  return result;
}

CorrectionOutcome baseline_drop_by_mean(const Dataset& ds, const TrainingHistory& hist,
                                        std::size_t keep_count, const NetworkParameters& model) {
  if (keep_count > ds.size()) throw ContractError("drop-by-mean: keep_count exceeds dataset size");
  if (hist.sample_count() != ds.size()) throw DimensionError("drop-by-mean: history not aligned");
  const Dataset relabeled = relabel_all(ds, model);
  std::vector<std::size_t> order = rank_by_mean(hist);
  std::vector<bool> keep(ds.size(), false);
  for (std::size_t k = 0; k < keep_count; ++k) keep[order[k]] = true;

  CorrectionOutcome out;
  out.ids = ds.ids;
  out.old_labels = ds.labels;
  out.new_labels = relabeled.labels;
  out.action.resize(ds.size());
  std::vector<std::size_t> retained;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (!keep[i]) {
      out.action[i] = SampleAction::dropped;
      out.new_labels[i] = ds.labels[i];
      out.dropped.push_back(ds.ids[i]);
    } else {
      out.action[i] = relabeled.labels[i] == ds.labels[i] ? SampleAction::kept : SampleAction::relabeled;
      retained.push_back(i);
    }
  }
  std::sort(out.dropped.begin(), out.dropped.end());
  out.dataset = relabeled.subset(retained);
  return out;
}

void save_outcome_csv(const Dataset& original, const CorrectionOutcome& outcome,
                      const EHNPartition* partition, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << "id,action,old_label,new_label,partition,true_noisy\n";
  for (std::size_t i = 0; i < outcome.ids.size(); ++i) {
    out << outcome.ids[i] << ',' << to_string(outcome.action[i]) << ',' << outcome.old_labels[i]
        << ',' << outcome.new_labels[i] << ',';
    if (partition) out << to_string(partition->group[i]);
    out << ',';
    if (original.clean_labels) {
      // Noisy with respect to the label the sample ends up with.
      out << (outcome.new_labels[i] != (*original.clean_labels)[i] ? 1 : 0);
    }
    out << '\n';
  }
}

void save_round_summary_csv(const std::vector<RoundSummary>& rounds,
                            const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << "round,est_rho,noise_ratio_D,noise_ratio_Do\n";
  char buf[32];
  auto put = [&](const std::optional<double>& v) {
    if (v) {
      std::snprintf(buf, sizeof buf, "%.10g", *v);
      out << buf;
    }
  };
  for (const RoundSummary& r : rounds) {
    out << r.round << ',';
    put(r.rho_used);
    out << ',';
    put(r.noise_before);
    out << ',';
    put(r.noise_after);
    out << '\n';
  }
}

}  // namespace nlab
