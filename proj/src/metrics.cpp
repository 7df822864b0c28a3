#include "nlab/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numeric>

#include "nlab/error.hpp"
#include "nlab/netcore.hpp"

namespace nlab {

ConfusionCounts confusion(std::span<const int> preds, std::span<const int> labels,
                          int positive_class) {
  if (preds.size() != labels.size()) throw ContractError("confusion: length mismatch");
  ConfusionCounts c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool pred_pos = preds[i] == positive_class;
    const bool true_pos = labels[i] == positive_class;
    if (pred_pos && true_pos) ++c.tp;
    else if (pred_pos) ++c.fp;
    else if (true_pos) ++c.fn;
    else ++c.tn;
  }
  return c;
}

namespace {
MetricValue ratio(std::size_t num, std::size_t den) {
  if (den == 0) return {0.0, true};
  return {static_cast<double>(num) / static_cast<double>(den), false};
}
}  // namespace

MetricValue accuracy(const ConfusionCounts& c) { return ratio(c.tp + c.tn, c.total()); }
MetricValue precision(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fp); }
MetricValue recall(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fn); }

MetricValue f1_score(const ConfusionCounts& c) {
  const MetricValue p = precision(c);
  const MetricValue r = recall(c);
  const double den = p.value + r.value;
  if (den == 0.0) return {0.0, true};
  return {2.0 * p.value * r.value / den, p.degenerate || r.degenerate};
}

RocResult roc_auc(std::span<const double> scores, std::span<const bool> is_positive) {
  if (scores.size() != is_positive.size()) throw ContractError("roc_auc: length mismatch");
  const auto positives =
      static_cast<std::size_t>(std::count(is_positive.begin(), is_positive.end(), true));
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw DegenerateDataError("roc_auc: both classes must be present");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocResult out;
  out.curve.push_back({0.0, 0.0});
  std::size_t tp = 0;
  std::size_t fp = 0;
  double area = 0.0;
  for (std::size_t k = 0; k < order.size();) {
    const double threshold = scores[order[k]];
    // Everything scoring >= threshold is now predicted positive.
    while (k < order.size() && scores[order[k]] == threshold) {
      (is_positive[order[k]] ? tp : fp) += 1;
      ++k;
    }
    const RocPoint next{static_cast<double>(fp) / static_cast<double>(negatives),
                        static_cast<double>(tp) / static_cast<double>(positives)};
    const RocPoint& prev = out.curve.back();
    area += (next.fpr - prev.fpr) * (next.tpr + prev.tpr) / 2.0;
    out.curve.push_back(next);
  }
  out.auc = area;
  return out;
}

double macro_average(std::span<const double> per_class) {
  if (per_class.empty()) throw ContractError("macro_average: no class values");
  return std::accumulate(per_class.begin(), per_class.end(), 0.0) /
         static_cast<double>(per_class.size());
}

ClassificationReport evaluate(const Matrix& probs, std::span<const int> labels) {
  if (probs.rows != labels.size()) throw ContractError("evaluate: probs/labels mismatch");
  const std::vector<int> preds = argmax_rows(probs);
  ClassificationReport rep;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += preds[i] == labels[i] ? 1 : 0;
  rep.accuracy = labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(labels.size());

  std::vector<double> scores(probs.rows);
  std::vector<bool> pos_flags(probs.rows);
  for (std::size_t c = 0; c < probs.cols; ++c) {
    const ConfusionCounts counts = confusion(preds, labels, static_cast<int>(c));
    const MetricValue p = precision(counts);
    const MetricValue r = recall(counts);
    const MetricValue f = f1_score(counts);
    rep.precision.push_back(p.value);
    rep.recall.push_back(r.value);
    rep.f1.push_back(f.value);
    for (std::size_t i = 0; i < probs.rows; ++i) {
      scores[i] = probs(i, c);
      pos_flags[i] = labels[i] == static_cast<int>(c);
    }
    // vector<bool> has no contiguous storage; copy into a plain array.
    std::unique_ptr<bool[]> flags(new bool[probs.rows]);
    std::copy(pos_flags.begin(), pos_flags.end(), flags.get());
    bool degenerate = p.degenerate || r.degenerate || f.degenerate;
    try {
      rep.roc.push_back(roc_auc(scores, std::span<const bool>(flags.get(), probs.rows)));
      rep.auc.push_back(rep.roc.back().auc);
    } catch (const DegenerateDataError&) {
      rep.roc.push_back({});
      rep.auc.push_back(0.0);
      degenerate = true;
    }
    rep.degenerate.push_back(degenerate);
  }
  rep.macro_precision = macro_average(rep.precision);
  rep.macro_recall = macro_average(rep.recall);
  rep.macro_f1 = macro_average(rep.f1);
  rep.macro_auc = macro_average(rep.auc);
  return rep;
}

namespace {
std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}
}  // namespace

void save_metrics_csv(const ClassificationReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << "metric,class,value\n";
  out << "acc,all," << fmt(report.accuracy) << '\n';
  for (std::size_t c = 0; c < report.precision.size(); ++c) {
    out << "precision," << c << ',' << fmt(report.precision[c]) << '\n';
    out << "recall," << c << ',' << fmt(report.recall[c]) << '\n';
    out << "f1," << c << ',' << fmt(report.f1[c]) << '\n';
    out << "auc," << c << ',' << fmt(report.auc[c]) << '\n';
  }
  out << "precision,macro," << fmt(report.macro_precision) << '\n';
  out << "recall,macro," << fmt(report.macro_recall) << '\n';
  out << "f1,macro," << fmt(report.macro_f1) << '\n';
  out << "auc,macro," << fmt(report.macro_auc) << '\n';
}

void save_roc_csv(const ClassificationReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << "class,fpr,tpr\n";
  for (std::size_t c = 0; c < report.roc.size(); ++c) {
    for (const RocPoint& p : report.roc[c].curve) {
      out << c << ',' << fmt(p.fpr) << ',' << fmt(p.tpr) << '\n';
    }
  }
}

}  // namespace nlab
