#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "nlab/matrix.hpp"

namespace nlab {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

// One-vs-rest counts for `positive_class`.
ConfusionCounts confusion(std::span<const int> preds, std::span<const int> labels,
                          int positive_class);

// A ratio whose denominator may be zero; 0/0 is reported as 0 with
// `degenerate` set.
struct MetricValue {
  double value = 0.0;
  bool degenerate = false;
};

MetricValue accuracy(const ConfusionCounts& c);
MetricValue precision(const ConfusionCounts& c);
MetricValue recall(const ConfusionCounts& c);
MetricValue f1_score(const ConfusionCounts& c);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocResult {
  std::vector<RocPoint> curve;  // (0,0) ... (1,1)
  double auc = 0.0;
};

// Threshold sweep over the distinct scores with "score >= t is positive";
// area by the trapezoidal rule. Throws DegenerateDataError unless both
// classes are present.
RocResult roc_auc(std::span<const double> scores, std::span<const bool> is_positive);

double macro_average(std::span<const double> per_class);

struct ClassificationReport {
  double accuracy = 0.0;
  std::vector<double> precision;  // per class
  std::vector<double> recall;
  std::vector<double> f1;
  std::vector<double> auc;
  std::vector<RocResult> roc;
  std::vector<bool> degenerate;  // any 0/0 in that class's metrics
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double macro_auc = 0.0;
};

// One-vs-rest metrics on softmax outputs, macro-averaged over classes.
ClassificationReport evaluate(const Matrix& probs, std::span<const int> labels);

// `metric,class,value`; class is "macro" for the averages.
void save_metrics_csv(const ClassificationReport& report, const std::filesystem::path& path);
// `class,fpr,tpr`
void save_roc_csv(const ClassificationReport& report, const std::filesystem::path& path);

}  // namespace nlab
