#pragma once

#include <string>
#include <vector>

#include "csf/common.hpp"
#include "csf/tensor.hpp"

namespace csf {

// All values in [0,1]; reports multiply by 100 at formatting time only.
struct ClassMetrics {
  Index label = 0;
  Index support = 0;  // true members in the evaluation set
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double auroc = 0.0;
  double auprc = 0.0;
};

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;  // macro averages over classes present in y_true
  double recall = 0.0;
  double f1 = 0.0;
  double auroc = 0.0;
  double auprc = 0.0;
  std::vector<ClassMetrics> per_class;       // one entry per class 0..K-1
  std::vector<Index> confusion;              // row-major K*K, [true][predicted]
  Index total = 0;

  Index confusion_at(Index t, Index p) const;
};

// Macro one-vs-rest metrics from softmax scores. scores: [B,K] rows summing
// to ~1; labels in 0..K-1. Classes absent from `labels` (or without both a
// positive and a negative example, for the ranking metrics) are excluded
// from the macro averages with a warning.
MetricsReport compute_metrics(const std::vector<Index>& labels, const Tensor& scores);

// Area under the ROC curve by midranks: tied scores contribute 1/2, which
// makes the result equal the Mann-Whitney pair-counting statistic exactly.
double binary_auroc(const std::vector<double>& scores, const std::vector<int>& positive);

// Area under the precision-recall curve by step interpolation: sum over
// distinct descending score thresholds of (recall gain) * (precision at the
// threshold). No linear interpolation between points.
double binary_auprc(const std::vector<double>& scores, const std::vector<int>& positive);

// Sample mean and standard deviation (n-1 denominator; 0 when n == 1).
struct AggregateStat {
  double mean = 0.0;
  double stddev = 0.0;
};

AggregateStat aggregate(const std::vector<double>& values);

// "94.44 ± 1.93": value*100, two decimals.
std::string format_mean_std(const AggregateStat& stat);

}  // namespace csf
