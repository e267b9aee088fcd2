#include "csf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace csf {

Index MetricsReport::confusion_at(Index t, Index p) const {
  const Index k = static_cast<Index>(per_class.size());
  return confusion[static_cast<std::size_t>(t * k + p)];
}

double binary_auroc(const std::vector<double>& scores, const std::vector<int>& positive) {
  if (scores.size() != positive.size()) {
    throw std::invalid_argument("auroc: scores and labels differ in length");
  }
  const std::size_t n = scores.size();
  std::size_t pos = 0;
  for (int v : positive) pos += v != 0 ? 1 : 0;
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) {
    throw std::invalid_argument("auroc: needs at least one positive and one negative example");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Midranks: tied scores all get the mean of the rank range they span.
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mid;
    i = j + 1;
  }
  double pos_rank_sum = 0.0;
  for (std::size_t t = 0; t < n; ++t)
    if (positive[t] != 0) pos_rank_sum += rank[t];
  const double p = static_cast<double>(pos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double binary_auprc(const std::vector<double>& scores, const std::vector<int>& positive) {
  if (scores.size() != positive.size()) {
    throw std::invalid_argument("auprc: scores and labels differ in length");
  }
  const std::size_t n = scores.size();
  std::size_t pos = 0;
  for (int v : positive) pos += v != 0 ? 1 : 0;
  if (pos == 0) {
    throw std::invalid_argument("auprc: needs at least one positive example");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double area = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;  // group of tied scores enters together
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    for (std::size_t t = i; t <= j; ++t) {
      if (positive[order[t]] != 0)
        ++tp;
      else
        ++fp;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j + 1;
  }
  return area;
}

MetricsReport compute_metrics(const std::vector<Index>& labels, const Tensor& scores) {
  if (scores.rank() != 2) {
    throw std::invalid_argument("metrics: scores must be [B,K], got " +
                                shape_to_string(scores.shape()));
  }
  const Index B = scores.dim(0), K = scores.dim(1);
  if (static_cast<Index>(labels.size()) != B) {
    throw std::invalid_argument("metrics: got " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(B) + " score rows");
  }
  if (B < 1) throw std::invalid_argument("metrics: empty evaluation set");
  for (Index i = 0; i < B; ++i) {
    const Index y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= K) {
      throw std::invalid_argument("metrics: label " + std::to_string(y) + " out of range for " +
                                  std::to_string(K) + " classes");
    }
  }

  MetricsReport rep;
  rep.total = B;
  rep.confusion.assign(static_cast<std::size_t>(K * K), 0);
  std::vector<Index> predicted(static_cast<std::size_t>(B));
  for (Index i = 0; i < B; ++i) {
    Index best = 0;
    for (Index k = 1; k < K; ++k)
      if (scores.at(i, k) > scores.at(i, best)) best = k;
    predicted[static_cast<std::size_t>(i)] = best;
    ++rep.confusion[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)] * K + best)];
  }
  Index correct = 0;
  for (Index k = 0; k < K; ++k) correct += rep.confusion[static_cast<std::size_t>(k * K + k)];
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(B);

  double sum_p = 0.0, sum_r = 0.0, sum_f1 = 0.0, sum_roc = 0.0, sum_prc = 0.0;
  Index classes_present = 0, classes_ranked = 0;
  for (Index k = 0; k < K; ++k) {
    ClassMetrics cm;
    cm.label = k;
    Index tp = 0, fp = 0, fn = 0;
    for (Index t = 0; t < K; ++t) {
      if (t == k) continue;
      fp += rep.confusion[static_cast<std::size_t>(t * K + k)];
      fn += rep.confusion[static_cast<std::size_t>(k * K + t)];
    }
    tp = rep.confusion[static_cast<std::size_t>(k * K + k)];
    cm.support = tp + fn;
    cm.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    cm.recall = cm.support > 0 ? static_cast<double>(tp) / static_cast<double>(cm.support) : 0.0;
    cm.f1 = cm.precision + cm.recall > 0.0
                ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall)
                : 0.0;
    if (cm.support == 0) {
      warn("metrics: class " + std::to_string(k) +
           " absent from the evaluation set; excluded from macro averages");
    } else {
      ++classes_present;
      sum_p += cm.precision;
      sum_r += cm.recall;
      sum_f1 += cm.f1;
      if (cm.support < B) {
        std::vector<double> cls_scores(static_cast<std::size_t>(B));
        std::vector<int> cls_pos(static_cast<std::size_t>(B));
        for (Index i = 0; i < B; ++i) {
          cls_scores[static_cast<std::size_t>(i)] = scores.at(i, k);
          cls_pos[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(i)] == k ? 1 : 0;
        }
        cm.auroc = binary_auroc(cls_scores, cls_pos);
        cm.auprc = binary_auprc(cls_scores, cls_pos);
        ++classes_ranked;
        sum_roc += cm.auroc;
        sum_prc += cm.auprc;
      } else {
        warn("metrics: class " + std::to_string(k) +
             " has no negative examples; excluded from AUROC/AUPRC macro averages");
      }
    }
    rep.per_class.push_back(cm);
  }
  if (classes_present == 0) {
    throw std::runtime_error("metrics: no class present in the evaluation set");
  }
  rep.precision = sum_p / static_cast<double>(classes_present);
  rep.recall = sum_r / static_cast<double>(classes_present);
  rep.f1 = sum_f1 / static_cast<double>(classes_present);
  if (classes_ranked > 0) {
    rep.auroc = sum_roc / static_cast<double>(classes_ranked);
    rep.auprc = sum_prc / static_cast<double>(classes_ranked);
  }
  return rep;
}

AggregateStat aggregate(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("aggregate: no values");
  AggregateStat stat;
  for (double v : values) stat.mean += v;
  stat.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - stat.mean) * (v - stat.mean);
    stat.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return stat;
}

std::string format_mean_std(const AggregateStat& stat) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f ± %.2f", stat.mean * 100.0, stat.stddev * 100.0);
  return std::string(buf);
}

}  // namespace csf
