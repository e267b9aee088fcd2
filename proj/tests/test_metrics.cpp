// Classification metrics: confusion bookkeeping, macro averaging rules, and
// the ranking metrics against brute-force pair counting.

#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "csf/metrics.hpp"
#include "csf/rng.hpp"
#include "csf/tensor.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using csf::Index;
using csf::Tensor;

namespace {

// One-hot-ish score rows putting probability `p` on `hot`.
Tensor scores_for(const std::vector<Index>& hot, Index K, double p = 0.9) {
  const Index B = static_cast<Index>(hot.size());
  Tensor s = Tensor::full({B, K}, (1.0 - p) / static_cast<double>(K - 1));
  for (Index i = 0; i < B; ++i) s.at(i, hot[static_cast<std::size_t>(i)]) = p;
  return s;
}

}  // namespace

TEST_CASE("perfect predictions score 1 everywhere") {
  const std::vector<Index> labels = {0, 1, 2, 0, 1, 2};
  const csf::MetricsReport rep = csf::compute_metrics(labels, scores_for(labels, 3));
  CHECK(rep.accuracy == 1.0);
  CHECK(rep.precision == 1.0);
  CHECK(rep.recall == 1.0);
  CHECK(rep.f1 == 1.0);
  CHECK(rep.auroc == 1.0);
  CHECK(rep.auprc == 1.0);
  CHECK(rep.total == 6);
  for (Index k = 0; k < 3; ++k) {
    CHECK(rep.confusion_at(k, k) == 2);
    CHECK(rep.per_class[static_cast<std::size_t>(k)].support == 2);
    CHECK(rep.per_class[static_cast<std::size_t>(k)].f1 == 1.0);
  }
}

TEST_CASE("confusion matrix indexes [true][predicted]") {
  // Two class-0 samples predicted as 1; one class-1 sample predicted as 1.
  const std::vector<Index> labels = {0, 0, 1};
  const std::vector<Index> preds = {1, 1, 1};
  const csf::MetricsReport rep = csf::compute_metrics(labels, scores_for(preds, 2));
  CHECK(rep.confusion_at(0, 1) == 2);
  CHECK(rep.confusion_at(1, 1) == 1);
  CHECK(rep.confusion_at(0, 0) == 0);
  CHECK(rep.accuracy == doctest::Approx(1.0 / 3.0));
  // class 1: precision 1/3, recall 1; class 0: precision 0, recall 0
  CHECK(rep.per_class[1].precision == doctest::Approx(1.0 / 3.0));
  CHECK(rep.per_class[1].recall == 1.0);
  CHECK(rep.per_class[0].precision == 0.0);
  CHECK(rep.per_class[0].recall == 0.0);
  // macro precision (1/3 + 0)/2, F1 per class is the harmonic mean
  CHECK(rep.precision == doctest::Approx(1.0 / 6.0));
  const double f1_1 = 2.0 * (1.0 / 3.0) * 1.0 / (1.0 / 3.0 + 1.0);
  CHECK(rep.per_class[1].f1 == doctest::Approx(f1_1));
  CHECK(rep.f1 == doctest::Approx(f1_1 / 2.0));
}

TEST_CASE("hand-computed six-sample ranking fixture") {
  const std::vector<double> scores = {0.9, 0.8, 0.7, 0.6, 0.5, 0.4};
  const std::vector<int> positive = {1, 0, 1, 1, 0, 0};
  CHECK(csf::binary_auroc(scores, positive) == doctest::Approx(7.0 / 9.0).epsilon(1e-12));
  CHECK(csf::binary_auprc(scores, positive) == doctest::Approx(29.0 / 36.0).epsilon(1e-12));
  CHECK(oracle::auroc_paircount(scores, positive) == doctest::Approx(7.0 / 9.0));
  CHECK(oracle::auprc_sweep(scores, positive) == doctest::Approx(29.0 / 36.0));
}

TEST_CASE("ranking metrics agree with brute force, ties included") {
  csf::Rng rng(61);
  for (int round = 0; round < 20; ++round) {
    CAPTURE(round);
    const Index n = 30;
    std::vector<double> scores(static_cast<std::size_t>(n));
    std::vector<int> positive(static_cast<std::size_t>(n));
    bool has_pos = false, has_neg = false;
    for (Index i = 0; i < n; ++i) {
      // Quantized scores force plenty of ties.
      scores[static_cast<std::size_t>(i)] =
          static_cast<double>(rng.bounded(8)) / 8.0;
      positive[static_cast<std::size_t>(i)] = rng.bounded(2) == 1 ? 1 : 0;
      has_pos |= positive[static_cast<std::size_t>(i)] == 1;
      has_neg |= positive[static_cast<std::size_t>(i)] == 0;
    }
    if (!has_pos || !has_neg) continue;
    CHECK(csf::binary_auroc(scores, positive) ==
          doctest::Approx(oracle::auroc_paircount(scores, positive)).epsilon(1e-12));
    CHECK(csf::binary_auprc(scores, positive) ==
          doctest::Approx(oracle::auprc_sweep(scores, positive)).epsilon(1e-12));
  }

  // All-tied scores: AUROC is exactly 1/2 by the midrank convention.
  const std::vector<double> flat(10, 0.5);
  std::vector<int> pos(10, 0);
  for (int i = 0; i < 4; ++i) pos[static_cast<std::size_t>(i)] = 1;
  CHECK(csf::binary_auroc(flat, pos) == 0.5);
}

TEST_CASE("absent classes are excluded from macro averages with a warning") {
  testutil::WarnCapture warnings;
  const std::vector<Index> labels = {0, 1, 0, 1};  // class 2 never appears
  const csf::MetricsReport rep = csf::compute_metrics(labels, scores_for(labels, 3));
  CHECK(warnings.any_contains("class 2"));
  CHECK(warnings.any_contains("absent"));
  CHECK(rep.precision == 1.0);  // averaged over classes 0 and 1 only
  CHECK(rep.f1 == 1.0);
  CHECK(rep.per_class.size() == 3);
  CHECK(rep.per_class[2].support == 0);
}

TEST_CASE("a class without negatives is excluded from the ranking averages") {
  testutil::WarnCapture warnings;
  const std::vector<Index> labels = {0, 0, 0};
  const csf::MetricsReport rep = csf::compute_metrics(labels, scores_for(labels, 2));
  CHECK(warnings.any_contains("no negative examples"));
  CHECK(rep.accuracy == 1.0);
  CHECK(rep.auroc == 0.0);  // no class could be ranked
  CHECK(rep.auprc == 0.0);
}

TEST_CASE("metrics input validation") {
  CHECK_THROWS_AS(csf::compute_metrics({0, 3}, scores_for({0, 1}, 2)), std::invalid_argument);
  CHECK_THROWS_AS(csf::compute_metrics({0}, scores_for({0, 1}, 2)), std::invalid_argument);
  CHECK_THROWS_AS(csf::compute_metrics({}, Tensor::zeros({0, 2})), std::invalid_argument);
}

TEST_CASE("aggregate uses the sample standard deviation") {
  const csf::AggregateStat one = csf::aggregate({0.5});
  CHECK(one.mean == 0.5);
  CHECK(one.stddev == 0.0);

  const csf::AggregateStat st = csf::aggregate({0.92, 0.96, 0.94, 0.95, 0.93});
  CHECK(st.mean == doctest::Approx(0.94).epsilon(1e-12));
  // n-1 denominator: var = (4+4+0+1+1)e-4 / 4
  CHECK(st.stddev == doctest::Approx(std::sqrt(2.5e-4)).epsilon(1e-9));

  CHECK(csf::format_mean_std({0.9444, 0.0193}) == "94.44 ± 1.93");
  CHECK(csf::format_mean_std({1.0, 0.0}) == "100.00 ± 0.00");
  CHECK_THROWS_AS(csf::aggregate({}), std::invalid_argument);
}
