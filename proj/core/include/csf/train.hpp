#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "csf/checkpoint.hpp"
#include "csf/data.hpp"
#include "csf/metrics.hpp"
#include "csf/model.hpp"

namespace csf {

// One line of the per-epoch CSV. Losses are means over the epoch's steps;
// wall_seconds is the only timing value and lives in its own column so logs
// can be compared with it masked out.
struct EpochLogRow {
  Index epoch = 0;  // 1-based
  double total_loss = 0.0;
  double ce_loss = 0.0;
  double ntxent_loss = 0.0;
  double val_accuracy = 0.0;
  double val_f1 = 0.0;
  double wall_seconds = 0.0;
};

std::string epoch_log_header();                      // "epoch,total_loss,..."
std::string format_epoch_row(const EpochLogRow& r);  // excluding newline

// Batched eval-mode inference over the whole set; metrics from softmax
// scores. Empty dataset raises.
MetricsReport evaluate(Model& model, const EEGDataset& dataset, Index batch_size);

struct TrainResult {
  std::vector<EpochLogRow> log;  // rows produced by this call
  MetricsReport test;            // from the best-validation-F1 snapshot
  double best_val_f1 = -1.0;
  Index best_epoch = -1;
  Index parameter_count = 0;
};

struct TrainOptions {
  Index epochs = 0;          // 0 = model config's epoch count
  std::string run_dir;       // artifacts land here; "" disables writing
  std::string resume_from;   // checkpoint path; "" starts fresh
  bool verbose = false;      // per-epoch progress on stderr
  // Called after each epoch with the live model; returning true stops
  // training early (the best snapshot and test report are still produced).
  std::function<bool(Model&, const EpochLogRow&)> after_epoch;
};

// Full training loop: label-stratified shuffled batches, combined
// cross-entropy + contrastive loss, Adam, per-epoch validation, retention
// of the highest-validation-F1 snapshot, and a final test evaluation with
// that snapshot restored. Splits must be non-empty and subject-disjoint
// (verified on every call). With run_dir set, writes epoch_log.csv,
// checkpoint.csf (every epoch), and report.csv.
TrainResult train(Model& model, const DatasetSplits& splits, const TrainOptions& options);

// Raises unless train/val/test subject sets are pairwise disjoint and
// every split is non-empty.
void verify_subject_disjoint(const DatasetSplits& splits);

struct SeedRun {
  std::uint64_t seed = 0;
  TrainResult result;
};

// One run per seed under <run_dir>/seed<It>/; writes summary.csv with
// per-seed test metrics plus mean/std rows.
std::vector<SeedRun> train_over_seeds(const ModelConfig& config, AblationVariant variant,
                                      const DatasetSplits& splits, const TrainOptions& options);

// 4 variants x all seeds. Returns the table as CSV text: one row per
// variant, six "mean ± std" metric cells in report column order.
std::string ablation_table(const ModelConfig& config, const DatasetSplits& splits,
                           const TrainOptions& options,
                           std::vector<std::vector<SeedRun>>* runs_out = nullptr);

// CSV: header then one row per metric-report in column order
// accuracy,precision,recall,f1,auroc,auprc; values are raw fractions.
std::string metrics_csv_row(const MetricsReport& report);
std::string metrics_csv_header();

// Pre-head pooled embeddings of every segment projected onto their top-2
// principal components. CSV columns: subject_id,true_label,predicted_label,
// pc1,pc2. Needs at least 2 segments.
void export_embeddings(Model& model, const EEGDataset& dataset, Index batch_size,
                       const std::string& csv_path);

}  // namespace csf
