#include "csf/train.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "csf/loss.hpp"
#include "csf/optim.hpp"
#include "csf/pca.hpp"
#include "csf/rng.hpp"

namespace csf {

namespace {

namespace fs = std::filesystem;

std::string format_wall(double seconds) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", seconds);
  return buf;
}

void append_line(const std::string& path, const std::string& line) {
  std::ofstream os(path, std::ios::app);
  if (!os) throw std::runtime_error("train: cannot open " + path + " for appending");
  os << line << "\n";
}

// Per-class shuffles interleaved round-robin, so consecutive windows of the
// order mix labels and batches almost always contain positive pairs.
std::vector<Index> stratified_order(const EEGDataset& train, Index classes, std::uint64_t seed,
                                    Index epoch) {
  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(classes));
  for (Index i = 0; i < static_cast<Index>(train.segments.size()); ++i) {
    const Index label = train.segments[static_cast<std::size_t>(i)].label;
    by_class[static_cast<std::size_t>(label)].push_back(i);
  }
  for (Index k = 0; k < classes; ++k) {
    Rng rng = derive_rng(seed, {"shuffle", std::to_string(epoch), std::to_string(k)});
    shuffle(by_class[static_cast<std::size_t>(k)], rng);
  }
  std::vector<Index> order;
  order.reserve(train.segments.size());
  for (std::size_t pos = 0;; ++pos) {
    bool any = false;
    for (Index k = 0; k < classes; ++k) {
      const auto& list = by_class[static_cast<std::size_t>(k)];
      if (pos < list.size()) {
        order.push_back(list[pos]);
        any = true;
      }
    }
    if (!any) break;
  }
  return order;
}

std::vector<Tensor> snapshot_params(Model& model) {
  std::vector<Tensor> out;
  const auto& entries = model.params().entries();
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.tensor.clone());
  return out;
}

}  // namespace

std::string epoch_log_header() {
  return "epoch,total_loss,ce_loss,ntxent_loss,val_accuracy,val_f1,wall_seconds";
}

std::string format_epoch_row(const EpochLogRow& r) {
  return std::to_string(r.epoch) + "," + format_double(r.total_loss) + "," +
         format_double(r.ce_loss) + "," + format_double(r.ntxent_loss) + "," +
         format_double(r.val_accuracy) + "," + format_double(r.val_f1) + "," +
         format_wall(r.wall_seconds);
}

std::string metrics_csv_header() { return "accuracy,precision,recall,f1,auroc,auprc"; }

std::string metrics_csv_row(const MetricsReport& m) {
  return format_double(m.accuracy) + "," + format_double(m.precision) + "," +
         format_double(m.recall) + "," + format_double(m.f1) + "," + format_double(m.auroc) +
         "," + format_double(m.auprc);
}

void verify_subject_disjoint(const DatasetSplits& splits) {
  struct Named {
    const char* name;
    const EEGDataset* set;
  };
  const Named named[3] = {{"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}};
  for (const auto& n : named) {
    if (n.set->segments.empty()) {
      throw std::runtime_error(std::string("train: ") + n.name + " split is empty");
    }
  }
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      const auto sa = named[a].set->subject_ids();
      const auto sb = named[b].set->subject_ids();
      std::vector<Index> inter;
      std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(),
                            std::back_inserter(inter));
      if (!inter.empty()) {
        throw std::runtime_error("train: subject " + std::to_string(inter.front()) +
                                 " appears in both the " + named[a].name + " and " +
                                 named[b].name + " splits");
      }
    }
  }
}

MetricsReport evaluate(Model& model, const EEGDataset& dataset, Index batch_size) {
  if (dataset.segments.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (batch_size < 1) batch_size = 32;
  const Index n = static_cast<Index>(dataset.segments.size());
  const Index classes = model.config().loss.classes;
  Tensor scores = Tensor::zeros({n, classes});
  std::vector<Index> labels(static_cast<std::size_t>(n));
  for (Index ofs = 0; ofs < n; ofs += batch_size) {
    const Index b = std::min(batch_size, n - ofs);
    std::vector<Index> indices(static_cast<std::size_t>(b));
    for (Index i = 0; i < b; ++i) {
      indices[static_cast<std::size_t>(i)] = ofs + i;
      labels[static_cast<std::size_t>(ofs + i)] =
          dataset.segments[static_cast<std::size_t>(ofs + i)].label;
    }
    ForwardResult fwd = model.forward(dataset.batch_tensor(indices), Mode::Eval);
    Tensor probs = softmax(fwd.logits, 1);
    for (Index i = 0; i < b; ++i) {
      for (Index k = 0; k < classes; ++k) scores.at(ofs + i, k) = probs.at(i, k);
    }
  }
  return compute_metrics(labels, scores);
}

TrainResult train(Model& model, const DatasetSplits& splits, const TrainOptions& options) {
  verify_subject_disjoint(splits);
  const ModelConfig& cfg = model.config();
  const Index epochs = options.epochs > 0 ? options.epochs : cfg.epochs;
  const Index batch_size = cfg.batch_size;
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (splits.train.classes != cfg.loss.classes) {
    throw std::invalid_argument("train: dataset has " + std::to_string(splits.train.classes) +
                                " classes but the model head expects " +
                                std::to_string(cfg.loss.classes));
  }

  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.learning_rate;
  adam_cfg.weight_decay = cfg.weight_decay;
  Adam adam(model.params().trainable(), adam_cfg);

  TrainState state;
  if (!options.resume_from.empty()) {
    state = load_checkpoint(options.resume_from, model, adam);
  }

  std::string log_path, ckpt_path;
  if (!options.run_dir.empty()) {
    fs::create_directories(options.run_dir);
    log_path = options.run_dir + "/epoch_log.csv";
    ckpt_path = options.run_dir + "/checkpoint.csf";
    if (options.resume_from.empty() || !fs::exists(log_path)) {
      std::ofstream os(log_path, std::ios::trunc);
      if (!os) throw std::runtime_error("train: cannot write " + log_path);
      os << epoch_log_header() << "\n";
    }
  }

  TrainResult result;
  result.parameter_count = model.params().total_size();
  const std::uint64_t seed = model.seed();
  std::uint64_t step = static_cast<std::uint64_t>(state.step);

  for (Index epoch = state.epoch + 1; epoch <= epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<Index> order =
        stratified_order(splits.train, cfg.loss.classes, seed, epoch);
    double sum_total = 0.0, sum_ce = 0.0, sum_nt = 0.0;
    Index steps_this_epoch = 0;
    for (std::size_t ofs = 0; ofs < order.size(); ofs += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(order.size(), ofs + static_cast<std::size_t>(batch_size));
      std::vector<Index> indices(order.begin() + static_cast<std::ptrdiff_t>(ofs),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<Index> labels(indices.size());
      for (std::size_t i = 0; i < indices.size(); ++i) {
        labels[i] = splits.train.segments[static_cast<std::size_t>(indices[i])].label;
      }
      Tensor batch = splits.train.batch_tensor(indices);
      Tape tape;
      ForwardResult fwd = model.forward(batch, Mode::Train, step);
      LossTerms terms =
          cosup_loss(fwd.embeddings, fwd.logits, labels, model.effective_loss_config());
      tape.backward(terms.total);
      adam.step();
      adam.zero_grad();
      sum_total += terms.total.item();
      sum_ce += terms.ce.item();
      sum_nt += terms.ntxent.item();
      ++step;
      ++steps_this_epoch;
    }

    const MetricsReport val = evaluate(model, splits.val, batch_size);
    EpochLogRow row;
    row.epoch = epoch;
    row.total_loss = sum_total / static_cast<double>(steps_this_epoch);
    row.ce_loss = sum_ce / static_cast<double>(steps_this_epoch);
    row.ntxent_loss = sum_nt / static_cast<double>(steps_this_epoch);
    row.val_accuracy = val.accuracy;
    row.val_f1 = val.f1;
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(row);

    if (val.f1 > state.best_val_f1) {
      state.best_val_f1 = val.f1;
      state.best_epoch = epoch;
      state.best_params = snapshot_params(model);
    }
    state.epoch = epoch;
    state.step = static_cast<Index>(step);

    if (!log_path.empty()) append_line(log_path, format_epoch_row(row));
    if (!ckpt_path.empty()) save_checkpoint(ckpt_path, model, adam, state);
    if (options.verbose) {
      std::fprintf(stderr, "epoch %lld/%lld  total %.5f  ce %.5f  ntxent %.5f  val_f1 %.4f\n",
                   static_cast<long long>(epoch), static_cast<long long>(epochs),
                   row.total_loss, row.ce_loss, row.ntxent_loss, row.val_f1);
    }
    if (options.after_epoch && options.after_epoch(model, row)) break;
  }

  if (!state.best_params.empty()) restore_snapshot(model, state.best_params);
  result.best_val_f1 = state.best_val_f1;
  result.best_epoch = state.best_epoch;
  result.test = evaluate(model, splits.test, batch_size);
  if (!options.run_dir.empty()) {
    std::ofstream os(options.run_dir + "/report.csv", std::ios::trunc);
    if (!os) throw std::runtime_error("train: cannot write report.csv");
    os << metrics_csv_header() << "\n" << metrics_csv_row(result.test) << "\n";
  }
  return result;
}

std::vector<SeedRun> train_over_seeds(const ModelConfig& config, AblationVariant variant,
                                      const DatasetSplits& splits, const TrainOptions& options) {
  if (config.seeds.empty()) throw std::invalid_argument("train: seed list is empty");
  std::vector<SeedRun> runs;
  runs.reserve(config.seeds.size());
  for (std::uint64_t seed : config.seeds) {
    Model model(config, seed, variant);
    TrainOptions per_seed = options;
    per_seed.resume_from.clear();
    if (!options.run_dir.empty()) {
      per_seed.run_dir = options.run_dir + "/seed" + std::to_string(seed);
    }
    runs.push_back({seed, train(model, splits, per_seed)});
  }
  if (!options.run_dir.empty()) {
    std::string csv = "seed," + metrics_csv_header() + "\n";
    for (const SeedRun& r : runs) {
      csv += std::to_string(r.seed) + "," + metrics_csv_row(r.result.test) + "\n";
    }
    const auto pick = [&runs](double MetricsReport::*field) {
      std::vector<double> v;
      v.reserve(runs.size());
      for (const SeedRun& r : runs) v.push_back(r.result.test.*field);
      return aggregate(v);
    };
    const AggregateStat stats[6] = {pick(&MetricsReport::accuracy), pick(&MetricsReport::precision),
                                    pick(&MetricsReport::recall),   pick(&MetricsReport::f1),
                                    pick(&MetricsReport::auroc),    pick(&MetricsReport::auprc)};
    csv += "mean";
    for (const auto& s : stats) csv += "," + format_double(s.mean);
    csv += "\nstd";
    for (const auto& s : stats) csv += "," + format_double(s.stddev);
    csv += "\n";
    std::ofstream os(options.run_dir + "/summary.csv", std::ios::trunc);
    if (!os) throw std::runtime_error("train: cannot write summary.csv");
    os << csv;
  }
  return runs;
}

std::string ablation_table(const ModelConfig& config, const DatasetSplits& splits,
                           const TrainOptions& options,
                           std::vector<std::vector<SeedRun>>* runs_out) {
  const AblationVariant variants[4] = {AblationVariant::Full, AblationVariant::NoContrastive,
                                       AblationVariant::NoGating,
                                       AblationVariant::NoGlobalAttention};
  std::string csv = "variant," + metrics_csv_header() + "\n";
  for (AblationVariant v : variants) {
    TrainOptions per_variant = options;
    if (!options.run_dir.empty()) {
      per_variant.run_dir = options.run_dir + "/" + variant_name(v);
    }
    std::vector<SeedRun> runs = train_over_seeds(config, v, splits, per_variant);
    const auto cell = [&runs](double MetricsReport::*field) {
      std::vector<double> values;
      values.reserve(runs.size());
      for (const SeedRun& r : runs) values.push_back(r.result.test.*field);
      return format_mean_std(aggregate(values));
    };
    csv += variant_name(v);
    csv += "," + cell(&MetricsReport::accuracy);
    csv += "," + cell(&MetricsReport::precision);
    csv += "," + cell(&MetricsReport::recall);
    csv += "," + cell(&MetricsReport::f1);
    csv += "," + cell(&MetricsReport::auroc);
    csv += "," + cell(&MetricsReport::auprc);
    csv += "\n";
    if (runs_out != nullptr) runs_out->push_back(std::move(runs));
  }
  return csv;
}

void export_embeddings(Model& model, const EEGDataset& dataset, Index batch_size,
                       const std::string& csv_path) {
  const Index n = static_cast<Index>(dataset.segments.size());
  if (n < 2) {
    throw std::invalid_argument("export-embeddings: need at least 2 segments, got " +
                                std::to_string(n));
  }
  if (batch_size < 1) batch_size = 32;
  const Index embed = model.config().encoder.embed_dim;
  const Index classes = model.config().loss.classes;
  Tensor pooled = Tensor::zeros({n, embed});
  std::vector<Index> predicted(static_cast<std::size_t>(n));
  for (Index ofs = 0; ofs < n; ofs += batch_size) {
    const Index b = std::min(batch_size, n - ofs);
    std::vector<Index> indices(static_cast<std::size_t>(b));
    for (Index i = 0; i < b; ++i) indices[static_cast<std::size_t>(i)] = ofs + i;
    ForwardResult fwd = model.forward(dataset.batch_tensor(indices), Mode::Eval);
    for (Index i = 0; i < b; ++i) {
      for (Index e = 0; e < embed; ++e) pooled.at(ofs + i, e) = fwd.pooled.at(i, e);
      Index arg = 0;
      for (Index k = 1; k < classes; ++k) {
        if (fwd.logits.at(i, k) > fwd.logits.at(i, arg)) arg = k;
      }
      predicted[static_cast<std::size_t>(ofs + i)] = arg;
    }
  }
  const PcaResult pca = pca_top2(pooled);
  std::ofstream os(csv_path, std::ios::trunc);
  if (!os) throw std::runtime_error("export-embeddings: cannot write " + csv_path);
  os << "subject_id,true_label,predicted_label,pc1,pc2\n";
  for (Index i = 0; i < n; ++i) {
    const EEGSegment& seg = dataset.segments[static_cast<std::size_t>(i)];
    os << seg.subject_id << "," << seg.label << "," << predicted[static_cast<std::size_t>(i)]
       << "," << format_double(pca.projections.at(i, 0)) << ","
       << format_double(pca.projections.at(i, 1)) << "\n";
  }
}

}  // namespace csf
