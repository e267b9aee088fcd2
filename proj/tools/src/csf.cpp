// Command-line front end: data generation, training, evaluation, ablation
// sweeps, gradient checking, and embedding export. Every command is a thin
// orchestration over the library; errors exit nonzero with one line on
// stderr ("error: ...").

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "csf/checkpoint.hpp"
#include "csf/config.hpp"
#include "csf/data.hpp"
#include "csf/loss.hpp"
#include "csf/metrics.hpp"
#include "csf/model.hpp"
#include "csf/optim.hpp"
#include "csf/train.hpp"

namespace fs = std::filesystem;
using namespace csf;

namespace {

// --- shared plumbing -------------------------------------------------------

std::string default_run_root() {
  const char* env = std::getenv("CSF_RUN_ROOT");
  return (env != nullptr && *env != '\0') ? env : "runs";
}

RunConfig load_run_config(const std::string& config_path) {
  if (config_path.empty()) return RunConfig::defaults();
  return run_config_from_file(config_path);
}

// The dataset header is authoritative for dimensions the model must match.
void adopt_dataset_dims(RunConfig& cfg, const EEGDataset& dataset) {
  cfg.data.channels = dataset.channels;
  cfg.data.length = dataset.length;
  cfg.data.classes = dataset.classes;
  cfg.data.sampling_rate = dataset.sampling_rate;
  cfg.model.encoder.channels = dataset.channels;
  cfg.model.loss.classes = dataset.classes;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << text;
}

void print_report(const MetricsReport& m) {
  auto pct = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v * 100.0);
    return std::string(buf);
  };
  std::cout << "accuracy  " << pct(m.accuracy) << "\n"
            << "precision " << pct(m.precision) << "\n"
            << "recall    " << pct(m.recall) << "\n"
            << "f1        " << pct(m.f1) << "\n"
            << "auroc     " << pct(m.auroc) << "\n"
            << "auprc     " << pct(m.auprc) << "\n";
}

// Rebuilds the exact model a checkpoint was trained with, restores the
// best-validation snapshot when one exists (reported metrics always come
// from it), and returns the state.
struct LoadedModel {
  ModelConfig config;
  std::unique_ptr<Model> model;
  TrainState state;
};

LoadedModel load_model_from_checkpoint(const std::string& ckpt_path) {
  const CheckpointInfo info = read_checkpoint_info(ckpt_path);
  LoadedModel out;
  out.config = parse_model_config(info.config_text);
  out.model = std::make_unique<Model>(out.config, info.seed, info.variant);
  AdamConfig acfg;
  acfg.lr = out.config.learning_rate;
  acfg.weight_decay = out.config.weight_decay;
  Adam adam(out.model->params().trainable(), acfg);
  out.state = load_checkpoint(ckpt_path, *out.model, adam);
  if (!out.state.best_params.empty()) restore_snapshot(*out.model, out.state.best_params);
  return out;
}

// --- commands --------------------------------------------------------------

struct GenDataArgs {
  std::string config_path;
  std::string out_path = "data.eegd";
  bool noisy = false;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_gen_data(const GenDataArgs& args) {
  RunConfig cfg = load_run_config(args.config_path);
  const std::uint64_t seed = args.seed_set ? args.seed : cfg.data_seed;
  EEGDataset dataset = generate(cfg.data, seed);
  if (args.noisy) dataset = inject_noise(dataset, cfg.noise);
  write_dataset(dataset, args.out_path);
  std::cout << "wrote " << dataset.segments.size() << " segments (C=" << dataset.channels
            << ", L=" << dataset.length << ", K=" << dataset.classes << ", "
            << (args.noisy ? "noisy" : "clean") << ") to " << args.out_path << "\n";
  return 0;
}

struct TrainArgs {
  std::string config_path;
  std::string data_path;
  std::string run_dir;
  std::string resume_from;
  std::string variant = "full";
  std::vector<std::uint64_t> seeds;  // empty = config's list
  Index epochs = 0;                  // 0 = config's count
  bool verbose = false;
};

int cmd_train(const TrainArgs& args) {
  RunConfig cfg = load_run_config(args.config_path);
  if (args.epochs > 0) cfg.model.epochs = args.epochs;
  if (!args.seeds.empty()) cfg.model.seeds = args.seeds;
  const AblationVariant variant = parse_variant(args.variant);

  const EEGDataset dataset = read_dataset(args.data_path);
  adopt_dataset_dims(cfg, dataset);
  const DatasetSplits splits = split_by_subject(dataset, cfg.split, cfg.split_seed);

  const std::string root = args.run_dir.empty()
                               ? default_run_root() + "/train-" + variant_name(variant)
                               : args.run_dir;
  fs::create_directories(root);
  write_text(root + "/config.ini", format_run_config(cfg));

  TrainOptions options;
  options.verbose = args.verbose;

  if (!args.resume_from.empty()) {
    if (cfg.model.seeds.size() != 1) {
      throw std::runtime_error("--resume needs exactly one --seed");
    }
    const std::uint64_t seed = cfg.model.seeds.front();
    Model model(cfg.model, seed, variant);
    options.run_dir = root + "/seed" + std::to_string(seed);
    options.resume_from = args.resume_from;
    const TrainResult result = train(model, splits, options);
    std::cout << "parameters " << result.parameter_count << "\n"
              << "best epoch " << result.best_epoch << " (val f1 "
              << format_double(result.best_val_f1) << ")\n";
    print_report(result.test);
    return 0;
  }

  options.run_dir = root;
  const std::vector<SeedRun> runs = train_over_seeds(cfg.model, variant, splits, options);
  std::cout << "parameters " << runs.front().result.parameter_count << "\n";
  for (const SeedRun& r : runs) {
    std::cout << "seed " << r.seed << ": test f1 " << format_double(r.result.test.f1)
              << " (best epoch " << r.result.best_epoch << ")\n";
  }
  const auto agg = [&runs](double MetricsReport::*field) {
    std::vector<double> v;
    for (const SeedRun& r : runs) v.push_back(r.result.test.*field);
    return format_mean_std(aggregate(v));
  };
  std::cout << "accuracy  " << agg(&MetricsReport::accuracy) << "\n"
            << "precision " << agg(&MetricsReport::precision) << "\n"
            << "recall    " << agg(&MetricsReport::recall) << "\n"
            << "f1        " << agg(&MetricsReport::f1) << "\n"
            << "auroc     " << agg(&MetricsReport::auroc) << "\n"
            << "auprc     " << agg(&MetricsReport::auprc) << "\n"
            << "artifacts in " << root << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data_path;
  std::string report_csv;
  std::string attention_csv;
  Index attention_block = 0;
  Index batch_size = 32;
};

int cmd_eval(const EvalArgs& args) {
  LoadedModel loaded = load_model_from_checkpoint(args.checkpoint);
  const EEGDataset dataset = read_dataset(args.data_path);
  if (dataset.channels != loaded.config.encoder.channels ||
      dataset.classes != loaded.config.loss.classes) {
    throw std::runtime_error("dataset (C=" + std::to_string(dataset.channels) +
                             ", K=" + std::to_string(dataset.classes) +
                             ") does not match the checkpointed model (C=" +
                             std::to_string(loaded.config.encoder.channels) +
                             ", K=" + std::to_string(loaded.config.loss.classes) + ")");
  }
  const MetricsReport report = evaluate(*loaded.model, dataset, args.batch_size);
  print_report(report);
  if (!args.report_csv.empty()) {
    write_text(args.report_csv, metrics_csv_header() + "\n" + metrics_csv_row(report) + "\n");
    std::cout << "report -> " << args.report_csv << "\n";
  }
  if (!args.attention_csv.empty()) {
    const EEGSegment& seg = dataset.segments.front();
    const Tensor z = loaded.model->encoder().encode(
        seg.to_tensor(dataset.channels, dataset.length), Mode::Eval, loaded.model->seed(), 0);
    const Tensor maps = loaded.model->attention().attention_maps(z, args.attention_block);
    write_attention_csv(args.attention_csv, maps);
    std::cout << "attention maps (block " << args.attention_block << ", first segment) -> "
              << args.attention_csv << "\n";
  }
  return 0;
}

struct AblateArgs {
  std::string config_path;
  std::string data_path;
  std::string out_csv;
  std::string run_dir;
  Index epochs = 0;
};

int cmd_ablate(const AblateArgs& args) {
  RunConfig cfg = load_run_config(args.config_path);
  if (args.epochs > 0) cfg.model.epochs = args.epochs;
  const EEGDataset dataset = read_dataset(args.data_path);
  adopt_dataset_dims(cfg, dataset);
  const DatasetSplits splits = split_by_subject(dataset, cfg.split, cfg.split_seed);

  const std::string root =
      args.run_dir.empty() ? default_run_root() + "/ablate" : args.run_dir;
  fs::create_directories(root);
  write_text(root + "/config.ini", format_run_config(cfg));

  TrainOptions options;
  options.run_dir = root;
  const std::string table = ablation_table(cfg.model, splits, options);
  const std::string out = args.out_csv.empty() ? root + "/ablation.csv" : args.out_csv;
  write_text(out, table);
  std::cout << table << "table -> " << out << "\n";
  return 0;
}

struct GradcheckArgs {
  std::string config_path;
  double step = 1e-5;
  double tolerance = 1e-4;
  Index probes_per_group = 6;
};

// Central finite differences against the tape's analytic gradients on a
// tiny model (2 channels, 64 samples, 4-dim embeddings, batch of 3).
int cmd_gradcheck(const GradcheckArgs& args) {
  ModelConfig mc;
  if (!args.config_path.empty()) {
    mc = run_config_from_file(args.config_path).model;
  } else {
    mc = ModelConfig::defaults();
    mc.encoder = EncoderConfig::defaults(2, 4);
    mc.attention.embed_dim = 4;
    mc.attention.heads = 2;
    mc.attention.ffn_dim = 8;
    mc.loss.classes = 2;
  }
  const Index batch = 3, channels = mc.encoder.channels;
  const Index length = 64;
  Model model(mc, 41);

  Rng rng(123);
  const Tensor batch_x = Tensor::uniform({batch, channels, length}, -1.0, 1.0, rng);
  const std::vector<Index> labels = {0, 1, 0};

  const auto loss_value = [&]() {
    ForwardResult fwd = model.forward(batch_x, Mode::Train, 0);
    LossTerms terms = cosup_loss(fwd.embeddings, fwd.logits, labels, model.effective_loss_config());
    return terms.total.item();
  };

  model.params().zero_grads();
  {
    Tape tape;
    ForwardResult fwd = model.forward(batch_x, Mode::Train, 0);
    LossTerms terms = cosup_loss(fwd.embeddings, fwd.logits, labels, model.effective_loss_config());
    tape.backward(terms.total);
  }

  bool all_ok = true;
  for (const auto& entry : model.params().entries()) {
    if (!entry.trainable) continue;
    Tensor param = entry.tensor;  // handle copy, shared storage
    const std::vector<double>* grad = param.grad_if_present();
    const Index n = param.size();
    const Index probes = std::min<Index>(args.probes_per_group, n);
    double max_rel = 0.0;
    for (Index p = 0; p < probes; ++p) {
      const Index i = (n <= probes) ? p : (p * n) / probes;
      const double saved = param.values()[static_cast<std::size_t>(i)];
      param.values()[static_cast<std::size_t>(i)] = saved + args.step;
      const double up = loss_value();
      param.values()[static_cast<std::size_t>(i)] = saved - args.step;
      const double down = loss_value();
      param.values()[static_cast<std::size_t>(i)] = saved;
      const double fd = (up - down) / (2.0 * args.step);
      const double an = grad ? (*grad)[static_cast<std::size_t>(i)] : 0.0;
      const double rel = std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-6});
      max_rel = std::max(max_rel, rel);
    }
    const bool ok = max_rel < args.tolerance;
    all_ok = all_ok && ok;
    std::printf("%-28s max_rel %.3e  %s\n", entry.name.c_str(), max_rel,
                ok ? "pass" : "FAIL");
  }
  std::cout << (all_ok ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance "
            << format_double(args.tolerance) << ")\n";
  return all_ok ? 0 : 1;
}

struct ExportArgs {
  std::string checkpoint;
  std::string data_path;
  std::string out_csv = "embeddings.csv";
  Index batch_size = 32;
};

int cmd_export_embeddings(const ExportArgs& args) {
  LoadedModel loaded = load_model_from_checkpoint(args.checkpoint);
  const EEGDataset dataset = read_dataset(args.data_path);
  export_embeddings(*loaded.model, dataset, args.batch_size, args.out_csv);
  std::cout << "embeddings (" << dataset.segments.size() << " rows) -> " << args.out_csv << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG classification reference pipeline"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset file");
  gen_cmd->add_option("--config", gen.config_path, "Config file (defaults when omitted)");
  gen_cmd->add_option("--out", gen.out_path, "Output dataset path");
  gen_cmd->add_flag("--noisy", gen.noisy, "Corrupt the last channels with strong noise");
  gen_cmd->add_option("--seed", gen.seed, "Generation seed (overrides [data] seed)")
      ->each([&gen](const std::string&) { gen.seed_set = true; });

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train on a dataset file");
  train_cmd->add_option("--config", tr.config_path, "Config file (defaults when omitted)");
  train_cmd->add_option("--data", tr.data_path, "Dataset file")->required();
  train_cmd->add_option("--run-dir", tr.run_dir, "Run directory (default $CSF_RUN_ROOT/...)");
  train_cmd->add_option("--resume", tr.resume_from, "Checkpoint to resume from");
  train_cmd->add_option("--variant", tr.variant,
                        "full | no-contrastive | no-gating | no-global-attention");
  train_cmd->add_option("--seed", tr.seeds, "Seed(s); repeat or comma-join for several")
      ->delimiter(',');
  train_cmd->add_option("--epochs", tr.epochs, "Override epoch count");
  train_cmd->add_flag("--verbose", tr.verbose, "Per-epoch progress on stderr");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", ev.data_path, "Dataset file")->required();
  eval_cmd->add_option("--report", ev.report_csv, "Write the metric row as CSV");
  eval_cmd->add_option("--attention-csv", ev.attention_csv,
                       "Dump first-segment attention maps as CSV");
  eval_cmd->add_option("--attention-block", ev.attention_block, "Block to trace");
  eval_cmd->add_option("--batch", ev.batch_size, "Evaluation batch size");

  AblateArgs ab;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train all 4 variants across all seeds");
  ablate_cmd->add_option("--config", ab.config_path, "Config file (defaults when omitted)");
  ablate_cmd->add_option("--data", ab.data_path, "Dataset file")->required();
  ablate_cmd->add_option("--out", ab.out_csv, "Table CSV path (default <run>/ablation.csv)");
  ablate_cmd->add_option("--run-dir", ab.run_dir, "Run directory root");
  ablate_cmd->add_option("--epochs", ab.epochs, "Override epoch count");

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  gc_cmd->add_option("--config", gc.config_path, "Config file (tiny built-in when omitted)");
  gc_cmd->add_option("--step", gc.step, "Finite-difference step");
  gc_cmd->add_option("--tolerance", gc.tolerance, "Max relative error");
  gc_cmd->add_option("--probes", gc.probes_per_group, "Elements probed per parameter group");

  ExportArgs ex;
  auto* ex_cmd = app.add_subcommand("export-embeddings", "PCA-project pooled embeddings to CSV");
  ex_cmd->add_option("--checkpoint", ex.checkpoint, "Checkpoint file")->required();
  ex_cmd->add_option("--data", ex.data_path, "Dataset file")->required();
  ex_cmd->add_option("--out", ex.out_csv, "Output CSV path");
  ex_cmd->add_option("--batch", ex.batch_size, "Batch size");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(gen);
    if (train_cmd->parsed()) return cmd_train(tr);
    if (eval_cmd->parsed()) return cmd_eval(ev);
    if (ablate_cmd->parsed()) return cmd_ablate(ab);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc);
    if (ex_cmd->parsed()) return cmd_export_embeddings(ex);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << "error: no command\n";
  return 1;
}
