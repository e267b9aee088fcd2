// Microbenchmarks for the compute-heavy paths: convolution, the encoder
// bank, the gated attention block (forward and forward+backward), the
// contrastive loss, a full optimizer step, and synthetic-data generation.
//
// Shapes mirror the small training setup used in the acceptance gate
// (6 channels x 512 samples -> 96 tokens of width 16) so the numbers track
// what training actually costs.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "csf/attention.hpp"
#include "csf/data.hpp"
#include "csf/encoder.hpp"
#include "csf/loss.hpp"
#include "csf/model.hpp"
#include "csf/optim.hpp"
#include "csf/rng.hpp"
#include "csf/tensor.hpp"

using namespace csf;

namespace {

// The model configuration the training-path benchmarks share.
ModelConfig bench_model_config() {
  ModelConfig mc = ModelConfig::defaults();
  mc.encoder = EncoderConfig::defaults(6, 16);
  for (PathSpec* path : {&mc.encoder.small_path, &mc.encoder.large_path}) {
    path->stages[0].conv.stride = 4;
    path->stages[0].pool = PoolSpec{4, 4};
    path->stages[1].conv.stride = 4;
  }
  mc.attention.embed_dim = 16;
  mc.attention.heads = 2;
  mc.attention.ffn_dim = 32;
  mc.attention.depth = 1;
  mc.loss.classes = 3;
  mc.batch_size = 16;
  mc.learning_rate = 1e-3;
  return mc;
}

void BM_Conv1dSmallKernel(benchmark::State& state) {
  Rng rng(1);
  const Tensor x = Tensor::uniform({1, 512}, -1, 1, rng);
  const Tensor w = Tensor::uniform({16, 1, 7}, -1, 1, rng);
  const Tensor b = Tensor::uniform({16}, -1, 1, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv1d(x, w, b, 2, 1, 3));
  }
}
BENCHMARK(BM_Conv1dSmallKernel);

void BM_Conv1dDilated(benchmark::State& state) {
  Rng rng(2);
  const Tensor x = Tensor::uniform({1, 512}, -1, 1, rng);
  const Tensor w = Tensor::uniform({16, 1, 15}, -1, 1, rng);
  const Tensor b = Tensor::uniform({16}, -1, 1, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv1d(x, w, b, 2, 4, 28));
  }
}
BENCHMARK(BM_Conv1dDilated);

void BM_EncoderForward(benchmark::State& state) {
  const ModelConfig mc = bench_model_config();
  ParamRegistry reg;
  EncoderBank encoder(mc.encoder, reg, 41);
  Rng rng(3);
  const Tensor x = Tensor::uniform({6, 512}, -50, 50, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(encoder.encode(x, Mode::Eval, 41, 0));
  }
}
BENCHMARK(BM_EncoderForward);

void BM_AttentionForward(benchmark::State& state) {
  const ModelConfig mc = bench_model_config();
  ParamRegistry reg;
  GatedAttention attn(mc.attention, reg, 41);
  Rng rng(4);
  const Tensor z = Tensor::uniform({96, 16}, -1, 1, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(attn.forward(z, Mode::Eval));
  }
}
BENCHMARK(BM_AttentionForward);

void BM_AttentionForwardBackward(benchmark::State& state) {
  const ModelConfig mc = bench_model_config();
  ParamRegistry reg;
  GatedAttention attn(mc.attention, reg, 41);
  Rng rng(5);
  Tensor z = Tensor::uniform({96, 16}, -1, 1, rng);
  z.set_requires_grad(true);
  for (auto _ : state) {
    reg.zero_grads();
    z.zero_grad();
    Tape tape;
    Tensor out = attn.forward(z, Mode::Eval);
    tape.backward(sum(out));
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_AttentionForwardBackward);

void BM_NtXent(benchmark::State& state) {
  Rng rng(6);
  const Tensor z = Tensor::uniform({32, 64}, -1, 1, rng);
  std::vector<Index> labels(32);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<Index>(i % 3);
  const PairMask mask = positive_pair_mask(labels);
  for (auto _ : state) {
    benchmark::DoNotOptimize(nt_xent(cosine_similarity_matrix(z), mask, 0.5));
  }
}
BENCHMARK(BM_NtXent);

void BM_TrainStep(benchmark::State& state) {
  const ModelConfig mc = bench_model_config();
  Model model(mc, 41);
  AdamConfig acfg;
  acfg.lr = mc.learning_rate;
  Adam adam(model.params().trainable(), acfg);
  Rng rng(7);
  const Tensor batch = Tensor::uniform({16, 6, 512}, -50, 50, rng);
  std::vector<Index> labels(16);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<Index>(i % 3);
  std::uint64_t step = 0;
  for (auto _ : state) {
    adam.zero_grad();
    Tape tape;
    ForwardResult fwd = model.forward(batch, Mode::Train, step++);
    LossTerms terms = cosup_loss(fwd.embeddings, fwd.logits, labels, mc.loss);
    tape.backward(terms.total);
    adam.step();
  }
}
BENCHMARK(BM_TrainStep);

void BM_GenerateDataset(benchmark::State& state) {
  SyntheticSpec spec = SyntheticSpec::defaults();
  spec.subjects_per_class = 1;
  spec.segments_per_subject = 8;
  std::uint64_t seed = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate(spec, seed++));
  }
}
BENCHMARK(BM_GenerateDataset);

}  // namespace

BENCHMARK_MAIN();
