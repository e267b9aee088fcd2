// Dual-path per-channel encoder: length arithmetic, channel independence,
// path layout, determinism, and batch consistency.

#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "csf/encoder.hpp"
#include "csf/params.hpp"
#include "csf/rng.hpp"
#include "csf/tensor.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using csf::EncoderBank;
using csf::EncoderConfig;
using csf::Index;
using csf::Tensor;

namespace {

// Layer-by-layer reference of the conv/pool arithmetic for one path.
Index path_len_oracle(Index len, const csf::PathSpec& path) {
  for (const csf::StageSpec& st : path.stages) {
    len = oracle::conv1d_len(len, st.conv.kernel, st.conv.stride, st.conv.padding,
                             st.conv.dilation);
    if (len < 1) return len;
    if (st.pool.has_value()) len = (len - st.pool->window) / st.pool->stride + 1;
  }
  return len;
}

EncoderConfig tiny_config(Index channels = 2, Index embed = 4) {
  EncoderConfig cfg = EncoderConfig::defaults(channels, embed);
  cfg.dropout_rate = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("length plan equals the layer-by-layer formula") {
  for (Index L : {64, 128, 512, 2560}) {
    CAPTURE(L);
    const EncoderConfig cfg = tiny_config();
    const csf::LengthPlan plan = csf::length_plan(L, cfg);
    CHECK(plan.small_len == path_len_oracle(L, cfg.small_path));
    CHECK(plan.large_len == path_len_oracle(L, cfg.large_path));
    CHECK(plan.tokens_per_channel == plan.small_len + plan.large_len);
  }
  // Defaults on 512 concretely: conv s2 -> pool s2 -> conv s2 is /8.
  const csf::LengthPlan p512 = csf::length_plan(512, tiny_config());
  CHECK(p512.small_len == 64);
  CHECK(p512.large_len == 64);
  CHECK(p512.tokens_per_channel == 128);
}

TEST_CASE("too-short input names the failing stage and path") {
  const EncoderConfig cfg = tiny_config();
  const std::string msg =
      testutil::thrown_message([&] { (void)csf::length_plan(2, cfg); });
  CHECK(msg.find("path stage") != std::string::npos);
  CHECK(msg.find("length") != std::string::npos);
  CHECK_THROWS_AS((void)csf::length_plan(0, cfg), std::invalid_argument);
}

TEST_CASE("encode emits channel-major token blocks of the planned size") {
  const Index C = 3, E = 4, L = 64;
  const EncoderConfig cfg = tiny_config(C, E);
  csf::ParamRegistry reg;
  EncoderBank bank(cfg, reg, 7);
  const csf::LengthPlan plan = csf::length_plan(L, cfg);

  csf::Rng rng(1);
  Tensor x = testutil::random_tensor({C, L}, rng);
  Tensor tokens = bank.encode(x, csf::Mode::Eval, 7, 0);
  REQUIRE(tokens.shape() == csf::Shape{C * plan.tokens_per_channel, E});

  // Channel block c starts with the small-path rows, then the large-path
  // rows, exactly as produced by the single-channel entry point.
  for (Index c = 0; c < C; ++c) {
    Tensor xc = csf::narrow(x, 0, c, 1);
    auto [z1, z2] = bank.encode_channel(xc, c);
    REQUIRE(z1.shape() == csf::Shape{E, plan.small_len});
    REQUIRE(z2.shape() == csf::Shape{E, plan.large_len});
    const Index base = c * plan.tokens_per_channel;
    for (Index t = 0; t < plan.small_len; ++t)
      for (Index e = 0; e < E; ++e) CHECK(tokens.at(base + t, e) == z1.at(e, t));
    for (Index t = 0; t < plan.large_len; ++t)
      for (Index e = 0; e < E; ++e)
        CHECK(tokens.at(base + plan.small_len + t, e) == z2.at(e, t));
  }
}

TEST_CASE("zero input maps to time-constant tokens per path") {
  const Index C = 2, E = 4, L = 64;
  csf::ParamRegistry reg;
  EncoderBank bank(tiny_config(C, E), reg, 3);
  const csf::LengthPlan plan = csf::length_plan(L, bank.config());
  Tensor tokens = bank.encode(Tensor::zeros({C, L}), csf::Mode::Eval, 3, 0);
  for (Index c = 0; c < C; ++c) {
    const Index base = c * plan.tokens_per_channel;
    for (Index t = 1; t < plan.small_len; ++t)
      for (Index e = 0; e < E; ++e) CHECK(tokens.at(base + t, e) == tokens.at(base, e));
    const Index lbase = base + plan.small_len;
    for (Index t = 1; t < plan.large_len; ++t)
      for (Index e = 0; e < E; ++e) CHECK(tokens.at(lbase + t, e) == tokens.at(lbase, e));
  }
}

TEST_CASE("channels are isolated and carry private weights") {
  const Index C = 2, E = 4, L = 64;
  csf::ParamRegistry reg;
  EncoderBank bank(tiny_config(C, E), reg, 11);
  const csf::LengthPlan plan = csf::length_plan(L, bank.config());
  const Index Lp = plan.tokens_per_channel;

  csf::Rng rng(2);
  Tensor x = testutil::random_tensor({C, L}, rng);
  Tensor x2 = x.clone();
  for (Index t = 0; t < L; ++t) x2.at(1, t) += 0.5;  // perturb channel 1 only

  Tensor a = bank.encode(x, csf::Mode::Eval, 11, 0);
  Tensor b = bank.encode(x2, csf::Mode::Eval, 11, 0);
  for (Index t = 0; t < Lp; ++t)
    for (Index e = 0; e < E; ++e) CHECK(a.at(t, e) == b.at(t, e));  // channel 0 untouched
  double diff = 0.0;
  for (Index t = 0; t < Lp; ++t)
    for (Index e = 0; e < E; ++e) diff += std::fabs(a.at(Lp + t, e) - b.at(Lp + t, e));
  CHECK(diff > 1e-6);

  // Swapping input channels is NOT a permutation of the output blocks,
  // because each channel owns its weights.
  Tensor xs = Tensor::zeros({C, L});
  for (Index t = 0; t < L; ++t) {
    xs.at(0, t) = x.at(1, t);
    xs.at(1, t) = x.at(0, t);
  }
  Tensor s = bank.encode(xs, csf::Mode::Eval, 11, 0);
  double perm_diff = 0.0;
  for (Index t = 0; t < Lp; ++t)
    for (Index e = 0; e < E; ++e) perm_diff += std::fabs(s.at(t, e) - a.at(Lp + t, e));
  CHECK(perm_diff > 1e-6);
}

TEST_CASE("every trainable encoder parameter is live") {
  const Index C = 2, E = 4, L = 64;
  csf::ParamRegistry reg;
  EncoderBank bank(tiny_config(C, E), reg, 13);
  csf::Rng rng(3);
  Tensor x = testutil::random_tensor({C, L}, rng);

  reg.zero_grads();
  csf::Tape tape;
  Tensor tokens = bank.encode(x, csf::Mode::Train, 13, 0);
  tape.backward(csf::sum(tokens));

  for (const auto& entry : reg.entries()) {
    if (!entry.trainable) continue;
    CAPTURE(entry.name);
    const std::vector<double>* g = entry.tensor.grad_if_present();
    REQUIRE(g != nullptr);
    double mag = 0.0;
    for (double v : *g) mag += std::fabs(v);
    CHECK(mag > 0.0);
  }
}

TEST_CASE("eval mode is deterministic; train dropout is keyed by (seed, step, channel)") {
  const Index C = 2, E = 4, L = 64;
  EncoderConfig cfg = tiny_config(C, E);
  cfg.dropout_rate = 0.4;
  csf::ParamRegistry reg;
  EncoderBank bank(cfg, reg, 17);
  csf::Rng rng(4);
  Tensor x = testutil::random_tensor({C, L}, rng);

  Tensor e1 = bank.encode(x, csf::Mode::Eval, 17, 0);
  Tensor e2 = bank.encode(x, csf::Mode::Eval, 17, 5);
  CHECK(e1.values() == e2.values());  // eval ignores the step

  Tensor t1 = bank.encode(x, csf::Mode::Train, 17, 0);
  Tensor t1_again = bank.encode(x, csf::Mode::Train, 17, 0);
  CHECK(t1.values() == t1_again.values());  // same step, same mask

  Tensor t2 = bank.encode(x, csf::Mode::Train, 17, 1);
  CHECK(t1.values() != t2.values());  // a new step draws a new mask
}

TEST_CASE("batched encoding matches per-sample encoding in eval mode") {
  const Index B = 3, C = 2, E = 4, L = 64;
  csf::ParamRegistry reg;
  EncoderBank bank(tiny_config(C, E), reg, 19);
  csf::Rng rng(5);
  Tensor batch = testutil::random_tensor({B, C, L}, rng);

  Tensor all = bank.encode_batch(batch, csf::Mode::Eval, 19, 0);
  const csf::LengthPlan plan = csf::length_plan(L, bank.config());
  REQUIRE(all.shape() == csf::Shape{B, C * plan.tokens_per_channel, E});
  for (Index i = 0; i < B; ++i) {
    Tensor one = bank.encode(csf::select0(batch, i), csf::Mode::Eval, 19, 0);
    for (Index t = 0; t < C * plan.tokens_per_channel; ++t)
      for (Index e = 0; e < E; ++e) CHECK(all.at(i, t, e) == one.at(t, e));
  }
}

TEST_CASE("input validation") {
  csf::ParamRegistry reg;
  EncoderBank bank(tiny_config(2, 4), reg, 1);
  CHECK_THROWS_AS(bank.encode(Tensor::zeros({3, 64}), csf::Mode::Eval, 1, 0),
                  std::invalid_argument);  // wrong channel count
  CHECK_THROWS_AS(bank.encode(Tensor::zeros({2}), csf::Mode::Eval, 1, 0),
                  std::invalid_argument);  // wrong rank
  CHECK_THROWS_AS(bank.encode_channel(Tensor::zeros({1, 64}), 5),
                  std::invalid_argument);  // channel index out of range

  EncoderConfig bad = tiny_config();
  bad.dropout_rate = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  EncoderConfig empty = tiny_config();
  empty.small_path.stages.clear();
  CHECK_THROWS_AS(empty.validate(), std::invalid_argument);
}
