#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "csf/common.hpp"
#include "csf/params.hpp"
#include "csf/tensor.hpp"

namespace csf {

// One 1-d convolution layer. out_channels == 0 means "use the embedding dim".
struct ConvSpec {
  Index kernel = 7;
  Index stride = 2;
  Index padding = 3;
  Index dilation = 1;
  Index out_channels = 0;
};

struct PoolSpec {
  Index window = 2;
  Index stride = 2;
};

// conv -> batchnorm -> GELU -> (optional maxpool)
struct StageSpec {
  ConvSpec conv;
  std::optional<PoolSpec> pool;
};

struct PathSpec {
  std::vector<StageSpec> stages;
};

// Dual-path per-channel feature extractor: a small-kernel path for
// high-frequency structure and a dilated large-kernel path for
// low-frequency structure. Both paths end in the same embedding width and
// their outputs are concatenated along the time axis.
struct EncoderConfig {
  Index channels = 6;    // C
  Index embed_dim = 32;  // E
  PathSpec small_path;
  PathSpec large_path;
  double dropout_rate = 0.1;
  GeluForm gelu_form = GeluForm::Exact;

  // Small path: Conv(k=7,s=2,p=3) -> BN -> GELU -> MaxPool(2,2)
  //          -> Conv(k=7,s=2,p=3) -> BN -> GELU, both convs E channels out.
  // Large path: the same skeleton with k=15, p=28, dilation=4.
  static EncoderConfig defaults(Index channels, Index embed_dim);

  void validate() const;
  Index resolved_out_channels(const ConvSpec& conv) const {
    return conv.out_channels == 0 ? embed_dim : conv.out_channels;
  }
};

struct LengthPlan {
  Index small_len = 0;   // L1
  Index large_len = 0;   // L2
  Index tokens_per_channel = 0;  // L' = L1 + L2
};

// Pure conv/pool arithmetic for both paths; throws naming the first layer
// whose output length would drop below 1.
LengthPlan length_plan(Index input_len, const EncoderConfig& config);

// Per-channel encoder bank. Channel weights are fully disjoint: channel c
// owns private parameters for both paths in the shared registry.
class EncoderBank {
 public:
  EncoderBank(EncoderConfig config, ParamRegistry& params, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }

  // x: [B,C,L] -> tokens [B, C*L', E]. Channel blocks are stacked in channel
  // order; rows within a block are small-path times then large-path times.
  // Train mode applies feature dropout per channel with a stream derived
  // from (seed, "dropout", step, channel), so results are independent of
  // evaluation order and reproducible on resume.
  Tensor encode_batch(const Tensor& x, Mode mode, std::uint64_t seed, std::uint64_t step);

  // x: [C,L] -> [C*L', E]; single-sample convenience wrapper.
  Tensor encode(const Tensor& x, Mode mode, std::uint64_t seed, std::uint64_t step);

  // x_c: [1,L] -> (z1 [E,L1], z2 [E,L2]) for channel `c`, without dropout.
  std::pair<Tensor, Tensor> encode_channel(const Tensor& x_c, Index c, Mode mode = Mode::Eval);

 private:
  struct Stage {
    ConvSpec conv;
    std::optional<PoolSpec> pool;
    Tensor w, b, gamma, beta, run_mean, run_var;
  };
  struct ChannelEncoder {
    std::vector<Stage> small;
    std::vector<Stage> large;
  };

  Tensor run_path(std::vector<Stage>& stages, const Tensor& x, Mode mode);

  EncoderConfig config_;
  std::vector<ChannelEncoder> channels_;
};

}  // namespace csf
