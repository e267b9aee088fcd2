#include "csf/encoder.hpp"

#include <stdexcept>

namespace csf {

namespace {

std::string conv_to_string(const ConvSpec& c, Index out_channels) {
  return "conv(k=" + std::to_string(c.kernel) + ",s=" + std::to_string(c.stride) +
         ",p=" + std::to_string(c.padding) + ",d=" + std::to_string(c.dilation) +
         ",out=" + std::to_string(out_channels) + ")";
}

Index path_out_len(Index len, const PathSpec& path, const EncoderConfig& cfg,
                   const char* path_name) {
  for (std::size_t i = 0; i < path.stages.size(); ++i) {
    const StageSpec& st = path.stages[i];
    const Index after_conv = conv1d_out_len(len, st.conv.kernel, st.conv.stride, st.conv.dilation,
                                            st.conv.padding);
    if (after_conv < 1) {
      throw std::invalid_argument(
          std::string("encoder: ") + path_name + " path stage " + std::to_string(i) + " " +
          conv_to_string(st.conv, cfg.resolved_out_channels(st.conv)) + " maps length " +
          std::to_string(len) + " to " + std::to_string(after_conv));
    }
    len = after_conv;
    if (st.pool.has_value()) {
      if (len < st.pool->window) {
        throw std::invalid_argument(std::string("encoder: ") + path_name + " path stage " +
                                    std::to_string(i) + " pool(w=" +
                                    std::to_string(st.pool->window) + ",s=" +
                                    std::to_string(st.pool->stride) + ") needs length >= " +
                                    std::to_string(st.pool->window) + ", has " +
                                    std::to_string(len));
      }
      len = (len - st.pool->window) / st.pool->stride + 1;
    }
  }
  return len;
}

}  // namespace

EncoderConfig EncoderConfig::defaults(Index channels, Index embed_dim) {
  EncoderConfig cfg;
  cfg.channels = channels;
  cfg.embed_dim = embed_dim;
  cfg.small_path.stages = {
      StageSpec{ConvSpec{7, 2, 3, 1, embed_dim}, PoolSpec{2, 2}},
      StageSpec{ConvSpec{7, 2, 3, 1, embed_dim}, std::nullopt},
  };
  cfg.large_path.stages = {
      StageSpec{ConvSpec{15, 2, 28, 4, embed_dim}, PoolSpec{2, 2}},
      StageSpec{ConvSpec{15, 2, 28, 4, embed_dim}, std::nullopt},
  };
  return cfg;
}

void EncoderConfig::validate() const {
  if (channels < 1) throw std::invalid_argument("encoder: channel count must be >= 1");
  if (embed_dim < 1) throw std::invalid_argument("encoder: embedding dim must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw std::invalid_argument("encoder: dropout rate must be in [0,1), got " +
                                std::to_string(dropout_rate));
  }
  const PathSpec* paths[2] = {&small_path, &large_path};
  const char* names[2] = {"small", "large"};
  for (int p = 0; p < 2; ++p) {
    if (paths[p]->stages.empty()) {
      throw std::invalid_argument(std::string("encoder: ") + names[p] + " path has no stages");
    }
    for (std::size_t i = 0; i < paths[p]->stages.size(); ++i) {
      const StageSpec& st = paths[p]->stages[i];
      if (st.conv.kernel < 1 || st.conv.stride < 1 || st.conv.dilation < 1 || st.conv.padding < 0 ||
          st.conv.out_channels < 0) {
        throw std::invalid_argument(std::string("encoder: ") + names[p] + " path stage " +
                                    std::to_string(i) + " has an invalid conv spec");
      }
      if (st.pool.has_value() && (st.pool->window < 1 || st.pool->stride < 1)) {
        throw std::invalid_argument(std::string("encoder: ") + names[p] + " path stage " +
                                    std::to_string(i) + " has an invalid pool spec");
      }
    }
    const Index last_out = resolved_out_channels(paths[p]->stages.back().conv);
    if (last_out != embed_dim) {
      throw std::invalid_argument(std::string("encoder: ") + names[p] +
                                  " path must end with embedding dim " + std::to_string(embed_dim) +
                                  " channels, ends with " + std::to_string(last_out));
    }
  }
}

LengthPlan length_plan(Index input_len, const EncoderConfig& config) {
  config.validate();
  if (input_len < 1) {
    throw std::invalid_argument("encoder: input length must be >= 1, got " +
                                std::to_string(input_len));
  }
  LengthPlan plan;
  plan.small_len = path_out_len(input_len, config.small_path, config, "small");
  plan.large_len = path_out_len(input_len, config.large_path, config, "large");
  plan.tokens_per_channel = plan.small_len + plan.large_len;
  return plan;
}

EncoderBank::EncoderBank(EncoderConfig config, ParamRegistry& params, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  const char* path_names[2] = {"small", "large"};
  for (Index c = 0; c < config_.channels; ++c) {
    ChannelEncoder ch;
    const PathSpec* paths[2] = {&config_.small_path, &config_.large_path};
    for (int p = 0; p < 2; ++p) {
      std::vector<Stage>& stages = p == 0 ? ch.small : ch.large;
      Index in_channels = 1;
      for (std::size_t i = 0; i < paths[p]->stages.size(); ++i) {
        const StageSpec& sp = paths[p]->stages[i];
        const Index out = config_.resolved_out_channels(sp.conv);
        const std::string base = "enc.c" + std::to_string(c) + "." + path_names[p] + ".s" +
                                 std::to_string(i) + ".";
        Stage st;
        st.conv = sp.conv;
        st.conv.out_channels = out;
        st.pool = sp.pool;
        st.w = params.add_kaiming(base + "conv.w", {out, in_channels, sp.conv.kernel},
                                  in_channels * sp.conv.kernel, seed);
        st.b = params.add_zeros(base + "conv.b", {out});
        st.gamma = params.add_ones(base + "bn.gamma", {out});
        st.beta = params.add_zeros(base + "bn.beta", {out});
        st.run_mean = params.add_buffer(base + "bn.run_mean", Tensor::zeros({out}));
        st.run_var = params.add_buffer(base + "bn.run_var", Tensor::full({out}, 1.0));
        stages.push_back(std::move(st));
        in_channels = out;
      }
    }
    channels_.push_back(std::move(ch));
  }
}

Tensor EncoderBank::run_path(std::vector<Stage>& stages, const Tensor& x, Mode mode) {
  Tensor y = x;
  for (Stage& st : stages) {
    y = conv1d(y, st.w, st.b, st.conv.stride, st.conv.dilation, st.conv.padding);
    y = batchnorm1d(y, st.gamma, st.beta, st.run_mean, st.run_var, mode);
    y = gelu(y, config_.gelu_form);
    if (st.pool.has_value()) y = maxpool1d(y, st.pool->window, st.pool->stride);
  }
  return y;
}

Tensor EncoderBank::encode_batch(const Tensor& x, Mode mode, std::uint64_t seed,
                                 std::uint64_t step) {
  if (x.rank() != 3) {
    throw std::invalid_argument("encoder: expected a [B,C,L] batch, got " +
                                shape_to_string(x.shape()));
  }
  if (x.dim(1) != config_.channels) {
    throw std::invalid_argument("encoder: configured for " + std::to_string(config_.channels) +
                                " channels, input has " + std::to_string(x.dim(1)));
  }
  length_plan(x.dim(2), config_);  // validates lengths, names the failing layer
  std::vector<Tensor> blocks;
  blocks.reserve(static_cast<std::size_t>(config_.channels));
  for (Index c = 0; c < config_.channels; ++c) {
    Tensor xc = narrow(x, 1, c, 1);  // [B,1,L]
    ChannelEncoder& ch = channels_[static_cast<std::size_t>(c)];
    Tensor z1 = run_path(ch.small, xc, mode);  // [B,E,L1]
    Tensor z2 = run_path(ch.large, xc, mode);  // [B,E,L2]
    Tensor z = concat({z1, z2}, 2);            // [B,E,L']
    z = swap_last2(z);                         // [B,L',E]
    if (config_.dropout_rate > 0.0 && mode == Mode::Train) {
      Rng rng = derive_rng(seed, {"dropout", std::to_string(step), std::to_string(c)});
      z = dropout(z, config_.dropout_rate, mode, rng);
    }
    blocks.push_back(std::move(z));
  }
  return concat(blocks, 1);  // [B, C*L', E]
}

Tensor EncoderBank::encode(const Tensor& x, Mode mode, std::uint64_t seed, std::uint64_t step) {
  if (x.rank() != 2) {
    throw std::invalid_argument("encoder: expected a [C,L] input, got " +
                                shape_to_string(x.shape()));
  }
  Tensor batched = reshape(x, {1, x.dim(0), x.dim(1)});
  return select0(encode_batch(batched, mode, seed, step), 0);
}

std::pair<Tensor, Tensor> EncoderBank::encode_channel(const Tensor& x_c, Index c, Mode mode) {
  if (x_c.rank() != 2 || x_c.dim(0) != 1) {
    throw std::invalid_argument("encoder: expected a [1,L] channel input, got " +
                                shape_to_string(x_c.shape()));
  }
  if (c < 0 || c >= config_.channels) {
    throw std::invalid_argument("encoder: channel index " + std::to_string(c) +
                                " out of range for " + std::to_string(config_.channels) +
                                " channels");
  }
  Tensor batched = reshape(x_c, {1, 1, x_c.dim(1)});
  ChannelEncoder& ch = channels_[static_cast<std::size_t>(c)];
  Tensor z1 = select0(run_path(ch.small, batched, mode), 0);
  Tensor z2 = select0(run_path(ch.large, batched, mode), 0);
  return {z1, z2};
}

}  // namespace csf
