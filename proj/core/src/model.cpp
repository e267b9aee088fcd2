#include "csf/model.hpp"

#include <stdexcept>

namespace csf {

std::string variant_name(AblationVariant v) {
  switch (v) {
    case AblationVariant::Full:
      return "full";
    case AblationVariant::NoContrastive:
      return "no-contrastive";
    case AblationVariant::NoGating:
      return "no-gating";
    case AblationVariant::NoGlobalAttention:
      return "no-global-attention";
  }
  throw std::logic_error("variant: unknown value");
}

AblationVariant parse_variant(const std::string& name) {
  if (name == "full") return AblationVariant::Full;
  if (name == "no-contrastive") return AblationVariant::NoContrastive;
  if (name == "no-gating") return AblationVariant::NoGating;
  if (name == "no-global-attention") return AblationVariant::NoGlobalAttention;
  throw std::invalid_argument(
      "variant: '" + name +
      "' is not one of full, no-contrastive, no-gating, no-global-attention");
}

ModelConfig ModelConfig::defaults() {
  ModelConfig cfg;
  cfg.encoder = EncoderConfig::defaults(6, 32);
  cfg.attention.embed_dim = 32;
  cfg.attention.heads = 4;
  cfg.attention.ffn_dim = 64;
  cfg.loss.classes = 3;
  return cfg;
}

void ModelConfig::validate() const {
  encoder.validate();
  attention.validate();
  loss.validate();
  if (encoder.embed_dim != attention.embed_dim) {
    throw std::invalid_argument("model: encoder embedding dim " +
                                std::to_string(encoder.embed_dim) +
                                " does not match attention embedding dim " +
                                std::to_string(attention.embed_dim));
  }
  if (seeds.empty()) throw std::invalid_argument("model: seed list is empty");
  if (epochs < 1) throw std::invalid_argument("model: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("model: batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("model: learning rate must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("model: weight decay must be >= 0");
}

Model::Model(ModelConfig config, std::uint64_t seed, AblationVariant variant)
    : config_(std::move(config)),
      variant_(variant),
      seed_(seed),
      params_(),
      encoder_((config_.validate(), config_.encoder), params_, seed),
      attention_(config_.attention, params_, seed) {
  head_w = params_.add_kaiming("head.w", {config_.loss.classes, config_.attention.embed_dim},
                               config_.attention.embed_dim, seed);
  head_b = params_.add_zeros("head.b", {config_.loss.classes});
}

ForwardResult Model::forward(const Tensor& batch, Mode mode, std::uint64_t step) {
  const bool use_attention = variant_ != AblationVariant::NoGlobalAttention;
  const bool use_gate = variant_ != AblationVariant::NoGating;
  Tensor tokens = encoder_.encode_batch(batch, mode, seed_, step);  // [B,S,E]
  const Index B = tokens.dim(0);
  std::vector<Tensor> outs;
  outs.reserve(static_cast<std::size_t>(B));
  for (Index b = 0; b < B; ++b) {
    outs.push_back(attention_.forward(select0(tokens, b), mode, use_attention, use_gate));
  }
  ForwardResult res;
  res.embeddings = stack0(outs);                 // [B,S,E]
  res.pooled = avgpool(res.embeddings, 1);       // [B,E]
  res.logits = linear(res.pooled, head_w, &head_b);
  return res;
}

LossConfig Model::effective_loss_config() const {
  LossConfig cfg = config_.loss;
  if (variant_ == AblationVariant::NoContrastive) cfg.lambda = 1.0;
  return cfg;
}

}  // namespace csf
