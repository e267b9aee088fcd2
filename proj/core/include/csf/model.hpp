#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csf/attention.hpp"
#include "csf/common.hpp"
#include "csf/encoder.hpp"
#include "csf/loss.hpp"
#include "csf/params.hpp"
#include "csf/tensor.hpp"

namespace csf {

enum class AblationVariant { Full, NoContrastive, NoGating, NoGlobalAttention };

std::string variant_name(AblationVariant v);
AblationVariant parse_variant(const std::string& name);

struct ModelConfig {
  EncoderConfig encoder;      // channel count, embedding dim, conv paths
  AttentionConfig attention;  // heads, FFN, depth, masking
  LossConfig loss;            // lambda, tau, class count
  std::vector<std::uint64_t> seeds = {41, 42, 43, 44, 45};
  Index epochs = 100;
  Index batch_size = 32;
  double learning_rate = 1e-4;
  double weight_decay = 0.0;

  static ModelConfig defaults();  // C=6, E=32, H=4, FFN 64, K=3
  void validate() const;          // embedding dims must agree across stages
};

struct ForwardResult {
  Tensor embeddings;  // [B,S,E], post-attention tokens (contrastive branch)
  Tensor pooled;      // [B,E], temporal average (export branch)
  Tensor logits;      // [B,K]
};

// encoder -> gated attention stack -> temporal average pool -> linear head.
// The contrastive branch reads the flattened [B,S,E] embeddings; the
// cross-entropy branch reads the logits.
class Model {
 public:
  Model(ModelConfig config, std::uint64_t seed,
        AblationVariant variant = AblationVariant::Full);

  const ModelConfig& config() const { return config_; }
  AblationVariant variant() const { return variant_; }
  std::uint64_t seed() const { return seed_; }
  ParamRegistry& params() { return params_; }
  GatedAttention& attention() { return attention_; }
  EncoderBank& encoder() { return encoder_; }

  // batch: [B,C,L]. `step` seeds the dropout streams in train mode; eval
  // mode ignores it and is bitwise deterministic.
  ForwardResult forward(const Tensor& batch, Mode mode, std::uint64_t step = 0);

  // Effective loss weighting for this variant (NoContrastive pins lambda=1
  // so the contrastive term is still computed and logged but carries no
  // gradient weight).
  LossConfig effective_loss_config() const;

 private:
  ModelConfig config_;
  AblationVariant variant_;
  std::uint64_t seed_;
  ParamRegistry params_;
  EncoderBank encoder_;
  GatedAttention attention_;
  Tensor head_w, head_b;
};

}  // namespace csf
