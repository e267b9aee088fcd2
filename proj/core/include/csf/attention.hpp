#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csf/common.hpp"
#include "csf/params.hpp"
#include "csf/tensor.hpp"

namespace csf {

enum class GateActivation { Sigmoid, Tanh, Softmax };

struct AttentionConfig {
  Index embed_dim = 32;  // E
  Index heads = 4;       // H; head dim d = E/H
  Index ffn_dim = 64;    // inner FFN width, 2*E by convention
  GateActivation gate_activation = GateActivation::Sigmoid;
  double rope_base = 10000.0;
  Index depth = 1;  // number of stacked blocks
  MaskMode mask_mode = MaskMode::SubtractDiag;
  GeluForm gelu_form = GeluForm::Exact;

  Index head_dim() const { return embed_dim / heads; }
  void validate() const;  // E % H == 0 and even head dim, checked at construction
};

// Scaled dot-product attention with the self-position masked out:
// per head, A = q.k/sqrt(d), mask per `mode`, row softmax, output = a.v.
// q,k,v: [S,H,d] -> [S,H,d].
Tensor masked_attention(const Tensor& q, const Tensor& k, const Tensor& v, MaskMode mode);

// Per-block intermediate views for inspection and tests.
struct AttentionTrace {
  Tensor masked_logits;  // [H,S,S], after masking, before softmax
  Tensor attention;      // [H,S,S], post-softmax
  Tensor gate;           // [S,E]
};

// Stack of gated attention blocks over the flattened token sequence. One
// block: z_n = LN(z); q,k,v = no-bias projections of z_n; rotary embedding on
// q and k with global positions 0..S-1; gate g = activation(Linear(z_n));
// a = softmax(mask(q.k/sqrt(d))); u = LN(a.v + z_n); w = LN(u + FFN(u));
// o = Linear(w) * g, elementwise. Heads are merged before the output
// projection. Weights process any S >= 2 (positions are computed on the fly).
class GatedAttention {
 public:
  GatedAttention(AttentionConfig config, ParamRegistry& params, std::uint64_t seed);

  const AttentionConfig& config() const { return config_; }

  // z: [S,E] -> [S,E]. `use_attention` = false routes around the attention
  // and FFN core (o = Linear(LN(z)) * g); `use_gate` = false fixes g = 1.
  Tensor forward(const Tensor& z, Mode mode, bool use_attention = true, bool use_gate = true);

  // Post-softmax attention matrices [H,S,S] of one block; rows sum to 1.
  Tensor attention_maps(const Tensor& z, Index block = 0);

  AttentionTrace trace(const Tensor& z, Index block = 0);

 private:
  struct Block {
    Tensor ln1_g, ln1_b;
    Tensor wq, wk, wv;       // [E,E], no bias
    Tensor gate_w, gate_b;   // [E,E], [E]
    Tensor ln2_g, ln2_b;
    Tensor ffn_w1, ffn_b1;   // [F,E], [F]
    Tensor ffn_w2, ffn_b2;   // [E,F], [E]
    Tensor ln3_g, ln3_b;
    Tensor out_w, out_b;     // [E,E], [E]
  };

  Tensor apply_gate_activation(const Tensor& pre) const;
  Tensor block_forward(Block& blk, const Tensor& z, bool use_attention, bool use_gate,
                       AttentionTrace* trace_out);

  AttentionConfig config_;
  std::vector<Block> blocks_;
};

// CSV export "head,row,col,weight" of a post-softmax attention tensor [H,S,S].
void write_attention_csv(const std::string& path, const Tensor& attention);

}  // namespace csf
