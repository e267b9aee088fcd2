#include "csf/attention.hpp"

#include <fstream>
#include <numeric>
#include <stdexcept>

namespace csf {

void AttentionConfig::validate() const {
  if (embed_dim < 1) throw std::invalid_argument("attention: embedding dim must be >= 1");
  if (heads < 1) throw std::invalid_argument("attention: head count must be >= 1");
  if (embed_dim % heads != 0) {
    throw std::invalid_argument("attention: embedding dim " + std::to_string(embed_dim) +
                                " is not divisible by " + std::to_string(heads) + " heads");
  }
  if (head_dim() % 2 != 0) {
    throw std::invalid_argument("attention: head dim " + std::to_string(head_dim()) +
                                " must be even for rotary pairing");
  }
  if (ffn_dim < 1) throw std::invalid_argument("attention: FFN width must be >= 1");
  if (depth < 1) throw std::invalid_argument("attention: depth must be >= 1");
  if (!(rope_base > 0.0)) throw std::invalid_argument("attention: rope base must be positive");
}

Tensor masked_attention(const Tensor& q, const Tensor& k, const Tensor& v, MaskMode mode) {
  if (q.rank() != 3 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw std::invalid_argument("masked_attention: q,k,v must share shape [S,H,d]");
  }
  Tensor logits = attention_logits(q, k);           // [H,S,S]
  Tensor masked = mask_diagonal(logits, mode);      // errors on S=1 in neg-inf mode
  Tensor a = softmax(masked, 2);
  return attention_apply(a, v);                     // [S,H,d]
}

GatedAttention::GatedAttention(AttentionConfig config, ParamRegistry& params, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  const Index E = config_.embed_dim;
  const Index F = config_.ffn_dim;
  for (Index i = 0; i < config_.depth; ++i) {
    const std::string base = "attn.b" + std::to_string(i) + ".";
    Block blk;
    blk.ln1_g = params.add_ones(base + "ln1.gamma", {E});
    blk.ln1_b = params.add_zeros(base + "ln1.beta", {E});
    blk.wq = params.add_kaiming(base + "q.w", {E, E}, E, seed);
    blk.wk = params.add_kaiming(base + "k.w", {E, E}, E, seed);
    blk.wv = params.add_kaiming(base + "v.w", {E, E}, E, seed);
    blk.gate_w = params.add_kaiming(base + "gate.w", {E, E}, E, seed);
    blk.gate_b = params.add_zeros(base + "gate.b", {E});
    blk.ln2_g = params.add_ones(base + "ln2.gamma", {E});
    blk.ln2_b = params.add_zeros(base + "ln2.beta", {E});
    blk.ffn_w1 = params.add_kaiming(base + "ffn.w1", {F, E}, E, seed);
    blk.ffn_b1 = params.add_zeros(base + "ffn.b1", {F});
    blk.ffn_w2 = params.add_kaiming(base + "ffn.w2", {E, F}, F, seed);
    blk.ffn_b2 = params.add_zeros(base + "ffn.b2", {E});
    blk.ln3_g = params.add_ones(base + "ln3.gamma", {E});
    blk.ln3_b = params.add_zeros(base + "ln3.beta", {E});
    blk.out_w = params.add_kaiming(base + "out.w", {E, E}, E, seed);
    blk.out_b = params.add_zeros(base + "out.b", {E});
    blocks_.push_back(std::move(blk));
  }
}

Tensor GatedAttention::apply_gate_activation(const Tensor& pre) const {
  switch (config_.gate_activation) {
    case GateActivation::Sigmoid:
      return sigmoid(pre);
    case GateActivation::Tanh:
      return tanh_act(pre);
    case GateActivation::Softmax:
      return softmax(pre, -1);
  }
  throw std::logic_error("attention: unknown gate activation");
}

Tensor GatedAttention::block_forward(Block& blk, const Tensor& z, bool use_attention,
                                     bool use_gate, AttentionTrace* trace_out) {
  if (z.rank() != 2 || z.dim(1) != config_.embed_dim) {
    throw std::invalid_argument("attention: expected tokens [S," +
                                std::to_string(config_.embed_dim) + "], got " +
                                shape_to_string(z.shape()));
  }
  const Index S = z.dim(0);
  const Index E = config_.embed_dim;
  const Index H = config_.heads;
  const Index d = config_.head_dim();

  Tensor z_norm = layernorm(z, blk.ln1_g, blk.ln1_b);

  Tensor gate;
  if (use_gate || trace_out != nullptr) {
    gate = apply_gate_activation(linear(z_norm, blk.gate_w, &blk.gate_b));
  }
  if (trace_out != nullptr) trace_out->gate = gate;

  if (!use_attention) {
    Tensor o = linear(z_norm, blk.out_w, &blk.out_b);
    if (trace_out != nullptr) {
      trace_out->masked_logits = Tensor();
      trace_out->attention = Tensor();
    }
    return use_gate ? mul(o, gate) : o;
  }

  std::vector<Index> positions(static_cast<std::size_t>(S));
  std::iota(positions.begin(), positions.end(), Index{0});

  Tensor q = rope(reshape(linear(z_norm, blk.wq), {S, H, d}), positions, config_.rope_base);
  Tensor k = rope(reshape(linear(z_norm, blk.wk), {S, H, d}), positions, config_.rope_base);
  Tensor v = reshape(linear(z_norm, blk.wv), {S, H, d});

  Tensor masked = mask_diagonal(attention_logits(q, k), config_.mask_mode);
  Tensor attn = softmax(masked, 2);
  if (trace_out != nullptr) {
    trace_out->masked_logits = masked;
    trace_out->attention = attn;
  }
  Tensor attended = reshape(attention_apply(attn, v), {S, E});

  Tensor u = layernorm(add(attended, z_norm), blk.ln2_g, blk.ln2_b);
  Tensor ffn = linear(gelu(linear(u, blk.ffn_w1, &blk.ffn_b1), config_.gelu_form), blk.ffn_w2,
                      &blk.ffn_b2);
  Tensor w = layernorm(add(u, ffn), blk.ln3_g, blk.ln3_b);
  Tensor o = linear(w, blk.out_w, &blk.out_b);
  return use_gate ? mul(o, gate) : o;
}

Tensor GatedAttention::forward(const Tensor& z, Mode /*mode*/, bool use_attention, bool use_gate) {
  Tensor cur = z;
  for (Block& blk : blocks_) cur = block_forward(blk, cur, use_attention, use_gate, nullptr);
  return cur;
}

Tensor GatedAttention::attention_maps(const Tensor& z, Index block) {
  return trace(z, block).attention;
}

AttentionTrace GatedAttention::trace(const Tensor& z, Index block) {
  if (block < 0 || block >= static_cast<Index>(blocks_.size())) {
    throw std::invalid_argument("attention: block index " + std::to_string(block) +
                                " out of range for depth " + std::to_string(blocks_.size()));
  }
  Tensor cur = z;
  AttentionTrace tr;
  for (Index i = 0; i <= block; ++i) {
    AttentionTrace* want = i == block ? &tr : nullptr;
    cur = block_forward(blocks_[static_cast<std::size_t>(i)], cur, true, true, want);
  }
  return tr;
}

void write_attention_csv(const std::string& path, const Tensor& attention) {
  if (attention.rank() != 3) {
    throw std::invalid_argument("attention export: expected [H,S,S], got " +
                                shape_to_string(attention.shape()));
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("attention export: cannot open " + path);
  os << "head,row,col,weight\n";
  const Index H = attention.dim(0), S = attention.dim(1);
  os.precision(17);
  for (Index h = 0; h < H; ++h)
    for (Index i = 0; i < S; ++i)
      for (Index j = 0; j < S; ++j)
        os << h << ',' << i << ',' << j << ',' << attention.at(h, i, j) << '\n';
  if (!os) throw std::runtime_error("attention export: write failed for " + path);
}

}  // namespace csf
