#pragma once

#include <cstdint>
#include <vector>

#include "csf/common.hpp"
#include "csf/tensor.hpp"

namespace csf {

struct LossConfig {
  double lambda = 0.5;  // weight of the cross-entropy term; 1 = pure CE
  double tau = 0.5;     // contrastive temperature
  Index classes = 3;    // K

  void validate() const;
};

// Pairwise cosine similarities of flattened embeddings. z: [B,N] -> [B,B].
// Zero-norm rows are clamped at 1e-12 with a warning. The diagonal is set to
// exactly 1 and carries no gradient (s_ii is constant by definition).
Tensor cosine_similarity_matrix(const Tensor& z);

// Strict-upper-triangle same-label pairs: at(i,j) true iff y_i == y_j, i < j.
struct PairMask {
  Index batch = 0;
  std::vector<std::uint8_t> upper;  // row-major B*B
  Index positives = 0;              // |P|

  bool at(Index i, Index j) const {
    return upper[static_cast<std::size_t>(i * batch + j)] != 0;
  }
};

PairMask positive_pair_mask(const std::vector<Index>& labels);

// Normalized-temperature cross entropy over the positive pairs:
// -(1/|P|) sum over (i,j) in P of log( exp(s_ij/tau) / sum_{k != i} exp(s_ik/tau) ).
// The denominator excludes only k = i. |P| = 0 returns a constant 0 with a
// warning instead of failing. Log-sum-exp stabilized.
Tensor nt_xent(const Tensor& s, const PairMask& mask, double tau);

// Mean negative log softmax-probability of the true class. logits: [B,K].
Tensor cross_entropy(const Tensor& logits, const std::vector<Index>& labels);

struct LossTerms {
  Tensor total;   // lambda*ce + (1-lambda)*ntxent
  Tensor ce;
  Tensor ntxent;
};

// embeddings: [B,S,E] (flattened internally to [B,S*E]) or already [B,N];
// logits: [B,K]. All three returned tensors sit on the active tape.
LossTerms cosup_loss(const Tensor& embeddings, const Tensor& logits,
                     const std::vector<Index>& labels, const LossConfig& config);

}  // namespace csf
