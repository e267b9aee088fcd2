#include "csf/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace csf {

namespace {
constexpr double kNormFloor = 1e-12;
}

void LossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("loss: lambda must be in [0,1], got " + std::to_string(lambda));
  }
  if (!(tau > 0.0)) {
    throw std::invalid_argument("loss: tau must be positive, got " + std::to_string(tau));
  }
  if (classes < 2) {
    throw std::invalid_argument("loss: class count must be >= 2, got " + std::to_string(classes));
  }
}

Tensor cosine_similarity_matrix(const Tensor& z) {
  if (z.rank() != 2) {
    throw std::invalid_argument("cosine_similarity_matrix: expected [B,N], got " +
                                shape_to_string(z.shape()));
  }
  const Index B = z.dim(0), N = z.dim(1);
  std::vector<double> norms(static_cast<std::size_t>(B));
  const double* zv = z.data();
  for (Index i = 0; i < B; ++i) {
    double sq = 0.0;
    const double* row = zv + i * N;
    for (Index t = 0; t < N; ++t) sq += row[t] * row[t];
    double n = std::sqrt(sq);
    if (n < kNormFloor) {
      warn("cosine_similarity_matrix: row " + std::to_string(i) +
           " has near-zero norm; clamping at 1e-12");
      n = kNormFloor;
    }
    norms[static_cast<std::size_t>(i)] = n;
  }
  Tensor out = Tensor::zeros({B, B});
  double* ov = out.data();
  for (Index i = 0; i < B; ++i) {
    ov[i * B + i] = 1.0;
    for (Index j = i + 1; j < B; ++j) {
      const double* zi = zv + i * N;
      const double* zj = zv + j * N;
      double dot = 0.0;
      for (Index t = 0; t < N; ++t) dot += zi[t] * zj[t];
      const double s = dot / (norms[static_cast<std::size_t>(i)] * norms[static_cast<std::size_t>(j)]);
      ov[i * B + j] = s;
      ov[j * B + i] = s;
    }
  }
  detail::check_finite(out, "cosine_similarity_matrix");
  if (Tape::active() != nullptr && z.requires_grad()) {
    out.set_requires_grad(true);
    Tensor held_z = z;
    Tensor held_out = out;
    Tape::active()->record([held_z, held_out, norms, B, N]() mutable {
      const std::vector<double>* dyv = held_out.grad_if_present();
      if (dyv == nullptr || dyv->empty()) return;
      const double* dy = dyv->data();
      const double* zv = held_z.data();
      const double* sv = held_out.data();
      double* dz = held_z.grad().data();
      // d s_ij / d z_i = z_j/(n_i n_j) - s_ij z_i / n_i^2   (i != j);
      // the diagonal is constant. s is symmetric in its arguments, so the
      // cotangents of (i,j) and (j,i) share the same pull into z_i.
      for (Index i = 0; i < B; ++i) {
        const double ni = norms[static_cast<std::size_t>(i)];
        const double* zi = zv + i * N;
        double* dzi = dz + i * N;
        for (Index j = 0; j < B; ++j) {
          if (j == i) continue;
          const double g = dy[i * B + j] + dy[j * B + i];
          if (g == 0.0) continue;
          const double nj = norms[static_cast<std::size_t>(j)];
          const double sij = sv[i * B + j];
          const double* zj = zv + j * N;
          const double a = g / (ni * nj);
          const double b = g * sij / (ni * ni);
          for (Index t = 0; t < N; ++t) dzi[t] += a * zj[t] - b * zi[t];
        }
      }
    });
  }
  return out;
}

PairMask positive_pair_mask(const std::vector<Index>& labels) {
  PairMask mask;
  mask.batch = static_cast<Index>(labels.size());
  mask.upper.assign(static_cast<std::size_t>(mask.batch * mask.batch), 0);
  for (Index i = 0; i < mask.batch; ++i)
    for (Index j = i + 1; j < mask.batch; ++j)
      if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]) {
        mask.upper[static_cast<std::size_t>(i * mask.batch + j)] = 1;
        ++mask.positives;
      }
  return mask;
}

Tensor nt_xent(const Tensor& s, const PairMask& mask, double tau) {
  if (!(tau > 0.0)) {
    throw std::invalid_argument("nt_xent: tau must be positive, got " + std::to_string(tau));
  }
  if (s.rank() != 2 || s.dim(0) != s.dim(1)) {
    throw std::invalid_argument("nt_xent: expected a square similarity matrix, got " +
                                shape_to_string(s.shape()));
  }
  const Index B = s.dim(0);
  if (mask.batch != B) {
    throw std::invalid_argument("nt_xent: mask is for batch " + std::to_string(mask.batch) +
                                ", similarities are [" + std::to_string(B) + "," +
                                std::to_string(B) + "]");
  }
  if (mask.positives == 0) {
    warn("nt_xent: no positive pairs in batch; contrastive term is 0");
    return Tensor::scalar(0.0);
  }
  const double* sv = s.data();
  // Row-wise log-sum-exp over k != i, shared by value and gradient.
  std::vector<double> lse(static_cast<std::size_t>(B));
  for (Index i = 0; i < B; ++i) {
    double mx = -1e300;
    for (Index k = 0; k < B; ++k)
      if (k != i) mx = std::max(mx, sv[i * B + k] / tau);
    double acc = 0.0;
    for (Index k = 0; k < B; ++k)
      if (k != i) acc += std::exp(sv[i * B + k] / tau - mx);
    lse[static_cast<std::size_t>(i)] = mx + std::log(acc);
  }
  double loss = 0.0;
  for (Index i = 0; i < B; ++i)
    for (Index j = i + 1; j < B; ++j)
      if (mask.at(i, j)) loss += lse[static_cast<std::size_t>(i)] - sv[i * B + j] / tau;
  loss /= static_cast<double>(mask.positives);

  Tensor out = Tensor::scalar(loss);
  detail::check_finite(out, "nt_xent");
  if (Tape::active() != nullptr && s.requires_grad()) {
    out.set_requires_grad(true);
    Tensor held_s = s;
    Tensor held_out = out;
    PairMask held_mask = mask;
    Tape::active()->record([held_s, held_out, held_mask, lse, B, tau]() mutable {
      const std::vector<double>* dyv = held_out.grad_if_present();
      if (dyv == nullptr || dyv->empty()) return;
      const double g = (*dyv)[0];
      if (g == 0.0) return;
      const double* sv = held_s.data();
      double* ds = held_s.grad().data();
      const double inv = 1.0 / (static_cast<double>(held_mask.positives) * tau);
      for (Index i = 0; i < B; ++i) {
        Index anchors = 0;  // positives anchored at row i
        for (Index j = i + 1; j < B; ++j)
          if (held_mask.at(i, j)) ++anchors;
        if (anchors == 0) continue;
        for (Index k = 0; k < B; ++k) {
          if (k == i) continue;
          const double p = std::exp(sv[i * B + k] / tau - lse[static_cast<std::size_t>(i)]);
          double d = static_cast<double>(anchors) * p;
          if (k > i && held_mask.at(i, k)) d -= 1.0;
          ds[i * B + k] += g * inv * d;
        }
      }
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<Index>& labels) {
  if (logits.rank() != 2) {
    throw std::invalid_argument("cross_entropy: expected [B,K] logits, got " +
                                shape_to_string(logits.shape()));
  }
  const Index B = logits.dim(0), K = logits.dim(1);
  if (static_cast<Index>(labels.size()) != B) {
    throw std::invalid_argument("cross_entropy: got " + std::to_string(labels.size()) +
                                " labels for batch " + std::to_string(B));
  }
  for (Index i = 0; i < B; ++i) {
    const Index y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= K) {
      throw std::invalid_argument("cross_entropy: label " + std::to_string(y) + " at index " +
                                  std::to_string(i) + " out of range for " + std::to_string(K) +
                                  " classes");
    }
  }
  const double* lv = logits.data();
  std::vector<double> lse(static_cast<std::size_t>(B));
  double loss = 0.0;
  for (Index i = 0; i < B; ++i) {
    const double* row = lv + i * K;
    double mx = row[0];
    for (Index k = 1; k < K; ++k) mx = std::max(mx, row[k]);
    double acc = 0.0;
    for (Index k = 0; k < K; ++k) acc += std::exp(row[k] - mx);
    lse[static_cast<std::size_t>(i)] = mx + std::log(acc);
    loss += lse[static_cast<std::size_t>(i)] - row[labels[static_cast<std::size_t>(i)]];
  }
  loss /= static_cast<double>(B);
  Tensor out = Tensor::scalar(loss);
  detail::check_finite(out, "cross_entropy");
  if (Tape::active() != nullptr && logits.requires_grad()) {
    out.set_requires_grad(true);
    Tensor held_logits = logits;
    Tensor held_out = out;
    std::vector<Index> held_labels = labels;
    Tape::active()->record([held_logits, held_out, held_labels, lse, B, K]() mutable {
      const std::vector<double>* dyv = held_out.grad_if_present();
      if (dyv == nullptr || dyv->empty()) return;
      const double g = (*dyv)[0] / static_cast<double>(B);
      if (g == 0.0) return;
      const double* lv = held_logits.data();
      double* dl = held_logits.grad().data();
      for (Index i = 0; i < B; ++i) {
        const double* row = lv + i * K;
        double* drow = dl + i * K;
        for (Index k = 0; k < K; ++k) {
          const double p = std::exp(row[k] - lse[static_cast<std::size_t>(i)]);
          drow[k] += g * (p - (k == held_labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0));
        }
      }
    });
  }
  return out;
}

LossTerms cosup_loss(const Tensor& embeddings, const Tensor& logits,
                     const std::vector<Index>& labels, const LossConfig& config) {
  config.validate();
  if (embeddings.rank() != 2 && embeddings.rank() != 3) {
    throw std::invalid_argument("cosup_loss: embeddings must be [B,N] or [B,S,E], got " +
                                shape_to_string(embeddings.shape()));
  }
  const Index B = embeddings.dim(0);
  if (logits.rank() != 2 || logits.dim(0) != B || static_cast<Index>(labels.size()) != B) {
    throw std::invalid_argument("cosup_loss: batch sizes disagree between embeddings " +
                                shape_to_string(embeddings.shape()) + ", logits " +
                                shape_to_string(logits.shape()) + ", and " +
                                std::to_string(labels.size()) + " labels");
  }
  Tensor flat =
      embeddings.rank() == 3 ? reshape(embeddings, {B, embeddings.size() / B}) : embeddings;
  LossTerms terms;
  terms.ce = cross_entropy(logits, labels);
  Tensor sims = cosine_similarity_matrix(flat);
  terms.ntxent = nt_xent(sims, positive_pair_mask(labels), config.tau);
  terms.total = add(scale(terms.ce, config.lambda), scale(terms.ntxent, 1.0 - config.lambda));
  return terms;
}

}  // namespace csf
