#include "csf/pca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace csf {

SymmetricEigen symmetric_eigen(const std::vector<double>& matrix, Index d) {
  if (d < 1 || static_cast<Index>(matrix.size()) != d * d) {
    throw std::invalid_argument("eigen: matrix size does not match dimension " +
                                std::to_string(d));
  }
  std::vector<double> a = matrix;  // working copy, driven to diagonal
  std::vector<double> v(static_cast<std::size_t>(d * d), 0.0);
  for (Index i = 0; i < d; ++i) v[static_cast<std::size_t>(i * d + i)] = 1.0;

  auto off_diag = [&a, d]() {
    double s = 0.0;
    for (Index i = 0; i < d; ++i)
      for (Index j = i + 1; j < d; ++j) s += a[static_cast<std::size_t>(i * d + j)] *
                                              a[static_cast<std::size_t>(i * d + j)];
    return s;
  };

  const int max_sweeps = 100;
  for (int sweep = 0; sweep < max_sweeps && off_diag() > 1e-24; ++sweep) {
    for (Index p = 0; p < d; ++p)
      for (Index q = p + 1; q < d; ++q) {
        const double apq = a[static_cast<std::size_t>(p * d + q)];
        if (std::abs(apq) < 1e-300) continue;
        const double app = a[static_cast<std::size_t>(p * d + p)];
        const double aqq = a[static_cast<std::size_t>(q * d + q)];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Index i = 0; i < d; ++i) {
          const double aip = a[static_cast<std::size_t>(i * d + p)];
          const double aiq = a[static_cast<std::size_t>(i * d + q)];
          a[static_cast<std::size_t>(i * d + p)] = c * aip - s * aiq;
          a[static_cast<std::size_t>(i * d + q)] = s * aip + c * aiq;
        }
        for (Index j = 0; j < d; ++j) {
          const double apj = a[static_cast<std::size_t>(p * d + j)];
          const double aqj = a[static_cast<std::size_t>(q * d + j)];
          a[static_cast<std::size_t>(p * d + j)] = c * apj - s * aqj;
          a[static_cast<std::size_t>(q * d + j)] = s * apj + c * aqj;
        }
        for (Index i = 0; i < d; ++i) {
          const double vip = v[static_cast<std::size_t>(i * d + p)];
          const double viq = v[static_cast<std::size_t>(i * d + q)];
          v[static_cast<std::size_t>(i * d + p)] = c * vip - s * viq;
          v[static_cast<std::size_t>(i * d + q)] = s * vip + c * viq;
        }
      }
  }

  std::vector<Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&a, d](Index x, Index y) {
    return a[static_cast<std::size_t>(x * d + x)] > a[static_cast<std::size_t>(y * d + y)];
  });

  SymmetricEigen out;
  out.values.resize(static_cast<std::size_t>(d));
  out.vectors.assign(static_cast<std::size_t>(d * d), 0.0);
  for (Index j = 0; j < d; ++j) {
    const Index src = order[static_cast<std::size_t>(j)];
    out.values[static_cast<std::size_t>(j)] = a[static_cast<std::size_t>(src * d + src)];
    for (Index i = 0; i < d; ++i)
      out.vectors[static_cast<std::size_t>(i * d + j)] = v[static_cast<std::size_t>(i * d + src)];
  }
  return out;
}

PcaResult pca_top2(const Tensor& x) {
  if (x.rank() != 2) {
    throw std::invalid_argument("pca: expected [N,D], got " + shape_to_string(x.shape()));
  }
  const Index N = x.dim(0), D = x.dim(1);
  if (N < 2) {
    throw std::invalid_argument("pca: needs at least 2 samples, got " + std::to_string(N));
  }
  std::vector<double> mean(static_cast<std::size_t>(D), 0.0);
  const double* xv = x.data();
  for (Index i = 0; i < N; ++i)
    for (Index j = 0; j < D; ++j) mean[static_cast<std::size_t>(j)] += xv[i * D + j];
  for (double& m : mean) m /= static_cast<double>(N);

  std::vector<double> cov(static_cast<std::size_t>(D * D), 0.0);
  for (Index i = 0; i < N; ++i)
    for (Index a = 0; a < D; ++a) {
      const double da = xv[i * D + a] - mean[static_cast<std::size_t>(a)];
      for (Index b = a; b < D; ++b) {
        cov[static_cast<std::size_t>(a * D + b)] +=
            da * (xv[i * D + b] - mean[static_cast<std::size_t>(b)]);
      }
    }
  for (Index a = 0; a < D; ++a)
    for (Index b = a; b < D; ++b) {
      cov[static_cast<std::size_t>(a * D + b)] /= static_cast<double>(N - 1);
      cov[static_cast<std::size_t>(b * D + a)] = cov[static_cast<std::size_t>(a * D + b)];
    }

  SymmetricEigen eig = symmetric_eigen(cov, D);
  const Index comps = std::min<Index>(2, D);
  // Deterministic sign: flip so the largest-|loading| entry is positive.
  std::vector<double> dirs(static_cast<std::size_t>(2 * D), 0.0);
  for (Index k = 0; k < comps; ++k) {
    Index arg = 0;
    for (Index i = 1; i < D; ++i) {
      if (std::abs(eig.vectors[static_cast<std::size_t>(i * D + k)]) >
          std::abs(eig.vectors[static_cast<std::size_t>(arg * D + k)])) {
        arg = i;
      }
    }
    const double sign = eig.vectors[static_cast<std::size_t>(arg * D + k)] < 0.0 ? -1.0 : 1.0;
    for (Index i = 0; i < D; ++i)
      dirs[static_cast<std::size_t>(k * D + i)] =
          sign * eig.vectors[static_cast<std::size_t>(i * D + k)];
  }

  PcaResult res;
  res.projections = Tensor::zeros({N, 2});
  double* pv = res.projections.data();
  for (Index i = 0; i < N; ++i)
    for (Index k = 0; k < comps; ++k) {
      double dot = 0.0;
      for (Index j = 0; j < D; ++j)
        dot += (xv[i * D + j] - mean[static_cast<std::size_t>(j)]) *
               dirs[static_cast<std::size_t>(k * D + j)];
      pv[i * 2 + k] = dot;
    }
  res.eigenvalue_1 = eig.values[0];
  res.eigenvalue_2 = comps > 1 ? eig.values[1] : 0.0;
  return res;
}

}  // namespace csf
