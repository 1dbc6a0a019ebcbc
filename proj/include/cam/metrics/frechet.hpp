// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "cam/core/error.hpp"
#include "cam/core/tensor.hpp"

namespace cam::metrics {

/// Mean and covariance of a feature population.
struct GaussianStats {
  Vecd mean;
  Matd cov;
  std::int64_t count = 0;

  [[nodiscard]] Eigen::Index dim() const { return mean.size(); }
};

/// Sample mean and unbiased covariance of the rows of `x`.
inline GaussianStats gaussian_stats(const Matd& x) {
  if (x.rows() < 2) throw ShapeError("gaussian_stats: need at least two samples");
  if (!x.allFinite()) throw NumericError("gaussian_stats: non-finite sample");
  GaussianStats s;
  s.count = x.rows();
  s.mean = x.colwise().mean().transpose();
  const Matd c = x.rowwise() - s.mean.transpose();
  s.cov = (c.transpose() * c) / static_cast<double>(x.rows() - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose()).eval();
  return s;
}

namespace detail {

/// Symmetric PSD square root with eigenvalues clamped at zero.
inline Matd psd_sqrt(const Matd& m) {
  const Matd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matd> es(sym);
  if (es.info() != Eigen::Success) throw NumericError("frechet_distance: eigendecomposition failed");
  const Vecd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}).
///
/// Tr (S_a S_b)^{1/2} is evaluated as Tr (A^{1/2} S_b A^{1/2})^{1/2}, which has
/// the same spectrum but is symmetric. `shrinkage` adds that multiple of the
/// identity to both covariances first.
inline double frechet_distance(const GaussianStats& a, const GaussianStats& b, double shrinkage = 0.0) {
  if (a.dim() != b.dim() || a.cov.rows() != a.dim() || b.cov.rows() != b.dim()) {
    throw ShapeError("frechet_distance: feature dimensions differ (" + std::to_string(a.dim()) + " vs " +
                     std::to_string(b.dim()) + ")");
  }
  if (!a.mean.allFinite() || !b.mean.allFinite() || !a.cov.allFinite() || !b.cov.allFinite()) {
    throw NumericError("frechet_distance: non-finite statistics");
  }
  const Eigen::Index f = a.dim();
  const Matd sa = a.cov + shrinkage * Matd::Identity(f, f);
  const Matd sb = b.cov + shrinkage * Matd::Identity(f, f);
  const Matd ra = detail::psd_sqrt(sa);
  const Matd inner = ra * sb * ra;
  Eigen::SelfAdjointEigenSolver<Matd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (a.mean - b.mean).squaredNorm() + sa.trace() + sb.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, d);
}

/// Kendall tau-b rank correlation.
inline double kendall_tau(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("kendall_tau: series lengths differ");
  double conc = 0.0;
  double disc = 0.0;
  double tx = 0.0;
  double ty = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double dx = x[j] - x[i];
      const double dy = y[j] - y[i];
      if (dx == 0.0 && dy == 0.0) continue;
      if (dx == 0.0) {
        tx += 1.0;
      } else if (dy == 0.0) {
        ty += 1.0;
      } else if ((dx > 0) == (dy > 0)) {
        conc += 1.0;
      } else {
        disc += 1.0;
      }
    }
  }
  const double denom = std::sqrt((conc + disc + tx) * (conc + disc + ty));
  return denom > 0.0 ? (conc - disc) / denom : 0.0;
}

}  // namespace cam::metrics
