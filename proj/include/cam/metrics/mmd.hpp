// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "cam/core/error.hpp"
#include "cam/core/tensor.hpp"

namespace cam::metrics {

namespace detail {

inline Matd squared_distances(const Matd& a, const Matd& b) {
  const Vecd na = a.rowwise().squaredNorm();
  const Vecd nb = b.rowwise().squaredNorm();
  Matd d = -2.0 * a * b.transpose();
  d.colwise() += na;
  d.rowwise() += nb.transpose();
  return d.cwiseMax(0.0);
}

}  // namespace detail

/// Median pairwise Euclidean distance over the pooled samples (at most 1000
/// evenly strided rows from each side).
inline double median_heuristic(const Matd& a, const Matd& b) {
  const auto take = [](const Matd& m) {
    const Eigen::Index n = std::min<Eigen::Index>(m.rows(), 1000);
    Matd out(n, m.cols());
    for (Eigen::Index i = 0; i < n; ++i) out.row(i) = m.row(i * m.rows() / n);
    return out;
  };
  Matd pool(0, a.cols());
  const Matd sa = take(a);
  const Matd sb = take(b);
  pool.resize(sa.rows() + sb.rows(), a.cols());
  pool << sa, sb;
  const Matd d2 = detail::squared_distances(pool, pool);
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(pool.rows() * (pool.rows() - 1) / 2));
  for (Eigen::Index i = 0; i < pool.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < pool.rows(); ++j) v.push_back(d2(i, j));
  }
  if (v.empty()) return 1.0;
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  const double h = std::sqrt(*mid);
  return h > 0.0 ? h : 1.0;
}

/// Unbiased MMD^2 with kernel exp(-||x - y||^2 / (2 h^2)); the median
/// heuristic picks h when no bandwidth is given.
inline double mmd_rbf(const Matd& a, const Matd& b, std::optional<double> bandwidth = std::nullopt) {
  if (a.rows() < 2 || b.rows() < 2) throw ShapeError("mmd_rbf: need at least two samples per set");
  if (a.cols() != b.cols()) throw ShapeError("mmd_rbf: sample dimensions differ");
  const double h = bandwidth ? *bandwidth : median_heuristic(a, b);
  if (!(h > 0.0)) throw ConfigError("mmd_rbf: bandwidth must be > 0");
  const double g = 1.0 / (2.0 * h * h);
  const auto mean_kernel = [g](const Matd& x, const Matd& y, bool drop_diag) {
    const Matd k = (-g * detail::squared_distances(x, y)).array().exp().matrix();
    double s = k.sum();
    if (drop_diag) s -= k.trace();
    const double pairs = drop_diag ? static_cast<double>(x.rows()) * (x.rows() - 1)
                                   : static_cast<double>(x.rows()) * y.rows();
    return s / pairs;
  };
  return mean_kernel(a, a, true) + mean_kernel(b, b, true) - 2.0 * mean_kernel(a, b, false);
}

}  // namespace cam::metrics
