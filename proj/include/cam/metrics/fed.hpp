// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "cam/core/rng.hpp"
#include "cam/data/dataset.hpp"
#include "cam/metrics/frechet.hpp"

namespace cam::metrics {

/// Deterministic summary of a (window x dim) block: per-dim mean, std and
/// lag-1 autocorrelation, plus a seeded random projection of the flattened
/// window to 2 * dim values.
class WindowFeatures {
 public:
  WindowFeatures(int window, int dim, std::uint64_t seed) : window_(window), dim_(dim) {
    if (window < 2 || dim < 1) throw ConfigError("WindowFeatures: need window >= 2 and dim >= 1");
    Rng rng = Rng(seed).split(0x70726f6a);
    projection_ = rng.normal_matrix<double>(static_cast<Eigen::Index>(window) * dim, 2 * dim) /
                  std::sqrt(static_cast<double>(window) * dim);
  }

  [[nodiscard]] int window() const { return window_; }
  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] int size() const { return 5 * dim_; }

  [[nodiscard]] Vecd operator()(const Matd& w) const {
    if (w.rows() != window_ || w.cols() != dim_) throw ShapeError("WindowFeatures: window shape mismatch");
    Vecd f(size());
    const Eigen::RowVectorXd m = w.colwise().mean();
    const Matd c = w.rowwise() - m;
    const Eigen::RowVectorXd c0 = c.colwise().squaredNorm();
    const Eigen::RowVectorXd c1 = (c.topRows(window_ - 1).array() * c.bottomRows(window_ - 1).array()).colwise().sum();
    for (int j = 0; j < dim_; ++j) {
      f(j) = m(j);
      f(dim_ + j) = std::sqrt(c0(j) / window_);
      f(2 * dim_ + j) = c0(j) > 0.0 ? c1(j) / c0(j) : 0.0;
    }
    const Eigen::Map<const Eigen::RowVectorXd> flat(w.data(), w.size());
    f.tail(2 * dim_) = (flat * projection_).transpose();
    return f;
  }

 private:
  int window_;
  int dim_;
  Matd projection_;
};

struct FedSettings {
  int window = 64;
  int reference_windows = 4096;
  int background = 512;
  int draws = 5;
  std::uint64_t feature_seed = 0;
  double shrinkage = 1e-6;
};

struct FedResult {
  double fed = 0.0;
  double fed_acc = 0.0;
  std::vector<double> fed_draws;
  std::vector<double> fed_acc_draws;
};

/// Statistics of `count` randomly placed reference windows.
inline GaussianStats reference_window_stats(const data::Dataset& reference, const WindowFeatures& fm, int count,
                                            std::uint64_t seed) {
  if (count <= fm.size()) {
    throw ConfigError("fed_protocol: " + std::to_string(count) + " reference windows do not exceed the " +
                      std::to_string(fm.size()) + " features; use a larger reference set");
  }
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (reference.sequences[i].rows() >= fm.window()) usable.push_back(i);
  }
  if (usable.empty()) throw ConfigError("fed_protocol: no reference sequence is as long as the window");
  Rng rng = Rng(seed).split(1);
  Matd feats(count, fm.size());
  for (int i = 0; i < count; ++i) {
    const auto& s = reference.sequences[usable[rng.below(usable.size())]];
    const auto off = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(s.rows() - fm.window() + 1)));
    feats.row(i) = fm(s.middleRows(off, fm.window()).template cast<double>()).transpose();
  }
  return gaussian_stats(feats);
}

/// FED on positions [0, window) and FED_acc on [window, 2 * window) of each trace,
/// averaged over `draws` background subsets drawn without replacement.
template <class M>
FedResult fed_protocol(const std::vector<M>& traces, const data::Dataset& reference, const FedSettings& s = {}) {
  const WindowFeatures fm(s.window, reference.dim, s.feature_seed);
  const int n = std::min<int>(s.background, static_cast<int>(traces.size()));
  if (n <= fm.size()) {
    throw ConfigError("fed_protocol: " + std::to_string(n) + " traces do not exceed the " + std::to_string(fm.size()) +
                      " window features; generate more traces or reduce the feature dimension");
  }
  for (const auto& t : traces) {
    if (t.rows() < 2 * s.window || t.cols() != reference.dim) {
      throw ShapeError("fed_protocol: every trace needs at least 2 * window rows of the reference dim");
    }
  }
  const GaussianStats ref = reference_window_stats(reference, fm, s.reference_windows, s.feature_seed);
  Matd first(traces.size(), fm.size());
  Matd second(traces.size(), fm.size());
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const Matd t = traces[i].template cast<double>();
    first.row(static_cast<Eigen::Index>(i)) = fm(t.topRows(s.window)).transpose();
    second.row(static_cast<Eigen::Index>(i)) = fm(t.middleRows(s.window, s.window)).transpose();
  }
  FedResult out;
  Rng rng = Rng(s.feature_seed).split(2);
  std::vector<Eigen::Index> idx(traces.size());
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (int d = 0; d < s.draws; ++d) {
    for (int i = 0; i < n; ++i) {
      const auto j = static_cast<std::size_t>(i) + rng.below(idx.size() - static_cast<std::size_t>(i));
      std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
    }
    Matd a(n, fm.size());
    Matd b(n, fm.size());
    for (int i = 0; i < n; ++i) {
      a.row(i) = first.row(idx[static_cast<std::size_t>(i)]);
      b.row(i) = second.row(idx[static_cast<std::size_t>(i)]);
    }
    out.fed_draws.push_back(frechet_distance(gaussian_stats(a), ref, s.shrinkage));
    out.fed_acc_draws.push_back(frechet_distance(gaussian_stats(b), ref, s.shrinkage));
  }
  out.fed = std::accumulate(out.fed_draws.begin(), out.fed_draws.end(), 0.0) / s.draws;
  out.fed_acc = std::accumulate(out.fed_acc_draws.begin(), out.fed_acc_draws.end(), 0.0) / s.draws;
  return out;
}

}  // namespace cam::metrics
