// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "cam/data/dataset.hpp"
#include "cam/metrics/frechet.hpp"

namespace cam::metrics {

struct AccumulationPoint {
  int position = 0;  // first position of the bucket
  double distance = 0.0;
  std::int64_t frames = 0;
};

struct AccumulationCurve {
  std::vector<AccumulationPoint> points;
  double tau = 0.0;  // Kendall tau of distance against position
  std::vector<std::string> warnings;
};

/// Marginal statistics of every frame in `ds`.
inline GaussianStats frame_stats(const data::Dataset& ds) {
  Matd all(static_cast<Eigen::Index>(ds.total_frames()), ds.dim);
  Eigen::Index r = 0;
  for (const auto& s : ds.sequences) {
    all.middleRows(r, s.rows()) = s.cast<double>();
    r += s.rows();
  }
  return gaussian_stats(all);
}

/// Frechet distance between the frames in each bucket of `stride` positions
/// and the reference marginal. Buckets with too few frames for a covariance
/// are skipped and reported in `warnings`.
template <class M>
AccumulationCurve accumulation_curve(const std::vector<M>& traces, const data::Dataset& reference, int stride) {
  if (stride < 1) throw ConfigError("accumulation_curve: stride must be >= 1");
  Eigen::Index longest = 0;
  for (const auto& t : traces) longest = std::max(longest, t.rows());
  if (longest <= stride) throw ConfigError("accumulation_curve: traces must be longer than the stride");
  const GaussianStats ref = frame_stats(reference);
  AccumulationCurve out;
  std::vector<double> pos;
  std::vector<double> dist;
  for (Eigen::Index start = 0; start < longest; start += stride) {
    std::vector<Eigen::RowVectorXd> rows;
    for (const auto& t : traces) {
      for (Eigen::Index p = start; p < std::min<Eigen::Index>(start + stride, t.rows()); ++p) {
        rows.push_back(t.row(p).template cast<double>());
      }
    }
    if (static_cast<Eigen::Index>(rows.size()) <= reference.dim) {
      out.warnings.push_back("bucket at position " + std::to_string(start) + " has " + std::to_string(rows.size()) +
                             " frames; skipped");
      continue;
    }
    Matd x(static_cast<Eigen::Index>(rows.size()), reference.dim);
    for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = rows[i];
    AccumulationPoint pt;
    pt.position = static_cast<int>(start);
    pt.distance = frechet_distance(gaussian_stats(x), ref);
    pt.frames = x.rows();
    out.points.push_back(pt);
    pos.push_back(static_cast<double>(start));
    dist.push_back(pt.distance);
  }
  out.tau = kendall_tau(pos, dist);
  return out;
}

}  // namespace cam::metrics
