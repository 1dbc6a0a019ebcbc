// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "cam/core/error.hpp"
#include "cam/core/rng.hpp"
#include "cam/core/tensor.hpp"

namespace cam::data {

/// One ordered sequence of embeddings, one frame per row (length x d).
using EmbeddingSequence = Matf;

struct NormalizationStats {
  Vec<double> mean;
  Vec<double> std;
};

struct Dataset {
  int dim = 0;
  std::vector<EmbeddingSequence> sequences;
  std::optional<NormalizationStats> normalization;
  std::string provenance;

  [[nodiscard]] std::size_t size() const { return sequences.size(); }
  [[nodiscard]] std::size_t total_frames() const {
    std::size_t n = 0;
    for (const auto& s : sequences) n += static_cast<std::size_t>(s.rows());
    return n;
  }
};

/// Per-dimension mean and standard deviation over every frame of the corpus.
inline NormalizationStats compute_stats(const Dataset& ds) {
  NormalizationStats st;
  st.mean = Vec<double>::Zero(ds.dim);
  st.std = Vec<double>::Zero(ds.dim);
  const double n = static_cast<double>(ds.total_frames());
  if (n == 0) throw ConfigError("compute_stats: dataset has no frames");
  for (const auto& s : ds.sequences) st.mean += s.cast<double>().colwise().sum().transpose();
  st.mean /= n;
  for (const auto& s : ds.sequences) {
    st.std += (s.cast<double>().rowwise() - st.mean.transpose()).array().square().colwise().sum().matrix().transpose();
  }
  st.std = (st.std / n).cwiseSqrt();
  for (Eigen::Index i = 0; i < st.std.size(); ++i) {
    if (st.std(i) <= 0.0) st.std(i) = 1.0;
  }
  return st;
}

inline Dataset normalize(const Dataset& ds, const NormalizationStats& st) {
  Dataset out = ds;
  for (auto& s : out.sequences) {
    s = ((s.cast<double>().rowwise() - st.mean.transpose()).array().rowwise() /
         st.std.transpose().array())
            .matrix()
            .cast<float>();
  }
  out.normalization = st;
  return out;
}

inline Dataset denormalize(const Dataset& ds, const NormalizationStats& st) {
  Dataset out = ds;
  for (auto& s : out.sequences) {
    s = ((s.cast<double>().array().rowwise() * st.std.transpose().array()).rowwise() +
         st.mean.transpose().array())
            .matrix()
            .cast<float>();
  }
  out.normalization.reset();
  return out;
}

/// Crops every sequence to `length` frames at a uniformly random offset.
inline Dataset crop_random(const Dataset& ds, int length, Rng& rng) {
  if (length < 1) throw ConfigError("crop_random: length must be >= 1");
  Dataset out;
  out.dim = ds.dim;
  out.normalization = ds.normalization;
  out.provenance = ds.provenance;
  out.sequences.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.sequences[i];
    if (s.rows() < length) {
      throw ConfigError("crop_random: sequence " + std::to_string(i) + " has " +
                        std::to_string(s.rows()) + " frames, need " + std::to_string(length));
    }
    const auto start =
        static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(s.rows() - length + 1)));
    out.sequences.emplace_back(s.middleRows(start, length));
  }
  return out;
}

}  // namespace cam::data
