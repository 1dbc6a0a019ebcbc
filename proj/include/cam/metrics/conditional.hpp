// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>

#include "cam/data/process.hpp"
#include "cam/infer/generate.hpp"
#include "cam/metrics/frechet.hpp"

namespace cam::metrics {

/// Draws `count` samples (rows) of the next element after `prefix`.
using ConditionalSampler = std::function<Matd(const Matd& prefix, int count, Rng& rng)>;

struct ConditionalSettings {
  int num_probes = 16;
  int draws = 10000;
  int prefix_length = 63;
};

struct ConditionalAccuracy {
  double mean_err = 0.0;  // sqrt(sum ||m_hat - m||^2 / sum ||m||^2) over probes
  double cov_err = 0.0;   // same with Frobenius norms of the covariances
  int probes = 0;
};

/// Compares the empirical moments of `sampler` with the exact conditional on
/// prefixes drawn from the process itself.
inline ConditionalAccuracy conditional_accuracy(const ConditionalSampler& sampler, const data::SyntheticProcessSpec& spec,
                                                const ConditionalSettings& s, Rng& rng) {
  if (s.num_probes < 1 || s.draws < 2) throw ConfigError("conditional_accuracy: need >= 1 probe and >= 2 draws");
  double mean_num = 0.0;
  double mean_den = 0.0;
  double cov_num = 0.0;
  double cov_den = 0.0;
  for (int p = 0; p < s.num_probes; ++p) {
    Rng prefix_rng = rng.split(2 * static_cast<std::uint64_t>(p));
    Rng draw_rng = rng.split(2 * static_cast<std::uint64_t>(p) + 1);
    const Matd prefix = data::sample_process(spec, 1, s.prefix_length, prefix_rng).sequences[0].cast<double>();
    const data::Conditional truth = data::oracle_conditional(spec, prefix);
    const GaussianStats est = gaussian_stats(sampler(prefix, s.draws, draw_rng));
    mean_num += (est.mean - truth.mean).squaredNorm();
    mean_den += truth.mean.squaredNorm();
    cov_num += (est.cov - truth.cov).squaredNorm();
    cov_den += truth.cov.squaredNorm();
  }
  ConditionalAccuracy out;
  out.mean_err = std::sqrt(mean_num / mean_den);
  out.cov_err = std::sqrt(cov_num / cov_den);
  out.probes = s.num_probes;
  return out;
}

/// Samples straight from the exact conditional; its errors are the Monte-Carlo floor.
inline ConditionalSampler oracle_sampler(const data::SyntheticProcessSpec& spec) {
  return [spec](const Matd& prefix, int count, Rng& rng) {
    const data::Conditional c = data::oracle_conditional(spec, prefix);
    const Matd chol = Eigen::LLT<Matd>(c.cov).matrixL();
    Matd out = rng.normal_matrix<double>(count, c.mean.size()) * chol.transpose();
    out.rowwise() += c.mean.transpose();
    return out;
  };
}

/// Samples the model's next-element distribution given clean prefix inputs.
template <class T>
ConditionalSampler model_sampler(const model::ModelParams<T>& params, const infer::GenerationConfig& gen,
                                 int chunk = 2048) {
  return [&params, gen, chunk](const Matd& prefix, int count, Rng& rng) {
    const Mat<T> z = model::backbone_forward(params, Mat<T>(prefix.cast<T>())).bottomRows(1);
    Matd out(count, params.config.backbone.input_dim);
    for (int start = 0; start < count; start += chunk) {
      const int n = std::min(chunk, count - start);
      std::vector<Rng> rngs;
      for (int i = 0; i < n; ++i) rngs.push_back(rng.split(static_cast<std::uint64_t>(start + i)));
      out.middleRows(start, n) = infer::detail::sample_next(params, Mat<T>(z.replicate(n, 1)), rngs, gen).template cast<double>();
    }
    return out;
  };
}

}  // namespace cam::metrics
