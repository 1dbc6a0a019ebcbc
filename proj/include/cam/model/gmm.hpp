// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "cam/model/forward.hpp"

namespace cam::model {

/// Diagonal-covariance Gaussian mixture over one embedding.
template <class T>
struct GMMParams {
  Vec<T> weights;   // K, on the simplex
  Mat<T> means;     // K x d
  Mat<T> stddevs;   // K x d, positive

  [[nodiscard]] Eigen::Index num_modes() const { return weights.size(); }
  [[nodiscard]] Eigen::Index dim() const { return means.cols(); }
};

/// Mixture parameters for each row of `z` (softmax weights, softplus + floor stds).
template <class T>
std::vector<GMMParams<T>> gmm_head_forward(const ModelParams<T>& params, const Mat<T>& z) {
  if (params.config.head != HeadKind::gmm) throw ConfigError("model has no GMM head");
  if (!z.allFinite()) throw NumericError("gmm_head_forward: non-finite conditioning vector");
  Tape<T> t(false);
  const GmmVars v = gmm_head(t, params, t.constant_ref(z));
  const Mat<T>& L = t.value(v.logits);
  const Mat<T>& M = t.value(v.means);
  const Mat<T>& R = t.value(v.raw_std);
  const Eigen::Index k = params.config.gmm.num_modes;
  const Eigen::Index d = params.config.gmm.output_dim;
  std::vector<GMMParams<T>> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    auto& g = out[static_cast<std::size_t>(r)];
    const T mx = L.row(r).maxCoeff();
    g.weights = (L.row(r).array() - mx).exp().matrix().transpose();
    g.weights /= g.weights.sum();
    g.means.resize(k, d);
    g.stddevs.resize(k, d);
    for (Eigen::Index j = 0; j < k; ++j) {
      g.means.row(j) = M.block(r, j * d, 1, d);
      for (Eigen::Index c = 0; c < d; ++c) {
        g.stddevs(j, c) = nn::detail::softplus_scalar(R(r, j * d + c)) + static_cast<T>(kStdFloor);
      }
    }
    if (!L.row(r).allFinite() || !g.means.allFinite() || !g.stddevs.allFinite()) {
      throw NumericError("gmm_head_forward: non-finite activations at row " + std::to_string(r));
    }
  }
  return out;
}

/// log p(x) under the mixture, stabilized with log-sum-exp.
///
/// The shift is the component log-density (without its weight) of the
/// dominant mode, so the weights enter as plain factors: a mixture of
/// identical components evaluates to exactly the single-component value.
template <class T>
double gmm_log_prob(const GMMParams<T>& g, const Vec<T>& x) {
  cam::detail::require_same_dim(static_cast<std::size_t>(x.size()),
                                static_cast<std::size_t>(g.dim()), "gmm_log_prob");
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  std::vector<double> comp(static_cast<std::size_t>(g.num_modes()));
  double best = -std::numeric_limits<double>::infinity();
  std::size_t arg = 0;
  for (Eigen::Index j = 0; j < g.num_modes(); ++j) {
    double lp = 0.0;
    for (Eigen::Index c = 0; c < g.dim(); ++c) {
      const double s = g.stddevs(j, c);
      const double zc = (static_cast<double>(x(c)) - static_cast<double>(g.means(j, c))) / s;
      lp += -0.5 * zc * zc - std::log(s) - half_log_2pi;
    }
    comp[static_cast<std::size_t>(j)] = lp;
    const double weighted = std::log(static_cast<double>(g.weights(j))) + lp;
    if (weighted > best) {
      best = weighted;
      arg = static_cast<std::size_t>(j);
    }
  }
  if (!std::isfinite(best)) return best;
  const double shift = comp[arg];
  double acc = 0.0;
  for (Eigen::Index j = 0; j < g.num_modes(); ++j) {
    acc += static_cast<double>(g.weights(j)) * std::exp(comp[static_cast<std::size_t>(j)] - shift);
  }
  return shift + std::log(acc);
}

/// Picks a mode in proportion to its weight, then draws each coordinate from
/// Normal(mean, (temperature * std)^2).
template <class T>
Vec<T> gmm_sample(const GMMParams<T>& g, double temperature, Rng& rng) {
  if (!(temperature > 0.0)) throw ConfigError("gmm_sample: temperature must be > 0");
  const double u = rng.uniform();
  Eigen::Index mode = g.num_modes() - 1;
  double cum = 0.0;
  for (Eigen::Index j = 0; j < g.num_modes(); ++j) {
    cum += static_cast<double>(g.weights(j));
    if (u < cum) {
      mode = j;
      break;
    }
  }
  Vec<T> x(g.dim());
  for (Eigen::Index c = 0; c < g.dim(); ++c) {
    x(c) = static_cast<T>(static_cast<double>(g.means(mode, c)) +
                          temperature * static_cast<double>(g.stddevs(mode, c)) * rng.normal());
  }
  return x;
}

}  // namespace cam::model
