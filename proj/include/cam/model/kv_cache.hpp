// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "cam/model/forward.hpp"

namespace cam::model {

/// Per-layer keys and values of `batch` sequences advancing in lockstep.
template <class T>
class KVCache {
 public:
  KVCache(const BackboneConfig& cfg, Eigen::Index batch)
      : cfg_(cfg), batch_(batch) {
    keys_.assign(static_cast<std::size_t>(cfg.num_layers),
                 Mat<T>::Zero(batch * cfg.max_context, cfg.model_dim));
    values_ = keys_;
  }

  [[nodiscard]] Eigen::Index length() const { return length_; }
  [[nodiscard]] Eigen::Index batch() const { return batch_; }
  [[nodiscard]] const BackboneConfig& config() const { return cfg_; }
  void reset() { length_ = 0; }

  Mat<T>& keys(int layer) { return keys_[static_cast<std::size_t>(layer)]; }
  Mat<T>& values(int layer) { return values_[static_cast<std::size_t>(layer)]; }
  void advance() { ++length_; }

 private:
  BackboneConfig cfg_;
  Eigen::Index batch_;
  Eigen::Index length_ = 0;
  std::vector<Mat<T>> keys_;
  std::vector<Mat<T>> values_;
};

namespace detail {

template <class T>
void layer_norm_rows(Mat<T>& x, const Mat<T>& gain, const Mat<T>& bias, T eps = T(1e-5)) {
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T mean = x.row(r).mean();
    const T var = (x.row(r).array() - mean).square().mean();
    const T inv = T(1) / std::sqrt(var + eps);
    x.row(r) = ((x.row(r).array() - mean) * inv) * gain.row(0).array() + bias.row(0).array();
  }
}

template <class T>
Mat<T> affine(const ModelParams<T>& p, const Mat<T>& x, const std::string& prefix) {
  Mat<T> y(x.rows(), p.value(prefix + ".w").cols());
  y.noalias() = x * p.value(prefix + ".w");
  y.rowwise() += p.value(prefix + ".b").row(0);
  return y;
}

}  // namespace detail

/// Feeds one new input per sequence (rows of `x`) through the backbone.
///
/// Returns the conditioning vectors that follow those inputs, i.e. the z used
/// to predict the next element of each sequence.
template <class T>
Mat<T> backbone_step(const ModelParams<T>& params, KVCache<T>& cache, const Mat<T>& x) {
  const BackboneConfig& c = params.config.backbone;
  if (!(cache.config() == c)) throw ConfigError("KV cache was built for a different backbone");
  if (x.rows() != cache.batch() || x.cols() != c.input_dim) {
    throw ShapeError("backbone_step: input shape does not match cache batch / input_dim");
  }
  const Eigen::Index pos = cache.length();
  if (pos >= c.max_context) {
    throw ShapeError("backbone_step: context overflow at position " + std::to_string(pos));
  }
  const Eigen::Index d = c.model_dim;
  const Eigen::Index hd = d / c.num_heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(hd));
  const Eigen::Index stride = c.max_context;

  Mat<T> h = detail::affine(params, x, "backbone.in");
  h.rowwise() += params.value("backbone.pos").row(pos);
  for (int l = 0; l < c.num_layers; ++l) {
    const std::string pre = layer_prefix("backbone.layer", l);
    Mat<T> a = h;
    detail::layer_norm_rows(a, params.value(pre + ".ln1.g"), params.value(pre + ".ln1.b"));
    const Mat<T> qkv = detail::affine(params, a, pre + ".qkv");
    Mat<T>& K = cache.keys(l);
    Mat<T>& V = cache.values(l);
    Mat<T> attn(h.rows(), d);
    Vec<T> scores(pos + 1);
    for (Eigen::Index b = 0; b < h.rows(); ++b) {
      K.row(b * stride + pos) = qkv.block(b, d, 1, d);
      V.row(b * stride + pos) = qkv.block(b, 2 * d, 1, d);
      for (Eigen::Index hh = 0; hh < c.num_heads; ++hh) {
        const auto q = qkv.block(b, hh * hd, 1, hd);
        const auto Kb = K.block(b * stride, hh * hd, pos + 1, hd);
        const auto Vb = V.block(b * stride, hh * hd, pos + 1, hd);
        scores.noalias() = (Kb * q.transpose()) * inv_sqrt;
        const T mx = scores.maxCoeff();
        scores = (scores.array() - mx).exp();
        scores /= scores.sum();
        attn.block(b, hh * hd, 1, hd).noalias() = scores.transpose() * Vb;
      }
    }
    h += detail::affine(params, attn, pre + ".proj");
    Mat<T> m = h;
    detail::layer_norm_rows(m, params.value(pre + ".ln2.g"), params.value(pre + ".ln2.b"));
    m = nn::detail::gelu_values<T>(detail::affine(params, m, pre + ".fc1"));
    h += detail::affine(params, m, pre + ".fc2");
  }
  detail::layer_norm_rows(h, params.value("backbone.ln_f.g"), params.value("backbone.ln_f.b"));
  cache.advance();
  return h;
}

/// Incremental backbone pass over a new suffix of one sequence.
///
/// Returns one conditioning vector per suffix element (the z that follows it).
template <class T>
Mat<T> backbone_forward(const ModelParams<T>& params, const Mat<T>& suffix, KVCache<T>& cache) {
  if (cache.batch() != 1) throw ShapeError("backbone_forward: cache must hold a single sequence");
  Mat<T> out(suffix.rows(), params.config.backbone.model_dim);
  for (Eigen::Index i = 0; i < suffix.rows(); ++i) {
    out.row(i) = backbone_step(params, cache, Mat<T>(suffix.row(i))).row(0);
  }
  return out;
}

}  // namespace cam::model
