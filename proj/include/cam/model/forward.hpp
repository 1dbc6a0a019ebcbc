// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <type_traits>
#include <vector>

#include "cam/model/params.hpp"
#include "cam/nn/ops.hpp"

namespace cam::model {

using nn::Tape;
using nn::Var;

/// Records parameter `name` on the tape, differentiable when the tape and the
/// parameter container allow it.
template <class T, class P>
Var bind_param(Tape<T>& t, P& params, const std::string& name) {
  if constexpr (std::is_const_v<P>) {
    return t.constant_ref(params.store.at(name).value);
  } else {
    auto& p = params.store.at(name);
    return t.grad_enabled() ? t.parameter(p) : t.constant_ref(p.value);
  }
}

template <class T, class P>
Var dense(Tape<T>& t, P& params, Var x, const std::string& prefix) {
  return nn::linear(t, x, bind_param(t, params, prefix + ".w"), bind_param(t, params, prefix + ".b"));
}

/// Causal transformer over `batch` blocks of `len` input embeddings.
///
/// Returns the final-normed hidden states (batch * len rows). Row t of a block
/// depends only on inputs 0..t of that block. `pos_offset` selects the first
/// positional embedding row.
template <class T, class P>
Var backbone_hidden(Tape<T>& t, P& params, Var inputs, Eigen::Index batch, Eigen::Index len,
                    Eigen::Index pos_offset = 0) {
  const BackboneConfig& c = params.config.backbone;
  if (len < 1) throw ShapeError("backbone: empty input block");
  if (pos_offset + len > c.max_context) {
    throw ShapeError("backbone: context overflow (" + std::to_string(pos_offset + len) + " > " +
                     std::to_string(c.max_context) + ")");
  }
  if (t.value(inputs).cols() != c.input_dim || t.value(inputs).rows() != batch * len) {
    throw ShapeError("backbone: input shape does not match config");
  }
  Var h = dense(t, params, inputs, "backbone.in");
  h = nn::add_positional(t, h, bind_param(t, params, "backbone.pos"), len, pos_offset);
  for (int l = 0; l < c.num_layers; ++l) {
    const std::string pre = layer_prefix("backbone.layer", l);
    Var a = nn::layer_norm(t, h, bind_param(t, params, pre + ".ln1.g"), bind_param(t, params, pre + ".ln1.b"));
    a = dense(t, params, a, pre + ".qkv");
    a = nn::causal_attention(t, a, batch, len, c.num_heads);
    a = dense(t, params, a, pre + ".proj");
    h = nn::add(t, h, a);
    Var m = nn::layer_norm(t, h, bind_param(t, params, pre + ".ln2.g"), bind_param(t, params, pre + ".ln2.b"));
    m = nn::gelu(t, dense(t, params, m, pre + ".fc1"));
    m = dense(t, params, m, pre + ".fc2");
    h = nn::add(t, h, m);
  }
  return nn::layer_norm(t, h, bind_param(t, params, "backbone.ln_f.g"), bind_param(t, params, "backbone.ln_f.b"));
}

/// Conditioning vectors for every position of `batch` sequences.
///
/// Inputs are the first `in_len` embeddings of each sequence; the result has
/// in_len + 1 rows per sequence where row 0 is z_SOS and row t is the backbone
/// output after consuming inputs 0..t-1. `drop` replaces flagged rows by z_SOS.
template <class T, class P>
Var backbone_conditions(Tape<T>& t, P& params, Var inputs, Eigen::Index batch, Eigen::Index in_len,
                        std::vector<char> drop = {}) {
  Var sos = bind_param(t, params, "sos");
  if (in_len == 0) {
    const Eigen::Index d = params.config.backbone.model_dim;
    Var empty = t.constant(Mat<T>(0, d));
    return nn::condition_rows(t, empty, sos, batch, 0, std::move(drop));
  }
  Var h = backbone_hidden(t, params, inputs, batch, in_len);
  return nn::condition_rows(t, h, sos, batch, in_len, std::move(drop));
}

/// Sinusoidal features of the noise level, scaled by 1000 as in timestep embeddings.
template <class T>
Mat<T> noise_level_features(const Vec<T>& sigma, int frequency_dim) {
  const int half = frequency_dim / 2;
  Eigen::Matrix<T, 1, Eigen::Dynamic> freq(half);
  for (int i = 0; i < half; ++i) freq(i) = static_cast<T>(1000.0 * std::exp(-std::log(10000.0) * i / half));
  const Mat<T> arg = sigma * freq;
  Mat<T> f(sigma.size(), frequency_dim);
  f.leftCols(half) = arg.array().cos().matrix();
  f.rightCols(half) = arg.array().sin().matrix();
  return f;
}

/// Drift (or noise) prediction of the sampler for a batch of rows.
///
/// concat(z, y) is projected to the sampler width and passed through residual
/// MLP blocks whose pre-norm is scaled, shifted and gated by an embedding of
/// the noise level.
template <class T, class P>
Var sampler_output(Tape<T>& t, P& params, Var z, Var y, const Vec<T>& sigma) {
  const SamplerConfig& c = params.config.sampler;
  const Mat<T>& Y = t.value(y);
  if (Y.cols() != c.input_dim) throw ShapeError("sampler: y width does not match input_dim");
  if (t.value(z).rows() != Y.rows() || sigma.size() != Y.rows()) {
    throw ShapeError("sampler: z, y and sigma must have the same number of rows");
  }
  if (t.value(z).cols() != params.config.backbone.model_dim) {
    throw ShapeError("sampler: z width does not match backbone model_dim");
  }
  const Eigen::Index sd = c.model_dim;
  Var feat = t.constant(noise_level_features<T>(sigma, c.frequency_dim));
  Var cond = dense(t, params, feat, "sampler.temb1");
  cond = dense(t, params, nn::silu(t, cond), "sampler.temb2");
  Var cond_act = nn::silu(t, cond);

  Var h = dense(t, params, nn::concat_cols(t, z, y), "sampler.in");
  for (int l = 0; l < c.num_layers; ++l) {
    const std::string pre = layer_prefix("sampler.block", l);
    Var mod = dense(t, params, cond_act, pre + ".mod");
    Var shift = nn::slice_cols(t, mod, 0, sd);
    Var scl = nn::slice_cols(t, mod, sd, sd);
    Var gate = nn::slice_cols(t, mod, 2 * sd, sd);
    Var u = nn::modulate(t, nn::layer_norm(t, h), shift, scl);
    u = nn::gelu(t, dense(t, params, u, pre + ".fc1"));
    u = dense(t, params, u, pre + ".fc2");
    h = nn::gated_residual(t, h, gate, u);
  }
  Var mod = dense(t, params, cond_act, "sampler.final_mod");
  Var out = nn::modulate(t, nn::layer_norm(t, h), nn::slice_cols(t, mod, 0, sd),
                         nn::slice_cols(t, mod, sd, sd));
  return dense(t, params, out, "sampler.out");
}

struct GmmVars {
  Var logits;
  Var means;
  Var raw_std;
};

template <class T, class P>
GmmVars gmm_head(Tape<T>& t, P& params, Var z) {
  return {dense(t, params, z, "gmm.logits"), dense(t, params, z, "gmm.means"),
          dense(t, params, z, "gmm.std")};
}

inline constexpr double kStdFloor = 1e-4;

// ---------------------------------------------------------------------------
// Non-differentiable entry points.

/// Conditioning vectors for one sequence of inputs: (n + 1) x model_dim, row 0 = z_SOS.
template <class T>
Mat<T> backbone_forward(const ModelParams<T>& params, const Mat<T>& inputs) {
  Tape<T> t(false);
  Var in = t.constant_ref(inputs);
  return t.value(backbone_conditions(t, params, in, 1, inputs.rows()));
}

/// Sampler prediction for row-batched y, per-row sigma and per-row z.
template <class T>
Mat<T> sampler_forward(const ModelParams<T>& params, const Mat<T>& y, const Vec<T>& sigma,
                       const Mat<T>& z) {
  if (!params.config.uses_sampler()) throw ConfigError("model has no sampler");
  Tape<T> t(false);
  return t.value(sampler_output(t, params, t.constant_ref(z), t.constant_ref(y), sigma));
}

}  // namespace cam::model
