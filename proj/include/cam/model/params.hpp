// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <unordered_map>

#include "cam/core/rng.hpp"
#include "cam/model/config.hpp"
#include "cam/nn/tape.hpp"

namespace cam::model {

/// Ordered collection of named parameters. References stay valid as it grows.
template <class T>
class ParamStore {
 public:
  nn::Parameter<T>& add(const std::string& name, Mat<T> value, bool decay) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter '" + name + "'");
    index_.emplace(name, params_.size());
    params_.push_back(nn::Parameter<T>{name, std::move(value), Mat<T>(), decay});
    return params_.back();
  }

  [[nodiscard]] nn::Parameter<T>& at(const std::string& name) {
    return params_[lookup(name)];
  }
  [[nodiscard]] const nn::Parameter<T>& at(const std::string& name) const {
    return params_[lookup(name)];
  }
  [[nodiscard]] bool contains(const std::string& name) const { return index_.contains(name); }

  [[nodiscard]] std::size_t size() const { return params_.size(); }
  [[nodiscard]] std::int64_t num_scalars() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  [[nodiscard]] auto begin() const { return params_.begin(); }
  [[nodiscard]] auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  [[nodiscard]] std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::deque<nn::Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// All learnable state of one model variant plus its config.
template <class T>
struct ModelParams {
  ModelConfig config;
  ParamStore<T> store;
  std::int64_t step = 0;

  [[nodiscard]] const Mat<T>& value(const std::string& name) const { return store.at(name).value; }

  /// Same parameters converted to another scalar type.
  template <class U>
  [[nodiscard]] ModelParams<U> cast() const {
    ModelParams<U> out;
    out.config = config;
    out.step = step;
    for (const auto& p : store) out.store.add(p.name, p.value.template cast<U>(), p.decay);
    return out;
  }

  [[nodiscard]] bool all_finite() const {
    for (const auto& p : store) {
      if (!p.value.allFinite()) return false;
    }
    return true;
  }
};

namespace detail {

template <class T>
Mat<T> trunc_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols, double std) {
  Mat<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double v = 0.0;
    do {
      v = rng.normal();
    } while (v < -2.0 || v > 2.0);
    m.data()[i] = static_cast<T>(v * std);
  }
  return m;
}

template <class T>
void add_linear(ParamStore<T>& s, Rng& rng, const std::string& prefix, int in, int out,
                bool zero = false) {
  s.add(prefix + ".w", zero ? Mat<T>::Zero(in, out) : trunc_normal<T>(rng, in, out, 0.02), true);
  s.add(prefix + ".b", Mat<T>::Zero(1, out), false);
}

template <class T>
void add_norm(ParamStore<T>& s, const std::string& prefix, int dim) {
  s.add(prefix + ".g", Mat<T>::Ones(1, dim), false);
  s.add(prefix + ".b", Mat<T>::Zero(1, dim), false);
}

}  // namespace detail

inline std::string layer_prefix(const char* group, int i) {
  return std::string(group) + "." + std::to_string(i);
}

/// Builds freshly initialized parameters for `cfg`.
///
/// Weights are truncated normal (std 0.02, cut at two std), biases zero, norm
/// gains one, and every noise-level modulation layer zero so the sampler
/// blocks start as identities.
template <class T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams<T> p;
  p.config = cfg;
  Rng rng(seed);
  auto& s = p.store;
  const auto& bb = cfg.backbone;
  const int d = bb.model_dim;
  detail::add_linear(s, rng, "backbone.in", bb.input_dim, d);
  s.add("backbone.pos", detail::trunc_normal<T>(rng, bb.max_context, d, 0.02), true);
  for (int l = 0; l < bb.num_layers; ++l) {
    const std::string pre = layer_prefix("backbone.layer", l);
    detail::add_norm(s, pre + ".ln1", d);
    detail::add_linear(s, rng, pre + ".qkv", d, 3 * d);
    detail::add_linear(s, rng, pre + ".proj", d, d);
    detail::add_norm(s, pre + ".ln2", d);
    detail::add_linear(s, rng, pre + ".fc1", d, bb.mlp_mult * d);
    detail::add_linear(s, rng, pre + ".fc2", bb.mlp_mult * d, d);
  }
  detail::add_norm(s, "backbone.ln_f", d);
  s.add("sos", detail::trunc_normal<T>(rng, 1, d, 0.02), false);

  if (cfg.uses_sampler()) {
    const auto& sc = cfg.sampler;
    const int sd = sc.model_dim;
    detail::add_linear(s, rng, "sampler.temb1", sc.frequency_dim, sc.cond_dim);
    detail::add_linear(s, rng, "sampler.temb2", sc.cond_dim, sc.cond_dim);
    detail::add_linear(s, rng, "sampler.in", d + sc.input_dim, sd);
    for (int l = 0; l < sc.num_layers; ++l) {
      const std::string pre = layer_prefix("sampler.block", l);
      detail::add_linear(s, rng, pre + ".mod", sc.cond_dim, 3 * sd, /*zero=*/true);
      detail::add_linear(s, rng, pre + ".fc1", sd, sc.mlp_mult * sd);
      detail::add_linear(s, rng, pre + ".fc2", sc.mlp_mult * sd, sd);
    }
    detail::add_linear(s, rng, "sampler.final_mod", sc.cond_dim, 2 * sd, /*zero=*/true);
    detail::add_linear(s, rng, "sampler.out", sd, sc.input_dim);
  } else {
    const auto& g = cfg.gmm;
    detail::add_linear(s, rng, "gmm.logits", g.input_dim, g.num_modes);
    detail::add_linear(s, rng, "gmm.means", g.input_dim, g.num_modes * g.output_dim);
    detail::add_linear(s, rng, "gmm.std", g.input_dim, g.num_modes * g.output_dim);
  }
  return p;
}

}  // namespace cam::model
