// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cam/data/embedding_io.hpp"
#include "cam/math/flow.hpp"
#include "cam/model/gmm.hpp"
#include "cam/model/kv_cache.hpp"

namespace cam::infer {

/// How the inference error level is mixed into a generated embedding.
enum class Injection { convex, additive };

NLOHMANN_JSON_SERIALIZE_ENUM(Injection, {{Injection::convex, "convex"}, {Injection::additive, "additive"}})

struct GenerationConfig {
  int num_steps_denoise = 50;
  double k_inf = 0.0;
  double temperature = 0.9;  // GMM heads only
  int target_length = 128;
  int context_window = 63;
  std::uint64_t seed = 0;
  Injection injection = Injection::convex;

  void validate() const {
    if (target_length < 1) throw ConfigError("target_length must be >= 1");
    if (num_steps_denoise < 1) throw ConfigError("num_steps_denoise must be >= 1");
    if (context_window < 1) throw ConfigError("context_window must be >= 1");
    if (!(k_inf >= 0.0 && k_inf <= 1.0)) throw ConfigError("k_inf must be in [0, 1]");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GenerationConfig, num_steps_denoise, k_inf, temperature,
                                                target_length, context_window, seed, injection)

template <class T>
struct GenerationTrace {
  Mat<T> clean;      // generated embeddings before injection
  Mat<T> fed_back;   // what the backbone consumed, one row per generated position
  std::vector<std::int64_t> step_us;
  std::uint64_t seed = 0;
  int start_position = 0;  // absolute position of row 0 (prompt length)
};

/// Whether the backbone runs incrementally through a KV cache or is recomputed
/// from the whole window at every position.
enum class ContextMode { cached, naive };

/// Random streams consumed at one absolute position of one sequence.
///
/// Keying by position lets a continuation reproduce the draws of a longer run.
struct PositionStreams {
  Rng sample;
  Rng inject;

  static PositionStreams at(std::uint64_t seed, std::int64_t position) {
    const Rng base(seed);
    const auto p = static_cast<std::uint64_t>(position);
    return {base.split(2 * p), base.split(2 * p + 1)};
  }
};

template <class T>
Mat<T> inject_noise(const Mat<T>& x, const Mat<T>& eps, double k, Injection mode) {
  if (mode == Injection::additive) return x + static_cast<T>(k) * eps;
  return math::noise_augment(x, eps, math::ErrorLevel(k));
}

namespace detail {

template <class T>
Mat<T> injected_row(const Mat<T>& clean_row, std::uint64_t seed, std::int64_t pos, const GenerationConfig& cfg) {
  Rng r = PositionStreams::at(seed, pos).inject;
  return inject_noise<T>(clean_row, r.normal_matrix<T>(1, clean_row.cols()), cfg.k_inf, cfg.injection);
}

/// One embedding per row of `z`, drawn with the per-row sampling streams.
template <class T>
Mat<T> sample_next(const model::ModelParams<T>& params, const Mat<T>& z, std::vector<Rng>& rngs,
                   const GenerationConfig& cfg) {
  const model::ModelConfig& mc = params.config;
  const Eigen::Index n = z.rows();
  const Eigen::Index d = mc.backbone.input_dim;
  Mat<T> out(n, d);
  if (mc.head == model::HeadKind::gmm) {
    const auto mix = model::gmm_head_forward(params, z);
    for (Eigen::Index r = 0; r < n; ++r) {
      out.row(r) = model::gmm_sample(mix[static_cast<std::size_t>(r)], cfg.temperature, rngs[static_cast<std::size_t>(r)]).transpose();
    }
    return out;
  }
  Mat<T> y(n, d);
  for (Eigen::Index r = 0; r < n; ++r) y.row(r) = rngs[static_cast<std::size_t>(r)].normal_matrix<T>(1, d);
  if (mc.head == model::HeadKind::flow) {
    return math::integrate_rf_ode(
        [&](const Mat<T>& s, math::NoiseLevel sigma) {
          return model::sampler_forward(params, s, Vec<T>(Vec<T>::Constant(n, static_cast<T>(sigma.value()))), z);
        },
        std::move(y), cfg.num_steps_denoise);
  }
  const math::LinearSchedule sched;
  return math::ddpm_sample(
      [&](const Mat<T>& s, int t) {
        const T level = static_cast<T>(t) / static_cast<T>(sched.total_steps());
        return model::sampler_forward(params, s, Vec<T>(Vec<T>::Constant(n, level)), z);
      },
      std::move(y), cfg.num_steps_denoise, sched);
}

/// Conditioning for the next position from a full recompute of each window.
template <class T>
Mat<T> window_conditions(const model::ModelParams<T>& params, const std::vector<Mat<T>>& fed, Eigen::Index start,
                         Eigen::Index end) {
  const auto n = static_cast<Eigen::Index>(fed.size());
  const Eigen::Index len = end - start;
  Mat<T> inputs(n * len, params.config.backbone.input_dim);
  for (Eigen::Index s = 0; s < n; ++s) inputs.middleRows(s * len, len) = fed[static_cast<std::size_t>(s)].middleRows(start, len);
  nn::Tape<T> t(false);
  const Mat<T>& all = t.value(model::backbone_conditions(t, params, t.constant_ref(inputs), n, len));
  Mat<T> z(n, all.cols());
  for (Eigen::Index s = 0; s < n; ++s) z.row(s) = all.row(s * (len + 1) + len);
  return z;
}

}  // namespace detail

/// Generates one trace per seed, continuing from `prompts` (one per seed, all
/// the same length; an empty vector means no prompt).
///
/// Every sequence owns its random streams, so a trace does not depend on the
/// other members of the batch beyond floating-point summation order.
template <class T>
std::vector<GenerationTrace<T>> generate_batch(const model::ModelParams<T>& params, const GenerationConfig& cfg,
                                               const std::vector<std::uint64_t>& seeds,
                                               const std::vector<Mat<T>>& prompts = {},
                                               ContextMode mode = ContextMode::cached) {
  cfg.validate();
  const model::ModelConfig& mc = params.config;
  const Eigen::Index d = mc.backbone.input_dim;
  const Eigen::Index window = cfg.context_window;
  if (window > mc.backbone.max_context) {
    throw ConfigError("context_window " + std::to_string(window) + " exceeds the backbone max_context " +
                      std::to_string(mc.backbone.max_context));
  }
  const auto n = static_cast<Eigen::Index>(seeds.size());
  if (n == 0) return {};
  if (!prompts.empty() && static_cast<Eigen::Index>(prompts.size()) != n) {
    throw ShapeError("generate: need one prompt per seed");
  }
  const Eigen::Index plen = prompts.empty() ? 0 : prompts.front().rows();
  for (const auto& p : prompts) {
    if (p.rows() != plen || p.cols() != d) throw ShapeError("generate: prompts must share length and match input_dim");
  }
  if (plen > window) {
    throw ShapeError("generate: prompt of length " + std::to_string(plen) + " exceeds context_window " +
                     std::to_string(window));
  }

  const Eigen::Index total = plen + cfg.target_length;
  std::vector<Mat<T>> fed(static_cast<std::size_t>(n), Mat<T>(total, d));
  std::vector<GenerationTrace<T>> traces(static_cast<std::size_t>(n));
  for (Eigen::Index s = 0; s < n; ++s) {
    const auto i = static_cast<std::size_t>(s);
    traces[i].clean.resize(cfg.target_length, d);
    traces[i].fed_back.resize(cfg.target_length, d);
    traces[i].seed = seeds[i];
    traces[i].start_position = static_cast<int>(plen);
    for (Eigen::Index p = 0; p < plen; ++p) {
      fed[i].row(p) = detail::injected_row<T>(Mat<T>(prompts[i].row(p)), seeds[i], p, cfg);
    }
  }

  model::KVCache<T> cache(mc.backbone, n);
  Eigen::Index cache_start = 0;  // absolute position of the cache's first entry
  Mat<T> last_z;
  const Mat<T>& sos = params.value("sos");
  using Clock = std::chrono::steady_clock;

  for (Eigen::Index j = 0; j < cfg.target_length; ++j) {
    const auto t0 = Clock::now();
    const Eigen::Index pos = plen + j;
    const Eigen::Index start = std::max<Eigen::Index>(0, pos - window);
    Mat<T> z;
    if (pos == 0) {
      z = sos.replicate(n, 1);
    } else if (mode == ContextMode::naive) {
      z = detail::window_conditions(params, fed, start, pos);
    } else {
      // Sliding reindexes every position, so a moved window rebuilds the cache.
      if (start != cache_start) {
        cache.reset();
        cache_start = start;
      }
      for (Eigen::Index p = cache_start + cache.length(); p < pos; ++p) {
        Mat<T> rows(n, d);
        for (Eigen::Index s = 0; s < n; ++s) rows.row(s) = fed[static_cast<std::size_t>(s)].row(p);
        last_z = model::backbone_step(params, cache, rows);
      }
      z = last_z;
    }

    std::vector<Rng> rngs;
    rngs.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index s = 0; s < n; ++s) rngs.push_back(PositionStreams::at(seeds[static_cast<std::size_t>(s)], pos).sample);
    Mat<T> next;
    try {
      next = detail::sample_next(params, z, rngs, cfg);
    } catch (const NumericError& e) {
      throw NumericError("generate: position " + std::to_string(pos) + ": " + e.what());
    }
    for (Eigen::Index s = 0; s < n; ++s) {
      const auto i = static_cast<std::size_t>(s);
      if (!next.row(s).allFinite()) {
        throw NumericError("generate: non-finite embedding at position " + std::to_string(pos) + " (seed " +
                           std::to_string(seeds[i]) + ")");
      }
      const Mat<T> x = next.row(s);
      traces[i].clean.row(j) = x;
      fed[i].row(pos) = detail::injected_row<T>(x, seeds[i], pos, cfg);
      traces[i].fed_back.row(j) = fed[i].row(pos);
    }
    const auto us = std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - t0).count();
    for (auto& tr : traces) tr.step_us.push_back(us);
  }
  return traces;
}

template <class T>
GenerationTrace<T> generate(const model::ModelParams<T>& params, const GenerationConfig& cfg,
                            ContextMode mode = ContextMode::cached) {
  return generate_batch(params, cfg, {cfg.seed}, {}, mode).front();
}

/// Same loop with direct sampling from the mixture head.
template <class T>
GenerationTrace<T> generate_givt(const model::ModelParams<T>& params, const GenerationConfig& cfg,
                                 ContextMode mode = ContextMode::cached) {
  if (params.config.head != model::HeadKind::gmm) throw ConfigError("generate_givt needs a gmm head");
  return generate(params, cfg, mode);
}

/// Feeds `prompt` back (with the same injection as generated embeddings) and
/// generates cfg.target_length further embeddings.
template <class T>
GenerationTrace<T> continue_sequence(const model::ModelParams<T>& params, const Mat<T>& prompt,
                                     const GenerationConfig& cfg, ContextMode mode = ContextMode::cached) {
  if (prompt.rows() == 0) return generate(params, cfg, mode);
  return generate_batch(params, cfg, {cfg.seed}, {prompt}, mode).front();
}

/// Seeds of `count` traces derived from one run seed.
inline std::vector<std::uint64_t> trace_seeds(std::uint64_t seed, int count) {
  std::vector<std::uint64_t> out;
  Rng r = Rng(seed).split(0x747261636573);
  for (int i = 0; i < count; ++i) out.push_back(r.next_u64());
  return out;
}

template <class T>
data::Dataset clean_dataset(const std::vector<GenerationTrace<T>>& traces, int dim) {
  data::Dataset ds;
  ds.dim = dim;
  ds.provenance = "generated";
  for (const auto& t : traces) ds.sequences.push_back(t.clean.template cast<float>());
  return ds;
}

/// Writes the clean traces as an embedding file and `<path>.json` with the
/// generation config, per-trace seeds and step timings in microseconds.
template <class T>
void export_traces(const std::vector<GenerationTrace<T>>& traces, const GenerationConfig& cfg,
                   const nlohmann::json& model_config, const std::filesystem::path& path) {
  const int dim = traces.empty() ? 0 : static_cast<int>(traces.front().clean.cols());
  data::write_embeddings(clean_dataset(traces, dim), path);
  data::Dataset fed;
  fed.dim = dim;
  fed.provenance = "fed_back";
  for (const auto& t : traces) fed.sequences.push_back(t.fed_back.template cast<float>());
  std::filesystem::path fed_path = path;
  fed_path += ".fed";
  data::write_embeddings(fed, fed_path);

  nlohmann::json meta;
  meta["schema"] = "cam-trace-meta/1";
  meta["generation"] = cfg;
  meta["model"] = model_config;
  meta["seeds"] = nlohmann::json::array();
  meta["step_us"] = nlohmann::json::array();
  for (const auto& t : traces) {
    meta["seeds"].push_back(t.seed);
    meta["step_us"].push_back(t.step_us);
  }
  meta["start_position"] = traces.empty() ? 0 : traces.front().start_position;
  std::filesystem::path side = path;
  side += ".json";
  std::ofstream out(side);
  if (!out) throw IoError("cannot write " + side.string());
  out << meta.dump(2) << "\n";
  if (!out) throw IoError("write failed for " + side.string());
}

}  // namespace cam::infer
