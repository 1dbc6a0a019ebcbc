// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cam/cli/run_config.hpp"
#include "cam/data/embedding_io.hpp"
#include "cam/infer/generate.hpp"
#include "cam/metrics/accumulation.hpp"
#include "cam/metrics/fed.hpp"
#include "cam/metrics/mmd.hpp"
#include "cam/train/checkpoint.hpp"
#include "cam/train/trainer.hpp"

namespace cam::cli {

/// Fed-back noise used at generation time for objectives trained with input noise.
inline constexpr double kDefaultKInf = 0.02;

inline double default_k_inf(train::Objective o) {
  return train::default_noise_augmentation(o) ? kDefaultKInf : 0.0;
}

/// Directory named by CAM_CACHE_DIR, if set and non-empty.
inline std::optional<std::filesystem::path> cache_dir() {
  const char* env = std::getenv("CAM_CACHE_DIR");
  if (env == nullptr || *env == '\0') return std::nullopt;
  return std::filesystem::path(env);
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline data::Dataset training_data(const RunConfig& c) {
  const auto spec = resolved_process(c);
  data::validate(spec);
  Rng rng = Rng(data_seed(c)).split(0x64617461);
  return data::sample_process(spec, c.data.num_sequences, c.data.length, rng);
}

/// Held-out sequences from the same process; `length` is at least the trace length.
inline data::Dataset reference_data(const RunConfig& c, int length) {
  const auto spec = resolved_process(c);
  data::validate(spec);
  Rng rng = Rng(c.eval.reference_seed).split(0x726566);
  return data::sample_process(spec, c.eval.reference_sequences, length, rng);
}

using ProgressFn = std::function<void(std::int64_t step, double loss)>;

/// Trains from scratch, or loads the finished checkpoint from the cache
/// directory when one with the same model, training config and data exists.
template <class T>
train::TrainState<T> train_cached(const model::ModelConfig& mc, const train::TrainConfig& tc, const data::Dataset& ds,
                                  const ProgressFn& progress = {}, bool* from_cache = nullptr) {
  const auto bytes = data::encode_embeddings(ds);
  const nlohmann::json key = {{"model", mc},
                              {"train", tc},
                              {"data_crc", data::io::crc32_of(bytes.data(), bytes.size())},
                              {"data_bytes", bytes.size()},
                              {"precision", sizeof(T)}};
  std::optional<std::filesystem::path> path;
  if (const auto dir = cache_dir()) {
    std::filesystem::create_directories(*dir);
    path = *dir / (hex(fnv1a(key.dump())) + ".camc");
    if (std::filesystem::exists(*path)) {
      auto ck = train::load_checkpoint<T>(*path, mc);
      if (ck.state.step == tc.total_steps) {
        if (from_cache) *from_cache = true;
        return std::move(ck.state);
      }
    }
  }
  if (from_cache) *from_cache = false;
  auto state = train::make_train_state<T>(mc, tc);
  train::LoopHooks hooks;
  if (progress) hooks.on_step = [&](std::int64_t step, double loss, double, double) { progress(step, loss); };
  train::train_loop(state, ds, tc, hooks);
  if (path) {
    std::filesystem::path tmp = *path;
    tmp += ".tmp";
    train::save_checkpoint(state, tc, tmp);
    std::filesystem::rename(tmp, *path);
  }
  return state;
}

struct TraceEval {
  metrics::FedResult fed;
  double mmd = 0.0;
  metrics::AccumulationCurve accumulation;
};

namespace detail {

/// At most `n` evenly strided frames pooled over all sequences.
template <class M>
Matd strided_frames(const std::vector<M>& seqs, int n) {
  Eigen::Index total = 0;
  for (const auto& s : seqs) total += s.rows();
  const Eigen::Index take = std::min<Eigen::Index>(n, total);
  Matd out(take, seqs.empty() ? 0 : seqs.front().cols());
  Eigen::Index next = 0;
  Eigen::Index seen = 0;
  for (const auto& s : seqs) {
    for (Eigen::Index r = 0; r < s.rows() && next < take; ++r, ++seen) {
      if (seen == next * total / take) out.row(next++) = s.row(r).template cast<double>();
    }
  }
  return out.topRows(next);
}

}  // namespace detail

template <class M>
TraceEval evaluate_traces(const std::vector<M>& traces, const data::Dataset& reference, const EvalSettings& s) {
  TraceEval out;
  out.fed = metrics::fed_protocol(traces, reference, s.fed);
  out.mmd = metrics::mmd_rbf(detail::strided_frames(traces, s.mmd_samples),
                             detail::strided_frames(reference.sequences, s.mmd_samples));
  out.accumulation = metrics::accumulation_curve(traces, reference, s.accumulation_stride);
  return out;
}

template <class T>
std::vector<Mat<T>> clean_traces(const std::vector<infer::GenerationTrace<T>>& traces) {
  std::vector<Mat<T>> out;
  out.reserve(traces.size());
  for (const auto& t : traces) out.push_back(t.clean);
  return out;
}

template <class T>
std::vector<infer::GenerationTrace<T>> generate_traces(const model::ModelParams<T>& params,
                                                       const infer::GenerationConfig& g, int count) {
  return infer::generate_batch(params, g, infer::trace_seeds(g.seed, count));
}

}  // namespace cam::cli
