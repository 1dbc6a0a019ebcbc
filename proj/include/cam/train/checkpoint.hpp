// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstring>
#include <filesystem>
#include <optional>
#include <string>
#include <type_traits>

#include "cam/data/embedding_io.hpp"
#include "cam/train/trainer.hpp"

// Checkpoint layout, little-endian:
//
//   "CAMC" | version u32 | scalar width u8 (4 or 8)
//   model config JSON str | train config JSON str | model config hash u64
//   step i64 | seed u64 | rng state (4 x u64, spare f64, has_spare u8)
//   loss stats (count u64, mean f64, last f64)
//   tensor count u32, then per parameter:
//     name str | decay u8 | rows u32 | cols u32 | value | adam m | adam v
//   crc32 u32 over every preceding byte
//
// Strings are u32 length + bytes. Tensors are row-major at the scalar width.

namespace cam::train {

inline constexpr char kCheckpointMagic[4] = {'C', 'A', 'M', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
struct Checkpoint {
  TrainState<T> state;
  TrainConfig train_config;
};

namespace detail {

template <class T>
void put_tensor(data::io::ByteWriter& w, const Mat<T>& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if constexpr (std::is_same_v<T, float>) {
      w.f32(m.data()[i]);
    } else {
      w.f64(m.data()[i]);
    }
  }
}

template <class T>
Mat<T> get_tensor(data::io::ByteReader& r, std::uint32_t rows, std::uint32_t cols) {
  Mat<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if constexpr (std::is_same_v<T, float>) {
      m.data()[i] = r.f32();
    } else {
      m.data()[i] = r.f64();
    }
  }
  return m;
}

}  // namespace detail

template <class T>
std::vector<std::uint8_t> encode_checkpoint(const TrainState<T>& s, const TrainConfig& cfg) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  data::io::ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(sizeof(T)));
  w.str(nlohmann::json(s.params.config).dump());
  w.str(nlohmann::json(cfg).dump());
  w.u64(model::config_hash(s.params.config));
  w.u64(static_cast<std::uint64_t>(s.step));
  w.u64(cfg.seed);
  const Rng::State& rs = s.rng.state();
  for (auto v : rs.s) w.u64(v);
  w.f64(rs.spare);
  w.u8(rs.has_spare ? 1 : 0);
  w.u64(s.stats.count);
  w.f64(s.stats.mean);
  w.f64(s.stats.last);
  w.u32(static_cast<std::uint32_t>(s.params.store.size()));
  std::size_t i = 0;
  for (const auto& p : s.params.store) {
    w.str(p.name);
    w.u8(p.decay ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(p.value.rows()));
    w.u32(static_cast<std::uint32_t>(p.value.cols()));
    detail::put_tensor(w, p.value);
    detail::put_tensor(w, s.moments.m[i]);
    detail::put_tensor(w, s.moments.v[i]);
    ++i;
  }
  data::io::seal(w);
  return std::move(w.data());
}

/// Decodes a checkpoint. When `expected` is given, its config hash must match.
template <class T>
Checkpoint<T> decode_checkpoint(const std::vector<std::uint8_t>& buf, const std::string& source,
                                const std::optional<model::ModelConfig>& expected = std::nullopt) {
  if (buf.size() < 4 || std::memcmp(buf.data(), kCheckpointMagic, 4) != 0) {
    throw IoError(source + ": bad magic at offset 0 (expected \"CAMC\")");
  }
  const std::size_t n = data::io::verify_seal(buf, source);
  data::io::ByteReader r(buf.data(), n, source);
  char magic[4];
  r.bytes(magic, 4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError(source + ": unsupported checkpoint version " + std::to_string(version) + " at offset 4 (expected " +
                  std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint8_t width = r.u8();
  if (width != sizeof(T)) {
    throw IoError(source + ": checkpoint stores " + std::to_string(8 * width) + "-bit scalars, reader expects " +
                  std::to_string(8 * sizeof(T)));
  }
  Checkpoint<T> ck;
  model::ModelConfig mcfg;
  try {
    mcfg = nlohmann::json::parse(r.str()).get<model::ModelConfig>();
    ck.train_config = nlohmann::json::parse(r.str()).get<TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(source + ": malformed embedded config: " + e.what());
  }
  const std::uint64_t stored_hash = r.u64();
  if (stored_hash != model::config_hash(mcfg)) {
    throw IoError(source + ": config hash does not match embedded config");
  }
  if (expected && model::config_hash(*expected) != stored_hash) {
    throw ConfigError(source + ": config hash mismatch (checkpoint " + std::to_string(stored_hash) + ", expected " +
                      std::to_string(model::config_hash(*expected)) + ")");
  }
  auto& s = ck.state;
  s.params.config = mcfg;
  s.step = static_cast<std::int64_t>(r.u64());
  s.params.step = s.step;
  (void)r.u64();  // seed, duplicated in the train config for readers that skip JSON
  Rng::State rs;
  for (auto& v : rs.s) v = r.u64();
  rs.spare = r.f64();
  rs.has_spare = r.u8() != 0;
  s.rng.set_state(rs);
  s.stats.count = r.u64();
  s.stats.mean = r.f64();
  s.stats.last = r.f64();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const bool decay = r.u8() != 0;
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (static_cast<std::size_t>(rows) * cols * sizeof(T) * 3 > r.remaining()) {
      throw IoError(source + ": truncated at offset " + std::to_string(r.offset()) + " (tensor '" + name + "')");
    }
    s.params.store.add(name, detail::get_tensor<T>(r, rows, cols), decay);
    s.moments.m.push_back(detail::get_tensor<T>(r, rows, cols));
    s.moments.v.push_back(detail::get_tensor<T>(r, rows, cols));
  }
  if (r.remaining() != 0) {
    throw IoError(source + ": " + std::to_string(r.remaining()) + " unexpected bytes at offset " +
                  std::to_string(r.offset()));
  }
  // The tensor set must be exactly what the config describes.
  const model::ModelParams<T> shape = model::init_params<T>(mcfg, 0);
  if (shape.store.size() != s.params.store.size()) {
    throw IoError(source + ": tensor count " + std::to_string(count) + " does not match config (" +
                  std::to_string(shape.store.size()) + ")");
  }
  for (const auto& p : shape.store) {
    if (!s.params.store.contains(p.name)) throw IoError(source + ": missing tensor '" + p.name + "'");
    const auto& q = s.params.store.at(p.name);
    if (q.value.rows() != p.value.rows() || q.value.cols() != p.value.cols()) {
      throw IoError(source + ": tensor '" + p.name + "' has the wrong shape");
    }
  }
  return ck;
}

template <class T>
void save_checkpoint(const TrainState<T>& s, const TrainConfig& cfg, const std::filesystem::path& path) {
  data::io::write_file(path, encode_checkpoint(s, cfg));
}

template <class T = float>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path,
                              const std::optional<model::ModelConfig>& expected = std::nullopt) {
  return decode_checkpoint<T>(data::io::read_file(path), path.string(), expected);
}

}  // namespace cam::train
