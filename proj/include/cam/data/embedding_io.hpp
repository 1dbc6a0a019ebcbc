// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <utility>
#include <vector>

#include <zlib.h>

#include "cam/data/dataset.hpp"

// Embedding file layout, all integers and floats little-endian:
//
//   "CAME" | version u32 | dim u32 | count u32
//   count x ( length u32 | length * dim f32, frame-major )
//   crc32 u32 over every preceding byte

namespace cam::data {

inline constexpr char kEmbeddingMagic[4] = {'C', 'A', 'M', 'E'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;

namespace io {

/// Little-endian byte buffer writer.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  [[nodiscard]] const std::vector<std::uint8_t>& data() const { return buf_; }
  std::vector<std::uint8_t>& data() { return buf_; }

 private:
  template <class U>
  void put(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked little-endian reader. Errors name the failing offset.
class ByteReader {
 public:
  ByteReader(const std::uint8_t* p, std::size_t n, std::string source)
      : p_(p), n_(n), source_(std::move(source)) {}

  std::uint8_t u8() { return get<std::uint8_t>(); }
  std::uint16_t u16() { return get<std::uint16_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  void bytes(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, p_ + pos_, n);
    pos_ += n;
  }
  std::string str() {
    const std::uint32_t n = u32();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  [[nodiscard]] std::size_t offset() const { return pos_; }
  [[nodiscard]] std::size_t remaining() const { return n_ - pos_; }

 private:
  void need(std::size_t k) const {
    if (k > n_ - pos_) {
      throw IoError(source_ + ": truncated at offset " + std::to_string(pos_) + " (need " +
                    std::to_string(k) + " bytes, " + std::to_string(n_ - pos_) + " left)");
    }
  }
  template <class U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(p_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }

  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
  std::string source_;
};

inline std::uint32_t crc32_of(const std::uint8_t* p, std::size_t n) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for large buffers.
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    c = ::crc32(c, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

/// Appends crc32 of the buffer so far.
inline void seal(ByteWriter& w) { w.u32(crc32_of(w.data().data(), w.data().size())); }

/// Verifies the trailing crc32 and returns the payload length (bytes before it).
inline std::size_t verify_seal(const std::vector<std::uint8_t>& buf, const std::string& source) {
  if (buf.size() < 4) throw IoError(source + ": truncated at offset 0 (file shorter than checksum)");
  const std::size_t n = buf.size() - 4;
  ByteReader tail(buf.data() + n, 4, source);
  const std::uint32_t stored = tail.u32();
  const std::uint32_t computed = crc32_of(buf.data(), n);
  if (stored != computed) {
    throw IoError(source + ": checksum mismatch at offset " + std::to_string(n) + " (stored " +
                  std::to_string(stored) + ", computed " + std::to_string(computed) + ")");
  }
  return n;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace io

inline std::vector<std::uint8_t> encode_embeddings(const Dataset& ds) {
  io::ByteWriter w;
  w.bytes(kEmbeddingMagic, 4);
  w.u32(kEmbeddingVersion);
  w.u32(static_cast<std::uint32_t>(ds.dim));
  w.u32(static_cast<std::uint32_t>(ds.sequences.size()));
  for (const auto& s : ds.sequences) {
    if (s.cols() != ds.dim) throw ShapeError("write_embeddings: sequence width != dataset dim");
    w.u32(static_cast<std::uint32_t>(s.rows()));
    for (Eigen::Index i = 0; i < s.size(); ++i) w.f32(s.data()[i]);
  }
  io::seal(w);
  return std::move(w.data());
}

inline Dataset decode_embeddings(const std::vector<std::uint8_t>& buf, const std::string& source) {
  if (buf.size() < 4 || std::memcmp(buf.data(), kEmbeddingMagic, 4) != 0) {
    throw IoError(source + ": bad magic at offset 0 (expected \"CAME\")");
  }
  const std::size_t n = io::verify_seal(buf, source);
  io::ByteReader r(buf.data(), n, source);
  char magic[4];
  r.bytes(magic, 4);
  const std::uint32_t version = r.u32();
  if (version != kEmbeddingVersion) {
    throw IoError(source + ": unsupported version " + std::to_string(version) + " at offset 4");
  }
  Dataset ds;
  ds.dim = static_cast<int>(r.u32());
  const std::uint32_t count = r.u32();
  ds.provenance = source;
  ds.sequences.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32();
    const std::size_t values = static_cast<std::size_t>(len) * static_cast<std::size_t>(ds.dim);
    if (values * 4 > r.remaining()) {
      throw IoError(source + ": truncated at offset " + std::to_string(r.offset()) + " (sequence " +
                    std::to_string(i) + " declares " + std::to_string(len) + " frames)");
    }
    Matf s(len, ds.dim);
    for (std::size_t k = 0; k < values; ++k) s.data()[k] = r.f32();
    ds.sequences.push_back(std::move(s));
  }
  if (r.remaining() != 0) {
    throw IoError(source + ": " + std::to_string(r.remaining()) + " unexpected bytes at offset " +
                  std::to_string(r.offset()));
  }
  return ds;
}

inline void write_embeddings(const Dataset& ds, const std::filesystem::path& path) {
  io::write_file(path, encode_embeddings(ds));
}

inline Dataset read_embeddings(const std::filesystem::path& path) {
  return decode_embeddings(io::read_file(path), path.string());
}

}  // namespace cam::data
