// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "cam/core/tensor.hpp"

namespace cam {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace detail

/// Seeded, splittable generator (xoshiro256** core).
///
/// `split(key)` derives an independent child stream from the current state
/// without advancing it, so substreams can be keyed by position or trace
/// index and stay aligned regardless of how much the parent was used after.
/// Normal variates use Box-Muller with the spare value kept in the state,
/// which makes every draw bit-reproducible across platforms.
class Rng {
 public:
  struct State {
    std::array<std::uint64_t, 4> s{};
    double spare = 0.0;
    bool has_spare = false;

    bool operator==(const State&) const = default;
  };

  explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

  static Rng from_state(const State& st) {
    Rng r;
    r.st_ = st;
    return r;
  }

  void reseed(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& w : st_.s) w = detail::splitmix64(x);
    st_.spare = 0.0;
    st_.has_spare = false;
  }

  [[nodiscard]] Rng split(std::uint64_t key) const {
    std::uint64_t h = key * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL;
    for (auto w : st_.s) {
      h ^= w;
      h = detail::splitmix64(h);
    }
    return Rng(h);
  }

  std::uint64_t next_u64() {
    auto& s = st_.s;
    const std::uint64_t result = detail::rotl(s[1] * 5, 7) * 9;
    const std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = detail::rotl(s[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire's multiply-shift with rejection.
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  double normal() {
    if (st_.has_spare) {
      st_.has_spare = false;
      return st_.spare;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    st_.spare = r * std::sin(theta);
    st_.has_spare = true;
    return r * std::cos(theta);
  }

  template <class T>
  Mat<T> normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Mat<T> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(normal());
    return m;
  }

  [[nodiscard]] const State& state() const { return st_; }
  void set_state(const State& st) { st_ = st; }

 private:
  State st_;
};

}  // namespace cam
