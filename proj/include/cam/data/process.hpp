// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "cam/data/dataset.hpp"
#include "json.hpp"

namespace cam::data {

enum class ProcessKind { linear_gaussian_ar1, regime_switching };

NLOHMANN_JSON_SERIALIZE_ENUM(ProcessKind, {{ProcessKind::linear_gaussian_ar1, "linear_gaussian_ar1"},
                                           {ProcessKind::regime_switching, "regime_switching"}})

/// x_t = A x_{t-1} + b + L w_t with w_t ~ N(0, I).
struct LinearRegime {
  Matd A;
  Vec<double> b;
  Matd L;  // lower-triangular noise factor
};

/// Ground-truth sequence process with analytically known conditionals.
struct SyntheticProcessSpec {
  ProcessKind kind = ProcessKind::linear_gaussian_ar1;
  int dim = 8;
  std::vector<LinearRegime> regimes;  // one for AR(1), two or more for switching
  double switch_prob = 0.0;           // per step, to a uniformly chosen other regime
  int initial_regime = -1;            // -1: uniform over regimes
  std::uint64_t seed = 0;
};

inline double spectral_radius(const Matd& A) {
  Eigen::EigenSolver<Matd> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Solves S = A S A^T + Q by doubling (Smith's method). Requires rho(A) < 1.
inline Matd solve_discrete_lyapunov(const Matd& A, const Matd& Q) {
  if (spectral_radius(A) >= 1.0) throw ConfigError("lyapunov: transition is not stable");
  Matd S = Q;
  Matd Ak = A;
  for (int it = 0; it < 200; ++it) {
    const Matd inc = Ak * S * Ak.transpose();
    S += inc;
    Ak = (Ak * Ak).eval();
    if (inc.norm() <= 1e-15 * S.norm()) break;
  }
  return 0.5 * (S + S.transpose());
}

/// Stationary mean (I - A)^{-1} b and covariance of one regime.
struct StationaryMoments {
  Vec<double> mean;
  Matd cov;
};

inline StationaryMoments stationary_moments(const LinearRegime& r) {
  const auto d = r.A.rows();
  StationaryMoments m;
  m.mean = (Matd::Identity(d, d) - r.A).fullPivLu().solve(r.b);
  m.cov = solve_discrete_lyapunov(r.A, r.L * r.L.transpose());
  return m;
}

inline void validate(const SyntheticProcessSpec& spec) {
  if (spec.dim < 1) throw ConfigError("process: dim must be >= 1");
  if (spec.regimes.empty()) throw ConfigError("process: at least one regime required");
  if (spec.kind == ProcessKind::linear_gaussian_ar1 && spec.regimes.size() != 1) {
    throw ConfigError("process: linear_gaussian_ar1 takes exactly one regime");
  }
  if (!(spec.switch_prob >= 0.0 && spec.switch_prob <= 1.0)) {
    throw ConfigError("process: switch_prob must lie in [0, 1]");
  }
  if (spec.initial_regime >= static_cast<int>(spec.regimes.size())) {
    throw ConfigError("process: initial_regime out of range");
  }
  for (std::size_t i = 0; i < spec.regimes.size(); ++i) {
    const auto& r = spec.regimes[i];
    if (r.A.rows() != spec.dim || r.A.cols() != spec.dim || r.b.size() != spec.dim ||
        r.L.rows() != spec.dim || r.L.cols() != spec.dim) {
      throw ConfigError("process: regime " + std::to_string(i) + " has wrong shapes");
    }
    const double rho = spectral_radius(r.A);
    if (!(rho < 1.0)) {
      throw ConfigError("process: regime " + std::to_string(i) + " is unstable (spectral radius " +
                        std::to_string(rho) + ")");
    }
    Eigen::LLT<Matd> llt(r.L * r.L.transpose());
    if (llt.info() != Eigen::Success) {
      throw ConfigError("process: regime " + std::to_string(i) + " noise covariance is not positive definite");
    }
  }
}

namespace detail {

inline Matd random_orthogonal(Rng& rng, int d) {
  const Matd g = rng.normal_matrix<double>(d, d);
  Eigen::HouseholderQR<Matd> qr(g);
  Matd q = qr.householderQ();
  const Matd r = qr.matrixQR();
  for (int j = 0; j < d; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  return q;
}

/// Random SPD noise covariance scaled so the stationary variance averages 1 per dim.
inline Matd unit_variance_noise_factor(Rng& rng, const Matd& A) {
  const auto d = static_cast<int>(A.rows());
  const Matd g = rng.normal_matrix<double>(d, d);
  const Matd spd = g * g.transpose() / d + 0.1 * Matd::Identity(d, d);
  const Matd stat = solve_discrete_lyapunov(A, spd);
  const double c = d / stat.trace();
  return Eigen::LLT<Matd>(c * spd).matrixL();
}

}  // namespace detail

/// Default oracle process: A = 0.8 * random orthogonal, b = 0, unit stationary variance.
inline SyntheticProcessSpec default_ar1_spec(int dim = 8, std::uint64_t seed = 1234) {
  SyntheticProcessSpec spec;
  spec.kind = ProcessKind::linear_gaussian_ar1;
  spec.dim = dim;
  spec.seed = seed;
  Rng rng(seed);
  LinearRegime r;
  r.A = 0.8 * detail::random_orthogonal(rng, dim);
  r.b = Vec<double>::Zero(dim);
  r.L = detail::unit_variance_noise_factor(rng, r.A);
  spec.regimes.push_back(std::move(r));
  return spec;
}

/// Two regimes with opposite offsets and independent dynamics, switching with p = 0.05.
inline SyntheticProcessSpec default_regime_spec(int dim = 8, std::uint64_t seed = 1234,
                                                double switch_prob = 0.05) {
  SyntheticProcessSpec spec;
  spec.kind = ProcessKind::regime_switching;
  spec.dim = dim;
  spec.seed = seed;
  spec.switch_prob = switch_prob;
  Rng rng(seed);
  for (int k = 0; k < 2; ++k) {
    LinearRegime r;
    r.A = 0.6 * detail::random_orthogonal(rng, dim);
    const double sign = k == 0 ? 1.0 : -1.0;
    r.b = (Matd::Identity(dim, dim) - r.A) * Vec<double>::Constant(dim, sign * 1.5 / std::sqrt(dim));
    r.L = 0.6 * detail::unit_variance_noise_factor(rng, r.A);
    spec.regimes.push_back(std::move(r));
  }
  return spec;
}

namespace detail {

inline Vec<double> draw_gaussian(Rng& rng, const Vec<double>& mean, const Matd& chol) {
  Vec<double> w(mean.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.normal();
  return mean + chol * w;
}

inline int next_regime(Rng& rng, int current, int num_regimes, double switch_prob) {
  if (num_regimes < 2 || rng.uniform() >= switch_prob) return current;
  const int pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(num_regimes - 1)));
  return pick >= current ? pick + 1 : pick;
}

}  // namespace detail

/// Draws `num_sequences` sequences of `length` frames from the process.
///
/// x_0 comes from the stationary distribution of the starting regime. Each
/// sequence uses its own substream of `rng`, so results do not depend on the
/// order in which sequences are produced.
inline Dataset sample_process(const SyntheticProcessSpec& spec, int num_sequences, int length, Rng& rng) {
  validate(spec);
  if (num_sequences < 0 || length < 1) throw ConfigError("sample_process: bad sizes");
  const Rng base = rng;
  rng.next_u64();
  const auto nreg = static_cast<int>(spec.regimes.size());
  std::vector<StationaryMoments> stat;
  std::vector<Matd> stat_chol;
  for (const auto& r : spec.regimes) {
    stat.push_back(stationary_moments(r));
    stat_chol.emplace_back(Eigen::LLT<Matd>(stat.back().cov).matrixL());
  }
  Dataset ds;
  ds.dim = spec.dim;
  ds.provenance = spec.kind == ProcessKind::linear_gaussian_ar1 ? "synthetic:linear_gaussian_ar1"
                                                                : "synthetic:regime_switching";
  ds.sequences.reserve(static_cast<std::size_t>(num_sequences));
  for (int i = 0; i < num_sequences; ++i) {
    Rng r = base.split(static_cast<std::uint64_t>(i));
    int regime = spec.initial_regime >= 0
                     ? spec.initial_regime
                     : static_cast<int>(r.below(static_cast<std::uint64_t>(nreg)));
    Matd seq(length, spec.dim);
    Vec<double> x = detail::draw_gaussian(r, stat[static_cast<std::size_t>(regime)].mean,
                                          stat_chol[static_cast<std::size_t>(regime)]);
    seq.row(0) = x.transpose();
    for (int t = 1; t < length; ++t) {
      regime = detail::next_regime(r, regime, nreg, spec.switch_prob);
      const auto& reg = spec.regimes[static_cast<std::size_t>(regime)];
      x = detail::draw_gaussian(r, reg.A * x + reg.b, reg.L);
      seq.row(t) = x.transpose();
    }
    ds.sequences.emplace_back(seq.cast<float>());
  }
  return ds;
}

/// Mean and covariance of p(x_n | x_0..x_{n-1}).
struct Conditional {
  Vec<double> mean;
  Matd cov;
};

namespace detail {

inline double log_gaussian(const Vec<double>& x, const Vec<double>& mean, const Matd& cov) {
  Eigen::LLT<Matd> llt(cov);
  const Matd L = llt.matrixL();
  const Vec<double> z = L.triangularView<Eigen::Lower>().solve(x - mean);
  const double logdet = 2.0 * L.diagonal().array().log().sum();
  return -0.5 * (z.squaredNorm() + logdet + static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi));
}

}  // namespace detail

/// Exact next-step conditional given a non-empty prefix (rows = frames).
///
/// For switching processes the regime posterior is forward-filtered over the
/// prefix and the result is the moment-matched mixture.
inline Conditional oracle_conditional(const SyntheticProcessSpec& spec, const Matd& prefix) {
  validate(spec);
  if (prefix.rows() < 1) throw ConfigError("oracle_conditional: prefix must be non-empty");
  if (prefix.cols() != spec.dim) throw ShapeError("oracle_conditional: prefix width != dim");
  const Vec<double> last = prefix.row(prefix.rows() - 1).transpose();
  if (spec.kind == ProcessKind::linear_gaussian_ar1) {
    const auto& r = spec.regimes.front();
    return {r.A * last + r.b, r.L * r.L.transpose()};
  }
  if (spec.kind != ProcessKind::regime_switching) throw ConfigError("oracle_conditional: unsupported kind");

  const auto nreg = static_cast<int>(spec.regimes.size());
  const double p = spec.switch_prob;
  const auto trans = [&](int from, int to) {
    if (nreg == 1) return 1.0;
    return from == to ? 1.0 - p : p / (nreg - 1);
  };
  std::vector<Matd> q;
  for (const auto& r : spec.regimes) q.emplace_back(r.L * r.L.transpose());

  // log alpha_0
  std::vector<double> la(static_cast<std::size_t>(nreg));
  for (int k = 0; k < nreg; ++k) {
    const double prior = spec.initial_regime >= 0 ? (k == spec.initial_regime ? 1.0 : 0.0) : 1.0 / nreg;
    const auto m = stationary_moments(spec.regimes[static_cast<std::size_t>(k)]);
    la[static_cast<std::size_t>(k)] =
        prior > 0 ? std::log(prior) + detail::log_gaussian(prefix.row(0).transpose(), m.mean, m.cov)
                  : -std::numeric_limits<double>::infinity();
  }
  const auto normalize_log = [](std::vector<double>& v) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : v) mx = std::max(mx, x);
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    for (double& x : v) x = std::exp(x - mx) / s;
  };
  std::vector<double> alpha = la;
  normalize_log(alpha);
  for (Eigen::Index t = 1; t < prefix.rows(); ++t) {
    const Vec<double> prev = prefix.row(t - 1).transpose();
    const Vec<double> cur = prefix.row(t).transpose();
    std::vector<double> next(static_cast<std::size_t>(nreg));
    for (int k = 0; k < nreg; ++k) {
      double pred = 0.0;
      for (int j = 0; j < nreg; ++j) pred += alpha[static_cast<std::size_t>(j)] * trans(j, k);
      const auto& r = spec.regimes[static_cast<std::size_t>(k)];
      next[static_cast<std::size_t>(k)] =
          pred > 0 ? std::log(pred) + detail::log_gaussian(cur, r.A * prev + r.b, q[static_cast<std::size_t>(k)])
                   : -std::numeric_limits<double>::infinity();
    }
    normalize_log(next);
    alpha = std::move(next);
  }
  Conditional c;
  c.mean = Vec<double>::Zero(spec.dim);
  Matd second = Matd::Zero(spec.dim, spec.dim);
  for (int k = 0; k < nreg; ++k) {
    double w = 0.0;
    for (int j = 0; j < nreg; ++j) w += alpha[static_cast<std::size_t>(j)] * trans(j, k);
    const auto& r = spec.regimes[static_cast<std::size_t>(k)];
    const Vec<double> mk = r.A * last + r.b;
    c.mean += w * mk;
    second += w * (q[static_cast<std::size_t>(k)] + mk * mk.transpose());
  }
  c.cov = second - c.mean * c.mean.transpose();
  return c;
}

// ---------------------------------------------------------------------------
// JSON form of the spec (matrices as nested row arrays).

namespace detail {

inline nlohmann::json matrix_to_json(const Matd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline Matd matrix_from_json(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Matd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j.at(static_cast<std::size_t>(r)).size()) != cols) {
      throw ConfigError("matrix rows have unequal lengths");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

}  // namespace detail

inline nlohmann::json to_json(const SyntheticProcessSpec& s) {
  nlohmann::json j;
  j["kind"] = s.kind;
  j["dim"] = s.dim;
  j["switch_prob"] = s.switch_prob;
  j["initial_regime"] = s.initial_regime;
  j["seed"] = s.seed;
  j["regimes"] = nlohmann::json::array();
  for (const auto& r : s.regimes) {
    j["regimes"].push_back({{"A", detail::matrix_to_json(r.A)},
                            {"b", std::vector<double>(r.b.data(), r.b.data() + r.b.size())},
                            {"L", detail::matrix_to_json(r.L)}});
  }
  return j;
}

inline SyntheticProcessSpec spec_from_json(const nlohmann::json& j) {
  SyntheticProcessSpec s;
  s.kind = j.at("kind").get<ProcessKind>();
  s.dim = j.at("dim").get<int>();
  s.switch_prob = j.value("switch_prob", 0.0);
  s.initial_regime = j.value("initial_regime", -1);
  s.seed = j.value("seed", std::uint64_t{0});
  for (const auto& rj : j.at("regimes")) {
    LinearRegime r;
    r.A = detail::matrix_from_json(rj.at("A"));
    const auto b = rj.at("b").get<std::vector<double>>();
    r.b = Eigen::Map<const Vec<double>>(b.data(), static_cast<Eigen::Index>(b.size()));
    r.L = detail::matrix_from_json(rj.at("L"));
    s.regimes.push_back(std::move(r));
  }
  validate(s);
  return s;
}

}  // namespace cam::data
