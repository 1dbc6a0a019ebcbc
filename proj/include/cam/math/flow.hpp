// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cam/core/error.hpp"
#include "cam/core/rng.hpp"
#include "cam/core/tensor.hpp"

namespace cam::math {

namespace detail {

inline double checked_unit(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw ConfigError(std::string(what) + " must lie in [0, 1], got " + std::to_string(v));
  }
  return v;
}

template <class A, class B>
void require_same_shape(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b,
                        const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
}

}  // namespace detail

/// Corruption level of the flow sampler input, 0 = clean, 1 = pure noise.
class NoiseLevel {
 public:
  constexpr NoiseLevel() = default;
  explicit NoiseLevel(double sigma) : sigma_(detail::checked_unit(sigma, "noise level")) {}
  [[nodiscard]] double value() const { return sigma_; }

 private:
  double sigma_ = 0.0;
};

/// Mixing weight of the simulated prediction error fed to the backbone.
class ErrorLevel {
 public:
  constexpr ErrorLevel() = default;
  explicit ErrorLevel(double k) : k_(detail::checked_unit(k, "error level")) {}
  [[nodiscard]] double value() const { return k_; }

 private:
  double k_ = 0.0;
};

/// k * eps + (1 - k) * x. Works on single embeddings and on row-batched matrices.
template <class X, class E>
auto noise_augment(const Eigen::MatrixBase<X>& x, const Eigen::MatrixBase<E>& eps, ErrorLevel k) {
  detail::require_same_shape(x, eps, "noise_augment");
  using S = typename X::Scalar;
  const auto kv = static_cast<S>(k.value());
  return (kv * eps.derived() + (S(1) - kv) * x.derived()).eval();
}

/// sigma * eps + (1 - sigma) * x, the straight path between data and noise.
template <class X, class E>
auto rf_corrupt(const Eigen::MatrixBase<X>& x, const Eigen::MatrixBase<E>& eps, NoiseLevel sigma) {
  detail::require_same_shape(x, eps, "rf_corrupt");
  using S = typename X::Scalar;
  const auto s = static_cast<S>(sigma.value());
  return (s * eps.derived() + (S(1) - s) * x.derived()).eval();
}

/// Drift target, data minus noise. Integration runs from sigma = 1 to 0 along +v.
template <class X, class E>
auto rf_target_drift(const Eigen::MatrixBase<X>& x, const Eigen::MatrixBase<E>& eps) {
  detail::require_same_shape(x, eps, "rf_target_drift");
  return (x.derived() - eps.derived()).eval();
}

/// Mean of squared elementwise differences.
template <class P, class Q>
double mse_loss(const Eigen::MatrixBase<P>& pred, const Eigen::MatrixBase<Q>& target) {
  detail::require_same_shape(pred, target, "mse_loss");
  if (pred.size() == 0) return 0.0;
  const auto diff = (pred.derived() - target.derived()).template cast<double>();
  return diff.squaredNorm() / static_cast<double>(pred.size());
}

enum class SigmaDistribution { logit_normal, clamped_lognormal };

inline double sigmoid(double n) { return 1.0 / (1.0 + std::exp(-n)); }

/// Draws the flow corruption level. Logit-normal(0, 1) by default.
inline NoiseLevel sample_sigma(Rng& rng, SigmaDistribution dist = SigmaDistribution::logit_normal) {
  const double n = rng.normal();
  if (dist == SigmaDistribution::clamped_lognormal) {
    constexpr double lo = 1e-6;
    constexpr double hi = 1.0 - 1e-6;
    return NoiseLevel(std::clamp(std::exp(n), lo, hi));
  }
  return NoiseLevel(sigmoid(n));
}

/// k ~ U(0, 1).
inline ErrorLevel sample_error_level(Rng& rng) { return ErrorLevel(rng.uniform()); }

/// Euler integration of the flow ODE from sigma = 1 down to sigma = 0.
///
/// `drift(y, sigma)` returns the drift at the current point. Each step applies
/// y <- y + v * (1 / steps), evaluating the drift at the start of the
/// sub-interval. The state may be one embedding or a batch (one per row).
template <class State, class DriftFn>
State integrate_rf_ode(DriftFn&& drift, State y, int steps) {
  if (steps < 1) throw ConfigError("integrate_rf_ode: steps must be >= 1");
  using S = typename State::Scalar;
  const S dt = S(1) / static_cast<S>(steps);
  for (int i = 0; i < steps; ++i) {
    const NoiseLevel sigma(1.0 - static_cast<double>(i) / steps);
    const State v = drift(static_cast<const State&>(y), sigma);
    if (v.rows() != y.rows() || v.cols() != y.cols()) {
      throw ShapeError("integrate_rf_ode: drift shape differs from state shape");
    }
    if (!v.allFinite()) {
      throw NumericError("integrate_rf_ode: non-finite drift at step " + std::to_string(i) +
                         " (sigma=" + std::to_string(sigma.value()) + ")");
    }
    y += dt * v;
  }
  return y;
}

/// Linear beta schedule of the noise-prediction baseline.
class LinearSchedule {
 public:
  static constexpr int kDefaultSteps = 1000;
  static constexpr double kBetaStart = 1e-4;
  static constexpr double kBetaEnd = 0.02;

  explicit LinearSchedule(int total_steps = kDefaultSteps) {
    if (total_steps < 1) throw ConfigError("LinearSchedule: total_steps must be >= 1");
    alpha_bar_.resize(static_cast<std::size_t>(total_steps));
    double prod = 1.0;
    for (int t = 0; t < total_steps; ++t) {
      const double beta =
          total_steps == 1 ? kBetaStart
                           : kBetaStart + (kBetaEnd - kBetaStart) * t / (total_steps - 1);
      prod *= 1.0 - beta;
      alpha_bar_[static_cast<std::size_t>(t)] = prod;
    }
  }

  [[nodiscard]] int total_steps() const { return static_cast<int>(alpha_bar_.size()); }

  [[nodiscard]] double alpha_bar(int t) const {
    if (t < 0 || t >= total_steps()) {
      throw ConfigError("LinearSchedule: step index " + std::to_string(t) + " out of range [0, " +
                        std::to_string(total_steps()) + ")");
    }
    return alpha_bar_[static_cast<std::size_t>(t)];
  }

  /// Timesteps visited by a deterministic strided reverse pass, highest first.
  [[nodiscard]] std::vector<int> sampling_timesteps(int steps) const {
    if (steps < 1) throw ConfigError("ddpm_sample: steps must be >= 1");
    std::vector<int> ts;
    ts.reserve(static_cast<std::size_t>(steps));
    const int last = total_steps() - 1;
    for (int i = 0; i < steps; ++i) {
      ts.push_back(static_cast<int>(std::lround(last * (1.0 - static_cast<double>(i) / steps))));
    }
    return ts;
  }

 private:
  std::vector<double> alpha_bar_;
};

/// sqrt(abar_t) * x + sqrt(1 - abar_t) * eps under the linear schedule.
template <class X, class E>
auto ddpm_linear_corrupt(const Eigen::MatrixBase<X>& x, const Eigen::MatrixBase<E>& eps,
                         int step_index, int total_steps) {
  detail::require_same_shape(x, eps, "ddpm_linear_corrupt");
  const LinearSchedule sched(total_steps);
  const double ab = sched.alpha_bar(step_index);
  using S = typename X::Scalar;
  return (static_cast<S>(std::sqrt(ab)) * x.derived() +
          static_cast<S>(std::sqrt(1.0 - ab)) * eps.derived())
      .eval();
}

/// Deterministic strided (DDIM, eta = 0) reverse pass.
///
/// `eps_pred(y, t)` predicts the noise of `y` at schedule index `t`.
template <class State, class EpsFn>
State ddpm_sample(EpsFn&& eps_pred, State y, int steps,
                  const LinearSchedule& sched = LinearSchedule()) {
  using S = typename State::Scalar;
  const std::vector<int> ts = sched.sampling_timesteps(steps);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const double ab = sched.alpha_bar(t);
    const double ab_prev = i + 1 < ts.size() ? sched.alpha_bar(ts[i + 1]) : 1.0;
    const State eps = eps_pred(static_cast<const State&>(y), t);
    if (!eps.allFinite()) {
      throw NumericError("ddpm_sample: non-finite noise prediction at timestep " +
                         std::to_string(t));
    }
    const State x0 = ((y - static_cast<S>(std::sqrt(1.0 - ab)) * eps) /
                      static_cast<S>(std::sqrt(ab)))
                         .eval();
    y = static_cast<S>(std::sqrt(ab_prev)) * x0 + static_cast<S>(std::sqrt(1.0 - ab_prev)) * eps;
  }
  return y;
}

}  // namespace cam::math
