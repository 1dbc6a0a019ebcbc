// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "cam/math/flow.hpp"

namespace {

using cam::Rng;
using cam::math::ErrorLevel;
using cam::math::NoiseLevel;
using V = Eigen::VectorXd;

V vec(std::initializer_list<double> xs) {
  V v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

TEST(NoiseAugment, LinearCombination) {
  EXPECT_EQ(cam::math::noise_augment(vec({2, 0}), vec({0, 2}), ErrorLevel(0.5)), vec({1, 1}));
}

TEST(NoiseAugment, Endpoints) {
  Rng rng(3);
  const V x = rng.normal_matrix<double>(6, 1);
  const V e = rng.normal_matrix<double>(6, 1);
  EXPECT_EQ(cam::math::noise_augment(x, e, ErrorLevel(0.0)), x);
  EXPECT_EQ(cam::math::noise_augment(x, e, ErrorLevel(1.0)), e);
}

TEST(NoiseAugment, DimensionMismatchThrows) {
  EXPECT_THROW(cam::math::noise_augment(vec({1, 2}), vec({1, 2, 3}), ErrorLevel(0.1)), cam::ShapeError);
}

TEST(ErrorLevelType, RejectsOutOfRange) {
  EXPECT_THROW(ErrorLevel(-0.01), cam::ConfigError);
  EXPECT_THROW(ErrorLevel(1.01), cam::ConfigError);
  EXPECT_THROW(NoiseLevel(std::nan("")), cam::ConfigError);
}

TEST(RfCorrupt, Examples) {
  EXPECT_EQ(cam::math::rf_corrupt(vec({1, 1}), vec({-1, 3}), NoiseLevel(0.0)), vec({1, 1}));
  EXPECT_EQ(cam::math::rf_corrupt(vec({1, 1}), vec({-1, 3}), NoiseLevel(1.0)), vec({-1, 3}));
  EXPECT_EQ(cam::math::rf_corrupt(vec({4, 0}), vec({0, 4}), NoiseLevel(0.25)), vec({3, 1}));
  EXPECT_THROW(cam::math::rf_corrupt(vec({1}), vec({1, 2}), NoiseLevel(0.5)), cam::ShapeError);
}

TEST(RfCorrupt, SameAffineMapAsAugment) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const V x = rng.normal_matrix<double>(5, 1);
    const V e = rng.normal_matrix<double>(5, 1);
    const double a = rng.uniform();
    const V lhs = cam::math::rf_corrupt(x, e, NoiseLevel(a)) - x;
    EXPECT_EQ(cam::math::noise_augment(x, e, ErrorLevel(a)), cam::math::rf_corrupt(x, e, NoiseLevel(a)));
    EXPECT_LE((lhs - a * (e - x)).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(RfTargetDrift, Examples) {
  EXPECT_EQ(cam::math::rf_target_drift(vec({1, 2}), vec({1, 2})), vec({0, 0}));
  EXPECT_EQ(cam::math::rf_target_drift(vec({3, 0}), vec({1, 1})), vec({2, -1}));
  const V e = vec({0.5, -2, 7});
  EXPECT_EQ(cam::math::rf_target_drift(V::Zero(3), e), -e);
  EXPECT_THROW(cam::math::rf_target_drift(vec({1}), vec({1, 2})), cam::ShapeError);
}

TEST(MseLoss, Examples) {
  EXPECT_EQ(cam::math::mse_loss(vec({1, 2}), vec({1, 2})), 0.0);
  EXPECT_EQ(cam::math::mse_loss(vec({1, 1}), vec({0, 0})), 1.0);
  EXPECT_EQ(cam::math::mse_loss(vec({3}), vec({1})), 4.0);
  EXPECT_THROW(cam::math::mse_loss(vec({3}), vec({1, 2})), cam::ShapeError);
}

TEST(MseLoss, SymmetricAndNonNegative) {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const V a = rng.normal_matrix<double>(4, 1);
    const V b = rng.normal_matrix<double>(4, 1);
    EXPECT_GE(cam::math::mse_loss(a, b), 0.0);
    EXPECT_EQ(cam::math::mse_loss(a, b), cam::math::mse_loss(b, a));
    EXPECT_GT(cam::math::mse_loss(a, b), 0.0);
  }
}

TEST(SampleSigma, SigmoidMidpoint) { EXPECT_EQ(cam::math::sigmoid(0.0), 0.5); }

TEST(SampleSigma, MeanAndRange) {
  Rng rng(2024);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double s = cam::math::sample_sigma(rng).value();
    ASSERT_GT(s, 0.0);
    ASSERT_LT(s, 1.0);
    sum += s;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.01);
}

TEST(SampleSigma, ClampedLognormalStaysInside) {
  Rng rng(9);
  for (int i = 0; i < 20000; ++i) {
    const double s = cam::math::sample_sigma(rng, cam::math::SigmaDistribution::clamped_lognormal).value();
    ASSERT_GT(s, 0.0);
    ASSERT_LT(s, 1.0);
  }
}

TEST(SampleErrorLevel, MomentsAndUniformity) {
  Rng rng(77);
  const int n = 100000;
  const int bins = 20;
  std::vector<int> hist(bins, 0);
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double k = cam::math::sample_error_level(rng).value();
    ASSERT_GE(k, 0.0);
    ASSERT_LE(k, 1.0);
    sum += k;
    sq += k * k;
    ++hist[std::min(bins - 1, static_cast<int>(k * bins))];
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 0.5, 0.01);
  EXPECT_NEAR(sq / n - mean * mean, 1.0 / 12.0, 0.005);
  double chi2 = 0.0;
  const double expected = static_cast<double>(n) / bins;
  for (int h : hist) chi2 += (h - expected) * (h - expected) / expected;
  EXPECT_LT(chi2, 36.191);  // chi-square, 19 dof, p = 0.01
}

TEST(IntegrateRfOde, ConstantDriftIsExact) {
  const V y0 = vec({0.3, -1.2, 2.0});
  const V c = vec({1.0, 0.5, -0.25});
  for (int steps : {1, 2, 7, 50}) {
    const V y = cam::math::integrate_rf_ode([&](const V&, NoiseLevel) { return V(c); }, y0, steps);
    EXPECT_LE((y - (y0 + c)).cwiseAbs().maxCoeff(), 1e-12) << steps;
  }
}

TEST(IntegrateRfOde, StraightLineDriftRecoversData) {
  Rng rng(8);
  const V x = rng.normal_matrix<double>(8, 1);
  const V y0 = rng.normal_matrix<double>(8, 1);
  const V v = cam::math::rf_target_drift(x, y0);
  for (int steps : {1, 3, 10, 100}) {
    const V y = cam::math::integrate_rf_ode([&](const V&, NoiseLevel) { return V(v); }, y0, steps);
    EXPECT_LE((y - x).cwiseAbs().maxCoeff(), 1e-12) << steps;
  }
}

TEST(IntegrateRfOde, StraightPathStateDependentDrift) {
  // The exact flow field along the straight path: v(y, s) = (x - y) / s.
  Rng rng(81);
  const V x = rng.normal_matrix<double>(4, 1);
  const V y0 = rng.normal_matrix<double>(4, 1);
  for (int steps : {1, 4, 25}) {
    const V y = cam::math::integrate_rf_ode(
        [&](const V& y, NoiseLevel s) { return V((x - y) / s.value()); }, y0, steps);
    EXPECT_LE((y - x).cwiseAbs().maxCoeff(), 1e-10) << steps;
  }
}

TEST(IntegrateRfOde, LinearFieldMatchesExponential) {
  const V y0 = vec({1.0, -2.0, 0.5});
  const V y = cam::math::integrate_rf_ode([](const V& y, NoiseLevel) { return V(-y); }, y0, 1000);
  const V exact = y0 * std::exp(-1.0);
  EXPECT_LE((y - exact).norm() / exact.norm(), 1e-2);
}

TEST(IntegrateRfOde, NonFiniteDriftNamesStep) {
  int calls = 0;
  try {
    cam::math::integrate_rf_ode(
        [&](const V& y, NoiseLevel) {
          return ++calls == 3 ? V::Constant(y.size(), std::nan("")) : V(V::Zero(y.size()));
        },
        V(V::Zero(2)), 5);
    FAIL() << "expected NumericError";
  } catch (const cam::NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("step 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(cam::math::integrate_rf_ode([](const V& y, NoiseLevel) { return y; }, V(V::Zero(2)), 0),
               cam::ConfigError);
}

// Independent linear-beta oracle for alpha-bar.
double oracle_alpha_bar(int t, int total) {
  double p = 1.0;
  for (int i = 0; i <= t; ++i) p *= 1.0 - (1e-4 + (0.02 - 1e-4) * i / (total - 1));
  return p;
}

TEST(DdpmLinearCorrupt, ScheduleAndEndpoints) {
  const cam::math::LinearSchedule sched(1000);
  for (int t : {0, 1, 10, 500, 999}) EXPECT_NEAR(sched.alpha_bar(t), oracle_alpha_bar(t, 1000), 1e-12);
  const V x = vec({1.0, -1.0, 2.0});
  const V e = vec({0.3, 0.1, -0.2});
  const V near_clean = cam::math::ddpm_linear_corrupt(x, e, 0, 1000);
  EXPECT_LE((near_clean - x).cwiseAbs().maxCoeff(), 0.01);
  const V zero_x = cam::math::ddpm_linear_corrupt(V(V::Zero(3)), e, 400, 1000);
  EXPECT_LE((zero_x - std::sqrt(1.0 - oracle_alpha_bar(400, 1000)) * e).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(cam::math::ddpm_linear_corrupt(x, e, 1000, 1000), cam::ConfigError);
  EXPECT_THROW(cam::math::ddpm_linear_corrupt(x, e, -1, 1000), cam::ConfigError);
}

TEST(DdpmLinearCorrupt, FinalStepIsNearlyStandardNormal) {
  Rng rng(99);
  const V x = V::Constant(4, 3.0);
  const int n = 20000;
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const V y = cam::math::ddpm_linear_corrupt(x, V(rng.normal_matrix<double>(4, 1)), 999, 1000);
    sum += y.sum();
    sq += y.squaredNorm();
  }
  const double mean = sum / (4.0 * n);
  EXPECT_NEAR(mean, 0.0, 0.03);
  EXPECT_NEAR(sq / (4.0 * n) - mean * mean, 1.0, 0.03);
}

TEST(DdpmLinearCorrupt, SnrDecreasesWithStep) {
  const cam::math::LinearSchedule sched;
  double prev = std::numeric_limits<double>::infinity();
  for (int t = 0; t < sched.total_steps(); ++t) {
    const double ab = sched.alpha_bar(t);
    const double snr = ab / (1.0 - ab);
    ASSERT_LT(snr, prev) << t;
    prev = snr;
  }
}

TEST(DdpmSample, ExactNoiseInverts) {
  Rng rng(4);
  const V x = rng.normal_matrix<double>(8, 1);
  const V e = rng.normal_matrix<double>(8, 1);
  const cam::math::LinearSchedule sched;
  for (int steps : {1, 10, 50, 100}) {
    const int t0 = sched.sampling_timesteps(steps).front();
    const V y0 = cam::math::ddpm_linear_corrupt(x, e, t0, 1000);
    const V out = cam::math::ddpm_sample([&](const V&, int) { return V(e); }, y0, steps, sched);
    EXPECT_LE((out - x).norm() / x.norm(), 1e-4) << steps;
  }
}

TEST(DdpmSample, ZeroPredictionIsRescaling) {
  const V y0 = vec({1.0, -0.5, 2.0});
  for (int steps : {1, 5, 20}) {
    const V out = cam::math::ddpm_sample([](const V& y, int) { return V(V::Zero(y.size())); }, y0, steps);
    // The stride telescopes: sqrt(abar_prev / abar_t) multiplied out, final abar_prev = 1.
    const V expected = y0 / std::sqrt(oracle_alpha_bar(999, 1000));
    EXPECT_LE((out - expected).cwiseAbs().maxCoeff(), 1e-9 * expected.cwiseAbs().maxCoeff()) << steps;
  }
}

TEST(DdpmSample, SingleStepIsX0Estimate) {
  const V y0 = vec({0.4, 1.1});
  const V eps = vec({-0.3, 0.8});
  const V out = cam::math::ddpm_sample([&](const V&, int) { return V(eps); }, y0, 1);
  const double ab = oracle_alpha_bar(999, 1000);
  const V x0 = (y0 - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
  EXPECT_LE((out - x0).cwiseAbs().maxCoeff(), 1e-9 * x0.cwiseAbs().maxCoeff());
}

TEST(DdpmSample, NonFinitePredictionThrows) {
  EXPECT_THROW(cam::math::ddpm_sample([](const V& y, int) { return V(V::Constant(y.size(), INFINITY)); },
                                      V(V::Zero(2)), 3),
               cam::NumericError);
}

TEST(RngTest, SplitIsStableAndIndependentOfParentUse) {
  Rng a(42);
  Rng b(42);
  const Rng child_before = a.split(7);
  for (int i = 0; i < 10; ++i) b.next_u64();
  Rng c1 = child_before;
  Rng c2 = a.split(7);
  EXPECT_EQ(c1.next_u64(), c2.next_u64());
  EXPECT_NE(a.split(7).next_u64(), a.split(8).next_u64());
  EXPECT_NE(b.split(7).next_u64(), a.split(7).next_u64());
}

TEST(RngTest, StateRoundTripIncludesSpareNormal) {
  Rng a(1);
  a.normal();
  const Rng::State s = a.state();
  const double next = a.normal();
  Rng b = Rng::from_state(s);
  EXPECT_EQ(b.normal(), next);
}

}  // namespace
