// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "cam/data/process.hpp"
#include "cam/metrics/accumulation.hpp"
#include "cam/metrics/conditional.hpp"
#include "cam/metrics/fed.hpp"
#include "cam/metrics/mmd.hpp"

namespace {

using namespace cam;
using metrics::GaussianStats;

GaussianStats stats(Vecd mean, Matd cov) { return {std::move(mean), std::move(cov), 100}; }

Matd random_spd(Rng& rng, int f) {
  const Matd g = rng.normal_matrix<double>(f, f);
  return g * g.transpose() / f + 0.2 * Matd::Identity(f, f);
}

TEST(Frechet, IdenticalStatsGiveZero) {
  Rng rng(1);
  const auto s = stats(rng.normal_matrix<double>(6, 1), random_spd(rng, 6));
  EXPECT_NEAR(metrics::frechet_distance(s, s), 0.0, 1e-8);
}

TEST(Frechet, IdentityCovariancesGiveSquaredMeanGap) {
  Vecd v(3);
  v << 1.0, -2.0, 0.5;
  const auto a = stats(Vecd::Zero(3), Matd::Identity(3, 3));
  const auto b = stats(v, Matd::Identity(3, 3));
  EXPECT_NEAR(metrics::frechet_distance(a, b), v.squaredNorm(), 1e-8);
}

TEST(Frechet, ScalarClosedForm) {
  const auto a = stats(Vecd::Zero(1), Matd::Constant(1, 1, 4.0));
  const auto b = stats(Vecd::Zero(1), Matd::Constant(1, 1, 1.0));
  EXPECT_NEAR(metrics::frechet_distance(a, b), 1.0, 1e-8);
}

TEST(Frechet, MatchesScalarProductFormula) {
  // Diagonal covariances: sum_i (sqrt(a_i) - sqrt(b_i))^2 + ||mu_a - mu_b||^2.
  Vecd da(4);
  da << 0.5, 2.0, 3.0, 1.0;
  Vecd db(4);
  db << 1.5, 0.2, 3.0, 4.0;
  Vecd mu(4);
  mu << 0.3, 0.0, -1.0, 2.0;
  const auto a = stats(Vecd::Zero(4), Matd(da.asDiagonal()));
  const auto b = stats(mu, Matd(db.asDiagonal()));
  const double expect = mu.squaredNorm() + (da.cwiseSqrt() - db.cwiseSqrt()).squaredNorm();
  EXPECT_NEAR(metrics::frechet_distance(a, b), expect, 1e-10);
}

TEST(Frechet, SymmetricAndRotationInvariant) {
  Rng rng(2);
  const int f = 7;
  const auto a = stats(rng.normal_matrix<double>(f, 1), random_spd(rng, f));
  const auto b = stats(rng.normal_matrix<double>(f, 1), random_spd(rng, f));
  const double ab = metrics::frechet_distance(a, b);
  EXPECT_NEAR(ab, metrics::frechet_distance(b, a), 1e-8);
  const Matd q = Eigen::HouseholderQR<Matd>(rng.normal_matrix<double>(f, f)).householderQ();
  const auto ra = stats(q * a.mean, q * a.cov * q.transpose());
  const auto rb = stats(q * b.mean, q * b.cov * q.transpose());
  EXPECT_NEAR(metrics::frechet_distance(ra, rb), ab, 1e-6);
}

TEST(Frechet, Errors) {
  const auto a = stats(Vecd::Zero(2), Matd::Identity(2, 2));
  const auto b = stats(Vecd::Zero(3), Matd::Identity(3, 3));
  EXPECT_THROW(metrics::frechet_distance(a, b), ShapeError);
  auto c = a;
  c.cov(0, 1) = NAN;
  EXPECT_THROW(metrics::frechet_distance(a, c), NumericError);
  EXPECT_THROW(metrics::gaussian_stats(Matd::Zero(1, 2)), ShapeError);
}

TEST(Frechet, GaussianStatsTwoPass) {
  Rng rng(3);
  const Matd x = rng.normal_matrix<double>(50, 3);
  const auto s = metrics::gaussian_stats(x);
  for (int i = 0; i < 3; ++i) {
    double m = 0.0;
    for (int r = 0; r < 50; ++r) m += x(r, i);
    m /= 50;
    EXPECT_NEAR(s.mean(i), m, 1e-12);
    for (int j = 0; j < 3; ++j) {
      double c = 0.0;
      double mj = x.col(j).mean();
      for (int r = 0; r < 50; ++r) c += (x(r, i) - m) * (x(r, j) - mj);
      EXPECT_NEAR(s.cov(i, j), c / 49, 1e-12);
    }
  }
}

TEST(KendallTau, KnownValues) {
  EXPECT_DOUBLE_EQ(metrics::kendall_tau({1, 2, 3, 4}, {1, 2, 3, 4}), 1.0);
  EXPECT_DOUBLE_EQ(metrics::kendall_tau({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0);
  // Pairs: (1,2)+ (1,3)- (2,3)- -> (1 - 2) / 3.
  EXPECT_NEAR(metrics::kendall_tau({1, 2, 3}, {2, 3, 1}), -1.0 / 3.0, 1e-15);
}

TEST(WindowFeatures, ComponentsAndDeterminism) {
  const metrics::WindowFeatures fm(4, 2, 9);
  Matd w(4, 2);
  w << 0, 1, 1, 1, 2, 1, 3, 1;
  const Vecd f = fm(w);
  ASSERT_EQ(f.size(), 10);
  EXPECT_DOUBLE_EQ(f(0), 1.5);
  EXPECT_DOUBLE_EQ(f(1), 1.0);
  EXPECT_DOUBLE_EQ(f(2), std::sqrt(1.25));
  EXPECT_DOUBLE_EQ(f(3), 0.0);
  // Centered ramp -1.5..1.5: lag-1 sum (-1.5*-0.5 + -0.5*0.5 + 0.5*1.5) / 5.
  EXPECT_DOUBLE_EQ(f(4), 1.25 / 5.0);
  EXPECT_DOUBLE_EQ(f(5), 0.0);
  EXPECT_EQ(metrics::WindowFeatures(4, 2, 9)(w), f);
  EXPECT_NE(metrics::WindowFeatures(4, 2, 10)(w), f);
}

std::vector<Matf> process_traces(const data::SyntheticProcessSpec& spec, int n, int len, std::uint64_t seed,
                                 double scale = 1.0) {
  Rng rng(seed);
  auto ds = data::sample_process(spec, n, len, rng);
  for (auto& s : ds.sequences) s *= static_cast<float>(scale);
  return ds.sequences;
}

class FedProtocol : public ::testing::Test {
 protected:
  void SetUp() override {
    spec_ = data::default_ar1_spec(8);
    Rng rng(10);
    reference_ = data::sample_process(spec_, 512, 256, rng);
  }
  data::SyntheticProcessSpec spec_;
  data::Dataset reference_;
};

TEST_F(FedProtocol, SelfDistanceCalibration) {
  const auto own = process_traces(spec_, 512, 128, 11);
  const auto r = metrics::fed_protocol(own, reference_);
  EXPECT_EQ(r.fed_draws.size(), 5u);
  EXPECT_NEAR(r.fed / r.fed_acc, 1.0, 0.2) << r.fed << " " << r.fed_acc;
  std::vector<Matf> flat(512, Matf::Zero(128, 8));
  const auto c = metrics::fed_protocol(flat, reference_);
  EXPECT_GT(c.fed, 10.0 * r.fed) << c.fed << " vs " << r.fed;
  const auto again = metrics::fed_protocol(own, reference_);
  EXPECT_EQ(again.fed, r.fed);
  EXPECT_EQ(again.fed_acc_draws, r.fed_acc_draws);
}

TEST_F(FedProtocol, RankingStableAcrossFeatureSeeds) {
  std::vector<std::vector<double>> fed(2);
  for (int seed = 0; seed < 2; ++seed) {
    metrics::FedSettings s;
    s.feature_seed = static_cast<std::uint64_t>(seed) + 100;
    for (double scale : {1.0, 1.3, 1.8}) fed[static_cast<std::size_t>(seed)].push_back(metrics::fed_protocol(process_traces(spec_, 512, 128, 12, scale), reference_, s).fed);
  }
  EXPECT_NE(fed[0][1], fed[1][1]);
  EXPECT_LT(fed[0][0], fed[0][1]);
  EXPECT_LT(fed[0][1], fed[0][2]);
  EXPECT_LT(fed[1][0], fed[1][1]);
  EXPECT_LT(fed[1][1], fed[1][2]);
}

TEST_F(FedProtocol, InsufficientSamplesNamesTheFix) {
  const auto few = process_traces(spec_, 40, 128, 13);
  try {
    metrics::fed_protocol(few, reference_);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("generate more traces"), std::string::npos);
  }
  EXPECT_THROW(metrics::fed_protocol(process_traces(spec_, 64, 100, 13), reference_), ShapeError);
}

TEST(Mmd, NullAndShift) {
  Rng rng(20);
  const Matd a = rng.normal_matrix<double>(2000, 8);
  const Matd b = rng.normal_matrix<double>(2000, 8);
  EXPECT_LE(std::abs(metrics::mmd_rbf(a, b)), 0.01);
  const Matd c = (rng.normal_matrix<double>(2000, 8).array() + 3.0).matrix();
  EXPECT_GT(metrics::mmd_rbf(a, c), 0.1);
}

TEST(Mmd, SameSetNearZeroSymmetricScaleConsistent) {
  Rng rng(21);
  const Matd a = rng.normal_matrix<double>(300, 4);
  const Matd b = (rng.normal_matrix<double>(300, 4).array() * 1.5).matrix();
  const double self = metrics::mmd_rbf(a, a, 1.0);
  EXPECT_LE(self, 1e-12);
  EXPECT_GE(self, -2.0 / 300);
  EXPECT_NEAR(metrics::mmd_rbf(a, b, 1.3), metrics::mmd_rbf(b, a, 1.3), 1e-12);
  EXPECT_NEAR(metrics::mmd_rbf(a, b, 1.3), metrics::mmd_rbf(5.0 * a, 5.0 * b, 6.5), 1e-12);
  EXPECT_NEAR(metrics::mmd_rbf(a, b), metrics::mmd_rbf(5.0 * a, 5.0 * b), 1e-12);
}

TEST(ConditionalAccuracy, OracleReplayFloor) {
  const auto spec = data::default_ar1_spec(8);
  Rng rng(30);
  const auto acc = metrics::conditional_accuracy(metrics::oracle_sampler(spec), spec, {}, rng);
  EXPECT_LE(acc.mean_err, 0.03);
  EXPECT_LE(acc.cov_err, 0.03);
  std::cout << "oracle floor: mean " << acc.mean_err << " cov " << acc.cov_err << "\n";
}

TEST(ConditionalAccuracy, UntrainedModelIsFarOff) {
  const auto spec = data::default_ar1_spec(4);
  const auto params = model::init_params<float>(model::preset_config(model::Preset::tiny, 4), 3);
  infer::GenerationConfig g;
  g.num_steps_denoise = 10;
  metrics::ConditionalSettings s;
  s.num_probes = 2;
  s.draws = 500;
  s.prefix_length = 15;
  Rng rng(31);
  const auto acc = metrics::conditional_accuracy(metrics::model_sampler(params, g), spec, s, rng);
  EXPECT_TRUE(std::isfinite(acc.mean_err));
  EXPECT_GT(acc.mean_err + acc.cov_err, 0.3);
}

TEST(Accumulation, TrueProcessHasNoTrend) {
  const auto spec = data::default_ar1_spec(8);
  Rng rng(40);
  const auto ref = data::sample_process(spec, 256, 256, rng);
  const auto curve = metrics::accumulation_curve(process_traces(spec, 512, 128, 41), ref, 2);
  EXPECT_EQ(curve.points.size(), 64u);
  EXPECT_LE(std::abs(curve.tau), 0.2);
}

TEST(Accumulation, CompoundingDriftIsDetected) {
  const auto spec = data::default_ar1_spec(8);
  Rng rng(42);
  const auto ref = data::sample_process(spec, 256, 256, rng);
  auto traces = process_traces(spec, 512, 128, 43);
  for (auto& t : traces) {
    for (Eigen::Index p = 0; p < t.rows(); ++p) t.row(p).array() += 0.01f * static_cast<float>(p);
  }
  EXPECT_GT(metrics::accumulation_curve(traces, ref, 2).tau, 0.8);
}

TEST(Accumulation, SparseBucketsAreSkippedWithWarning) {
  const auto spec = data::default_ar1_spec(8);
  Rng rng(44);
  const auto ref = data::sample_process(spec, 16, 64, rng);
  auto traces = process_traces(spec, 20, 10, 45);
  traces.push_back(process_traces(spec, 1, 30, 46).front());
  const auto curve = metrics::accumulation_curve(traces, ref, 5);
  EXPECT_EQ(curve.points.size(), 2u);
  EXPECT_EQ(curve.warnings.size(), 4u);
  EXPECT_THROW(metrics::accumulation_curve(traces, ref, 30), ConfigError);
}

}  // namespace
