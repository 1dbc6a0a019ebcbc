// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "cam/infer/generate.hpp"

namespace {

using namespace cam;
using infer::ContextMode;
using infer::GenerationConfig;

// Random perturbation so zero-initialized gates and heads do something.
template <class T>
model::ModelParams<T> scrambled(const model::ModelConfig& mc, std::uint64_t seed, double scale = 0.1) {
  Rng rng(seed);
  auto p = model::init_params<T>(mc, seed);
  for (auto& q : p.store) q.value += static_cast<T>(scale) * rng.normal_matrix<T>(q.value.rows(), q.value.cols());
  return p;
}

model::ModelConfig tiny(int d = 4) { return model::preset_config(model::Preset::tiny, d); }

GenerationConfig short_cfg(int length = 24, double k = 0.0) {
  GenerationConfig g;
  g.target_length = length;
  g.k_inf = k;
  g.num_steps_denoise = 8;
  g.context_window = 16;
  g.seed = 42;
  return g;
}

TEST(GenerationConfigTest, Validation) {
  GenerationConfig g;
  g.target_length = 0;
  EXPECT_THROW(g.validate(), ConfigError);
  g = GenerationConfig{};
  g.num_steps_denoise = 0;
  EXPECT_THROW(g.validate(), ConfigError);
  const auto p = scrambled<float>(tiny(), 1);
  g = short_cfg();
  g.context_window = 17;
  EXPECT_THROW(infer::generate(p, g), ConfigError);
  const GenerationConfig back = nlohmann::json(short_cfg(5, 0.02)).get<GenerationConfig>();
  EXPECT_EQ(back.k_inf, 0.02);
  EXPECT_EQ(back.target_length, 5);
}

TEST(Generate, ZeroInjectionFeedsBackCleanExactly) {
  const auto p = scrambled<float>(tiny(), 2);
  const auto tr = infer::generate(p, short_cfg());
  EXPECT_EQ(tr.clean.rows(), 24);
  EXPECT_EQ(tr.fed_back, tr.clean);
  EXPECT_EQ(tr.step_us.size(), 24u);
}

TEST(Generate, SinglePositionIsOneOdeSolveFromSos) {
  const auto p = scrambled<double>(tiny(), 3);
  GenerationConfig g = short_cfg(1);
  const auto tr = infer::generate(p, g);
  Rng r = infer::PositionStreams::at(g.seed, 0).sample;
  const Matd z = p.value("sos");
  const Matd y0 = r.normal_matrix<double>(1, 4);
  const Matd direct = math::integrate_rf_ode(
      [&](const Matd& y, math::NoiseLevel s) { return model::sampler_forward(p, y, Vecd(Vecd::Constant(1, s.value())), z); },
      y0, g.num_steps_denoise);
  EXPECT_EQ(tr.clean, direct);
}

TEST(Generate, CacheMatchesNaiveRecompute) {
  for (auto mc : {tiny(), model::with_gmm_head(tiny(), 4)}) {
    const auto p = scrambled<float>(mc, 4);
    GenerationConfig g = short_cfg(128, 0.02);
    g.temperature = 1.0;
    const auto a = infer::generate(p, g, ContextMode::cached);
    const auto b = infer::generate(p, g, ContextMode::naive);
    EXPECT_LE((a.clean - b.clean).cwiseAbs().maxCoeff(), 1e-4);
  }
}

TEST(Generate, NoisePredictionHeadRuns) {
  auto mc = tiny();
  mc.head = model::HeadKind::noise_pred;
  const auto p = scrambled<float>(mc, 5);
  const auto tr = infer::generate(p, short_cfg(20, 0.02));
  EXPECT_TRUE(tr.clean.allFinite());
  EXPECT_EQ(infer::generate(p, short_cfg(20, 0.02)).clean, tr.clean);
}

TEST(Generate, SameSeedSameTrace) {
  const auto p = scrambled<float>(model::with_gmm_head(tiny(), 4), 6);
  const auto a = infer::generate_givt(p, short_cfg(40, 0.02));
  const auto b = infer::generate_givt(p, short_cfg(40, 0.02));
  EXPECT_EQ(a.clean, b.clean);
  EXPECT_EQ(a.fed_back, b.fed_back);
  GenerationConfig other = short_cfg(40, 0.02);
  other.seed = 43;
  EXPECT_NE(infer::generate_givt(p, other).clean, a.clean);
  EXPECT_THROW(infer::generate_givt(scrambled<float>(tiny(), 6), short_cfg()), ConfigError);
}

TEST(Generate, VanishingTemperatureSingleModeIsNearDeterministic) {
  const auto p = scrambled<double>(model::with_gmm_head(tiny(), 1), 7);
  GenerationConfig g = short_cfg(64);
  g.temperature = 1e-6;
  const auto a = infer::generate_givt(p, g);
  g.seed = 99;
  const auto b = infer::generate_givt(p, g);
  for (Eigen::Index r = 0; r < a.clean.rows(); ++r) {
    EXPECT_LE((a.clean.row(r) - b.clean.row(r)).cwiseAbs().maxCoeff(), 1e-3) << r;
  }
}

TEST(Generate, InjectionEnergyMatchesClosedForm) {
  // fed - clean = k (eps - clean), so E||fed - clean||^2 = k^2 (d + ||clean||^2).
  const auto p = scrambled<double>(tiny(8), 8);
  GenerationConfig g = short_cfg(1000, 0.02);
  g.num_steps_denoise = 2;
  const auto tr = infer::generate(p, g);
  const double measured = (tr.fed_back - tr.clean).rowwise().squaredNorm().sum();
  const double expected = g.k_inf * g.k_inf * (8.0 * 1000 + tr.clean.rowwise().squaredNorm().sum());
  EXPECT_NEAR(measured / expected, 1.0, 0.05);
}

TEST(Generate, AdditiveInjectionRaisesPerPositionVariance) {
  const auto p = scrambled<double>(model::with_gmm_head(tiny(), 4), 9);
  GenerationConfig g = short_cfg(64, 0.02);
  g.injection = infer::Injection::additive;
  const auto tr = infer::generate_givt(p, g);
  const auto var = [](const Matd& m) {
    return ((m.rowwise() - m.colwise().mean()).array().square().colwise().sum() / (m.rows() - 1.0)).eval();
  };
  EXPECT_GT(var(tr.fed_back).sum(), var(tr.clean).sum());
  // Identical sampling lineage: the clean stream ignores the injection.
  g.k_inf = 0.0;
  EXPECT_EQ(infer::generate_givt(p, g).clean.topRows(1), tr.clean.topRows(1));
}

TEST(Generate, SlidingWindowSeesOnlyLastWindow) {
  const auto p = scrambled<double>(tiny(), 10);
  GenerationConfig g = short_cfg(40, 0.02);
  g.context_window = 12;
  const auto tr = infer::generate(p, g);
  for (int pos : {12, 13, 25, 39}) {
    const Matd window = tr.fed_back.middleRows(pos - 12, 12);
    const Matd z = model::backbone_forward(p, window).bottomRows(1);
    Rng r = infer::PositionStreams::at(g.seed, pos).sample;
    const Matd y0 = r.normal_matrix<double>(1, 4);
    const Matd x = math::integrate_rf_ode(
        [&](const Matd& y, math::NoiseLevel s) { return model::sampler_forward(p, y, Vecd(Vecd::Constant(1, s.value())), z); },
        y0, g.num_steps_denoise);
    EXPECT_LE((x - tr.clean.row(pos)).cwiseAbs().maxCoeff(), 1e-12) << pos;
  }
}

TEST(Continue, EmptyPromptIsGenerate) {
  const auto p = scrambled<float>(tiny(), 11);
  const auto g = short_cfg(10, 0.02);
  EXPECT_EQ(infer::continue_sequence(p, Matf(0, 4), g).clean, infer::generate(p, g).clean);
}

TEST(Continue, PromptLengthAndOverflow) {
  const auto p = scrambled<float>(tiny(), 12);
  Rng r(1);
  const Matf prompt = r.normal_matrix<float>(5, 4);
  const auto tr = infer::continue_sequence(p, prompt, short_cfg(7));
  EXPECT_EQ(tr.clean.rows(), 7);
  EXPECT_EQ(tr.start_position, 5);
  EXPECT_THROW(infer::continue_sequence(p, r.normal_matrix<float>(17, 4), short_cfg(7)), ShapeError);
}

TEST(Continue, GeneratedPrefixContinuationMatchesFullRun) {
  const auto p = scrambled<float>(model::preset_config(model::Preset::small, 4), 13);
  GenerationConfig full = short_cfg(128, 0.02);
  full.context_window = 64;
  const auto whole = infer::generate(p, full);
  GenerationConfig rest = full;
  rest.target_length = 64;
  const auto cont = infer::continue_sequence(p, Matf(whole.clean.topRows(64)), rest);
  EXPECT_EQ(cont.clean, whole.clean.bottomRows(64));
  EXPECT_EQ(cont.fed_back, whole.fed_back.bottomRows(64));
}

TEST(Generate, BatchedMatchesUnbatched) {
  const auto p = scrambled<float>(tiny(), 14);
  GenerationConfig g = short_cfg(30, 0.02);
  const std::vector<std::uint64_t> seeds{5, 6, 7};
  const auto batch = infer::generate_batch(p, g, seeds);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    g.seed = seeds[i];
    EXPECT_LE((batch[i].clean - infer::generate(p, g).clean).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(Generate, NonFiniteReportsPosition) {
  auto p = scrambled<float>(tiny(), 15);
  p.store.at("sampler.out.b").value(0, 0) = NAN;
  try {
    infer::generate(p, short_cfg());
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("position 0"), std::string::npos) << e.what();
  }
}

TEST(Export, WritesTracesFedBackAndSidecar) {
  const auto p = scrambled<float>(tiny(), 16);
  const auto g = short_cfg(6, 0.02);
  const auto traces = infer::generate_batch(p, g, infer::trace_seeds(1, 3));
  const auto path = std::filesystem::temp_directory_path() / ("cam_infer_" + std::to_string(::getpid()) + ".came");
  infer::export_traces(traces, g, nlohmann::json(p.config), path);
  const auto ds = data::read_embeddings(path);
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.sequences[1], traces[1].clean);
  std::filesystem::path fed = path;
  fed += ".fed";
  EXPECT_EQ(data::read_embeddings(fed).sequences[2], traces[2].fed_back);
  std::filesystem::path side = path;
  side += ".json";
  std::ifstream in(side);
  const auto meta = nlohmann::json::parse(in);
  EXPECT_EQ(meta["seeds"].size(), 3u);
  EXPECT_EQ(meta["step_us"][0].size(), 6u);
  EXPECT_EQ(meta["generation"]["k_inf"], 0.02);
  std::filesystem::remove(path);
  std::filesystem::remove(fed);
  std::filesystem::remove(side);
}

}  // namespace
