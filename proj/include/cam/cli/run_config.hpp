// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "cam/data/process.hpp"
#include "cam/infer/generate.hpp"
#include "cam/metrics/conditional.hpp"
#include "cam/metrics/fed.hpp"
#include "cam/model/config.hpp"
#include "cam/train/config.hpp"
#include "json.hpp"

namespace cam::metrics {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(FedSettings, window, reference_windows, background, draws,
                                                feature_seed, shrinkage)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ConditionalSettings, num_probes, draws, prefix_length)
}  // namespace cam::metrics

namespace cam::cli {

struct DataSettings {
  int num_sequences = 2048;
  int length = 128;
  std::optional<std::uint64_t> seed;  // unset: the run seed
};

struct EvalSettings {
  int num_traces = 512;
  int reference_sequences = 1024;
  std::uint64_t reference_seed = 0x5eed;
  int accumulation_stride = 8;
  int mmd_samples = 2000;
  metrics::FedSettings fed;
  metrics::ConditionalSettings conditional;
};

struct CompareSettings {
  std::vector<std::string> objectives = {"cam", "mar_linear", "mar_rf", "givt", "givt_noise"};
  int seeds = 3;
};

/// Everything one invocation needs. Flags override fields after loading.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out = "out";
  std::string preset = "desk";
  int dim = 8;
  int modes = 8;                            // GMM components for givt objectives
  std::optional<model::ModelConfig> model;  // replaces the preset when set
  std::optional<data::SyntheticProcessSpec> process;  // unset: default AR(1) of `dim`
  DataSettings data;
  train::TrainConfig train = train::default_train_config(train::Objective::cam);
  infer::GenerationConfig generation;
  EvalSettings eval;
  std::vector<double> sweep_grid = {0.0, 0.005, 0.01, 0.02, 0.03, 0.05};
  CompareSettings compare;
};

inline void to_json(nlohmann::json& j, const DataSettings& d) {
  j = {{"num_sequences", d.num_sequences}, {"length", d.length}};
  if (d.seed) j["seed"] = *d.seed;
}

inline void from_json(const nlohmann::json& j, DataSettings& d) {
  d.num_sequences = j.value("num_sequences", d.num_sequences);
  d.length = j.value("length", d.length);
  if (j.contains("seed")) d.seed = j.at("seed").get<std::uint64_t>();
}

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EvalSettings, num_traces, reference_sequences, reference_seed,
                                                accumulation_stride, mmd_samples, fed, conditional)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(CompareSettings, objectives, seeds)

inline nlohmann::json to_json_value(const RunConfig& c) {
  nlohmann::json j = {{"seed", c.seed},
                      {"out", c.out},
                      {"preset", c.preset},
                      {"dim", c.dim},
                      {"modes", c.modes},
                      {"data", c.data},
                      {"train", c.train},
                      {"generation", c.generation},
                      {"eval", c.eval},
                      {"sweep_grid", c.sweep_grid},
                      {"compare", c.compare}};
  if (c.model) j["model"] = *c.model;
  if (c.process) j["process"] = data::to_json(*c.process);
  return j;
}

namespace detail {

/// Rejects keys of `j` absent from `tmpl`, descending into nested objects.
inline void check_keys(const nlohmann::json& j, const nlohmann::json& tmpl, const std::string& where) {
  if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!tmpl.contains(key)) throw ConfigError("config: unknown key '" + path + "'");
    const auto& t = tmpl.at(key);
    if (t.is_object() && !t.empty()) check_keys(value, t, path);
  }
}

inline nlohmann::json key_template() {
  RunConfig c;
  nlohmann::json t = to_json_value(c);
  t["data"]["seed"] = 0;
  t["train"]["fixed_error_level"] = 0.0;
  t["model"] = model::preset_config(model::Preset::tiny);
  t["process"] = nlohmann::json::object();  // validated by the process parser
  // Written by every command next to its outputs; ignored on load.
  t["command"] = "";
  t["resolved"] = nullptr;
  return t;
}

}  // namespace detail

inline void validate(const RunConfig& c) {
  if (c.dim < 1) throw ConfigError("config: dim must be >= 1 (got " + std::to_string(c.dim) + ")");
  if (c.modes < 1) throw ConfigError("config: modes must be >= 1");
  model::parse_preset(c.preset);
  if (c.data.num_sequences < 1 || c.data.length < 2) {
    throw ConfigError("config: data needs >= 1 sequence of length >= 2");
  }
  if (c.process && c.process->dim != c.dim) throw ConfigError("config: process dim differs from dim");
  if (c.model && c.model->backbone.input_dim != c.dim) throw ConfigError("config: model input_dim differs from dim");
  c.train.validate();
  c.generation.validate();
  if (c.eval.num_traces < 1 || c.eval.reference_sequences < 1 || c.eval.accumulation_stride < 1) {
    throw ConfigError("config: eval sizes must be positive");
  }
  if (c.sweep_grid.empty()) throw ConfigError("config: sweep_grid must not be empty");
  if (c.compare.seeds < 1) throw ConfigError("config: compare.seeds must be >= 1");
  for (const auto& o : c.compare.objectives) train::parse_objective(o);
}

inline RunConfig from_json_value(const nlohmann::json& j) {
  detail::check_keys(j, detail::key_template(), "");
  RunConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.out = j.value("out", c.out);
    c.preset = j.value("preset", c.preset);
    c.dim = j.value("dim", c.dim);
    c.modes = j.value("modes", c.modes);
    if (j.contains("model") && !j.at("model").is_null()) c.model = j.at("model").get<model::ModelConfig>();
    if (j.contains("process") && !j.at("process").is_null()) c.process = data::spec_from_json(j.at("process"));
    if (j.contains("data")) c.data = j.at("data").get<DataSettings>();
    if (j.contains("train")) c.train = j.at("train").get<train::TrainConfig>();
    if (j.contains("generation")) c.generation = j.at("generation").get<infer::GenerationConfig>();
    if (j.contains("eval")) c.eval = j.at("eval").get<EvalSettings>();
    c.sweep_grid = j.value("sweep_grid", c.sweep_grid);
    if (j.contains("compare")) c.compare = j.at("compare").get<CompareSettings>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  return from_json_value(j);
}

inline data::SyntheticProcessSpec resolved_process(const RunConfig& c) {
  return c.process ? *c.process : data::default_ar1_spec(c.dim);
}

/// Model for an objective: the preset (or explicit model), switched to a GMM
/// head for the givt objectives.
inline model::ModelConfig resolved_model(const RunConfig& c, train::Objective o) {
  model::ModelConfig m = c.model ? *c.model : model::preset_config(model::parse_preset(c.preset), c.dim);
  if (train::head_for(o) == model::HeadKind::gmm) {
    if (m.head != model::HeadKind::gmm || m.gmm.num_modes != c.modes) m = model::with_gmm_head(m, c.modes);
  } else {
    m.head = train::head_for(o);
  }
  m.validate();
  return m;
}

inline std::uint64_t data_seed(const RunConfig& c) { return c.data.seed ? *c.data.seed : c.seed; }

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace cam::cli
