// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cam/cli/pipeline.hpp"
#include "cam/cli/run_config.hpp"
#include "cam/cli/svg.hpp"
#include "cam/metrics/conditional.hpp"

namespace cam::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericError = 3, kIoError = 4 };

namespace fs = std::filesystem;

/// Parsed flags; a flag wins over the config file only when given.
struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  std::string objective;
  int modes = 0;
  double k_inf = 0.0;
  int num_steps = 0;
  double temperature = 0.0;
  int steps = 0;
  std::string preset;
  std::string out;
  int dim = 0;
  std::string data;
  std::string checkpoint;
  std::string traces;
  std::string reference;
  std::string oracle;
  int num_traces = 0;
  bool resume = false;
  std::vector<double> grid;

  CLI::Option* seed_opt = nullptr;
  CLI::Option* modes_opt = nullptr;
  CLI::Option* k_inf_opt = nullptr;
  CLI::Option* num_steps_opt = nullptr;
  CLI::Option* temperature_opt = nullptr;
  CLI::Option* steps_opt = nullptr;
  CLI::Option* dim_opt = nullptr;
  CLI::Option* num_traces_opt = nullptr;
};

struct Resolved {
  RunConfig rc;
  train::Objective objective = train::Objective::cam;
  bool k_inf_given = false;  // by flag or config file
  bool model_given = false;      // preset, model or modes named explicitly
  bool objective_given = false;  // by flag or config file
  bool window_given = false;  // generation.context_window set in the config file
};

namespace detail {

inline Resolved resolve(const Flags& f) {
  Resolved r;
  nlohmann::json file;
  if (!f.config.empty()) {
    r.rc = load_run_config(f.config);
    std::ifstream in(f.config);
    in >> file;
  }
  RunConfig& c = r.rc;
  r.objective = c.train.objective;
  r.k_inf_given = file.contains("generation") && file["generation"].contains("k_inf");
  r.model_given = file.contains("preset") || file.contains("model") || file.contains("modes");
  r.objective_given = file.contains("train") && file["train"].contains("objective");
  if (f.seed_opt->count() > 0) c.seed = f.seed;
  if (!f.objective.empty()) {
    r.objective = train::parse_objective(f.objective);
    const bool user_dropout = file.contains("train") && file["train"].contains("z_dropout_prob");
    const double dropout = c.train.z_dropout_prob;
    c.train.objective = r.objective;
    c.train.noise_augmentation = train::default_noise_augmentation(r.objective);
    c.train.z_dropout_prob = user_dropout ? dropout : train::default_train_config(r.objective).z_dropout_prob;
    r.objective_given = true;
  }
  if (f.modes_opt->count() > 0) {
    c.modes = f.modes;
    r.model_given = true;
  }
  if (f.k_inf_opt->count() > 0) {
    c.generation.k_inf = f.k_inf;
    r.k_inf_given = true;
  }
  if (f.num_steps_opt->count() > 0) c.generation.num_steps_denoise = f.num_steps;
  if (f.temperature_opt->count() > 0) c.generation.temperature = f.temperature;
  if (f.steps_opt->count() > 0) c.train.total_steps = f.steps;
  if (!f.preset.empty()) {
    c.preset = f.preset;
    c.model.reset();
    r.model_given = true;
  }
  if (!f.out.empty()) c.out = f.out;
  if (f.dim_opt->count() > 0) c.dim = f.dim;
  if (f.num_traces_opt->count() > 0) c.eval.num_traces = f.num_traces;
  if (!f.grid.empty()) c.sweep_grid = f.grid;
  c.train.seed = c.seed;
  c.generation.seed = c.seed;
  if (!r.k_inf_given) c.generation.k_inf = default_k_inf(r.objective);
  // Context sizes default to what the model can hold.
  if (c.dim >= 1) {
    const int max_ctx = resolved_model(c, r.objective).backbone.max_context;
    const auto given = [&](const char* section, const char* key) {
      return file.contains(section) && file[section].contains(key);
    };
    if (!given("train", "context_length")) c.train.context_length = std::min(c.train.context_length, max_ctx);
    r.window_given = given("generation", "context_window");
    if (!r.window_given) c.generation.context_window = c.train.context_length - 1;
  }
  validate(c);
  return r;
}

inline void dump_resolved(const Resolved& r, const std::string& command, const nlohmann::json& extra = {}) {
  nlohmann::json j = to_json_value(r.rc);
  j["command"] = command;
  if (!r.rc.process) j["process"] = data::to_json(resolved_process(r.rc));
  if (!extra.is_null()) j["resolved"] = extra;
  write_json(fs::path(r.rc.out) / (command + ".config.json"), j);
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {NAN, NAN};
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  return out;
}

inline fs::path or_default(const std::string& given, const fs::path& fallback) {
  return given.empty() ? fallback : fs::path(given);
}

/// Drops rows with step > `keep` so a resumed run appends without duplicates.
inline void truncate_metrics(const fs::path& path, std::int64_t keep) {
  std::ifstream in(path);
  if (!in) return;
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("step,", 0) == 0) {
      lines.push_back(line);
      continue;
    }
    if (std::stoll(line.substr(0, line.find(','))) <= keep) lines.push_back(line);
  }
  in.close();
  auto out = open_out(path);
  for (const auto& l : lines) out << l << '\n';
}

inline void loss_chart(const fs::path& csv, const fs::path& svg_path) {
  std::ifstream in(csv);
  svg::Series s{"loss", {}, {}};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("step,", 0) == 0) continue;
    std::stringstream ss(line);
    std::string step, ms, loss;
    std::getline(ss, step, ',');
    std::getline(ss, ms, ',');
    std::getline(ss, loss, ',');
    s.x.push_back(std::stod(step));
    s.y.push_back(std::stod(loss));
  }
  svg::write_line_chart(svg_path.string(), "Training loss", "step", "loss", {s});
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommands.

inline int cmd_gen_data(const Flags& f, std::ostream& out) {
  const Resolved r = detail::resolve(f);
  fs::create_directories(r.rc.out);
  const data::Dataset ds = training_data(r.rc);
  const fs::path path = fs::path(r.rc.out) / "data.came";
  data::write_embeddings(ds, path);
  write_json(fs::path(r.rc.out) / "process.json", data::to_json(resolved_process(r.rc)));
  detail::dump_resolved(r, "gen-data");
  const auto st = data::compute_stats(ds);
  out << "wrote " << path.string() << ": " << ds.size() << " sequences x " << r.rc.data.length << " frames, dim "
      << ds.dim << "\n"
      << "mean |mu| " << st.mean.cwiseAbs().mean() << ", mean std " << st.std.mean() << "\n";
  return kOk;
}

inline int cmd_train(const Flags& f, std::ostream& out) {
  const Resolved r = detail::resolve(f);
  const RunConfig& c = r.rc;
  fs::create_directories(c.out);
  const data::Dataset ds = f.data.empty() ? training_data(c) : data::read_embeddings(f.data);
  if (ds.dim != c.dim) throw ConfigError("train: data dim " + std::to_string(ds.dim) + " differs from dim " +
                                         std::to_string(c.dim));
  const model::ModelConfig mc = resolved_model(c, r.objective);
  const fs::path ckpt = fs::path(c.out) / "checkpoint.camc";
  const fs::path csv = fs::path(c.out) / "metrics.csv";
  train::TrainState<float> state;
  bool resumed = false;
  if (f.resume && fs::exists(ckpt)) {
    auto ck = train::load_checkpoint<float>(ckpt, mc);
    state = std::move(ck.state);
    detail::truncate_metrics(csv, state.step);
    resumed = true;
    out << "resuming from step " << state.step << "\n";
  } else {
    state = train::make_train_state<float>(mc, c.train);
  }
  detail::dump_resolved(r, "train", {{"model", mc}, {"parameters", model::count_parameters(mc)}});
  train::MetricsCsv metrics(csv.string(), resumed);
  train::LoopHooks hooks;
  hooks.on_step = [&](std::int64_t step, double loss, double grad_norm, double ms) {
    metrics.row(step, ms, loss, grad_norm);
  };
  hooks.on_checkpoint = [&](std::int64_t) {
    metrics.flush();
    train::save_checkpoint(state, c.train, ckpt);
  };
  train::train_loop(state, ds, c.train, hooks);
  metrics.flush();
  train::save_checkpoint(state, c.train, ckpt);
  detail::loss_chart(csv, fs::path(c.out) / "loss.svg");
  out << "objective " << train::objective_name(r.objective) << ", " << model::count_parameters(mc)
      << " parameters, " << state.step << " steps, final loss " << state.stats.last << "\n"
      << "checkpoint " << ckpt.string() << "\n";
  return kOk;
}

namespace detail {

inline train::Checkpoint<float> load_for(const Resolved& r, const Flags& f) {
  const fs::path path = or_default(f.checkpoint, fs::path(r.rc.out) / "checkpoint.camc");
  auto ck = train::load_checkpoint<float>(path);
  const train::Objective trained = ck.train_config.objective;
  if (r.objective_given && trained != r.objective) {
    throw ConfigError("checkpoint '" + path.string() + "' was trained with objective " +
                      train::objective_name(trained) + ", not " + train::objective_name(r.objective));
  }
  if (r.model_given && !(resolved_model(r.rc, trained) == ck.state.params.config)) {
    throw ConfigError("checkpoint '" + path.string() + "' does not match the configured model");
  }
  return ck;
}

inline nlohmann::json model_record(const train::Checkpoint<float>& ck, const std::string& path) {
  return {{"objective", ck.train_config.objective},
          {"config", ck.state.params.config},
          {"steps", ck.state.step},
          {"checkpoint", path}};
}

/// k_inf for a checkpoint when neither the config nor a flag set it.
inline infer::GenerationConfig generation_for(const Resolved& r, const train::Checkpoint<float>& ck) {
  infer::GenerationConfig g = r.rc.generation;
  if (!r.k_inf_given) g.k_inf = default_k_inf(ck.train_config.objective);
  if (!r.window_given) g.context_window = ck.train_config.context_length - 1;
  g.validate();
  return g;
}

}  // namespace detail

inline int cmd_generate(const Flags& f, std::ostream& out) {
  Resolved r = detail::resolve(f);
  fs::create_directories(r.rc.out);
  const auto ck = detail::load_for(r, f);
  const infer::GenerationConfig g = detail::generation_for(r, ck);
  const auto traces = generate_traces(ck.state.params, g, r.rc.eval.num_traces);
  const fs::path path = fs::path(r.rc.out) / "traces.came";
  const std::string ckpt_path = detail::or_default(f.checkpoint, fs::path(r.rc.out) / "checkpoint.camc").string();
  infer::export_traces(traces, g, detail::model_record(ck, ckpt_path), path);
  detail::dump_resolved(r, "generate", {{"generation", g}});
  out << "wrote " << traces.size() << " traces of length " << g.target_length << " to " << path.string()
      << " (k_inf " << g.k_inf << ", " << g.num_steps_denoise << " denoising steps)\n";
  return kOk;
}

namespace detail {

struct TraceFile {
  std::vector<Matf> traces;
  std::string model = "unknown";
  std::uint64_t seed = 0;
};

inline TraceFile read_traces(const fs::path& path) {
  TraceFile t;
  const data::Dataset ds = data::read_embeddings(path);
  t.traces = ds.sequences;
  fs::path side = path;
  side += ".json";
  std::ifstream in(side);
  if (in) {
    nlohmann::json meta;
    try {
      in >> meta;
      t.model = meta.at("model").value("objective", t.model);
      t.seed = meta.at("generation").value("seed", t.seed);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("bad trace sidecar '" + side.string() + "': " + e.what());
    }
  }
  return t;
}

inline int trace_length(const std::vector<Matf>& traces) {
  Eigen::Index n = 0;
  for (const auto& t : traces) n = std::max(n, t.rows());
  return static_cast<int>(n);
}

inline void write_eval_csv(const fs::path& path, const std::string& model, std::uint64_t seed, const TraceEval& e) {
  auto out = open_out(path);
  out << "# schema: cam-eval/1\nmodel,seed,FED,FED_acc,MMD,tau\n"
      << model << ',' << seed << ',' << fmt(e.fed.fed) << ',' << fmt(e.fed.fed_acc) << ',' << fmt(e.mmd) << ','
      << fmt(e.accumulation.tau) << '\n';
}

}  // namespace detail

inline int cmd_eval(const Flags& f, std::ostream& out) {
  const Resolved r = detail::resolve(f);
  const RunConfig& c = r.rc;
  fs::create_directories(c.out);
  const auto tf = detail::read_traces(detail::or_default(f.traces, fs::path(c.out) / "traces.came"));
  const data::Dataset reference = f.reference.empty()
                                      ? reference_data(c, std::max(c.data.length, detail::trace_length(tf.traces)))
                                      : data::read_embeddings(f.reference);
  const TraceEval e = evaluate_traces(tf.traces, reference, c.eval);
  detail::write_eval_csv(fs::path(c.out) / "eval.csv", tf.model, tf.seed, e);
  {
    auto acc = detail::open_out(fs::path(c.out) / "accumulation.csv");
    acc << "# schema: cam-accumulation/1\nposition,distance,frames\n";
    svg::Series s{"FD to reference", {}, {}};
    for (const auto& p : e.accumulation.points) {
      acc << p.position << ',' << detail::fmt(p.distance) << ',' << p.frames << '\n';
      s.x.push_back(p.position);
      s.y.push_back(p.distance);
    }
    svg::write_line_chart((fs::path(c.out) / "accumulation.svg").string(), "Error accumulation", "position",
                          "Frechet distance", {s});
  }
  svg::write_bar_chart((fs::path(c.out) / "fed.svg").string(), "FED by window", "FED",
                       {{"FED", e.fed.fed, 0.0}, {"FED_acc", e.fed.fed_acc, 0.0}});
  for (const auto& w : e.accumulation.warnings) out << "warning: " << w << "\n";
  out << "model " << tf.model << ": FED " << e.fed.fed << ", FED_acc " << e.fed.fed_acc << ", MMD " << e.mmd
      << ", tau " << e.accumulation.tau << "\n";

  nlohmann::json extra;
  if (f.oracle.empty()) {
    out << "notice: no oracle spec given (--oracle); conditional metrics omitted\n";
  } else {
    std::ifstream in(f.oracle);
    if (!in) throw IoError("cannot open oracle spec '" + f.oracle + "'");
    nlohmann::json sj;
    try {
      in >> sj;
    } catch (const nlohmann::json::exception& e2) {
      throw ConfigError("oracle spec '" + f.oracle + "': " + e2.what());
    }
    const auto spec = data::spec_from_json(sj);
    const auto ck = detail::load_for(r, f);
    const infer::GenerationConfig g = detail::generation_for(r, ck);
    Rng rng = Rng(c.seed).split(0x636f6e64);
    metrics::ConditionalSettings cs_settings = c.eval.conditional;
    cs_settings.prefix_length = std::min(cs_settings.prefix_length, g.context_window);
    const auto acc = metrics::conditional_accuracy(metrics::model_sampler(ck.state.params, g), spec, cs_settings, rng);
    auto cs = detail::open_out(fs::path(c.out) / "conditional.csv");
    cs << "# schema: cam-conditional/1\nmodel,seed,mean_err,cov_err,probes\n"
       << train::objective_name(ck.train_config.objective) << ',' << c.seed << ',' << detail::fmt(acc.mean_err)
       << ',' << detail::fmt(acc.cov_err) << ',' << acc.probes << '\n';
    out << "conditional: mean error " << acc.mean_err << ", covariance error " << acc.cov_err << "\n";
    extra["oracle"] = f.oracle;
  }
  detail::dump_resolved(r, "eval", extra);
  return kOk;
}

inline int cmd_sweep_kinf(const Flags& f, std::ostream& out) {
  const Resolved r = detail::resolve(f);
  const RunConfig& c = r.rc;
  fs::create_directories(c.out);
  const auto ck = detail::load_for(r, f);
  infer::GenerationConfig g = detail::generation_for(r, ck);
  const data::Dataset reference = f.reference.empty()
                                      ? reference_data(c, std::max(c.data.length, g.target_length))
                                      : data::read_embeddings(f.reference);
  auto csv = detail::open_out(fs::path(c.out) / "sweep.csv");
  csv << "# schema: cam-sweep-kinf/1\nk_inf,FED,FED_acc\n";
  svg::Series fed{"FED", {}, {}};
  svg::Series acc{"FED_acc", {}, {}};
  double best = c.sweep_grid.front();
  double best_value = INFINITY;
  for (double k : c.sweep_grid) {
    g.k_inf = k;
    g.validate();
    const auto traces = generate_traces(ck.state.params, g, c.eval.num_traces);
    const auto fr = metrics::fed_protocol(clean_traces(traces), reference, c.eval.fed);
    csv << detail::fmt(k) << ',' << detail::fmt(fr.fed) << ',' << detail::fmt(fr.fed_acc) << '\n';
    fed.x.push_back(k);
    fed.y.push_back(fr.fed);
    acc.x.push_back(k);
    acc.y.push_back(fr.fed_acc);
    if (fr.fed_acc < best_value) {
      best_value = fr.fed_acc;
      best = k;
    }
    out << "k_inf " << k << ": FED " << fr.fed << ", FED_acc " << fr.fed_acc << "\n";
  }
  csv.close();
  svg::write_line_chart((fs::path(c.out) / "sweep.svg").string(), "FED against k_inf", "k_inf", "FED", {fed, acc});
  write_json(fs::path(c.out) / "sweep.json", {{"argmin_k_inf_fed_acc", best}, {"fed_acc", best_value}});
  detail::dump_resolved(r, "sweep-kinf", {{"argmin_k_inf_fed_acc", best}});
  out << "argmin k_inf for FED_acc: " << best << "\n";
  return kOk;
}

/// Trains (or loads from the cache) each objective over the seeds and tabulates FED.
inline int cmd_compare(const Flags& f, std::ostream& out) {
  const Resolved r = detail::resolve(f);
  const RunConfig& c = r.rc;
  fs::create_directories(c.out);
  const data::Dataset ds = f.data.empty() ? training_data(c) : data::read_embeddings(f.data);
  const data::Dataset reference = reference_data(c, std::max(c.data.length, c.generation.target_length));
  auto cells = detail::open_out(fs::path(c.out) / "compare_cells.csv");
  cells << "# schema: cam-compare-cells/1\nmodel,seed,FED,FED_acc,status\n";
  struct Row {
    std::string model;
    std::vector<double> fed, fed_acc;
    std::vector<std::uint64_t> seeds;
    int failures = 0;
  };
  std::vector<Row> rows;
  for (const auto& name : c.compare.objectives) {
    Row row{name, {}, {}, {}, 0};
    const train::Objective o = train::parse_objective(name);
    for (int i = 0; i < c.compare.seeds; ++i) {
      const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(i);
      row.seeds.push_back(seed);
      try {
        train::TrainConfig tc = c.train;
        const auto defaults = train::default_train_config(o);
        tc.objective = o;
        tc.noise_augmentation = defaults.noise_augmentation;
        tc.z_dropout_prob = defaults.z_dropout_prob;
        tc.seed = seed;
        const auto mc = resolved_model(c, o);
        const auto state = train_cached<float>(mc, tc, ds);
        infer::GenerationConfig g = c.generation;
        g.seed = seed;
        g.k_inf = r.k_inf_given ? c.generation.k_inf : default_k_inf(o);
        const auto traces = generate_traces(state.params, g, c.eval.num_traces);
        const auto fr = metrics::fed_protocol(clean_traces(traces), reference, c.eval.fed);
        row.fed.push_back(fr.fed);
        row.fed_acc.push_back(fr.fed_acc);
        cells << name << ',' << seed << ',' << detail::fmt(fr.fed) << ',' << detail::fmt(fr.fed_acc) << ",ok\n";
        out << name << " seed " << seed << ": FED " << fr.fed << ", FED_acc " << fr.fed_acc << "\n";
      } catch (const Error& e) {
        ++row.failures;
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), ',', ';');
        cells << name << ',' << seed << ",,,failed: " << msg << '\n';
        out << name << " seed " << seed << ": failed: " << e.what() << "\n";
      }
    }
    rows.push_back(std::move(row));
  }
  cells.close();
  auto table = detail::open_out(fs::path(c.out) / "compare.md");
  table << "| Model | FED | FED_acc | seeds |\n|---|---|---|---|\n";
  std::vector<svg::Bar> bars;
  const auto cell = [](const std::vector<double>& v) {
    if (v.empty()) return std::string("-");
    const auto [m, s] = detail::mean_std(v);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f ± %.4f", m, s);
    return std::string(buf);
  };
  for (const auto& row : rows) {
    std::string seeds;
    for (auto s : row.seeds) seeds += (seeds.empty() ? "" : " ") + std::to_string(s);
    table << "| " << row.model << " | " << cell(row.fed) << " | " << cell(row.fed_acc) << " | " << seeds
          << (row.failures > 0 ? " (" + std::to_string(row.failures) + " failed)" : "") << " |\n";
    const auto [m, s] = detail::mean_std(row.fed);
    bars.push_back({row.model, m, s});
  }
  table.close();
  svg::write_bar_chart((fs::path(c.out) / "compare.svg").string(), "FED by model", "FED", bars);
  detail::dump_resolved(r, "compare");
  out << "table " << (fs::path(c.out) / "compare.md").string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

/// Entry point shared by the binary and the tests. Returns the exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Continuous autoregressive sequence models on synthetic embeddings"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON run config; flags override its fields");
  f.seed_opt = app.add_option("--seed", f.seed, "Run seed (training, generation and data unless data.seed is set)");
  app.add_option("--objective", f.objective, "cam, mar_linear, mar_rf, givt or givt_noise");
  f.modes_opt = app.add_option("--modes", f.modes, "GMM components for givt objectives");
  f.k_inf_opt = app.add_option("--k-inf", f.k_inf, "Noise injected into fed-back inputs at generation");
  f.num_steps_opt = app.add_option("--num-steps", f.num_steps, "Denoising steps per generated element");
  f.temperature_opt = app.add_option("--temperature", f.temperature, "GMM sampling temperature");
  f.steps_opt = app.add_option("--steps", f.steps, "Training steps");
  app.add_option("--preset", f.preset, "Model size")->check(CLI::IsMember({"tiny", "small", "desk", "paper-150m"}));
  app.add_option("--out", f.out, "Output directory");
  f.dim_opt = app.add_option("--dim", f.dim, "Embedding dimension");
  f.num_traces_opt = app.add_option("--num-traces", f.num_traces, "Traces to generate");

  auto* gen_data = app.add_subcommand("gen-data", "Sample the synthetic process to an embedding file");
  auto* train_cmd = app.add_subcommand("train", "Train a model; writes a checkpoint and metrics CSV");
  train_cmd->add_option("--data", f.data, "Embedding file to train on (default: sampled from the config)");
  train_cmd->add_flag("--resume", f.resume, "Continue from <out>/checkpoint.camc");
  auto* generate = app.add_subcommand("generate", "Generate traces from a checkpoint");
  generate->add_option("--checkpoint", f.checkpoint, "Checkpoint (default <out>/checkpoint.camc)");
  auto* eval = app.add_subcommand("eval", "Score traces against a reference set");
  eval->add_option("--traces", f.traces, "Trace file (default <out>/traces.came)");
  eval->add_option("--reference", f.reference, "Reference embedding file (default: sampled from the config)");
  eval->add_option("--oracle", f.oracle, "Process spec JSON enabling conditional metrics");
  eval->add_option("--checkpoint", f.checkpoint, "Checkpoint for conditional metrics");
  auto* sweep = app.add_subcommand("sweep-kinf", "FED and FED_acc over a grid of k_inf");
  sweep->add_option("--checkpoint", f.checkpoint, "Checkpoint (default <out>/checkpoint.camc)");
  sweep->add_option("--grid", f.grid, "k_inf values")->delimiter(',');
  sweep->add_option("--reference", f.reference, "Reference embedding file");
  auto* compare = app.add_subcommand("compare", "Train and score every objective across seeds");
  compare->add_option("--data", f.data, "Embedding file to train on");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }
  try {
    if (gen_data->parsed()) return cmd_gen_data(f, out);
    if (train_cmd->parsed()) return cmd_train(f, out);
    if (generate->parsed()) return cmd_generate(f, out);
    if (eval->parsed()) return cmd_eval(f, out);
    if (sweep->parsed()) return cmd_sweep_kinf(f, out);
    if (compare->parsed()) return cmd_compare(f, out);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return kIoError;
  } catch (const Error& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  return kConfigError;
}

}  // namespace cam::cli
