// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "cam/data/dataset.hpp"
#include "cam/math/flow.hpp"
#include "cam/model/forward.hpp"
#include "cam/train/adamw.hpp"
#include "cam/train/config.hpp"

namespace cam::train {

struct LossStats {
  std::uint64_t count = 0;
  double mean = 0.0;  // running mean over every step taken
  double last = 0.0;

  void add(double loss) {
    ++count;
    mean += (loss - mean) / static_cast<double>(count);
    last = loss;
  }
  bool operator==(const LossStats&) const = default;
};

template <class T>
struct TrainState {
  model::ModelParams<T> params;
  AdamMoments<T> moments;
  std::int64_t step = 0;
  Rng rng;  // base stream; per-step streams are split from it by step index
  LossStats stats;
};

template <class T>
TrainState<T> make_train_state(const model::ModelConfig& mcfg, const TrainConfig& cfg) {
  cfg.validate();
  if (mcfg.head != head_for(cfg.objective)) {
    throw ConfigError("objective " + objective_name(cfg.objective) + " does not match the model head");
  }
  TrainState<T> s;
  s.params = model::init_params<T>(mcfg, cfg.seed);
  s.moments = AdamMoments<T>::zeros_like(s.params.store);
  s.rng = Rng(cfg.seed).split(0x7472);
  return s;
}

/// Independent random streams consumed by one training step.
struct StepStreams {
  Rng batch;
  Rng augment;
  Rng sampler;
  Rng dropout;

  static StepStreams at(const Rng& base, std::int64_t step) {
    const auto k = static_cast<std::uint64_t>(step) * 4;
    return {base.split(k), base.split(k + 1), base.split(k + 2), base.split(k + 3)};
  }
};

/// What the step fed the backbone, for instrumentation and diagnostics.
template <class T>
struct StepInfo {
  double loss = 0.0;
  double grad_norm = 0.0;
  Mat<T> backbone_inputs;    // batch * (context_length - 1) rows
  std::vector<double> error_levels;  // one per backbone input row (empty without augmentation)
  std::vector<char> dropped;         // z-dropout mask over batch * context_length rows
};

/// Draws `batch_size` random crops of `length` frames, stacked row-wise.
template <class T>
Mat<T> sample_batch(const data::Dataset& ds, int batch_size, int length, Rng& rng) {
  if (ds.size() == 0) throw ConfigError("sample_batch: empty dataset");
  Mat<T> out(static_cast<Eigen::Index>(batch_size) * length, ds.dim);
  for (int b = 0; b < batch_size; ++b) {
    const auto idx = static_cast<std::size_t>(rng.below(ds.size()));
    const auto& s = ds.sequences[idx];
    if (s.rows() < length) {
      throw ConfigError("sample_batch: sequence " + std::to_string(idx) + " has " +
                        std::to_string(s.rows()) + " frames, context needs " + std::to_string(length));
    }
    const auto start = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(s.rows() - length + 1)));
    out.middleRows(static_cast<Eigen::Index>(b) * length, length) = s.middleRows(start, length).template cast<T>();
  }
  return out;
}

namespace detail {

/// Corrupted sampler input, its noise-level feature and the regression target.
template <class T>
struct Corruption {
  Mat<T> y;
  Vec<T> level;
  Mat<T> target;
};

/// The only place the flow and noise-prediction objectives differ.
template <class T>
Corruption<T> corrupt(model::HeadKind head, const Mat<T>& x, const TrainConfig& cfg, Rng& rng) {
  const Eigen::Index n = x.rows();
  Corruption<T> c;
  c.level.resize(n);
  std::vector<int> ddpm_t;
  if (head == model::HeadKind::flow) {
    for (Eigen::Index r = 0; r < n; ++r) {
      c.level(r) = static_cast<T>(math::sample_sigma(rng, cfg.sigma_distribution).value());
    }
  } else {
    ddpm_t.resize(static_cast<std::size_t>(n));
    for (Eigen::Index r = 0; r < n; ++r) {
      ddpm_t[static_cast<std::size_t>(r)] =
          static_cast<int>(rng.below(math::LinearSchedule::kDefaultSteps));
    }
  }
  const Mat<T> eps = rng.normal_matrix<T>(n, x.cols());
  c.y.resize(n, x.cols());
  if (head == model::HeadKind::flow) {
    for (Eigen::Index r = 0; r < n; ++r) {
      c.y.row(r) = math::rf_corrupt(x.row(r), eps.row(r), math::NoiseLevel(c.level(r)));
    }
    c.target = math::rf_target_drift(x, eps);
  } else {
    static const math::LinearSchedule sched;
    for (Eigen::Index r = 0; r < n; ++r) {
      const int t = ddpm_t[static_cast<std::size_t>(r)];
      const double ab = sched.alpha_bar(t);
      c.y.row(r) = static_cast<T>(std::sqrt(ab)) * x.row(r) + static_cast<T>(std::sqrt(1.0 - ab)) * eps.row(r);
      c.level(r) = static_cast<T>(static_cast<double>(t) / math::LinearSchedule::kDefaultSteps);
    }
    c.target = eps;
  }
  return c;
}

}  // namespace detail

/// Builds the objective's loss on `t` for one batch.
///
/// `x` stacks batch_size blocks of context_length frames. The backbone reads
/// the first context_length - 1 frames of each block (noise-augmented when
/// configured) and yields one conditioning vector per frame; every frame is
/// then a training target. The backbone never sees the error levels.
template <class T, class P>
nn::Var objective_loss(nn::Tape<T>& t, P& params, const Mat<T>& x, const TrainConfig& cfg,
                       StepStreams streams, StepInfo<T>* info = nullptr) {
  const Eigen::Index B = cfg.batch_size;
  const Eigen::Index L = cfg.context_length;
  if (x.rows() != B * L || x.cols() != params.config.backbone.input_dim) {
    throw ShapeError("train step: batch must be (batch_size * context_length) x input_dim, got " +
                     std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
  }
  const Eigen::Index d = x.cols();

  // Clean or augmented backbone inputs, with independent noise from the sampler's.
  Mat<T> inputs(B * (L - 1), d);
  for (Eigen::Index b = 0; b < B; ++b) inputs.middleRows(b * (L - 1), L - 1) = x.middleRows(b * L, L - 1);
  std::vector<double> levels;
  Mat<T> augmented_all;
  if (cfg.noise_augmentation) {
    const Mat<T> eps = streams.augment.normal_matrix<T>(B * L, d);
    levels.resize(static_cast<std::size_t>(B * L));
    for (auto& k : levels) k = cfg.fixed_error_level ? *cfg.fixed_error_level : math::sample_error_level(streams.augment).value();
    augmented_all.resize(B * L, d);
    for (Eigen::Index r = 0; r < B * L; ++r) {
      augmented_all.row(r) = math::noise_augment(x.row(r), eps.row(r), math::ErrorLevel(levels[static_cast<std::size_t>(r)]));
    }
    for (Eigen::Index b = 0; b < B; ++b) {
      inputs.middleRows(b * (L - 1), L - 1) = augmented_all.middleRows(b * L, L - 1);
    }
  }

  std::vector<char> drop(static_cast<std::size_t>(B * L), 0);
  if (cfg.z_dropout_prob > 0.0) {
    for (auto& f : drop) f = streams.dropout.uniform() < cfg.z_dropout_prob ? 1 : 0;
  }

  nn::Var in = t.constant(inputs);
  nn::Var z = model::backbone_conditions(t, params, in, B, L - 1, drop);

  nn::Var loss;
  const model::HeadKind head = params.config.head;
  if (head == model::HeadKind::gmm) {
    const model::GmmVars g = model::gmm_head(t, params, z);
    loss = nn::gmm_nll(t, g.logits, g.means, g.raw_std, x, static_cast<T>(model::kStdFloor));
  } else {
    const Mat<T>& clean = (cfg.augment_sampler_target && cfg.noise_augmentation) ? augmented_all : x;
    detail::Corruption<T> c = detail::corrupt(head, clean, cfg, streams.sampler);
    nn::Var y = t.constant(std::move(c.y));
    nn::Var pred = model::sampler_output(t, params, z, y, c.level);
    loss = nn::row_squared_error(t, pred, c.target);
  }

  if (info != nullptr) {
    info->backbone_inputs = std::move(inputs);
    info->error_levels.clear();
    if (!levels.empty()) {
      for (Eigen::Index b = 0; b < B; ++b) {
        for (Eigen::Index i = 0; i < L - 1; ++i) info->error_levels.push_back(levels[static_cast<std::size_t>(b * L + i)]);
      }
    }
    info->dropped = std::move(drop);
  }
  return loss;
}

/// Loss value without gradients, e.g. for evaluation or finite differences.
template <class T>
double evaluate_loss(const model::ModelParams<T>& params, const Mat<T>& x, const TrainConfig& cfg,
                     const StepStreams& streams) {
  nn::Tape<T> t(false);
  return static_cast<double>(t.value(objective_loss(t, params, x, cfg, streams))(0, 0));
}

/// Loss and parameter gradients (left in each Parameter's grad).
template <class T>
double loss_and_grad(model::ModelParams<T>& params, const Mat<T>& x, const TrainConfig& cfg,
                     const StepStreams& streams, StepInfo<T>* info = nullptr) {
  params.store.zero_grad();
  nn::Tape<T> t(true);
  const nn::Var loss = objective_loss(t, params, x, cfg, streams, info);
  const double value = static_cast<double>(t.value(loss)(0, 0));
  if (std::isfinite(value)) t.backward(loss);
  return value;
}

template <class T>
double global_grad_norm(const model::ParamStore<T>& store) {
  double s = 0.0;
  for (const auto& p : store) {
    if (p.grad.size() != 0) s += p.grad.template cast<double>().squaredNorm();
  }
  return std::sqrt(s);
}

namespace detail {

template <class T>
std::string norm_report(const model::ParamStore<T>& store) {
  std::ostringstream os;
  double total = 0.0;
  std::string worst;
  double worst_norm = -1.0;
  for (const auto& p : store) {
    const double n = p.value.template cast<double>().norm();
    total += n * n;
    if (!std::isfinite(n) || n > worst_norm) {
      worst_norm = n;
      worst = p.name;
      if (!std::isfinite(n)) break;
    }
  }
  os << "param norm " << std::sqrt(total) << ", largest '" << worst << "' = " << worst_norm;
  return os.str();
}

/// First batch element whose frames or (for sampler models) per-row loss terms are non-finite.
template <class T>
std::string locate_bad_batch(const Mat<T>& x, Eigen::Index batch, Eigen::Index len) {
  for (Eigen::Index b = 0; b < batch; ++b) {
    if (!x.middleRows(b * len, len).allFinite()) return "batch index " + std::to_string(b) + " has non-finite inputs";
  }
  return "all batch inputs finite";
}

}  // namespace detail

/// One optimizer step of `cfg.objective` on a given batch.
///
/// Random draws come from streams split off the state's base generator by
/// step index, so a run resumed from a checkpoint replays the same draws.
template <class T>
StepInfo<T> train_step(TrainState<T>& state, const Mat<T>& batch, const TrainConfig& cfg) {
  const StepStreams streams = StepStreams::at(state.rng, state.step);
  StepInfo<T> info;
  info.loss = loss_and_grad(state.params, batch, cfg, streams, &info);
  if (!std::isfinite(info.loss)) {
    throw NumericError("non-finite loss at step " + std::to_string(state.step) + ": " +
                       detail::locate_bad_batch(batch, cfg.batch_size, cfg.context_length) + "; " +
                       detail::norm_report(state.params.store));
  }
  info.grad_norm = global_grad_norm(state.params.store);
  if (!std::isfinite(info.grad_norm)) {
    throw NumericError("non-finite gradient at step " + std::to_string(state.step) + " (loss " +
                       std::to_string(info.loss) + "); " + detail::norm_report(state.params.store));
  }
  ++state.step;
  adamw_update(state.params.store, state.moments, state.step,
               AdamWSettings{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay});
  state.params.step = state.step;
  if (!state.params.all_finite()) {
    throw NumericError("parameters became non-finite after step " + std::to_string(state.step) + "; " +
                       detail::norm_report(state.params.store));
  }
  state.stats.add(info.loss);
  return info;
}

namespace detail {

inline void require_objective(const TrainConfig& cfg, std::initializer_list<Objective> allowed, const char* who) {
  for (Objective o : allowed) {
    if (cfg.objective == o) return;
  }
  throw ConfigError(std::string(who) + ": objective " + objective_name(cfg.objective) + " not handled here");
}

}  // namespace detail

template <class T>
StepInfo<T> cam_train_step(TrainState<T>& state, const Mat<T>& batch, const TrainConfig& cfg) {
  detail::require_objective(cfg, {Objective::cam, Objective::mar_rf}, "cam_train_step");
  return train_step(state, batch, cfg);
}

template <class T>
StepInfo<T> mar_linear_train_step(TrainState<T>& state, const Mat<T>& batch, const TrainConfig& cfg) {
  detail::require_objective(cfg, {Objective::mar_linear}, "mar_linear_train_step");
  return train_step(state, batch, cfg);
}

template <class T>
StepInfo<T> givt_train_step(TrainState<T>& state, const Mat<T>& batch, const TrainConfig& cfg) {
  detail::require_objective(cfg, {Objective::givt, Objective::givt_noise}, "givt_train_step");
  return train_step(state, batch, cfg);
}

/// Appends rows of (step, wall_ms, loss, grad_norm).
class MetricsCsv {
 public:
  static constexpr const char* kSchema = "# schema: cam-train-metrics/1";

  explicit MetricsCsv(const std::string& path, bool append = false) : path_(path) {
    const bool fresh = !append || !std::ifstream(path).good();
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw IoError("cannot open metrics file '" + path + "'");
    if (fresh) out_ << kSchema << "\nstep,wall_ms,loss,grad_norm\n";
  }

  void row(std::int64_t step, double wall_ms, double loss, double grad_norm) {
    out_ << step << ',' << wall_ms << ',' << fmt(loss) << ',' << fmt(grad_norm) << '\n';
    if (!out_) throw IoError("write failed for '" + path_ + "'");
  }
  void flush() { out_.flush(); }

 private:
  static std::string fmt(double v) {
    std::ostringstream os;
    os.precision(9);
    os << v;
    return os.str();
  }
  std::string path_;
  std::ofstream out_;
};

struct LoopHooks {
  std::function<void(std::int64_t step, double loss, double grad_norm, double wall_ms)> on_step;
  std::function<void(std::int64_t step)> on_checkpoint;
};

/// Trains until `state.step == cfg.total_steps`, drawing batches from `ds`.
template <class T>
void train_loop(TrainState<T>& state, const data::Dataset& ds, const TrainConfig& cfg, const LoopHooks& hooks = {}) {
  cfg.validate();
  using clock = std::chrono::steady_clock;
  while (state.step < cfg.total_steps) {
    const auto t0 = clock::now();
    Rng batch_rng = StepStreams::at(state.rng, state.step).batch;
    const Mat<T> batch = sample_batch<T>(ds, cfg.batch_size, cfg.context_length, batch_rng);
    const StepInfo<T> info = train_step(state, batch, cfg);
    const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    if (hooks.on_step) hooks.on_step(state.step, info.loss, info.grad_norm, ms);
    if (cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 && hooks.on_checkpoint) {
      hooks.on_checkpoint(state.step);
    }
  }
}

}  // namespace cam::train
