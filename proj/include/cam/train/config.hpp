// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "cam/math/flow.hpp"
#include "cam/model/config.hpp"
#include "json.hpp"

namespace cam::math {

NLOHMANN_JSON_SERIALIZE_ENUM(SigmaDistribution, {{SigmaDistribution::logit_normal, "logit_normal"},
                                                 {SigmaDistribution::clamped_lognormal, "clamped_lognormal"}})

}  // namespace cam::math

namespace cam::train {

/// Training objective / model family.
enum class Objective {
  cam,         // flow sampler, noise-augmented backbone inputs
  mar_linear,  // noise-prediction sampler, linear schedule, clean inputs
  mar_rf,      // flow sampler, clean inputs
  givt,        // GMM head, clean inputs
  givt_noise,  // GMM head, noise-augmented inputs
};

NLOHMANN_JSON_SERIALIZE_ENUM(Objective, {{Objective::cam, "cam"},
                                         {Objective::mar_linear, "mar_linear"},
                                         {Objective::mar_rf, "mar_rf"},
                                         {Objective::givt, "givt"},
                                         {Objective::givt_noise, "givt_noise"}})

inline Objective parse_objective(const std::string& s) {
  const nlohmann::json j = s;
  const auto o = j.get<Objective>();
  if (nlohmann::json(o).get<std::string>() != s) {
    throw ConfigError("unknown objective '" + s + "' (expected cam, mar_linear, mar_rf, givt, givt_noise)");
  }
  return o;
}

inline std::string objective_name(Objective o) { return nlohmann::json(o).get<std::string>(); }

inline model::HeadKind head_for(Objective o) {
  switch (o) {
    case Objective::cam:
    case Objective::mar_rf: return model::HeadKind::flow;
    case Objective::mar_linear: return model::HeadKind::noise_pred;
    case Objective::givt:
    case Objective::givt_noise: return model::HeadKind::gmm;
  }
  return model::HeadKind::flow;
}

inline bool default_noise_augmentation(Objective o) {
  return o == Objective::cam || o == Objective::givt_noise;
}


struct TrainConfig {
  Objective objective = Objective::cam;
  bool noise_augmentation = true;
  double z_dropout_prob = 0.2;
  int batch_size = 64;
  int total_steps = 20000;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  int context_length = 64;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  math::SigmaDistribution sigma_distribution = math::SigmaDistribution::logit_normal;
  bool augment_sampler_target = false;  // also corrupt the sampler's x_t with the input noise
  std::optional<double> fixed_error_level;  // replaces k_t ~ U(0,1) when set

  void validate() const {
    if (!(z_dropout_prob >= 0.0 && z_dropout_prob <= 1.0)) {
      throw ConfigError("train: z_dropout_prob must lie in [0, 1]");
    }
    if (objective == Objective::cam && !noise_augmentation) {
      throw ConfigError("train: objective cam requires noise_augmentation = true");
    }
    if (objective == Objective::givt_noise && !noise_augmentation) {
      throw ConfigError("train: objective givt_noise requires noise_augmentation = true");
    }
    if (batch_size < 1 || total_steps < 0 || context_length < 2) {
      throw ConfigError("train: batch_size >= 1, total_steps >= 0, context_length >= 2 required");
    }
    if (!(learning_rate > 0.0) || !(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
        !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || weight_decay < 0.0) {
      throw ConfigError("train: invalid optimizer settings");
    }
    if (fixed_error_level && !(*fixed_error_level >= 0.0 && *fixed_error_level <= 1.0)) {
      throw ConfigError("train: fixed_error_level must lie in [0, 1]");
    }
    if (checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"objective", c.objective},
       {"noise_augmentation", c.noise_augmentation},
       {"z_dropout_prob", c.z_dropout_prob},
       {"batch_size", c.batch_size},
       {"total_steps", c.total_steps},
       {"learning_rate", c.learning_rate},
       {"adam_beta1", c.adam_beta1},
       {"adam_beta2", c.adam_beta2},
       {"adam_eps", c.adam_eps},
       {"weight_decay", c.weight_decay},
       {"context_length", c.context_length},
       {"seed", c.seed},
       {"checkpoint_every", c.checkpoint_every},
       {"sigma_distribution", c.sigma_distribution},
       {"augment_sampler_target", c.augment_sampler_target}};
  if (c.fixed_error_level) j["fixed_error_level"] = *c.fixed_error_level;
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.objective = j.value("objective", c.objective);
  c.noise_augmentation = j.value("noise_augmentation", default_noise_augmentation(c.objective));
  c.z_dropout_prob = j.value("z_dropout_prob", c.z_dropout_prob);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.total_steps = j.value("total_steps", c.total_steps);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.context_length = j.value("context_length", c.context_length);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.sigma_distribution = j.value("sigma_distribution", c.sigma_distribution);
  c.augment_sampler_target = j.value("augment_sampler_target", c.augment_sampler_target);
  if (j.contains("fixed_error_level")) c.fixed_error_level = j.at("fixed_error_level").get<double>();
}

/// Default training config for an objective. Noise augmentation follows the
/// objective; z-dropout is a sampler-side regularizer and is off for GMM heads.
inline TrainConfig default_train_config(Objective o) {
  TrainConfig c;
  c.objective = o;
  c.noise_augmentation = default_noise_augmentation(o);
  if (head_for(o) == model::HeadKind::gmm) c.z_dropout_prob = 0.0;
  return c;
}

}  // namespace cam::train
