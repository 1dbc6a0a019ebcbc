// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <string>

#include "json.hpp"

#include "cam/core/error.hpp"

namespace cam::model {

struct BackboneConfig {
  int num_layers = 4;
  int model_dim = 128;
  int mlp_mult = 4;
  int num_heads = 4;
  int max_context = 64;
  int input_dim = 8;

  void validate() const {
    if (num_layers < 1 || model_dim < 1 || mlp_mult < 1 || num_heads < 1 || max_context < 1 ||
        input_dim < 1) {
      throw ConfigError("backbone: all sizes must be positive");
    }
    if (model_dim % num_heads != 0) {
      throw ConfigError("backbone: model_dim " + std::to_string(model_dim) +
                        " is not divisible by num_heads " + std::to_string(num_heads));
    }
  }
  bool operator==(const BackboneConfig&) const = default;
};

struct SamplerConfig {
  int num_layers = 3;
  int model_dim = 128;
  int mlp_mult = 4;
  int input_dim = 8;
  int cond_dim = 128;       // width of the noise-level embedding
  int frequency_dim = 64;   // sinusoidal features fed to that embedding

  void validate() const {
    if (num_layers < 1 || model_dim < 1 || mlp_mult < 1 || input_dim < 1 || cond_dim < 1 ||
        frequency_dim < 2 || frequency_dim % 2 != 0) {
      throw ConfigError("sampler: sizes must be positive and frequency_dim even");
    }
  }
  bool operator==(const SamplerConfig&) const = default;
};

struct GMMHeadConfig {
  int num_modes = 8;
  int input_dim = 128;
  int output_dim = 8;

  void validate() const {
    if (num_modes < 1) throw ConfigError("gmm head: num_modes must be >= 1");
    if (input_dim < 1 || output_dim < 1) throw ConfigError("gmm head: sizes must be positive");
  }
  bool operator==(const GMMHeadConfig&) const = default;
};

/// What sits on top of the backbone.
enum class HeadKind {
  flow,        // rectified-flow drift sampler
  noise_pred,  // linear-schedule noise-prediction sampler
  gmm,         // Gaussian mixture head
};

NLOHMANN_JSON_SERIALIZE_ENUM(HeadKind, {{HeadKind::flow, "flow"},
                                        {HeadKind::noise_pred, "noise_pred"},
                                        {HeadKind::gmm, "gmm"}})

struct ModelConfig {
  BackboneConfig backbone;
  SamplerConfig sampler;
  GMMHeadConfig gmm;
  HeadKind head = HeadKind::flow;

  [[nodiscard]] bool uses_sampler() const { return head != HeadKind::gmm; }

  void validate() const {
    backbone.validate();
    if (uses_sampler()) {
      sampler.validate();
      if (sampler.input_dim != backbone.input_dim) {
        throw ConfigError("sampler input_dim must equal backbone input_dim");
      }
    } else {
      gmm.validate();
      if (gmm.input_dim != backbone.model_dim || gmm.output_dim != backbone.input_dim) {
        throw ConfigError("gmm head dims must match backbone model_dim / input_dim");
      }
    }
  }
  bool operator==(const ModelConfig&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(BackboneConfig, num_layers, model_dim, mlp_mult,
                                                num_heads, max_context, input_dim)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SamplerConfig, num_layers, model_dim, mlp_mult,
                                                input_dim, cond_dim, frequency_dim)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GMMHeadConfig, num_modes, input_dim, output_dim)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ModelConfig, backbone, sampler, gmm, head)

/// FNV-1a over the canonical JSON dump of the config.
inline std::uint64_t config_hash(const ModelConfig& cfg) {
  const std::string s = nlohmann::json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Parameter counts, computed from configs alone.

inline std::int64_t linear_params(std::int64_t in, std::int64_t out) { return in * out + out; }

inline std::int64_t count_backbone_params(const BackboneConfig& c) {
  const std::int64_t d = c.model_dim;
  const std::int64_t per_layer = linear_params(d, 3 * d) + linear_params(d, d) +
                                 linear_params(d, c.mlp_mult * d) +
                                 linear_params(c.mlp_mult * d, d) + 4 * d;
  return linear_params(c.input_dim, d) + static_cast<std::int64_t>(c.max_context) * d +
         c.num_layers * per_layer + 2 * d /* final norm */ + d /* z_sos */;
}

inline std::int64_t count_sampler_params(const SamplerConfig& c, int z_dim) {
  const std::int64_t d = c.model_dim;
  const std::int64_t cd = c.cond_dim;
  const std::int64_t per_block =
      linear_params(cd, 3 * d) + linear_params(d, c.mlp_mult * d) + linear_params(c.mlp_mult * d, d);
  return linear_params(c.frequency_dim, cd) + linear_params(cd, cd) +
         linear_params(z_dim + c.input_dim, d) + c.num_layers * per_block +
         linear_params(cd, 2 * d) + linear_params(d, c.input_dim);
}

inline std::int64_t count_gmm_params(const GMMHeadConfig& c) {
  return linear_params(c.input_dim, c.num_modes) +
         2 * linear_params(c.input_dim, static_cast<std::int64_t>(c.num_modes) * c.output_dim);
}

inline std::int64_t count_parameters(const ModelConfig& c) {
  std::int64_t n = count_backbone_params(c.backbone);
  n += c.uses_sampler() ? count_sampler_params(c.sampler, c.backbone.model_dim)
                        : count_gmm_params(c.gmm);
  return n;
}

// ---------------------------------------------------------------------------
// Presets.

enum class Preset { tiny, small, desk, paper_150m };

inline Preset parse_preset(const std::string& name) {
  if (name == "tiny") return Preset::tiny;
  if (name == "small") return Preset::small;
  if (name == "desk") return Preset::desk;
  if (name == "paper-150m") return Preset::paper_150m;
  throw ConfigError("unknown preset '" + name + "' (expected tiny, small, desk or paper-150m)");
}

inline std::string preset_name(Preset p) {
  switch (p) {
    case Preset::tiny: return "tiny";
    case Preset::small: return "small";
    case Preset::desk: return "desk";
    case Preset::paper_150m: return "paper-150m";
  }
  return "desk";
}

/// Sampler-based model config for a preset. `input_dim` is the embedding width.
inline ModelConfig preset_config(Preset p, int input_dim = 8) {
  ModelConfig c;
  switch (p) {
    case Preset::tiny:
      c.backbone = {2, 32, 2, 2, 16, input_dim};
      c.sampler = {2, 32, 2, input_dim, 32, 16};
      break;
    case Preset::small:
      c.backbone = {1, 32, 2, 2, 64, input_dim};
      c.sampler = {2, 48, 2, input_dim, 32, 16};
      break;
    case Preset::desk:
      c.backbone = {4, 128, 4, 4, 64, input_dim};
      c.sampler = {3, 128, 4, input_dim, 128, 64};
      break;
    case Preset::paper_150m:
      c.backbone = {16, 768, 4, 4, 128, 64};
      c.sampler = {8, 768, 4, 64, 256, 256};
      break;
  }
  c.gmm = {8, c.backbone.model_dim, c.backbone.input_dim};
  return c;
}

/// Switches a config to a GMM head with a deeper backbone of roughly the same
/// parameter count as the sampler-based model. `fixed_layers` > 0 overrides.
inline ModelConfig with_gmm_head(ModelConfig c, int num_modes, int fixed_layers = 0) {
  const std::int64_t sampler_total = count_parameters(c);
  c.head = HeadKind::gmm;
  c.gmm = {num_modes, c.backbone.model_dim, c.backbone.input_dim};
  if (fixed_layers > 0) {
    c.backbone.num_layers = fixed_layers;
  } else {
    BackboneConfig one = c.backbone;
    one.num_layers = 1;
    BackboneConfig two = c.backbone;
    two.num_layers = 2;
    const std::int64_t per_layer = count_backbone_params(two) - count_backbone_params(one);
    const std::int64_t base = count_backbone_params(one) - per_layer + count_gmm_params(c.gmm);
    const double layers = static_cast<double>(sampler_total - base) / static_cast<double>(per_layer);
    c.backbone.num_layers = std::max(c.backbone.num_layers, static_cast<int>(layers + 0.5));
  }
  return c;
}

}  // namespace cam::model
