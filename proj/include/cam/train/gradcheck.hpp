// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cam/model/params.hpp"

namespace cam::train {

struct GradcheckProbe {
  std::string param;
  Eigen::Index index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::vector<GradcheckProbe> probes;
};

/// Central-difference check of analytic gradients on random scalar parameters.
///
/// `loss_fn(params, with_grad)` must be deterministic; with `with_grad` it
/// leaves gradients in each parameter's grad. Relative error is
/// |a - n| / max(|a|, |n|, abs_floor), so gradients that are zero on both
/// sides compare as exact.
template <class T>
GradcheckResult finite_difference_gradcheck(model::ModelParams<T>& params,
                                            const std::function<double(model::ModelParams<T>&, bool)>& loss_fn,
                                            int num_probes, Rng& rng, double step = 1e-5,
                                            double abs_floor = 1e-6) {
  GradcheckResult res;
  if (num_probes <= 0 || params.store.size() == 0) return res;
  loss_fn(params, true);
  std::vector<nn::Parameter<T>*> list;
  std::vector<std::int64_t> cumulative;
  std::int64_t total = 0;
  for (auto& p : params.store) {
    list.push_back(&p);
    total += p.value.size();
    cumulative.push_back(total);
  }
  for (int i = 0; i < num_probes; ++i) {
    const auto flat = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(total)));
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), flat);
    const auto which = static_cast<std::size_t>(it - cumulative.begin());
    nn::Parameter<T>& p = *list[which];
    const Eigen::Index idx = flat - (which == 0 ? 0 : cumulative[which - 1]);
    T& slot = p.value.data()[idx];
    const T saved = slot;
    const T h = static_cast<T>(step * std::max(1.0, std::abs(static_cast<double>(saved))));
    slot = saved + h;
    const double up = loss_fn(params, false);
    slot = saved - h;
    const double down = loss_fn(params, false);
    slot = saved;
    GradcheckProbe probe;
    probe.param = p.name;
    probe.index = idx;
    probe.analytic = static_cast<double>(p.grad.data()[idx]);
    probe.numeric = (up - down) / (2.0 * static_cast<double>(h));
    const double denom = std::max({std::abs(probe.analytic), std::abs(probe.numeric), abs_floor});
    probe.rel_error = std::abs(probe.analytic - probe.numeric) / denom;
    res.max_rel_error = std::max(res.max_rel_error, probe.rel_error);
    res.probes.push_back(std::move(probe));
  }
  return res;
}

}  // namespace cam::train
