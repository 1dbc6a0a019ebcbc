// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cam/model/params.hpp"

namespace cam::train {

/// First and second moment estimates, one pair per parameter in store order.
template <class T>
struct AdamMoments {
  std::vector<Mat<T>> m;
  std::vector<Mat<T>> v;

  static AdamMoments zeros_like(const model::ParamStore<T>& store) {
    AdamMoments a;
    for (const auto& p : store) {
      a.m.push_back(Mat<T>::Zero(p.value.rows(), p.value.cols()));
      a.v.push_back(Mat<T>::Zero(p.value.rows(), p.value.cols()));
    }
    return a;
  }
};

struct AdamWSettings {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// One decoupled-weight-decay Adam update. `step` counts from 1.
///
/// Decay is applied only to parameters flagged for it (weight matrices and
/// positional tables); biases, norm gains and z_SOS are left alone.
template <class T>
void adamw_update(model::ParamStore<T>& store, AdamMoments<T>& mom, std::int64_t step,
                  const AdamWSettings& s) {
  const T b1 = static_cast<T>(s.beta1);
  const T b2 = static_cast<T>(s.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(s.beta1, static_cast<double>(step)));
  const T c2 = static_cast<T>(1.0 - std::pow(s.beta2, static_cast<double>(step)));
  const T lr = static_cast<T>(s.lr);
  const T eps = static_cast<T>(s.eps);
  const T shrink = static_cast<T>(1.0 - s.lr * s.weight_decay);
  std::size_t i = 0;
  for (auto& p : store) {
    Mat<T>& m = mom.m[i];
    Mat<T>& v = mom.v[i];
    ++i;
    if (p.grad.size() == 0) continue;  // unused by this objective
    m = b1 * m + (T(1) - b1) * p.grad;
    v = b2 * v + (T(1) - b2) * p.grad.cwiseProduct(p.grad);
    if (p.decay) p.value *= shrink;
    p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
}

}  // namespace cam::train
