// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

namespace cam {

/// Row-major dense matrix. Batched activations put one token per row.
template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <class T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

using Matf = Mat<float>;
using Matd = Mat<double>;
using Vecf = Vec<float>;
using Vecd = Vec<double>;

template <class T>
bool all_finite(const Eigen::DenseBase<T>& m) {
  return m.allFinite();
}

}  // namespace cam
