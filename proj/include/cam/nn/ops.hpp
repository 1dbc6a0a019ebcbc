// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "cam/nn/tape.hpp"

// Differentiable operations on row-batched matrices. Every op computes its
// forward value eagerly and, when any input needs a gradient, records a
// closure that maps the output gradient back onto its inputs.

namespace cam::nn {

namespace detail {

inline void check(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

template <class T>
T gelu_scalar(T x) {
  constexpr T k = T(0.7978845608028654);  // sqrt(2 / pi)
  const T u = k * (x + T(0.044715) * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(u));
}

template <class T>
T gelu_grad_scalar(T x) {
  constexpr T k = T(0.7978845608028654);
  const T x2 = x * x;
  const T u = k * (x + T(0.044715) * x2 * x);
  const T th = std::tanh(u);
  const T du = k * (T(1) + T(3) * T(0.044715) * x2);
  return T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th * th) * du;
}

template <class T>
T sigmoid_scalar(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <class T>
T softplus_scalar(T x) {
  return x > T(20) ? x : std::log1p(std::exp(x));
}

template <class T>
T silu_scalar(T x) {
  return x * sigmoid_scalar(x);
}

}  // namespace detail

/// x * w (+ b). `w` is in x out, `b` a 1 x out row; pass Var{} for no bias.
template <class T>
Var linear(Tape<T>& t, Var x, Var w, Var b = Var{}) {
  const Mat<T>& X = t.value(x);
  const Mat<T>& W = t.value(w);
  detail::check(X.cols() == W.rows(), "linear: input width does not match weight rows");
  Mat<T> Y(X.rows(), W.cols());
  Y.noalias() = X * W;
  const bool has_bias = b.id >= 0;
  if (has_bias) {
    const Mat<T>& B = t.value(b);
    detail::check(B.rows() == 1 && B.cols() == W.cols(), "linear: bias shape");
    Y.rowwise() += B.row(0);
  }
  const bool rg = has_bias ? t.any_requires_grad({x, w, b}) : t.any_requires_grad({x, w});
  return t.push(std::move(Y), rg, [x, w, b, has_bias](Tape<T>& tp, Var self) {
    const Mat<T>& G = tp.grad(self);
    if (tp.requires_grad(x)) {
      Mat<T> dx(G.rows(), tp.value(w).rows());
      dx.noalias() = G * tp.value(w).transpose();
      tp.accumulate(x, dx);
    }
    if (tp.requires_grad(w)) {
      Mat<T> dw(tp.value(w).rows(), G.cols());
      dw.noalias() = tp.value(x).transpose() * G;
      tp.accumulate(w, dw);
    }
    if (has_bias && tp.requires_grad(b)) tp.accumulate(b, G.colwise().sum());
  });
}

/// a * b (plain matrix product).
template <class T>
Var matmul(Tape<T>& t, Var a, Var b) {
  const Mat<T>& A = t.value(a);
  const Mat<T>& B = t.value(b);
  detail::check(A.cols() == B.rows(), "matmul: inner dimensions differ");
  Mat<T> Y(A.rows(), B.cols());
  Y.noalias() = A * B;
  return t.push(std::move(Y), t.any_requires_grad({a, b}), [a, b](Tape<T>& tp, Var self) {
    const Mat<T>& G = tp.grad(self);
    if (tp.requires_grad(a)) {
      Mat<T> da(G.rows(), tp.value(b).rows());
      da.noalias() = G * tp.value(b).transpose();
      tp.accumulate(a, da);
    }
    if (tp.requires_grad(b)) {
      Mat<T> db(tp.value(a).cols(), G.cols());
      db.noalias() = tp.value(a).transpose() * G;
      tp.accumulate(b, db);
    }
  });
}

template <class T>
Var add(Tape<T>& t, Var a, Var b) {
  const Mat<T>& A = t.value(a);
  const Mat<T>& B = t.value(b);
  detail::check(A.rows() == B.rows() && A.cols() == B.cols(), "add: shape mismatch");
  Mat<T> Y = A + B;
  return t.push(std::move(Y), t.any_requires_grad({a, b}), [a, b](Tape<T>& tp, Var self) {
    const Mat<T>& G = tp.grad(self);
    tp.accumulate(a, G);
    tp.accumulate(b, G);
  });
}

/// Adds a 1 x C row to every row of `a`.
template <class T>
Var add_row(Tape<T>& t, Var a, Var row) {
  const Mat<T>& A = t.value(a);
  const Mat<T>& R = t.value(row);
  detail::check(R.rows() == 1 && R.cols() == A.cols(), "add_row: shape mismatch");
  Mat<T> Y = A;
  Y.rowwise() += R.row(0);
  return t.push(std::move(Y), t.any_requires_grad({a, row}), [a, row](Tape<T>& tp, Var self) {
    const Mat<T>& G = tp.grad(self);
    tp.accumulate(a, G);
    if (tp.requires_grad(row)) tp.accumulate(row, G.colwise().sum());
  });
}

template <class T>
Var mul(Tape<T>& t, Var a, Var b) {
  const Mat<T>& A = t.value(a);
  const Mat<T>& B = t.value(b);
  detail::check(A.rows() == B.rows() && A.cols() == B.cols(), "mul: shape mismatch");
  Mat<T> Y = A.cwiseProduct(B);
  return t.push(std::move(Y), t.any_requires_grad({a, b}), [a, b](Tape<T>& tp, Var self) {
    const Mat<T>& G = tp.grad(self);
    if (tp.requires_grad(a)) tp.accumulate(a, G.cwiseProduct(tp.value(b)));
    if (tp.requires_grad(b)) tp.accumulate(b, G.cwiseProduct(tp.value(a)));
  });
}

template <class T>
Var scale(Tape<T>& t, Var a, T s) {
  Mat<T> Y = s * t.value(a);
  return t.push(std::move(Y), t.any_requires_grad({a}),
                [a, s](Tape<T>& tp, Var self) { tp.accumulate(a, s * tp.grad(self)); });
}

namespace detail {

inline constexpr double kGeluK = 0.7978845608028654;  // sqrt(2 / pi)
inline constexpr double kGeluC = 0.044715;

// Array expressions so Eigen can use its packet tanh.
template <class T>
Mat<T> gelu_tanh_term(const Mat<T>& A) {
  return (T(kGeluK) * (A.array() + T(kGeluC) * A.array().cube())).tanh().matrix();
}

template <class T>
Mat<T> gelu_values(const Mat<T>& A) {
  return (T(0.5) * A.array() * (T(1) + gelu_tanh_term(A).array())).matrix();
}

}  // namespace detail

template <class T>
Var gelu(Tape<T>& t, Var a) {
  const Mat<T>& A = t.value(a);
  Mat<T> th = detail::gelu_tanh_term(A);
  Mat<T> Y = (T(0.5) * A.array() * (T(1) + th.array())).matrix();
  return t.push(std::move(Y), t.any_requires_grad({a}), [a, th = std::move(th)](Tape<T>& tp, Var self) {
    constexpr T k = T(detail::kGeluK);
    constexpr T c = T(detail::kGeluC);
    const auto X = tp.value(a).array();
    const auto dydx = T(0.5) * (T(1) + th.array()) +
                      T(0.5) * X * (T(1) - th.array().square()) * (k * (T(1) + T(3) * c * X.square()));
    tp.accumulate(a, (tp.grad(self).array() * dydx).matrix());
  });
}

template <class T>
Var silu(Tape<T>& t, Var a) {
  const Mat<T>& A = t.value(a);
  Mat<T> sig = (T(1) / (T(1) + (-A.array()).exp())).matrix();
  Mat<T> Y = A.cwiseProduct(sig);
  return t.push(std::move(Y), t.any_requires_grad({a}), [a, sig = std::move(sig)](Tape<T>& tp, Var self) {
    const auto S = sig.array();
    tp.accumulate(a, (tp.grad(self).array() * S * (T(1) + tp.value(a).array() * (T(1) - S))).matrix());
  });
}

/// Per-row layer normalization with optional affine gain/bias rows.
template <class T>
Var layer_norm(Tape<T>& t, Var x, Var gain = Var{}, Var bias = Var{}, T eps = T(1e-5)) {
  const Mat<T>& X = t.value(x);
  const Eigen::Index n = X.rows();
  const Eigen::Index c = X.cols();
  Mat<T> xhat(n, c);
  Vec<T> inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const T mean = X.row(r).mean();
    const T var = (X.row(r).array() - mean).square().mean();
    inv_std(r) = T(1) / std::sqrt(var + eps);
    xhat.row(r) = (X.row(r).array() - mean) * inv_std(r);
  }
  Mat<T> Y = xhat;
  if (gain.id >= 0) Y.array().rowwise() *= t.value(gain).row(0).array();
  if (bias.id >= 0) Y.rowwise() += t.value(bias).row(0);
  bool rg = t.any_requires_grad({x});
  if (gain.id >= 0) rg = rg || t.any_requires_grad({gain});
  if (bias.id >= 0) rg = rg || t.any_requires_grad({bias});
  return t.push(std::move(Y), rg,
                [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& tp,
                                                                                        Var self) {
                  const Mat<T>& G = tp.grad(self);
                  if (gain.id >= 0 && tp.requires_grad(gain)) {
                    tp.accumulate(gain, G.cwiseProduct(xhat).colwise().sum());
                  }
                  if (bias.id >= 0 && tp.requires_grad(bias)) {
                    tp.accumulate(bias, G.colwise().sum());
                  }
                  if (!tp.requires_grad(x)) return;
                  Mat<T> dy = G;
                  if (gain.id >= 0) dy.array().rowwise() *= tp.value(gain).row(0).array();
                  const T inv_c = T(1) / static_cast<T>(dy.cols());
                  Mat<T> dx(dy.rows(), dy.cols());
                  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
                    const T m1 = dy.row(r).sum() * inv_c;
                    const T m2 = dy.row(r).dot(xhat.row(r)) * inv_c;
                    dx.row(r) = inv_std(r) * (dy.row(r).array() - m1 - xhat.row(r).array() * m2);
                  }
                  tp.accumulate(x, dx);
                });
}

/// x * (1 + scale) + shift, all operands the same shape.
template <class T>
Var modulate(Tape<T>& t, Var x, Var shift, Var scl) {
  const Mat<T>& X = t.value(x);
  const Mat<T>& S = t.value(scl);
  const Mat<T>& B = t.value(shift);
  detail::check(X.rows() == S.rows() && X.cols() == S.cols() && X.rows() == B.rows() &&
                    X.cols() == B.cols(),
                "modulate: shape mismatch");
  Mat<T> Y = X.array() * (S.array() + T(1)) + B.array();
  return t.push(std::move(Y), t.any_requires_grad({x, shift, scl}),
                [x, shift, scl](Tape<T>& tp, Var self) {
                  const Mat<T>& G = tp.grad(self);
                  if (tp.requires_grad(x)) {
                    tp.accumulate(x, (G.array() * (tp.value(scl).array() + T(1))).matrix());
                  }
                  tp.accumulate(shift, G);
                  if (tp.requires_grad(scl)) tp.accumulate(scl, G.cwiseProduct(tp.value(x)));
                });
}

/// h + gate * u.
template <class T>
Var gated_residual(Tape<T>& t, Var h, Var gate, Var u) {
  const Mat<T>& H = t.value(h);
  const Mat<T>& Gt = t.value(gate);
  const Mat<T>& U = t.value(u);
  detail::check(H.rows() == U.rows() && H.cols() == U.cols() && Gt.rows() == U.rows() &&
                    Gt.cols() == U.cols(),
                "gated_residual: shape mismatch");
  Mat<T> Y = H + Gt.cwiseProduct(U);
  return t.push(std::move(Y), t.any_requires_grad({h, gate, u}), [h, gate, u](Tape<T>& tp, Var self) {
    const Mat<T>& G = tp.grad(self);
    tp.accumulate(h, G);
    if (tp.requires_grad(gate)) tp.accumulate(gate, G.cwiseProduct(tp.value(u)));
    if (tp.requires_grad(u)) tp.accumulate(u, G.cwiseProduct(tp.value(gate)));
  });
}

template <class T>
Var concat_cols(Tape<T>& t, Var a, Var b) {
  const Mat<T>& A = t.value(a);
  const Mat<T>& B = t.value(b);
  detail::check(A.rows() == B.rows(), "concat_cols: row counts differ");
  Mat<T> Y(A.rows(), A.cols() + B.cols());
  Y.leftCols(A.cols()) = A;
  Y.rightCols(B.cols()) = B;
  const Eigen::Index ca = A.cols();
  const Eigen::Index cb = B.cols();
  return t.push(std::move(Y), t.any_requires_grad({a, b}), [a, b, ca, cb](Tape<T>& tp, Var self) {
    const Mat<T>& G = tp.grad(self);
    if (tp.requires_grad(a)) tp.accumulate(a, G.leftCols(ca));
    if (tp.requires_grad(b)) tp.accumulate(b, G.rightCols(cb));
  });
}

template <class T>
Var slice_cols(Tape<T>& t, Var a, Eigen::Index start, Eigen::Index width) {
  const Mat<T>& A = t.value(a);
  detail::check(start >= 0 && width >= 0 && start + width <= A.cols(), "slice_cols: out of range");
  Mat<T> Y = A.middleCols(start, width);
  return t.push(std::move(Y), t.any_requires_grad({a}), [a, start, width](Tape<T>& tp, Var self) {
    if (!tp.requires_grad(a)) return;
    tp.grad(a).middleCols(start, width) += tp.grad(self);
  });
}

/// Adds rows 0..seq_len-1 of `pos` to each consecutive block of seq_len rows.
template <class T>
Var add_positional(Tape<T>& t, Var x, Var pos, Eigen::Index seq_len, Eigen::Index offset = 0) {
  const Mat<T>& X = t.value(x);
  const Mat<T>& P = t.value(pos);
  detail::check(seq_len > 0 && X.rows() % seq_len == 0, "add_positional: rows not a multiple of length");
  detail::check(offset + seq_len <= P.rows(), "add_positional: sequence exceeds positional table");
  detail::check(P.cols() == X.cols(), "add_positional: width mismatch");
  const Eigen::Index batch = X.rows() / seq_len;
  Mat<T> Y = X;
  for (Eigen::Index b = 0; b < batch; ++b) Y.middleRows(b * seq_len, seq_len) += P.middleRows(offset, seq_len);
  return t.push(std::move(Y), t.any_requires_grad({x, pos}),
                [x, pos, seq_len, offset, batch](Tape<T>& tp, Var self) {
                  const Mat<T>& G = tp.grad(self);
                  tp.accumulate(x, G);
                  if (!tp.requires_grad(pos)) return;
                  Mat<T>& dp = tp.grad(pos);
                  for (Eigen::Index b = 0; b < batch; ++b) {
                    dp.middleRows(offset, seq_len) += G.middleRows(b * seq_len, seq_len);
                  }
                });
}

/// Builds the per-position conditioning matrix from backbone outputs.
///
/// `h` holds `batch` blocks of `in_len` rows. The result holds `batch` blocks
/// of in_len + 1 rows: row 0 of each block is `sos`, row t + 1 is h's row t.
/// Rows flagged in `drop` (indexed in the output layout) are replaced by `sos`.
template <class T>
Var condition_rows(Tape<T>& t, Var h, Var sos, Eigen::Index batch, Eigen::Index in_len,
                   std::vector<char> drop = {}) {
  const Mat<T>& H = t.value(h);
  const Mat<T>& S = t.value(sos);
  const Eigen::Index out_len = in_len + 1;
  detail::check(S.rows() == 1, "condition_rows: sos must be a single row");
  detail::check(H.rows() == batch * in_len, "condition_rows: row count mismatch");
  detail::check(in_len == 0 || H.cols() == S.cols(), "condition_rows: width mismatch");
  detail::check(drop.empty() || static_cast<Eigen::Index>(drop.size()) == batch * out_len,
                "condition_rows: drop mask size mismatch");
  Mat<T> Y(batch * out_len, S.cols());
  for (Eigen::Index b = 0; b < batch; ++b) {
    Y.row(b * out_len) = S.row(0);
    if (in_len > 0) Y.middleRows(b * out_len + 1, in_len) = H.middleRows(b * in_len, in_len);
  }
  for (std::size_t r = 0; r < drop.size(); ++r) {
    if (drop[r] != 0) Y.row(static_cast<Eigen::Index>(r)) = S.row(0);
  }
  return t.push(std::move(Y), t.any_requires_grad({h, sos}),
                [h, sos, batch, in_len, out_len, drop = std::move(drop)](Tape<T>& tp, Var self) {
                  const Mat<T>& G = tp.grad(self);
                  const auto dropped = [&](Eigen::Index r) {
                    return !drop.empty() && drop[static_cast<std::size_t>(r)] != 0;
                  };
                  if (tp.requires_grad(sos)) {
                    RowVec<T> ds = RowVec<T>::Zero(G.cols());
                    for (Eigen::Index r = 0; r < G.rows(); ++r) {
                      if (r % out_len == 0 || dropped(r)) ds += G.row(r);
                    }
                    tp.accumulate(sos, ds);
                  }
                  if (tp.requires_grad(h) && in_len > 0) {
                    Mat<T> dh(batch * in_len, G.cols());
                    for (Eigen::Index b = 0; b < batch; ++b) {
                      for (Eigen::Index i = 0; i < in_len; ++i) {
                        const Eigen::Index r = b * out_len + 1 + i;
                        if (dropped(r)) {
                          dh.row(b * in_len + i).setZero();
                        } else {
                          dh.row(b * in_len + i) = G.row(r);
                        }
                      }
                    }
                    tp.accumulate(h, dh);
                  }
                });
}

/// Causal multi-head self-attention core.
///
/// `qkv` holds `batch` blocks of `seq_len` rows laid out as [Q | K | V], each
/// of width D split evenly into `heads`. Returns softmax(QK^T / sqrt(hd)) V
/// with future positions masked, as a (batch * seq_len) x D matrix.
template <class T>
Var causal_attention(Tape<T>& t, Var qkv, Eigen::Index batch, Eigen::Index seq_len,
                     Eigen::Index heads) {
  const Mat<T>& QKV = t.value(qkv);
  detail::check(QKV.rows() == batch * seq_len, "causal_attention: row count mismatch");
  detail::check(QKV.cols() % 3 == 0, "causal_attention: qkv width must be 3*D");
  const Eigen::Index d = QKV.cols() / 3;
  detail::check(heads > 0 && d % heads == 0, "causal_attention: width not divisible by heads");
  const Eigen::Index hd = d / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(hd));
  const bool rg = t.any_requires_grad({qkv});

  Mat<T> out(batch * seq_len, d);
  std::vector<Mat<T>> probs;
  if (rg) probs.reserve(static_cast<std::size_t>(batch * heads));
  Mat<T> S(seq_len, seq_len);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index h = 0; h < heads; ++h) {
      const auto Q = QKV.block(b * seq_len, h * hd, seq_len, hd);
      const auto K = QKV.block(b * seq_len, d + h * hd, seq_len, hd);
      const auto V = QKV.block(b * seq_len, 2 * d + h * hd, seq_len, hd);
      S.noalias() = (Q * K.transpose()) * inv_sqrt;
      for (Eigen::Index i = 0; i < seq_len; ++i) {
        auto live = S.row(i).head(i + 1);
        const T mx = live.maxCoeff();
        live = (live.array() - mx).exp().matrix();
        live /= live.sum();
        S.row(i).tail(seq_len - i - 1).setZero();
      }
      out.block(b * seq_len, h * hd, seq_len, hd).noalias() = S * V;
      if (rg) probs.push_back(S);
    }
  }
  return t.push(std::move(out), rg,
                [qkv, batch, seq_len, heads, hd, d, inv_sqrt, probs = std::move(probs)](
                    Tape<T>& tp, Var self) {
                  const Mat<T>& G = tp.grad(self);
                  const Mat<T>& QKV = tp.value(qkv);
                  Mat<T> dqkv = Mat<T>::Zero(QKV.rows(), QKV.cols());
                  Mat<T> dP(seq_len, seq_len);
                  for (Eigen::Index b = 0; b < batch; ++b) {
                    for (Eigen::Index h = 0; h < heads; ++h) {
                      const Mat<T>& P = probs[static_cast<std::size_t>(b * heads + h)];
                      const auto Q = QKV.block(b * seq_len, h * hd, seq_len, hd);
                      const auto K = QKV.block(b * seq_len, d + h * hd, seq_len, hd);
                      const auto V = QKV.block(b * seq_len, 2 * d + h * hd, seq_len, hd);
                      const auto dO = G.block(b * seq_len, h * hd, seq_len, hd);
                      dqkv.block(b * seq_len, 2 * d + h * hd, seq_len, hd).noalias() =
                          P.transpose() * dO;
                      dP.noalias() = dO * V.transpose();
                      // softmax backward: dS = P * (dP - rowsum(dP * P))
                      for (Eigen::Index i = 0; i < seq_len; ++i) {
                        const T dot = dP.row(i).dot(P.row(i));
                        dP.row(i) = (P.row(i).array() * (dP.row(i).array() - dot)).matrix();
                      }
                      dqkv.block(b * seq_len, h * hd, seq_len, hd).noalias() = (dP * K) * inv_sqrt;
                      dqkv.block(b * seq_len, d + h * hd, seq_len, hd).noalias() =
                          (dP.transpose() * Q) * inv_sqrt;
                    }
                  }
                  tp.accumulate(qkv, dqkv);
                });
}

/// sum((pred - target)^2) / rows: squared error norm per row, averaged over rows.
template <class T>
Var row_squared_error(Tape<T>& t, Var pred, const Mat<T>& target) {
  const Mat<T>& P = t.value(pred);
  detail::check(P.rows() == target.rows() && P.cols() == target.cols(),
                "row_squared_error: shape mismatch");
  Mat<T> diff = P - target;
  const T inv_rows = P.rows() > 0 ? T(1) / static_cast<T>(P.rows()) : T(0);
  Mat<T> Y(1, 1);
  Y(0, 0) = diff.squaredNorm() * inv_rows;
  return t.push(std::move(Y), t.any_requires_grad({pred}),
                [pred, inv_rows, diff = std::move(diff)](Tape<T>& tp, Var self) {
                  const T g = tp.grad(self)(0, 0);
                  tp.accumulate(pred, (T(2) * g * inv_rows) * diff);
                });
}

/// Mean negative log-likelihood of `x` under per-row diagonal Gaussian mixtures.
///
/// `logits` is rows x K; `means` and `raw_std` are rows x (K * d) with mode k
/// in columns [k*d, (k+1)*d). Standard deviations are softplus(raw) + floor.
template <class T>
Var gmm_nll(Tape<T>& t, Var logits, Var means, Var raw_std, const Mat<T>& x, T floor) {
  const Mat<T>& L = t.value(logits);
  const Mat<T>& M = t.value(means);
  const Mat<T>& R = t.value(raw_std);
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  const Eigen::Index k = L.cols();
  detail::check(L.rows() == n && M.rows() == n && R.rows() == n, "gmm_nll: row mismatch");
  detail::check(M.cols() == k * d && R.cols() == k * d, "gmm_nll: mode layout mismatch");
  const T half_log_2pi = T(0.5) * std::log(T(2) * std::numbers::pi_v<T>);

  Mat<T> resp(n, k);    // posterior mode responsibilities
  Mat<T> wsoft(n, k);   // softmax(logits)
  T total = T(0);
  for (Eigen::Index r = 0; r < n; ++r) {
    const T lmax = L.row(r).maxCoeff();
    T lse = T(0);
    for (Eigen::Index j = 0; j < k; ++j) lse += std::exp(L(r, j) - lmax);
    lse = lmax + std::log(lse);
    for (Eigen::Index j = 0; j < k; ++j) {
      wsoft(r, j) = std::exp(L(r, j) - lse);
      T lp = L(r, j) - lse;
      for (Eigen::Index c = 0; c < d; ++c) {
        const T s = detail::softplus_scalar(R(r, j * d + c)) + floor;
        const T z = (x(r, c) - M(r, j * d + c)) / s;
        lp += -T(0.5) * z * z - std::log(s) - half_log_2pi;
      }
      resp(r, j) = lp;
    }
    const T mx = resp.row(r).maxCoeff();
    T acc = T(0);
    for (Eigen::Index j = 0; j < k; ++j) acc += std::exp(resp(r, j) - mx);
    const T logp = mx + std::log(acc);
    for (Eigen::Index j = 0; j < k; ++j) resp(r, j) = std::exp(resp(r, j) - logp);
    total -= logp;
  }
  const T inv_n = n > 0 ? T(1) / static_cast<T>(n) : T(0);
  Mat<T> Y(1, 1);
  Y(0, 0) = total * inv_n;
  return t.push(
      std::move(Y), t.any_requires_grad({logits, means, raw_std}),
      [logits, means, raw_std, x, floor, inv_n, resp = std::move(resp), wsoft = std::move(wsoft)](
          Tape<T>& tp, Var self) {
        const T g = tp.grad(self)(0, 0) * inv_n;
        const Mat<T>& M = tp.value(means);
        const Mat<T>& R = tp.value(raw_std);
        const Eigen::Index n = x.rows();
        const Eigen::Index d = x.cols();
        const Eigen::Index k = resp.cols();
        if (tp.requires_grad(logits)) tp.accumulate(logits, g * (wsoft - resp));
        Mat<T> dm(n, k * d);
        Mat<T> dr(n, k * d);
        for (Eigen::Index r = 0; r < n; ++r) {
          for (Eigen::Index j = 0; j < k; ++j) {
            const T w = resp(r, j);
            for (Eigen::Index c = 0; c < d; ++c) {
              const Eigen::Index col = j * d + c;
              const T s = detail::softplus_scalar(R(r, col)) + floor;
              const T diff = x(r, c) - M(r, col);
              dm(r, col) = -g * w * diff / (s * s);
              const T ds = -g * w * (diff * diff / (s * s * s) - T(1) / s);
              dr(r, col) = ds * detail::sigmoid_scalar(R(r, col));
            }
          }
        }
        tp.accumulate(means, dm);
        tp.accumulate(raw_std, dr);
      });
}


}  // namespace cam::nn
