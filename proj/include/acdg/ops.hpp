#pragma once

// Differentiable operations over Array<T>.
//
// Every op validates shapes, computes its forward result, and (when any
// input requires grad) records one backward closure on the tape. Gradients
// accumulate with += so an array feeding several consumers receives the sum
// of its downstream contributions. Inner loops are ordered so the innermost
// index walks contiguous memory; with stride 1 they reduce to saxpy/dot
// forms the compiler vectorizes.

#include <algorithm>
#include <type_traits>
#include <cmath>
#include <vector>

#include "acdg/common.hpp"
#include "acdg/tensor.hpp"

namespace acdg {

enum class Mode { kTrain, kEval };

namespace detail {

// Inclusive output-index interval [lo, hi] such that 0 <= base + i*stride
// < in_len for every i in the interval, clamped to [0, out_len).
struct TapRange {
  int lo, hi;
};

inline TapRange tap_range(int base, int stride, int in_len, int out_len) {
  int lo = 0;
  if (base < 0) lo = (-base + stride - 1) / stride;
  int hi = out_len - 1;
  if (base <= in_len - 1) {
    int h = (in_len - 1 - base) / stride;
    if (h < hi) hi = h;
  } else {
    hi = lo - 1;
  }
  return {lo, hi};
}

}  // namespace detail

// ===== Convolution =====

// x: [B, IC, L], w: [OC, IC, K], bias: [OC] or nullptr.
// Cross-correlation (no kernel flip), zero padding.
// Output: [B, OC, OL], OL = (L + 2*padding - K)/stride + 1.
template <typename T>
ArrayRef<T> conv1d(Tape<T>& tape, const ArrayRef<T>& x, const ArrayRef<T>& w,
                   const std::type_identity_t<ArrayRef<T>>& bias, int stride, int padding) {
  check_dim(x && x->shape.size() == 3, "conv1d: x must be [B,IC,L]");
  check_dim(w && w->shape.size() == 3, "conv1d: w must be [OC,IC,K]");
  const int B = x->shape[0], IC = x->shape[1], L = x->shape[2];
  const int OC = w->shape[0], K = w->shape[2];
  check_dim(w->shape[1] == IC, "conv1d: channel mismatch, x " + shape_str(x->shape) +
                                   " vs w " + shape_str(w->shape));
  check_config(stride >= 1, "conv1d: stride must be >= 1");
  check_config(padding >= 0, "conv1d: padding must be >= 0");
  if (bias) check_dim(bias->shape == Shape{OC}, "conv1d: bias must be [OC]");
  const int OL = (L + 2 * padding - K) / stride + 1;
  check_dim(K <= L + 2 * padding && OL >= 1, "conv1d: kernel does not fit input");

  auto out = zeros<T>({B, OC, OL});
  const T* xv = x->values.data();
  const T* wv = w->values.data();
  T* yv = out->values.data();
  for (int b = 0; b < B; ++b) {
    for (int oc = 0; oc < OC; ++oc) {
      T* yr = yv + (static_cast<long long>(b) * OC + oc) * OL;
      if (bias) {
        const T bc = bias->values[oc];
        for (int ol = 0; ol < OL; ++ol) yr[ol] = bc;
      }
      for (int ic = 0; ic < IC; ++ic) {
        const T* xr = xv + (static_cast<long long>(b) * IC + ic) * L;
        const T* wr = wv + (static_cast<long long>(oc) * IC + ic) * K;
        for (int k = 0; k < K; ++k) {
          const T wk = wr[k];
          const int base = k - padding;
          const auto r = detail::tap_range(base, stride, L, OL);
          if (stride == 1) {
            const T* xs = xr + base;
            for (int ol = r.lo; ol <= r.hi; ++ol) yr[ol] += wk * xs[ol];
          } else {
            for (int ol = r.lo; ol <= r.hi; ++ol) yr[ol] += wk * xr[base + ol * stride];
          }
        }
      }
    }
  }

  const bool rg = x->requires_grad || w->requires_grad || (bias && bias->requires_grad);
  out->requires_grad = rg;
  if (rg) {
    ArrayRef<T> xc = x, wc = w, bc = bias, oc_ = out;
    out->node_id = tape.record([xc, wc, bc, oc_, B, IC, L, OC, K, OL, stride, padding]() {
      if (!oc_->has_grad()) return;
      const T* gy = oc_->grad.data();
      if (xc->requires_grad) {
        xc->ensure_grad();
        T* gx = xc->grad.data();
        const T* wv = wc->values.data();
        for (int b = 0; b < B; ++b)
          for (int oc = 0; oc < OC; ++oc) {
            const T* gyr = gy + (static_cast<long long>(b) * OC + oc) * OL;
            for (int ic = 0; ic < IC; ++ic) {
              T* gxr = gx + (static_cast<long long>(b) * IC + ic) * L;
              const T* wr = wv + (static_cast<long long>(oc) * IC + ic) * K;
              for (int k = 0; k < K; ++k) {
                const T wk = wr[k];
                const int base = k - padding;
                const auto r = detail::tap_range(base, stride, L, OL);
                if (stride == 1) {
                  T* gxs = gxr + base;
                  for (int ol = r.lo; ol <= r.hi; ++ol) gxs[ol] += wk * gyr[ol];
                } else {
                  for (int ol = r.lo; ol <= r.hi; ++ol) gxr[base + ol * stride] += wk * gyr[ol];
                }
              }
            }
          }
      }
      if (wc->requires_grad) {
        wc->ensure_grad();
        T* gw = wc->grad.data();
        const T* xv = xc->values.data();
        for (int b = 0; b < B; ++b)
          for (int oc = 0; oc < OC; ++oc) {
            const T* gyr = gy + (static_cast<long long>(b) * OC + oc) * OL;
            for (int ic = 0; ic < IC; ++ic) {
              const T* xr = xv + (static_cast<long long>(b) * IC + ic) * L;
              T* gwr = gw + (static_cast<long long>(oc) * IC + ic) * K;
              for (int k = 0; k < K; ++k) {
                const int base = k - padding;
                const auto r = detail::tap_range(base, stride, L, OL);
                T acc = T(0);
                if (stride == 1) {
                  const T* xs = xr + base;
                  for (int ol = r.lo; ol <= r.hi; ++ol) acc += gyr[ol] * xs[ol];
                } else {
                  for (int ol = r.lo; ol <= r.hi; ++ol) acc += gyr[ol] * xr[base + ol * stride];
                }
                gwr[k] += acc;
              }
            }
          }
      }
      if (bc && bc->requires_grad) {
        bc->ensure_grad();
        T* gb = bc->grad.data();
        for (int b = 0; b < B; ++b)
          for (int oc = 0; oc < OC; ++oc) {
            const T* gyr = gy + (static_cast<long long>(b) * OC + oc) * OL;
            T acc = T(0);
            for (int ol = 0; ol < OL; ++ol) acc += gyr[ol];
            gb[oc] += acc;
          }
      }
    });
  }
  return out;
}

// ===== Transposed convolution =====

// Adjoint of conv1d's input-gradient map with the same weight array:
// x: [B, IN, L] where IN = w.shape[0], w: [IN, OUT, K], bias: [OUT] or null.
// Output: [B, OUT, OL], OL = (L-1)*stride - 2*padding + K.
template <typename T>
ArrayRef<T> transpose_conv1d(Tape<T>& tape, const ArrayRef<T>& x, const ArrayRef<T>& w,
                             const std::type_identity_t<ArrayRef<T>>& bias, int stride,
                             int padding) {
  check_dim(x && x->shape.size() == 3, "transpose_conv1d: x must be [B,IN,L]");
  check_dim(w && w->shape.size() == 3, "transpose_conv1d: w must be [IN,OUT,K]");
  const int B = x->shape[0], IN = x->shape[1], L = x->shape[2];
  const int OUT = w->shape[1], K = w->shape[2];
  check_dim(w->shape[0] == IN, "transpose_conv1d: channel mismatch, x " +
                                   shape_str(x->shape) + " vs w " + shape_str(w->shape));
  check_config(stride >= 1, "transpose_conv1d: stride must be >= 1");
  check_config(padding >= 0, "transpose_conv1d: padding must be >= 0");
  if (bias) check_dim(bias->shape == Shape{OUT}, "transpose_conv1d: bias must be [OUT]");
  const int OL = (L - 1) * stride - 2 * padding + K;
  check_dim(OL >= 1, "transpose_conv1d: output length would be empty");

  auto out = zeros<T>({B, OUT, OL});
  const T* xv = x->values.data();
  const T* wv = w->values.data();
  T* yv = out->values.data();
  if (bias) {
    for (int b = 0; b < B; ++b)
      for (int o = 0; o < OUT; ++o) {
        T* yr = yv + (static_cast<long long>(b) * OUT + o) * OL;
        const T bo = bias->values[o];
        for (int j = 0; j < OL; ++j) yr[j] = bo;
      }
  }
  for (int b = 0; b < B; ++b)
    for (int in = 0; in < IN; ++in) {
      const T* xr = xv + (static_cast<long long>(b) * IN + in) * L;
      for (int o = 0; o < OUT; ++o) {
        T* yr = yv + (static_cast<long long>(b) * OUT + o) * OL;
        const T* wr = wv + (static_cast<long long>(in) * OUT + o) * K;
        for (int k = 0; k < K; ++k) {
          const T wk = wr[k];
          const int base = k - padding;
          const auto r = detail::tap_range(base, stride, OL, L);
          if (stride == 1) {
            T* ys = yr + base;
            for (int i = r.lo; i <= r.hi; ++i) ys[i] += wk * xr[i];
          } else {
            for (int i = r.lo; i <= r.hi; ++i) yr[base + i * stride] += wk * xr[i];
          }
        }
      }
    }

  const bool rg = x->requires_grad || w->requires_grad || (bias && bias->requires_grad);
  out->requires_grad = rg;
  if (rg) {
    ArrayRef<T> xc = x, wc = w, bc = bias, oc_ = out;
    out->node_id = tape.record([xc, wc, bc, oc_, B, IN, L, OUT, K, OL, stride, padding]() {
      if (!oc_->has_grad()) return;
      const T* gy = oc_->grad.data();
      if (xc->requires_grad) {
        xc->ensure_grad();
        T* gx = xc->grad.data();
        const T* wv = wc->values.data();
        for (int b = 0; b < B; ++b)
          for (int in = 0; in < IN; ++in) {
            T* gxr = gx + (static_cast<long long>(b) * IN + in) * L;
            for (int o = 0; o < OUT; ++o) {
              const T* gyr = gy + (static_cast<long long>(b) * OUT + o) * OL;
              const T* wr = wv + (static_cast<long long>(in) * OUT + o) * K;
              for (int k = 0; k < K; ++k) {
                const T wk = wr[k];
                const int base = k - padding;
                const auto r = detail::tap_range(base, stride, OL, L);
                if (stride == 1) {
                  const T* gys = gyr + base;
                  for (int i = r.lo; i <= r.hi; ++i) gxr[i] += wk * gys[i];
                } else {
                  for (int i = r.lo; i <= r.hi; ++i) gxr[i] += wk * gyr[base + i * stride];
                }
              }
            }
          }
      }
      if (wc->requires_grad) {
        wc->ensure_grad();
        T* gw = wc->grad.data();
        const T* xv = xc->values.data();
        for (int b = 0; b < B; ++b)
          for (int in = 0; in < IN; ++in) {
            const T* xr = xv + (static_cast<long long>(b) * IN + in) * L;
            for (int o = 0; o < OUT; ++o) {
              const T* gyr = gy + (static_cast<long long>(b) * OUT + o) * OL;
              T* gwr = gw + (static_cast<long long>(in) * OUT + o) * K;
              for (int k = 0; k < K; ++k) {
                const int base = k - padding;
                const auto r = detail::tap_range(base, stride, OL, L);
                T acc = T(0);
                if (stride == 1) {
                  const T* gys = gyr + base;
                  for (int i = r.lo; i <= r.hi; ++i) acc += xr[i] * gys[i];
                } else {
                  for (int i = r.lo; i <= r.hi; ++i) acc += xr[i] * gyr[base + i * stride];
                }
                gwr[k] += acc;
              }
            }
          }
      }
      if (bc && bc->requires_grad) {
        bc->ensure_grad();
        T* gb = bc->grad.data();
        for (int b = 0; b < B; ++b)
          for (int o = 0; o < OUT; ++o) {
            const T* gyr = gy + (static_cast<long long>(b) * OUT + o) * OL;
            T acc = T(0);
            for (int j = 0; j < OL; ++j) acc += gyr[j];
            gb[o] += acc;
          }
      }
    });
  }
  return out;
}

// ===== Batch normalization =====

// x: [B, C, L]. Train mode normalizes with per-channel batch statistics
// (population variance) and updates the running buffers in place with EMA
// momentum; eval mode normalizes with the running buffers. The divisor is
// max(sqrt(var), eps), never a division by zero.
template <typename T>
ArrayRef<T> batch_norm1d(Tape<T>& tape, const ArrayRef<T>& x, const ArrayRef<T>& gamma,
                         const ArrayRef<T>& beta, const ArrayRef<T>& running_mean,
                         const ArrayRef<T>& running_var, Mode mode,
                         T momentum = T(0.1), T eps = T(kStdEps)) {
  check_dim(x && x->shape.size() == 3, "batch_norm1d: x must be [B,C,L]");
  const int B = x->shape[0], C = x->shape[1], L = x->shape[2];
  check_dim(gamma->shape == Shape{C} && beta->shape == Shape{C},
            "batch_norm1d: gamma/beta must be [C]");
  check_dim(running_mean->shape == Shape{C} && running_var->shape == Shape{C},
            "batch_norm1d: running stats must be [C]");
  const long long N = static_cast<long long>(B) * L;
  if (mode == Mode::kTrain)
    check_usage(N >= 2, "batch_norm1d: train mode needs batch*len >= 2");

  std::vector<T> mean(C), inv(C);
  std::vector<char> floored(C, 0);
  const T* xv = x->values.data();
  if (mode == Mode::kTrain) {
    for (int c = 0; c < C; ++c) {
      T s = T(0);
      for (int b = 0; b < B; ++b) {
        const T* xr = xv + (static_cast<long long>(b) * C + c) * L;
        for (int l = 0; l < L; ++l) s += xr[l];
      }
      const T m = s / T(N);
      T v = T(0);
      for (int b = 0; b < B; ++b) {
        const T* xr = xv + (static_cast<long long>(b) * C + c) * L;
        for (int l = 0; l < L; ++l) {
          const T d = xr[l] - m;
          v += d * d;
        }
      }
      v /= T(N);
      const T sd = std::sqrt(v);
      mean[c] = m;
      floored[c] = sd < eps;
      inv[c] = T(1) / std::max(sd, eps);
      running_mean->values[c] = (T(1) - momentum) * running_mean->values[c] + momentum * m;
      running_var->values[c] = (T(1) - momentum) * running_var->values[c] + momentum * v;
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = running_mean->values[c];
      const T sd = std::sqrt(std::max(running_var->values[c], T(0)));
      floored[c] = sd < eps;
      inv[c] = T(1) / std::max(sd, eps);
    }
  }

  auto out = zeros<T>({B, C, L});
  T* yv = out->values.data();
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const T* xr = xv + (static_cast<long long>(b) * C + c) * L;
      T* yr = yv + (static_cast<long long>(b) * C + c) * L;
      const T m = mean[c], iv = inv[c], g = gamma->values[c], be = beta->values[c];
      for (int l = 0; l < L; ++l) yr[l] = g * (xr[l] - m) * iv + be;
    }

  const bool rg = x->requires_grad || gamma->requires_grad || beta->requires_grad;
  out->requires_grad = rg;
  if (rg) {
    ArrayRef<T> xc = x, gc = gamma, bc = beta, oc_ = out;
    const bool train = mode == Mode::kTrain;
    out->node_id =
        tape.record([xc, gc, bc, oc_, mean, inv, floored, B, C, L, N, train]() {
          if (!oc_->has_grad()) return;
          const T* gy = oc_->grad.data();
          const T* xv = xc->values.data();
          for (int c = 0; c < C; ++c) {
            const T m = mean[c], iv = inv[c], ga = gc->values[c];
            // Channel reductions shared by all three gradients.
            T sum_gy = T(0), sum_gy_xhat = T(0);
            for (int b = 0; b < B; ++b) {
              const T* gyr = gy + (static_cast<long long>(b) * C + c) * L;
              const T* xr = xv + (static_cast<long long>(b) * C + c) * L;
              for (int l = 0; l < L; ++l) {
                sum_gy += gyr[l];
                sum_gy_xhat += gyr[l] * (xr[l] - m) * iv;
              }
            }
            if (gc->requires_grad) {
              gc->ensure_grad();
              gc->grad[c] += sum_gy_xhat;
            }
            if (bc->requires_grad) {
              bc->ensure_grad();
              bc->grad[c] += sum_gy;
            }
            if (xc->requires_grad) {
              xc->ensure_grad();
              T* gx = xc->grad.data();
              if (train) {
                // d/dx of gamma*(x-m(x))*inv(v(x)) + beta; the variance term
                // vanishes when the std hit the eps floor.
                const T mg = sum_gy / T(N);
                const T mgx = floored[c] ? T(0) : sum_gy_xhat / T(N);
                for (int b = 0; b < B; ++b) {
                  const T* gyr = gy + (static_cast<long long>(b) * C + c) * L;
                  const T* xr = xv + (static_cast<long long>(b) * C + c) * L;
                  T* gxr = gx + (static_cast<long long>(b) * C + c) * L;
                  for (int l = 0; l < L; ++l) {
                    const T xhat = (xr[l] - m) * iv;
                    gxr[l] += ga * iv * (gyr[l] - mg - xhat * mgx);
                  }
                }
              } else {
                const T scale = ga * iv;
                for (int b = 0; b < B; ++b) {
                  const T* gyr = gy + (static_cast<long long>(b) * C + c) * L;
                  T* gxr = gx + (static_cast<long long>(b) * C + c) * L;
                  for (int l = 0; l < L; ++l) gxr[l] += scale * gyr[l];
                }
              }
            }
          }
        });
  }
  return out;
}

// ===== Per-sample per-channel statistics =====

template <typename T>
struct ChannelStatsResult {
  ArrayRef<T> mean;    // [B, C]
  ArrayRef<T> stddev;  // [B, C], population std floored at eps
};

template <typename T>
ChannelStatsResult<T> channel_stats(Tape<T>& tape, const ArrayRef<T>& x, T eps = T(kStdEps)) {
  check_dim(x && x->shape.size() == 3, "channel_stats: x must be [B,C,L]");
  const int B = x->shape[0], C = x->shape[1], L = x->shape[2];
  check_dim(L >= 1, "channel_stats: empty length axis");

  auto mu = zeros<T>({B, C});
  auto sigma = zeros<T>({B, C});
  std::vector<char> floored(static_cast<std::size_t>(B) * C, 0);
  std::vector<T> raw_sd(static_cast<std::size_t>(B) * C, T(0));
  const T* xv = x->values.data();
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const T* xr = xv + (static_cast<long long>(b) * C + c) * L;
      T s = T(0);
      for (int l = 0; l < L; ++l) s += xr[l];
      const T m = s / T(L);
      T v = T(0);
      for (int l = 0; l < L; ++l) {
        const T d = xr[l] - m;
        v += d * d;
      }
      v /= T(L);
      const T sd = std::sqrt(v);
      const long long bc = static_cast<long long>(b) * C + c;
      mu->values[bc] = m;
      raw_sd[bc] = sd;
      floored[bc] = sd < eps;
      sigma->values[bc] = std::max(sd, eps);
    }

  mu->requires_grad = sigma->requires_grad = x->requires_grad;
  if (x->requires_grad) {
    ArrayRef<T> xc = x, mc = mu, sc = sigma;
    const int node = tape.record([xc, mc, sc, floored, raw_sd, B, C, L]() {
      const bool has_gm = mc->has_grad(), has_gs = sc->has_grad();
      if (!has_gm && !has_gs) return;
      xc->ensure_grad();
      T* gx = xc->grad.data();
      const T* xv = xc->values.data();
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
          const long long bc = static_cast<long long>(b) * C + c;
          const T gm = has_gm ? mc->grad[bc] : T(0);
          const T gs = has_gs ? sc->grad[bc] : T(0);
          if (gm == T(0) && gs == T(0)) continue;
          const T m = mc->values[bc];
          T* gxr = gx + bc * L;
          const T* xr = xv + bc * L;
          const T gm_per = gm / T(L);
          if (gs != T(0) && !floored[bc] && raw_sd[bc] > T(0)) {
            const T coef = gs / (T(L) * raw_sd[bc]);
            for (int l = 0; l < L; ++l) gxr[l] += gm_per + coef * (xr[l] - m);
          } else {
            for (int l = 0; l < L; ++l) gxr[l] += gm_per;
          }
        }
    });
    mu->node_id = sigma->node_id = node;
  }
  return {mu, sigma};
}

// ===== Fully connected =====

// x: [N, DIN], w: [DOUT, DIN], bias: [DOUT] or null. Output [N, DOUT].
template <typename T>
ArrayRef<T> linear(Tape<T>& tape, const ArrayRef<T>& x, const ArrayRef<T>& w,
                   const std::type_identity_t<ArrayRef<T>>& bias) {
  check_dim(x && x->shape.size() == 2, "linear: x must be [N,DIN]");
  check_dim(w && w->shape.size() == 2, "linear: w must be [DOUT,DIN]");
  const int N = x->shape[0], DIN = x->shape[1], DOUT = w->shape[0];
  check_dim(w->shape[1] == DIN, "linear: width mismatch, x " + shape_str(x->shape) +
                                    " vs w " + shape_str(w->shape));
  if (bias) check_dim(bias->shape == Shape{DOUT}, "linear: bias must be [DOUT]");

  auto out = zeros<T>({N, DOUT});
  const T* xv = x->values.data();
  const T* wv = w->values.data();
  T* yv = out->values.data();
  for (int n = 0; n < N; ++n) {
    const T* xr = xv + static_cast<long long>(n) * DIN;
    T* yr = yv + static_cast<long long>(n) * DOUT;
    for (int o = 0; o < DOUT; ++o) {
      const T* wr = wv + static_cast<long long>(o) * DIN;
      T acc = bias ? bias->values[o] : T(0);
      for (int d = 0; d < DIN; ++d) acc += xr[d] * wr[d];
      yr[o] = acc;
    }
  }

  const bool rg = x->requires_grad || w->requires_grad || (bias && bias->requires_grad);
  out->requires_grad = rg;
  if (rg) {
    ArrayRef<T> xc = x, wc = w, bc = bias, oc_ = out;
    out->node_id = tape.record([xc, wc, bc, oc_, N, DIN, DOUT]() {
      if (!oc_->has_grad()) return;
      const T* gy = oc_->grad.data();
      if (xc->requires_grad) {
        xc->ensure_grad();
        T* gx = xc->grad.data();
        const T* wv = wc->values.data();
        for (int n = 0; n < N; ++n) {
          const T* gyr = gy + static_cast<long long>(n) * DOUT;
          T* gxr = gx + static_cast<long long>(n) * DIN;
          for (int o = 0; o < DOUT; ++o) {
            const T g = gyr[o];
            if (g == T(0)) continue;
            const T* wr = wv + static_cast<long long>(o) * DIN;
            for (int d = 0; d < DIN; ++d) gxr[d] += g * wr[d];
          }
        }
      }
      if (wc->requires_grad) {
        wc->ensure_grad();
        T* gw = wc->grad.data();
        const T* xv = xc->values.data();
        for (int n = 0; n < N; ++n) {
          const T* gyr = gy + static_cast<long long>(n) * DOUT;
          const T* xr = xv + static_cast<long long>(n) * DIN;
          for (int o = 0; o < DOUT; ++o) {
            const T g = gyr[o];
            if (g == T(0)) continue;
            T* gwr = gw + static_cast<long long>(o) * DIN;
            for (int d = 0; d < DIN; ++d) gwr[d] += g * xr[d];
          }
        }
      }
      if (bc && bc->requires_grad) {
        bc->ensure_grad();
        T* gb = bc->grad.data();
        for (int n = 0; n < N; ++n) {
          const T* gyr = gy + static_cast<long long>(n) * DOUT;
          for (int o = 0; o < DOUT; ++o) gb[o] += gyr[o];
        }
      }
    });
  }
  return out;
}

// ===== Elementwise =====

template <typename T>
ArrayRef<T> relu(Tape<T>& tape, const ArrayRef<T>& x) {
  auto out = zeros<T>(x->shape);
  const long long n = x->size();
  for (long long i = 0; i < n; ++i) out->values[i] = std::max(x->values[i], T(0));
  out->requires_grad = x->requires_grad;
  if (x->requires_grad) {
    ArrayRef<T> xc = x, oc_ = out;
    out->node_id = tape.record([xc, oc_, n]() {
      if (!oc_->has_grad()) return;
      xc->ensure_grad();
      for (long long i = 0; i < n; ++i)
        if (xc->values[i] > T(0)) xc->grad[i] += oc_->grad[i];
    });
  }
  return out;
}

template <typename T>
ArrayRef<T> softplus(Tape<T>& tape, const ArrayRef<T>& x) {
  auto out = zeros<T>(x->shape);
  const long long n = x->size();
  for (long long i = 0; i < n; ++i) {
    const T v = x->values[i];
    out->values[i] = v > T(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  }
  out->requires_grad = x->requires_grad;
  if (x->requires_grad) {
    ArrayRef<T> xc = x, oc_ = out;
    out->node_id = tape.record([xc, oc_, n]() {
      if (!oc_->has_grad()) return;
      xc->ensure_grad();
      for (long long i = 0; i < n; ++i) {
        const T v = xc->values[i];
        const T sig = v > T(0) ? T(1) / (T(1) + std::exp(-v))
                               : std::exp(v) / (T(1) + std::exp(v));
        xc->grad[i] += sig * oc_->grad[i];
      }
    });
  }
  return out;
}

template <typename T>
ArrayRef<T> add(Tape<T>& tape, const ArrayRef<T>& a, const ArrayRef<T>& b) {
  check_dim(a->shape == b->shape, "add: shape mismatch " + shape_str(a->shape) + " vs " +
                                      shape_str(b->shape));
  auto out = zeros<T>(a->shape);
  const long long n = a->size();
  for (long long i = 0; i < n; ++i) out->values[i] = a->values[i] + b->values[i];
  out->requires_grad = a->requires_grad || b->requires_grad;
  if (out->requires_grad) {
    ArrayRef<T> ac = a, bc = b, oc_ = out;
    out->node_id = tape.record([ac, bc, oc_, n]() {
      if (!oc_->has_grad()) return;
      if (ac->requires_grad) {
        ac->ensure_grad();
        for (long long i = 0; i < n; ++i) ac->grad[i] += oc_->grad[i];
      }
      if (bc->requires_grad) {
        bc->ensure_grad();
        for (long long i = 0; i < n; ++i) bc->grad[i] += oc_->grad[i];
      }
    });
  }
  return out;
}

// Multiply by a constant (non-differentiable) factor.
template <typename T>
ArrayRef<T> scale(Tape<T>& tape, const ArrayRef<T>& x, T factor) {
  auto out = zeros<T>(x->shape);
  const long long n = x->size();
  for (long long i = 0; i < n; ++i) out->values[i] = factor * x->values[i];
  out->requires_grad = x->requires_grad;
  if (x->requires_grad) {
    ArrayRef<T> xc = x, oc_ = out;
    out->node_id = tape.record([xc, oc_, n, factor]() {
      if (!oc_->has_grad()) return;
      xc->ensure_grad();
      for (long long i = 0; i < n; ++i) xc->grad[i] += factor * oc_->grad[i];
    });
  }
  return out;
}

// y = a*x + b with learnable scalars a, b (both shape [1]).
template <typename T>
ArrayRef<T> scalar_affine(Tape<T>& tape, const ArrayRef<T>& x, const ArrayRef<T>& a,
                          const ArrayRef<T>& b) {
  check_dim(a->size() == 1 && b->size() == 1, "scalar_affine: a and b must be scalars");
  auto out = zeros<T>(x->shape);
  const long long n = x->size();
  const T av = a->values[0], bv = b->values[0];
  for (long long i = 0; i < n; ++i) out->values[i] = av * x->values[i] + bv;
  out->requires_grad = x->requires_grad || a->requires_grad || b->requires_grad;
  if (out->requires_grad) {
    ArrayRef<T> xc = x, ac = a, bc = b, oc_ = out;
    out->node_id = tape.record([xc, ac, bc, oc_, n, av]() {
      if (!oc_->has_grad()) return;
      const T* gy = oc_->grad.data();
      if (xc->requires_grad) {
        xc->ensure_grad();
        for (long long i = 0; i < n; ++i) xc->grad[i] += av * gy[i];
      }
      if (ac->requires_grad) {
        ac->ensure_grad();
        T acc = T(0);
        for (long long i = 0; i < n; ++i) acc += gy[i] * xc->values[i];
        ac->grad[0] += acc;
      }
      if (bc->requires_grad) {
        bc->ensure_grad();
        T acc = T(0);
        for (long long i = 0; i < n; ++i) acc += gy[i];
        bc->grad[0] += acc;
      }
    });
  }
  return out;
}

// ===== Reductions =====

template <typename T>
ArrayRef<T> mean_all(Tape<T>& tape, const ArrayRef<T>& x) {
  const long long n = x->size();
  check_dim(n >= 1, "mean_all: empty array");
  T s = T(0);
  for (long long i = 0; i < n; ++i) s += x->values[i];
  auto out = scalar_array<T>(s / T(n));
  out->requires_grad = x->requires_grad;
  if (x->requires_grad) {
    ArrayRef<T> xc = x, oc_ = out;
    out->node_id = tape.record([xc, oc_, n]() {
      if (!oc_->has_grad()) return;
      xc->ensure_grad();
      const T g = oc_->grad[0] / T(n);
      for (long long i = 0; i < n; ++i) xc->grad[i] += g;
    });
  }
  return out;
}

// Inner product with a fixed coefficient vector; scalarizes multi-output
// ops for gradient checks.
template <typename T>
ArrayRef<T> weighted_sum(Tape<T>& tape, const ArrayRef<T>& x, std::vector<T> coeffs) {
  check_dim(static_cast<long long>(coeffs.size()) == x->size(),
            "weighted_sum: coefficient count mismatch");
  T s = T(0);
  for (long long i = 0; i < x->size(); ++i) s += coeffs[i] * x->values[i];
  auto out = scalar_array<T>(s);
  out->requires_grad = x->requires_grad;
  if (x->requires_grad) {
    ArrayRef<T> xc = x, oc_ = out;
    out->node_id = tape.record([xc, oc_, coeffs = std::move(coeffs)]() {
      if (!oc_->has_grad()) return;
      xc->ensure_grad();
      const T g = oc_->grad[0];
      for (long long i = 0; i < xc->size(); ++i) xc->grad[i] += g * coeffs[i];
    });
  }
  return out;
}

// x: [B, C, L] -> [B, C], mean over the length axis.
template <typename T>
ArrayRef<T> global_avg_pool(Tape<T>& tape, const ArrayRef<T>& x) {
  check_dim(x && x->shape.size() == 3, "global_avg_pool: x must be [B,C,L]");
  const int B = x->shape[0], C = x->shape[1], L = x->shape[2];
  auto out = zeros<T>({B, C});
  const T* xv = x->values.data();
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const T* xr = xv + (static_cast<long long>(b) * C + c) * L;
      T s = T(0);
      for (int l = 0; l < L; ++l) s += xr[l];
      out->values[static_cast<long long>(b) * C + c] = s / T(L);
    }
  out->requires_grad = x->requires_grad;
  if (x->requires_grad) {
    ArrayRef<T> xc = x, oc_ = out;
    out->node_id = tape.record([xc, oc_, B, C, L]() {
      if (!oc_->has_grad()) return;
      xc->ensure_grad();
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
          const T g = oc_->grad[static_cast<long long>(b) * C + c] / T(L);
          T* gxr = xc->grad.data() + (static_cast<long long>(b) * C + c) * L;
          for (int l = 0; l < L; ++l) gxr[l] += g;
        }
    });
  }
  return out;
}

// ===== Broadcast arithmetic over [B, C, L] =====

// y[b,c,l] = x[b,c,l] - s[b,c]
template <typename T>
ArrayRef<T> sub_bc(Tape<T>& tape, const ArrayRef<T>& x, const ArrayRef<T>& s) {
  check_dim(x->shape.size() == 3 && s->shape.size() == 2 && s->shape[0] == x->shape[0] &&
                s->shape[1] == x->shape[1],
            "sub_bc: expected x [B,C,L] and s [B,C]");
  const int B = x->shape[0], C = x->shape[1], L = x->shape[2];
  auto out = zeros<T>(x->shape);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const long long bc = static_cast<long long>(b) * C + c;
      const T sv = s->values[bc];
      const T* xr = x->values.data() + bc * L;
      T* yr = out->values.data() + bc * L;
      for (int l = 0; l < L; ++l) yr[l] = xr[l] - sv;
    }
  out->requires_grad = x->requires_grad || s->requires_grad;
  if (out->requires_grad) {
    ArrayRef<T> xc = x, sc = s, oc_ = out;
    out->node_id = tape.record([xc, sc, oc_, B, C, L]() {
      if (!oc_->has_grad()) return;
      const T* gy = oc_->grad.data();
      if (xc->requires_grad) {
        xc->ensure_grad();
        const long long n = oc_->size();
        for (long long i = 0; i < n; ++i) xc->grad[i] += gy[i];
      }
      if (sc->requires_grad) {
        sc->ensure_grad();
        for (int b = 0; b < B; ++b)
          for (int c = 0; c < C; ++c) {
            const long long bc = static_cast<long long>(b) * C + c;
            const T* gyr = gy + bc * L;
            T acc = T(0);
            for (int l = 0; l < L; ++l) acc += gyr[l];
            sc->grad[bc] -= acc;
          }
      }
    });
  }
  return out;
}

// y[b,c,l] = x[b,c,l] / s[b,c]; s must be bounded away from zero by the
// caller (the stddev outputs of channel_stats are).
template <typename T>
ArrayRef<T> div_bc(Tape<T>& tape, const ArrayRef<T>& x, const ArrayRef<T>& s) {
  check_dim(x->shape.size() == 3 && s->shape.size() == 2 && s->shape[0] == x->shape[0] &&
                s->shape[1] == x->shape[1],
            "div_bc: expected x [B,C,L] and s [B,C]");
  const int B = x->shape[0], C = x->shape[1], L = x->shape[2];
  auto out = zeros<T>(x->shape);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const long long bc = static_cast<long long>(b) * C + c;
      const T iv = T(1) / s->values[bc];
      const T* xr = x->values.data() + bc * L;
      T* yr = out->values.data() + bc * L;
      for (int l = 0; l < L; ++l) yr[l] = xr[l] * iv;
    }
  out->requires_grad = x->requires_grad || s->requires_grad;
  if (out->requires_grad) {
    ArrayRef<T> xc = x, sc = s, oc_ = out;
    out->node_id = tape.record([xc, sc, oc_, B, C, L]() {
      if (!oc_->has_grad()) return;
      const T* gy = oc_->grad.data();
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
          const long long bc = static_cast<long long>(b) * C + c;
          const T sv = sc->values[bc];
          const T iv = T(1) / sv;
          const T* gyr = gy + bc * L;
          if (xc->requires_grad) {
            xc->ensure_grad();
            T* gxr = xc->grad.data() + bc * L;
            for (int l = 0; l < L; ++l) gxr[l] += gyr[l] * iv;
          }
          if (sc->requires_grad) {
            sc->ensure_grad();
            const T* yr = oc_->values.data() + bc * L;
            T acc = T(0);
            for (int l = 0; l < L; ++l) acc += gyr[l] * yr[l];
            sc->grad[bc] -= acc * iv;
          }
        }
    });
  }
  return out;
}

// y[b,c,l] = x[b,c,l] * p[c]
template <typename T>
ArrayRef<T> mul_channel(Tape<T>& tape, const ArrayRef<T>& x, const ArrayRef<T>& p) {
  check_dim(x->shape.size() == 3 && p->shape == Shape{x->shape[1]},
            "mul_channel: expected x [B,C,L] and p [C]");
  const int B = x->shape[0], C = x->shape[1], L = x->shape[2];
  auto out = zeros<T>(x->shape);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const long long bc = static_cast<long long>(b) * C + c;
      const T pv = p->values[c];
      const T* xr = x->values.data() + bc * L;
      T* yr = out->values.data() + bc * L;
      for (int l = 0; l < L; ++l) yr[l] = xr[l] * pv;
    }
  out->requires_grad = x->requires_grad || p->requires_grad;
  if (out->requires_grad) {
    ArrayRef<T> xc = x, pc = p, oc_ = out;
    out->node_id = tape.record([xc, pc, oc_, B, C, L]() {
      if (!oc_->has_grad()) return;
      const T* gy = oc_->grad.data();
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
          const long long bc = static_cast<long long>(b) * C + c;
          const T* gyr = gy + bc * L;
          if (xc->requires_grad) {
            xc->ensure_grad();
            const T pv = pc->values[c];
            T* gxr = xc->grad.data() + bc * L;
            for (int l = 0; l < L; ++l) gxr[l] += gyr[l] * pv;
          }
          if (pc->requires_grad) {
            pc->ensure_grad();
            const T* xr = xc->values.data() + bc * L;
            T acc = T(0);
            for (int l = 0; l < L; ++l) acc += gyr[l] * xr[l];
            pc->grad[c] += acc;
          }
        }
    });
  }
  return out;
}

// y[b,c,l] = x[b,c,l] + p[c]
template <typename T>
ArrayRef<T> add_channel(Tape<T>& tape, const ArrayRef<T>& x, const ArrayRef<T>& p) {
  check_dim(x->shape.size() == 3 && p->shape == Shape{x->shape[1]},
            "add_channel: expected x [B,C,L] and p [C]");
  const int B = x->shape[0], C = x->shape[1], L = x->shape[2];
  auto out = zeros<T>(x->shape);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const long long bc = static_cast<long long>(b) * C + c;
      const T pv = p->values[c];
      const T* xr = x->values.data() + bc * L;
      T* yr = out->values.data() + bc * L;
      for (int l = 0; l < L; ++l) yr[l] = xr[l] + pv;
    }
  out->requires_grad = x->requires_grad || p->requires_grad;
  if (out->requires_grad) {
    ArrayRef<T> xc = x, pc = p, oc_ = out;
    out->node_id = tape.record([xc, pc, oc_, B, C, L]() {
      if (!oc_->has_grad()) return;
      const T* gy = oc_->grad.data();
      if (xc->requires_grad) {
        xc->ensure_grad();
        const long long n = oc_->size();
        for (long long i = 0; i < n; ++i) xc->grad[i] += gy[i];
      }
      if (pc->requires_grad) {
        pc->ensure_grad();
        for (int b = 0; b < B; ++b)
          for (int c = 0; c < C; ++c) {
            const T* gyr = gy + (static_cast<long long>(b) * C + c) * L;
            T acc = T(0);
            for (int l = 0; l < L; ++l) acc += gyr[l];
            pc->grad[c] += acc;
          }
      }
    });
  }
  return out;
}

// ===== Shape plumbing =====

template <typename T>
ArrayRef<T> reshape(Tape<T>& tape, const ArrayRef<T>& x, Shape shape) {
  check_dim(numel(shape) == x->size(), "reshape: " + shape_str(x->shape) + " -> " +
                                           shape_str(shape) + " changes element count");
  auto out = make_array<T>(std::move(shape), x->values);
  out->requires_grad = x->requires_grad;
  if (x->requires_grad) {
    ArrayRef<T> xc = x, oc_ = out;
    out->node_id = tape.record([xc, oc_]() {
      if (!oc_->has_grad()) return;
      xc->ensure_grad();
      for (long long i = 0; i < xc->size(); ++i) xc->grad[i] += oc_->grad[i];
    });
  }
  return out;
}

// Concatenate along axis 0. All parts must agree on trailing dimensions.
template <typename T>
ArrayRef<T> concat0(Tape<T>& tape, const std::vector<ArrayRef<T>>& parts) {
  check_dim(!parts.empty(), "concat0: no inputs");
  const Shape& first = parts[0]->shape;
  check_dim(!first.empty(), "concat0: inputs must have rank >= 1");
  long long row = 1;
  for (std::size_t d = 1; d < first.size(); ++d) row *= first[d];
  int total = 0;
  for (const auto& p : parts) {
    check_dim(p->shape.size() == first.size(), "concat0: rank mismatch");
    for (std::size_t d = 1; d < first.size(); ++d)
      check_dim(p->shape[d] == first[d], "concat0: trailing dimension mismatch");
    total += p->shape[0];
  }
  Shape out_shape = first;
  out_shape[0] = total;
  auto out = zeros<T>(out_shape);
  long long off = 0;
  bool rg = false;
  for (const auto& p : parts) {
    std::copy(p->values.begin(), p->values.end(), out->values.begin() + off);
    off += p->size();
    rg = rg || p->requires_grad;
  }
  out->requires_grad = rg;
  if (rg) {
    std::vector<ArrayRef<T>> pc = parts;
    ArrayRef<T> oc_ = out;
    out->node_id = tape.record([pc, oc_]() {
      if (!oc_->has_grad()) return;
      long long off = 0;
      for (const auto& p : pc) {
        if (p->requires_grad) {
          p->ensure_grad();
          for (long long i = 0; i < p->size(); ++i) p->grad[i] += oc_->grad[off + i];
        }
        off += p->size();
      }
    });
  }
  return out;
}

// ===== Row geometry =====

// x: [N, D] -> rows scaled to unit Euclidean norm (norms floored at eps).
template <typename T>
ArrayRef<T> normalize_rows(Tape<T>& tape, const ArrayRef<T>& x, T eps = T(kStdEps)) {
  check_dim(x && x->shape.size() == 2, "normalize_rows: x must be [N,D]");
  const int N = x->shape[0], D = x->shape[1];
  auto out = zeros<T>(x->shape);
  std::vector<T> denom(N);
  std::vector<char> floored(N, 0);
  for (int n = 0; n < N; ++n) {
    const T* xr = x->values.data() + static_cast<long long>(n) * D;
    T sq = T(0);
    for (int d = 0; d < D; ++d) sq += xr[d] * xr[d];
    const T norm = std::sqrt(sq);
    floored[n] = norm < eps;
    denom[n] = std::max(norm, eps);
    T* yr = out->values.data() + static_cast<long long>(n) * D;
    const T iv = T(1) / denom[n];
    for (int d = 0; d < D; ++d) yr[d] = xr[d] * iv;
  }
  out->requires_grad = x->requires_grad;
  if (x->requires_grad) {
    ArrayRef<T> xc = x, oc_ = out;
    out->node_id = tape.record([xc, oc_, denom, floored, N, D]() {
      if (!oc_->has_grad()) return;
      xc->ensure_grad();
      for (int n = 0; n < N; ++n) {
        const T* gyr = oc_->grad.data() + static_cast<long long>(n) * D;
        const T* yr = oc_->values.data() + static_cast<long long>(n) * D;
        T* gxr = xc->grad.data() + static_cast<long long>(n) * D;
        const T iv = T(1) / denom[n];
        if (floored[n]) {
          for (int d = 0; d < D; ++d) gxr[d] += gyr[d] * iv;
        } else {
          T dot = T(0);
          for (int d = 0; d < D; ++d) dot += gyr[d] * yr[d];
          for (int d = 0; d < D; ++d) gxr[d] += (gyr[d] - dot * yr[d]) * iv;
        }
      }
    });
  }
  return out;
}

// u, v: [D] vectors -> scalar cosine similarity with eps-floored norms.
template <typename T>
ArrayRef<T> cosine_similarity(Tape<T>& tape, const ArrayRef<T>& u, const ArrayRef<T>& v,
                              T eps = T(kStdEps)) {
  check_dim(u->shape.size() == 1 && v->shape == u->shape,
            "cosine_similarity: expected two equal-length vectors");
  const int D = u->shape[0];
  T uu = T(0), vv = T(0), uv = T(0);
  for (int d = 0; d < D; ++d) {
    uu += u->values[d] * u->values[d];
    vv += v->values[d] * v->values[d];
    uv += u->values[d] * v->values[d];
  }
  const T nu = std::sqrt(uu), nv = std::sqrt(vv);
  const T du = std::max(nu, eps), dv = std::max(nv, eps);
  const T c = uv / (du * dv);
  auto out = scalar_array<T>(c);
  out->requires_grad = u->requires_grad || v->requires_grad;
  if (out->requires_grad) {
    ArrayRef<T> uc = u, vc = v, oc_ = out;
    const bool fu = nu < eps, fv = nv < eps;
    out->node_id = tape.record([uc, vc, oc_, du, dv, c, fu, fv, D]() {
      if (!oc_->has_grad()) return;
      const T g = oc_->grad[0];
      if (uc->requires_grad) {
        uc->ensure_grad();
        for (int d = 0; d < D; ++d) {
          T t = vc->values[d] / (du * dv);
          if (!fu) t -= c * uc->values[d] / (du * du);
          uc->grad[d] += g * t;
        }
      }
      if (vc->requires_grad) {
        vc->ensure_grad();
        for (int d = 0; d < D; ++d) {
          T t = uc->values[d] / (du * dv);
          if (!fv) t -= c * vc->values[d] / (dv * dv);
          vc->grad[d] += g * t;
        }
      }
    });
  }
  return out;
}

// ===== Classification loss =====

// logits: [N, C], labels: N ints in [0, C). Returns the mean negative
// log-likelihood under a row-wise softmax (log-sum-exp stabilized).
template <typename T>
ArrayRef<T> softmax_cross_entropy(Tape<T>& tape, const ArrayRef<T>& logits,
                                  const std::vector<int>& labels) {
  check_dim(logits && logits->shape.size() == 2, "softmax_cross_entropy: logits must be [N,C]");
  const int N = logits->shape[0], C = logits->shape[1];
  check_dim(static_cast<int>(labels.size()) == N,
            "softmax_cross_entropy: label count mismatch");
  for (int n = 0; n < N; ++n)
    check_dim(labels[n] >= 0 && labels[n] < C, "softmax_cross_entropy: label out of range");

  std::vector<T> probs(static_cast<std::size_t>(N) * C);
  T loss = T(0);
  for (int n = 0; n < N; ++n) {
    const T* lr = logits->values.data() + static_cast<long long>(n) * C;
    T m = lr[0];
    for (int c = 1; c < C; ++c) m = std::max(m, lr[c]);
    T z = T(0);
    for (int c = 0; c < C; ++c) z += std::exp(lr[c] - m);
    const T lse = m + std::log(z);
    loss += lse - lr[labels[n]];
    T* pr = probs.data() + static_cast<long long>(n) * C;
    for (int c = 0; c < C; ++c) pr[c] = std::exp(lr[c] - lse);
  }
  auto out = scalar_array<T>(loss / T(N));
  out->requires_grad = logits->requires_grad;
  if (logits->requires_grad) {
    ArrayRef<T> lc = logits, oc_ = out;
    out->node_id = tape.record([lc, oc_, probs = std::move(probs), labels, N, C]() {
      if (!oc_->has_grad()) return;
      lc->ensure_grad();
      const T g = oc_->grad[0] / T(N);
      for (int n = 0; n < N; ++n) {
        const T* pr = probs.data() + static_cast<long long>(n) * C;
        T* gr = lc->grad.data() + static_cast<long long>(n) * C;
        for (int c = 0; c < C; ++c) gr[c] += g * (pr[c] - (c == labels[n] ? T(1) : T(0)));
      }
    });
  }
  return out;
}

// ===== Adaptive instance restyling =====

// Standardizes each (sample, channel) slice of h with its own statistics,
// then applies the learned per-channel style scale and shift:
//   out = sigma_style * (h - mean(h)) / std(h) + mu_style.
// Built from channel_stats and broadcast arithmetic so the full dependence
// of the statistics on h participates in the backward pass.
template <typename T>
ArrayRef<T> adain(Tape<T>& tape, const ArrayRef<T>& h, const ArrayRef<T>& mu_style,
                  const ArrayRef<T>& sigma_style, T eps = T(kStdEps)) {
  check_dim(h && h->shape.size() == 3, "adain: h must be [B,C,L]");
  check_dim(mu_style->shape == Shape{h->shape[1]} && sigma_style->shape == Shape{h->shape[1]},
            "adain: style parameters must be [C]");
  auto stats = channel_stats(tape, h, eps);
  auto centered = sub_bc(tape, h, stats.mean);
  auto standardized = div_bc(tape, centered, stats.stddev);
  return add_channel(tape, mul_channel(tape, standardized, sigma_style), mu_style);
}

}  // namespace acdg
