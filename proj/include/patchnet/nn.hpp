#pragma once

#include <cmath>
#include <cstring>
#include <span>
#include <vector>

#include "patchnet/error.hpp"
#include "patchnet/tensor.hpp"

namespace patchnet {

// Forward/backward primitives for the patch encoder. Layout is CHW per
// sample (no batch axis; batching is handled by the caller, one sample per
// worker). Convolutions go through im2col + a small GEMM.

// C[m x n] += A[m x k] * B[k x n], all row-major.
template <class S>
inline void gemm_acc(int m, int k, int n, const S* a, const S* b, S* c) {
  for (int i = 0; i < m; ++i) {
    S* ci = c + static_cast<size_t>(i) * n;
    const S* ai = a + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      S av = ai[p];
      if (av == S(0)) continue;
      const S* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[m x n] += A^T * B where A is [k x m] row-major.
template <class S>
inline void gemm_tn_acc(int m, int k, int n, const S* a, const S* b, S* c) {
  for (int p = 0; p < k; ++p) {
    const S* ap = a + static_cast<size_t>(p) * m;
    const S* bp = b + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      S av = ap[i];
      if (av == S(0)) continue;
      S* ci = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[m x n] += A * B^T where B is [n x k] row-major.
template <class S>
inline void gemm_nt_acc(int m, int k, int n, const S* a, const S* b, S* c) {
  for (int i = 0; i < m; ++i) {
    const S* ai = a + static_cast<size_t>(i) * k;
    S* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const S* bj = b + static_cast<size_t>(j) * k;
      S acc = S(0);
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

struct Conv2dShape {
  int in_c = 0, in_h = 0, in_w = 0;
  int out_c = 0;
  int kernel = 3, stride = 2, pad = 1;

  int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
  size_t in_size() const { return static_cast<size_t>(in_c) * in_h * in_w; }
  size_t out_size() const { return static_cast<size_t>(out_c) * out_h() * out_w(); }
  size_t weight_size() const { return static_cast<size_t>(out_c) * in_c * kernel * kernel; }
  int col_rows() const { return in_c * kernel * kernel; }
  int col_cols() const { return out_h() * out_w(); }

  std::string str() const {
    return "conv(in=" + format_int(in_c) + "x" + format_int(in_h) + "x" +
           format_int(in_w) + ", out_c=" + format_int(out_c) + ", k=" +
           format_int(kernel) + ", s=" + format_int(stride) + ", p=" + format_int(pad) + ")";
  }

  void validate() const {
    require(in_c > 0 && in_h > 0 && in_w > 0 && out_c > 0 && kernel > 0 && stride > 0 &&
                pad >= 0 && out_h() > 0 && out_w() > 0,
            ErrorCode::InvariantViolation, "invalid " + str());
  }
};

// cols is [col_rows x col_cols]; zero padding contributes zeros.
template <class S>
inline void im2col(const S* x, const Conv2dShape& sh, S* cols) {
  const int oh = sh.out_h(), ow = sh.out_w();
  size_t q = 0;
  for (int ic = 0; ic < sh.in_c; ++ic) {
    const S* xc = x + static_cast<size_t>(ic) * sh.in_h * sh.in_w;
    for (int ky = 0; ky < sh.kernel; ++ky) {
      for (int kx = 0; kx < sh.kernel; ++kx) {
        S* row = cols + q * static_cast<size_t>(oh) * ow;
        ++q;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * sh.stride + ky - sh.pad;
          S* dst = row + static_cast<size_t>(oy) * ow;
          if (iy < 0 || iy >= sh.in_h) {
            std::memset(dst, 0, sizeof(S) * static_cast<size_t>(ow));
            continue;
          }
          const S* src = xc + static_cast<size_t>(iy) * sh.in_w;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * sh.stride + kx - sh.pad;
            dst[ox] = (ix >= 0 && ix < sh.in_w) ? src[ix] : S(0);
          }
        }
      }
    }
  }
}

template <class S>
inline void col2im_acc(const S* cols, const Conv2dShape& sh, S* dx) {
  const int oh = sh.out_h(), ow = sh.out_w();
  size_t q = 0;
  for (int ic = 0; ic < sh.in_c; ++ic) {
    S* xc = dx + static_cast<size_t>(ic) * sh.in_h * sh.in_w;
    for (int ky = 0; ky < sh.kernel; ++ky) {
      for (int kx = 0; kx < sh.kernel; ++kx) {
        const S* row = cols + q * static_cast<size_t>(oh) * ow;
        ++q;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * sh.stride + ky - sh.pad;
          if (iy < 0 || iy >= sh.in_h) continue;
          const S* src = row + static_cast<size_t>(oy) * ow;
          S* dst = xc + static_cast<size_t>(iy) * sh.in_w;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * sh.stride + kx - sh.pad;
            if (ix >= 0 && ix < sh.in_w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// y = W * cols + b. `cols` must hold im2col(x) on exit (kept for backward).
template <class S>
inline void conv2d_forward(const S* x, const S* w, const S* b, const Conv2dShape& sh,
                           S* cols, S* y) {
  sh.validate();
  im2col(x, sh, cols);
  const int n = sh.col_cols();
  for (int oc = 0; oc < sh.out_c; ++oc) {
    S* yr = y + static_cast<size_t>(oc) * n;
    for (int j = 0; j < n; ++j) yr[j] = b[oc];
  }
  gemm_acc(sh.out_c, sh.col_rows(), n, w, cols, y);
}

// Accumulates dw/db; writes dx when non-null. `cols` is the forward scratch,
// `dcols` a [col_rows x col_cols] workspace.
template <class S>
inline void conv2d_backward(const S* w, const S* dy, const S* cols, const Conv2dShape& sh,
                            S* dcols, S* dx, S* dw, S* db) {
  const int n = sh.col_cols(), k = sh.col_rows();
  for (int oc = 0; oc < sh.out_c; ++oc) {
    const S* dyr = dy + static_cast<size_t>(oc) * n;
    S acc = S(0);
    for (int j = 0; j < n; ++j) acc += dyr[j];
    db[oc] += acc;
  }
  gemm_nt_acc(sh.out_c, n, k, dy, cols, dw);
  if (dx) {
    std::fill(dcols, dcols + static_cast<size_t>(k) * n, S(0));
    gemm_tn_acc(k, sh.out_c, n, w, dy, dcols);
    col2im_acc(dcols, sh, dx);
  }
}

template <class S>
inline void relu_forward(const S* x, size_t n, S* y) {
  for (size_t i = 0; i < n; ++i) y[i] = x[i] > S(0) ? x[i] : S(0);
}

// Uses the pre-activation sign; gradient at exactly 0 is 0.
template <class S>
inline void relu_backward(const S* x, const S* dy, size_t n, S* dx) {
  for (size_t i = 0; i < n; ++i) dx[i] = x[i] > S(0) ? dy[i] : S(0);
}

// Global average pool CHW -> C.
template <class S>
inline void gap_forward(const S* x, int c, int h, int w, S* y) {
  const size_t plane = static_cast<size_t>(h) * w;
  for (int ic = 0; ic < c; ++ic) {
    const S* xc = x + ic * plane;
    S acc = S(0);
    for (size_t i = 0; i < plane; ++i) acc += xc[i];
    y[ic] = acc / static_cast<S>(plane);
  }
}

template <class S>
inline void gap_backward(const S* dy, int c, int h, int w, S* dx) {
  const size_t plane = static_cast<size_t>(h) * w;
  for (int ic = 0; ic < c; ++ic) {
    S g = dy[ic] / static_cast<S>(plane);
    S* xc = dx + ic * plane;
    for (size_t i = 0; i < plane; ++i) xc[i] = g;
  }
}

// y = W x + b with W [out x in] row-major.
template <class S>
inline void dense_forward(const S* w, const S* b, const S* x, int out, int in, S* y) {
  for (int i = 0; i < out; ++i) {
    const S* wr = w + static_cast<size_t>(i) * in;
    S acc = b[i];
    for (int j = 0; j < in; ++j) acc += wr[j] * x[j];
    y[i] = acc;
  }
}

template <class S>
inline void dense_backward(const S* w, const S* x, const S* dy, int out, int in,
                           S* dx, S* dw, S* db) {
  if (dx) std::fill(dx, dx + in, S(0));
  for (int i = 0; i < out; ++i) {
    const S g = dy[i];
    db[i] += g;
    const S* wr = w + static_cast<size_t>(i) * in;
    S* dwr = dw + static_cast<size_t>(i) * in;
    for (int j = 0; j < in; ++j) {
      dwr[j] += g * x[j];
      if (dx) dx[j] += g * wr[j];
    }
  }
}

// y = x / ||x||2. Rejects near-zero norms (a collapsed embedding upstream).
// Returns the norm for the backward pass.
template <class S>
inline S l2_normalize(const S* x, size_t n, S* y, S eps = norm_epsilon<S>()) {
  S sq = S(0);
  for (size_t i = 0; i < n; ++i) sq += x[i] * x[i];
  S norm = std::sqrt(sq);
  require(norm > eps, ErrorCode::InvariantViolation,
          "l2_normalize: norm " + format_double(static_cast<double>(norm)) +
              " below epsilon (collapsed vector)");
  S inv = S(1) / norm;
  for (size_t i = 0; i < n; ++i) y[i] = x[i] * inv;
  return norm;
}

// dx = (I - y y^T) dy / norm, the tangent-space projection of dy.
template <class S>
inline void l2_normalize_backward(const S* y, S norm, const S* dy, size_t n, S* dx) {
  S dot = S(0);
  for (size_t i = 0; i < n; ++i) dot += y[i] * dy[i];
  S inv = S(1) / norm;
  for (size_t i = 0; i < n; ++i) dx[i] = (dy[i] - y[i] * dot) * inv;
}

template <class S>
inline S logsumexp(const S* z, size_t n) {
  require(n > 0, ErrorCode::InvariantViolation, "logsumexp of empty vector");
  S m = z[0];
  for (size_t i = 1; i < n; ++i) m = std::max(m, z[i]);
  require(std::isfinite(static_cast<double>(m)), ErrorCode::InvariantViolation,
          "logsumexp: non-finite logits");
  S acc = S(0);
  for (size_t i = 0; i < n; ++i) acc += std::exp(z[i] - m);
  return m + std::log(acc);
}

// Max-subtracted stable softmax. Rejects non-finite logits.
template <class S>
inline void softmax(const S* z, size_t n, S* p) {
  require(n > 0, ErrorCode::InvariantViolation, "softmax of empty vector");
  S m = z[0];
  for (size_t i = 1; i < n; ++i) m = std::max(m, z[i]);
  require(std::isfinite(static_cast<double>(m)), ErrorCode::InvariantViolation,
          "softmax: non-finite logits");
  S acc = S(0);
  for (size_t i = 0; i < n; ++i) {
    p[i] = std::exp(z[i] - m);
    acc += p[i];
  }
  S inv = S(1) / acc;
  for (size_t i = 0; i < n; ++i) p[i] *= inv;
}

// dz_j = p_j (dp_j - sum_i p_i dp_i).
template <class S>
inline void softmax_backward(const S* p, const S* dp, size_t n, S* dz) {
  S dot = S(0);
  for (size_t i = 0; i < n; ++i) dot += p[i] * dp[i];
  for (size_t i = 0; i < n; ++i) dz[i] = p[i] * (dp[i] - dot);
}

}  // namespace patchnet
