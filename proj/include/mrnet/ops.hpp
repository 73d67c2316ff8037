#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mrnet/tensor.hpp"

// Differentiable operations over TensorT. Every op validates shapes, computes
// the forward value, and (when the graph is recording and some input needs a
// gradient) appends one backward closure to the tape. Gradients accumulate
// additively, so a tensor consumed k times receives the sum of k
// contributions.

namespace mrnet {

namespace detail {

template <typename S>
inline void require_same_shape(const char* op, const TensorT<S>& a,
                               const TensorT<S>& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename S>
inline bool track(const GraphT<S>& g, std::initializer_list<bool> flags) {
  if (!g.recording()) return false;
  for (bool f : flags)
    if (f) return true;
  return false;
}

}  // namespace detail

template <typename S>
TensorT<S> add(GraphT<S>& g, const TensorT<S>& a, const TensorT<S>& b) {
  detail::require_same_shape("add", a, b);
  auto out = TensorT<S>::zeros(a.shape(),
                               detail::track(g, {a.requires_grad(), b.requires_grad()}));
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = a.at(i) + b.at(i);
  if (out.requires_grad())
    g.record(out, [a, b, out] {
      const auto& go = out.grad();
      if (go.empty()) return;
      if (a.requires_grad()) {
        auto& ga = a.grad_buffer();
        for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad_buffer();
        for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      }
    });
  return out;
}

template <typename S>
TensorT<S> sub(GraphT<S>& g, const TensorT<S>& a, const TensorT<S>& b) {
  detail::require_same_shape("sub", a, b);
  auto out = TensorT<S>::zeros(a.shape(),
                               detail::track(g, {a.requires_grad(), b.requires_grad()}));
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = a.at(i) - b.at(i);
  if (out.requires_grad())
    g.record(out, [a, b, out] {
      const auto& go = out.grad();
      if (go.empty()) return;
      if (a.requires_grad()) {
        auto& ga = a.grad_buffer();
        for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad_buffer();
        for (size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
      }
    });
  return out;
}

template <typename S>
TensorT<S> mul(GraphT<S>& g, const TensorT<S>& a, const TensorT<S>& b) {
  detail::require_same_shape("mul", a, b);
  auto out = TensorT<S>::zeros(a.shape(),
                               detail::track(g, {a.requires_grad(), b.requires_grad()}));
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = a.at(i) * b.at(i);
  if (out.requires_grad())
    g.record(out, [a, b, out] {
      const auto& go = out.grad();
      if (go.empty()) return;
      if (a.requires_grad()) {
        auto& ga = a.grad_buffer();
        for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * b.at(static_cast<int64_t>(i));
      }
      if (b.requires_grad()) {
        auto& gb = b.grad_buffer();
        for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * a.at(static_cast<int64_t>(i));
      }
    });
  return out;
}

template <typename S>
TensorT<S> div(GraphT<S>& g, const TensorT<S>& a, const TensorT<S>& b) {
  detail::require_same_shape("div", a, b);
  auto out = TensorT<S>::zeros(a.shape(),
                               detail::track(g, {a.requires_grad(), b.requires_grad()}));
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = a.at(i) / b.at(i);
  if (out.requires_grad())
    g.record(out, [a, b, out] {
      const auto& go = out.grad();
      if (go.empty()) return;
      const int64_t n2 = out.numel();
      for (int64_t i = 0; i < n2; ++i) {
        S gi = go[static_cast<size_t>(i)];
        S bi = b.at(i);
        if (a.requires_grad())
          a.grad_buffer()[static_cast<size_t>(i)] += gi / bi;
        if (b.requires_grad())
          b.grad_buffer()[static_cast<size_t>(i)] -=
              gi * a.at(i) / (bi * bi);
      }
    });
  return out;
}

// k*a + c, elementwise.
template <typename S>
TensorT<S> affine(GraphT<S>& g, const TensorT<S>& a, S k, S c) {
  auto out = TensorT<S>::zeros(a.shape(), detail::track(g, {a.requires_grad()}));
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = k * a.at(i) + c;
  if (out.requires_grad())
    g.record(out, [a, out, k] {
      const auto& go = out.grad();
      if (go.empty()) return;
      auto& ga = a.grad_buffer();
      for (size_t i = 0; i < go.size(); ++i) ga[i] += k * go[i];
    });
  return out;
}

template <typename S>
TensorT<S> scale(GraphT<S>& g, const TensorT<S>& a, S k) {
  return affine(g, a, k, S(0));
}

template <typename S>
TensorT<S> matmul(GraphT<S>& g, const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  const int m = a.rows(), k = a.cols(), n = b.cols();
  auto out = TensorT<S>::zeros({m, n},
                               detail::track(g, {a.requires_grad(), b.requires_grad()}));
  const S* pa = a.data();
  const S* pb = b.data();
  S* po = out.data();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const S aip = pa[i * k + p];
      const S* brow = pb + p * n;
      S* orow = po + i * n;
      for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  if (out.requires_grad())
    g.record(out, [a, b, out, m, k, n] {
      const auto& go = out.grad();
      if (go.empty()) return;
      if (a.requires_grad()) {
        auto& ga = a.grad_buffer();
        const S* pb2 = b.data();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            const S gij = go[static_cast<size_t>(i) * n + j];
            for (int p = 0; p < k; ++p)
              ga[static_cast<size_t>(i) * k + p] += gij * pb2[p * n + j];
          }
      }
      if (b.requires_grad()) {
        auto& gb = b.grad_buffer();
        const S* pa2 = a.data();
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            const S aip = pa2[i * k + p];
            for (int j = 0; j < n; ++j)
              gb[static_cast<size_t>(p) * n + j] += aip * go[static_cast<size_t>(i) * n + j];
          }
      }
    });
  return out;
}

template <typename S>
TensorT<S> transpose(GraphT<S>& g, const TensorT<S>& a) {
  if (a.rank() != 2) throw ShapeError("transpose: rank-2 required, got " + shape_str(a.shape()));
  const int m = a.rows(), n = a.cols();
  auto out = TensorT<S>::zeros({n, m}, detail::track(g, {a.requires_grad()}));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  if (out.requires_grad())
    g.record(out, [a, out, m, n] {
      const auto& go = out.grad();
      if (go.empty()) return;
      auto& ga = a.grad_buffer();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          ga[static_cast<size_t>(i) * n + j] += go[static_cast<size_t>(j) * m + i];
    });
  return out;
}

// Broadcast-add a length-cols vector to every row.
template <typename S>
TensorT<S> add_rowvec(GraphT<S>& g, const TensorT<S>& m, const TensorT<S>& v) {
  if (m.rank() != 2 || v.rank() != 1 || v.dim(0) != m.cols())
    throw ShapeError("add_rowvec: " + shape_str(m.shape()) + " + " + shape_str(v.shape()));
  const int rows = m.rows(), cols = m.cols();
  auto out = TensorT<S>::zeros(m.shape(),
                               detail::track(g, {m.requires_grad(), v.requires_grad()}));
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out.at(i, j) = m.at(i, j) + v.at(j);
  if (out.requires_grad())
    g.record(out, [m, v, out, rows, cols] {
      const auto& go = out.grad();
      if (go.empty()) return;
      if (m.requires_grad()) {
        auto& gm = m.grad_buffer();
        for (size_t i = 0; i < go.size(); ++i) gm[i] += go[i];
      }
      if (v.requires_grad()) {
        auto& gv = v.grad_buffer();
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < cols; ++j) gv[static_cast<size_t>(j)] += go[static_cast<size_t>(i) * cols + j];
      }
    });
  return out;
}

template <typename S>
TensorT<S> relu(GraphT<S>& g, const TensorT<S>& a) {
  auto out = TensorT<S>::zeros(a.shape(), detail::track(g, {a.requires_grad()}));
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = a.at(i) > S(0) ? a.at(i) : S(0);
  if (out.requires_grad())
    g.record(out, [a, out] {
      const auto& go = out.grad();
      if (go.empty()) return;
      auto& ga = a.grad_buffer();
      for (size_t i = 0; i < go.size(); ++i)
        if (a.at(static_cast<int64_t>(i)) > S(0)) ga[i] += go[i];
    });
  return out;
}

template <typename S>
TensorT<S> sigmoid(GraphT<S>& g, const TensorT<S>& a) {
  auto out = TensorT<S>::zeros(a.shape(), detail::track(g, {a.requires_grad()}));
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) {
    S x = a.at(i);
    if (x >= S(0)) {
      out.at(i) = S(1) / (S(1) + std::exp(-x));
    } else {
      S e = std::exp(x);
      out.at(i) = e / (S(1) + e);
    }
  }
  if (out.requires_grad())
    g.record(out, [a, out] {
      const auto& go = out.grad();
      if (go.empty()) return;
      auto& ga = a.grad_buffer();
      for (size_t i = 0; i < go.size(); ++i) {
        S y = out.at(static_cast<int64_t>(i));
        ga[i] += go[i] * y * (S(1) - y);
      }
    });
  return out;
}

template <typename S>
TensorT<S> eabs(GraphT<S>& g, const TensorT<S>& a) {
  auto out = TensorT<S>::zeros(a.shape(), detail::track(g, {a.requires_grad()}));
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = std::abs(a.at(i));
  if (out.requires_grad())
    g.record(out, [a, out] {
      const auto& go = out.grad();
      if (go.empty()) return;
      auto& ga = a.grad_buffer();
      for (size_t i = 0; i < go.size(); ++i) {
        S x = a.at(static_cast<int64_t>(i));
        if (x > S(0))
          ga[i] += go[i];
        else if (x < S(0))
          ga[i] -= go[i];
      }
    });
  return out;
}

// Elementwise min/max. Subgradient goes to the winning input; ties favor a.
template <typename S>
TensorT<S> emin(GraphT<S>& g, const TensorT<S>& a, const TensorT<S>& b) {
  detail::require_same_shape("emin", a, b);
  auto out = TensorT<S>::zeros(a.shape(),
                               detail::track(g, {a.requires_grad(), b.requires_grad()}));
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = a.at(i) <= b.at(i) ? a.at(i) : b.at(i);
  if (out.requires_grad())
    g.record(out, [a, b, out] {
      const auto& go = out.grad();
      if (go.empty()) return;
      for (size_t i = 0; i < go.size(); ++i) {
        int64_t idx = static_cast<int64_t>(i);
        if (a.at(idx) <= b.at(idx)) {
          if (a.requires_grad()) a.grad_buffer()[i] += go[i];
        } else if (b.requires_grad()) {
          b.grad_buffer()[i] += go[i];
        }
      }
    });
  return out;
}

template <typename S>
TensorT<S> emax(GraphT<S>& g, const TensorT<S>& a, const TensorT<S>& b) {
  detail::require_same_shape("emax", a, b);
  auto out = TensorT<S>::zeros(a.shape(),
                               detail::track(g, {a.requires_grad(), b.requires_grad()}));
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = a.at(i) >= b.at(i) ? a.at(i) : b.at(i);
  if (out.requires_grad())
    g.record(out, [a, b, out] {
      const auto& go = out.grad();
      if (go.empty()) return;
      for (size_t i = 0; i < go.size(); ++i) {
        int64_t idx = static_cast<int64_t>(i);
        if (a.at(idx) >= b.at(idx)) {
          if (a.requires_grad()) a.grad_buffer()[i] += go[i];
        } else if (b.requires_grad()) {
          b.grad_buffer()[i] += go[i];
        }
      }
    });
  return out;
}

// Row-wise softmax with max subtraction. Every output row sums to 1.
template <typename S>
TensorT<S> softmax_rows(GraphT<S>& g, const TensorT<S>& a) {
  if (a.rank() != 2)
    throw ShapeError("softmax_rows: rank-2 required, got " + shape_str(a.shape()));
  const int m = a.rows(), n = a.cols();
  auto out = TensorT<S>::zeros(a.shape(), detail::track(g, {a.requires_grad()}));
  for (int i = 0; i < m; ++i) {
    S mx = a.at(i, 0);
    for (int j = 1; j < n; ++j) mx = std::max(mx, a.at(i, j));
    S denom = S(0);
    for (int j = 0; j < n; ++j) {
      S e = std::exp(a.at(i, j) - mx);
      out.at(i, j) = e;
      denom += e;
    }
    for (int j = 0; j < n; ++j) out.at(i, j) /= denom;
  }
  if (out.requires_grad())
    g.record(out, [a, out, m, n] {
      const auto& go = out.grad();
      if (go.empty()) return;
      auto& ga = a.grad_buffer();
      for (int i = 0; i < m; ++i) {
        S dot = S(0);
        for (int j = 0; j < n; ++j)
          dot += go[static_cast<size_t>(i) * n + j] * out.at(i, j);
        for (int j = 0; j < n; ++j)
          ga[static_cast<size_t>(i) * n + j] +=
              out.at(i, j) * (go[static_cast<size_t>(i) * n + j] - dot);
      }
    });
  return out;
}

// Per-row zero-mean unit-variance normalization followed by affine gain/bias.
template <typename S>
TensorT<S> layer_norm_rows(GraphT<S>& g, const TensorT<S>& x,
                           const TensorT<S>& gain, const TensorT<S>& bias,
                           S eps = S(1e-5)) {
  if (x.rank() != 2 || x.cols() < 2)
    throw ShapeError("layer_norm_rows: rank-2 with cols >= 2 required, got " +
                     shape_str(x.shape()));
  if (gain.rank() != 1 || gain.dim(0) != x.cols() || bias.rank() != 1 ||
      bias.dim(0) != x.cols())
    throw ShapeError("layer_norm_rows: gain/bias must be length " +
                     std::to_string(x.cols()));
  const int m = x.rows(), d = x.cols();
  bool rg = detail::track(
      g, {x.requires_grad(), gain.requires_grad(), bias.requires_grad()});
  auto out = TensorT<S>::zeros(x.shape(), rg);
  std::vector<S> xhat(static_cast<size_t>(m) * d);
  std::vector<S> inv_sigma(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    S mean = S(0);
    for (int j = 0; j < d; ++j) mean += x.at(i, j);
    mean /= S(d);
    S var = S(0);
    for (int j = 0; j < d; ++j) {
      S c = x.at(i, j) - mean;
      var += c * c;
    }
    var /= S(d);
    S inv = S(1) / std::sqrt(var + eps);
    inv_sigma[static_cast<size_t>(i)] = inv;
    for (int j = 0; j < d; ++j) {
      S xh = (x.at(i, j) - mean) * inv;
      xhat[static_cast<size_t>(i) * d + j] = xh;
      out.at(i, j) = gain.at(j) * xh + bias.at(j);
    }
  }
  if (rg)
    g.record(out, [x, gain, bias, out, m, d, xhat = std::move(xhat),
              inv_sigma = std::move(inv_sigma)] {
      const auto& go = out.grad();
      if (go.empty()) return;
      for (int i = 0; i < m; ++i) {
        const size_t row = static_cast<size_t>(i) * d;
        if (x.requires_grad()) {
          S sum1 = S(0), sum2 = S(0);
          for (int j = 0; j < d; ++j) {
            S dxh = go[row + j] * gain.at(j);
            sum1 += dxh;
            sum2 += dxh * xhat[row + j];
          }
          auto& gx = x.grad_buffer();
          const S inv = inv_sigma[static_cast<size_t>(i)];
          for (int j = 0; j < d; ++j) {
            S dxh = go[row + j] * gain.at(j);
            gx[row + j] += inv * (dxh - (sum1 + xhat[row + j] * sum2) / S(d));
          }
        }
        if (gain.requires_grad()) {
          auto& gg = gain.grad_buffer();
          for (int j = 0; j < d; ++j) gg[static_cast<size_t>(j)] += go[row + j] * xhat[row + j];
        }
        if (bias.requires_grad()) {
          auto& gb = bias.grad_buffer();
          for (int j = 0; j < d; ++j) gb[static_cast<size_t>(j)] += go[row + j];
        }
      }
    });
  return out;
}

// Temporal 1-D convolution along the token axis with same-length zero
// padding. kernel is [k x d_in x d_out], k in {1,2,3}; k=2 pads one token on
// the left so out[i] mixes x[i-1] and x[i].
template <typename S>
TensorT<S> conv1d_same(GraphT<S>& g, const TensorT<S>& x,
                       const TensorT<S>& kernel, const TensorT<S>& bias) {
  if (x.rank() != 2 || kernel.rank() != 3 || bias.rank() != 1)
    throw ShapeError("conv1d_same: expected x[n x d_in], kernel[k x d_in x d_out], bias[d_out]");
  const int k = kernel.dim(0);
  if (k < 1 || k > 3)
    throw ConfigError("conv1d_same: unsupported kernel size " + std::to_string(k));
  const int n = x.rows(), d_in = x.cols(), d_out = kernel.dim(2);
  if (kernel.dim(1) != d_in || bias.dim(0) != d_out)
    throw ShapeError("conv1d_same: kernel " + shape_str(kernel.shape()) +
                     " incompatible with input " + shape_str(x.shape()));
  const int left = k / 2;
  bool rg = detail::track(g, {x.requires_grad(), kernel.requires_grad(),
                              bias.requires_grad()});
  auto out = TensorT<S>::zeros({n, d_out}, rg);
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < d_out; ++o) {
      S acc = bias.at(o);
      for (int j = 0; j < k; ++j) {
        const int src = i + j - left;
        if (src < 0 || src >= n) continue;
        for (int c = 0; c < d_in; ++c)
          acc += kernel.at((j * d_in + c) * d_out + o) * x.at(src, c);
      }
      out.at(i, o) = acc;
    }
  if (rg)
    g.record(out, [x, kernel, bias, out, n, d_in, d_out, k, left] {
      const auto& go = out.grad();
      if (go.empty()) return;
      for (int i = 0; i < n; ++i)
        for (int o = 0; o < d_out; ++o) {
          const S gio = go[static_cast<size_t>(i) * d_out + o];
          if (bias.requires_grad())
            bias.grad_buffer()[static_cast<size_t>(o)] += gio;
          for (int j = 0; j < k; ++j) {
            const int src = i + j - left;
            if (src < 0 || src >= n) continue;
            for (int c = 0; c < d_in; ++c) {
              const int64_t kidx = (static_cast<int64_t>(j) * d_in + c) * d_out + o;
              if (kernel.requires_grad())
                kernel.grad_buffer()[static_cast<size_t>(kidx)] +=
                    gio * x.at(src, c);
              if (x.requires_grad())
                x.grad_buffer()[static_cast<size_t>(src) * d_in + c] +=
                    gio * kernel.at(kidx);
            }
          }
        }
    });
  return out;
}

template <typename S>
TensorT<S> concat_rows(GraphT<S>& g, const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols())
    throw ShapeError("concat_rows: " + shape_str(a.shape()) + " with " + shape_str(b.shape()));
  const int ma = a.rows(), mb = b.rows(), n = a.cols();
  auto out = TensorT<S>::zeros({ma + mb, n},
                               detail::track(g, {a.requires_grad(), b.requires_grad()}));
  std::copy(a.values().begin(), a.values().end(), out.values().begin());
  std::copy(b.values().begin(), b.values().end(),
            out.values().begin() + static_cast<int64_t>(ma) * n);
  if (out.requires_grad())
    g.record(out, [a, b, out, ma, mb, n] {
      const auto& go = out.grad();
      if (go.empty()) return;
      if (a.requires_grad()) {
        auto& ga = a.grad_buffer();
        for (size_t i = 0; i < static_cast<size_t>(ma) * n; ++i) ga[i] += go[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad_buffer();
        const size_t off = static_cast<size_t>(ma) * n;
        for (size_t i = 0; i < static_cast<size_t>(mb) * n; ++i) gb[i] += go[off + i];
      }
    });
  return out;
}

template <typename S>
TensorT<S> concat_cols(GraphT<S>& g, const std::vector<TensorT<S>>& parts) {
  if (parts.empty()) throw UsageError("concat_cols: no inputs");
  const int m = parts[0].rows();
  int total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.rows() != m)
      throw ShapeError("concat_cols: row mismatch at " + shape_str(p.shape()));
    total += p.cols();
    rg = rg || p.requires_grad();
  }
  rg = rg && g.recording();
  auto out = TensorT<S>::zeros({m, total}, rg);
  int off = 0;
  for (const auto& p : parts) {
    const int w = p.cols();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j) out.at(i, off + j) = p.at(i, j);
    off += w;
  }
  if (rg)
    g.record(out, [parts, out, m, total] {
      const auto& go = out.grad();
      if (go.empty()) return;
      int off2 = 0;
      for (const auto& p : parts) {
        const int w = p.cols();
        if (p.requires_grad()) {
          auto& gp = p.grad_buffer();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j)
              gp[static_cast<size_t>(i) * w + j] += go[static_cast<size_t>(i) * total + off2 + j];
        }
        off2 += w;
      }
    });
  return out;
}

// Rows [r0, r1) of a rank-2 tensor.
template <typename S>
TensorT<S> slice_rows(GraphT<S>& g, const TensorT<S>& a, int r0, int r1) {
  if (a.rank() != 2 || r0 < 0 || r1 > a.rows() || r0 >= r1)
    throw ShapeError("slice_rows: [" + std::to_string(r0) + "," + std::to_string(r1) +
                     ") of " + shape_str(a.shape()));
  const int n = a.cols(), m = r1 - r0;
  auto out = TensorT<S>::zeros({m, n}, detail::track(g, {a.requires_grad()}));
  std::copy(a.values().begin() + static_cast<int64_t>(r0) * n,
            a.values().begin() + static_cast<int64_t>(r1) * n, out.values().begin());
  if (out.requires_grad())
    g.record(out, [a, out, r0, m, n] {
      const auto& go = out.grad();
      if (go.empty()) return;
      auto& ga = a.grad_buffer();
      const size_t off = static_cast<size_t>(r0) * n;
      for (size_t i = 0; i < static_cast<size_t>(m) * n; ++i) ga[off + i] += go[i];
    });
  return out;
}

// Columns [c0, c1) of a rank-2 tensor.
template <typename S>
TensorT<S> slice_cols(GraphT<S>& g, const TensorT<S>& a, int c0, int c1) {
  if (a.rank() != 2 || c0 < 0 || c1 > a.cols() || c0 >= c1)
    throw ShapeError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) +
                     ") of " + shape_str(a.shape()));
  const int m = a.rows(), w = c1 - c0, n = a.cols();
  auto out = TensorT<S>::zeros({m, w}, detail::track(g, {a.requires_grad()}));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < w; ++j) out.at(i, j) = a.at(i, c0 + j);
  if (out.requires_grad())
    g.record(out, [a, out, m, w, n, c0] {
      const auto& go = out.grad();
      if (go.empty()) return;
      auto& ga = a.grad_buffer();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j)
          ga[static_cast<size_t>(i) * n + c0 + j] += go[static_cast<size_t>(i) * w + j];
    });
  return out;
}

template <typename S>
TensorT<S> reshape(GraphT<S>& g, const TensorT<S>& a, Shape shape) {
  if (numel_of(shape) != a.numel())
    throw ShapeError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
  auto out = TensorT<S>::from(std::move(shape), a.values(),
                              detail::track(g, {a.requires_grad()}));
  if (out.requires_grad())
    g.record(out, [a, out] {
      const auto& go = out.grad();
      if (go.empty()) return;
      auto& ga = a.grad_buffer();
      for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    });
  return out;
}

// Mean over rows; output is 1 x d.
template <typename S>
TensorT<S> mean_rows(GraphT<S>& g, const TensorT<S>& a) {
  if (a.rank() != 2) throw ShapeError("mean_rows: rank-2 required");
  const int m = a.rows(), n = a.cols();
  auto out = TensorT<S>::zeros({1, n}, detail::track(g, {a.requires_grad()}));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(0, j) += a.at(i, j);
  for (int j = 0; j < n; ++j) out.at(0, j) /= S(m);
  if (out.requires_grad())
    g.record(out, [a, out, m, n] {
      const auto& go = out.grad();
      if (go.empty()) return;
      auto& ga = a.grad_buffer();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) ga[static_cast<size_t>(i) * n + j] += go[static_cast<size_t>(j)] / S(m);
    });
  return out;
}

// Sum of all elements; output shape [1].
template <typename S>
TensorT<S> sum(GraphT<S>& g, const TensorT<S>& a) {
  auto out = TensorT<S>::zeros(Shape{1}, detail::track(g, {a.requires_grad()}));
  S acc = S(0);
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) acc += a.at(i);
  out.at(0) = acc;
  if (out.requires_grad())
    g.record(out, [a, out] {
      const auto& go = out.grad();
      if (go.empty()) return;
      auto& ga = a.grad_buffer();
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += go[0];
    });
  return out;
}

// Select rows by index (duplicates allowed). Backward scatter-adds.
template <typename S>
TensorT<S> gather_rows(GraphT<S>& g, const TensorT<S>& a, std::vector<int> idx) {
  if (a.rank() != 2) throw ShapeError("gather_rows: rank-2 required");
  for (int i : idx)
    if (i < 0 || i >= a.rows())
      throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range for " +
                       shape_str(a.shape()));
  const int m = static_cast<int>(idx.size()), n = a.cols();
  if (m == 0) throw UsageError("gather_rows: empty index list");
  auto out = TensorT<S>::zeros({m, n}, detail::track(g, {a.requires_grad()}));
  for (int r = 0; r < m; ++r)
    for (int j = 0; j < n; ++j) out.at(r, j) = a.at(idx[static_cast<size_t>(r)], j);
  if (out.requires_grad())
    g.record(out, [a, out, idx = std::move(idx), n] {
      const auto& go = out.grad();
      if (go.empty()) return;
      auto& ga = a.grad_buffer();
      for (size_t r = 0; r < idx.size(); ++r)
        for (int j = 0; j < n; ++j)
          ga[static_cast<size_t>(idx[r]) * n + j] += go[r * n + j];
    });
  return out;
}

// Sum of -[w_pos * t * log(p) + (1 - t) * log(1 - p)] over all elements, with
// p clamped into [clamp, 1 - clamp] before the logs. Targets are constants.
template <typename S>
TensorT<S> weighted_bce_sum(GraphT<S>& g, const TensorT<S>& p,
                            const std::vector<S>& targets, S pos_weight,
                            S clamp = S(1e-7)) {
  if (static_cast<int64_t>(targets.size()) != p.numel())
    throw ShapeError("weighted_bce_sum: " + std::to_string(targets.size()) +
                     " targets for " + shape_str(p.shape()));
  auto out = TensorT<S>::zeros(Shape{1}, detail::track(g, {p.requires_grad()}));
  const int64_t n = p.numel();
  S acc = S(0);
  for (int64_t i = 0; i < n; ++i) {
    S pc = std::min(std::max(p.at(i), clamp), S(1) - clamp);
    S t = targets[static_cast<size_t>(i)];
    acc -= pos_weight * t * std::log(pc) + (S(1) - t) * std::log(S(1) - pc);
  }
  out.at(0) = acc;
  if (out.requires_grad())
    g.record(out, [p, out, targets, pos_weight, clamp] {
      const auto& go = out.grad();
      if (go.empty()) return;
      auto& gp = p.grad_buffer();
      const int64_t n2 = p.numel();
      for (int64_t i = 0; i < n2; ++i) {
        S pi = p.at(i);
        if (pi <= clamp || pi >= S(1) - clamp) continue;  // flat in clamp region
        S t = targets[static_cast<size_t>(i)];
        gp[static_cast<size_t>(i)] += go[0] * (-pos_weight * t / pi + (S(1) - t) / (S(1) - pi));
      }
    });
  return out;
}

// Inverted dropout. Identity in eval mode; in training, zeroes elements with
// probability rate and rescales survivors by 1/(1-rate).
template <typename S>
TensorT<S> dropout(GraphT<S>& g, const TensorT<S>& x, double rate, Rng* rng,
                   bool training) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
  if (rng == nullptr) throw UsageError("dropout in training mode needs an rng");
  auto mask = TensorT<S>::zeros(x.shape());
  const S keep_scale = S(1.0 / (1.0 - rate));
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i)
    mask.at(i) = rng->uniform() >= rate ? keep_scale : S(0);
  return mul(g, x, mask);
}

// Linear layer: x [m x in] * w [in x out] + b [out].
template <typename S>
TensorT<S> linear(GraphT<S>& g, const TensorT<S>& x, const TensorT<S>& w,
                  const TensorT<S>& b) {
  return add_rowvec(g, matmul(g, x, w), b);
}

template <typename S>
struct MhaParams {
  TensorT<S> wq, bq, wk, bk, wv, bv, wo, bo;
};

// Scaled dot-product attention with learned Q/K/V/output projections. The
// residual connection and post-norm layernorm belong to the caller's block.
template <typename S>
TensorT<S> multi_head_attention(GraphT<S>& g, const TensorT<S>& q_in,
                                const TensorT<S>& k_in, const TensorT<S>& v_in,
                                const MhaParams<S>& p, int heads) {
  const int d = q_in.cols();
  if (heads < 1 || d % heads != 0)
    throw ConfigError("multi_head_attention: width " + std::to_string(d) +
                      " not divisible by " + std::to_string(heads) + " heads");
  if (k_in.cols() != d || v_in.cols() != d || k_in.rows() != v_in.rows())
    throw ShapeError("multi_head_attention: k/v shapes " + shape_str(k_in.shape()) +
                     ", " + shape_str(v_in.shape()) + " incompatible with q " +
                     shape_str(q_in.shape()));
  auto q = linear(g, q_in, p.wq, p.bq);
  auto k = linear(g, k_in, p.wk, p.bk);
  auto v = linear(g, v_in, p.wv, p.bv);
  const int dh = d / heads;
  const S inv_sqrt_dh = S(1) / std::sqrt(S(dh));
  std::vector<TensorT<S>> head_outs;
  head_outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    auto qh = slice_cols(g, q, h * dh, (h + 1) * dh);
    auto kh = slice_cols(g, k, h * dh, (h + 1) * dh);
    auto vh = slice_cols(g, v, h * dh, (h + 1) * dh);
    auto logits = scale(g, matmul(g, qh, transpose(g, kh)), inv_sqrt_dh);
    auto attn = softmax_rows(g, logits);
    head_outs.push_back(matmul(g, attn, vh));
  }
  return linear(g, concat_cols(g, head_outs), p.wo, p.bo);
}

}  // namespace mrnet
