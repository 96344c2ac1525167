#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "methanol/tensor.hpp"

// Forward/backward kernels for the op set the model needs. All loops are
// written so the innermost dimension walks contiguous memory and each output
// element accumulates in program order; this keeps results reproducible and
// still lets the compiler vectorize.

namespace methanol {

namespace detail {

template <typename T>
void require_rank(const TensorT<T>& t, int rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank-" + std::to_string(rank) +
                     " tensor, got " + shape_str(t.shape));
  }
}

template <typename T>
void require_nonempty(const TensorT<T>& t, const char* op) {
  if (t.numel() == 0) throw ShapeError(std::string(op) + ": empty tensor");
}

template <typename T>
TensorT<T> make_out(Shape shape, std::initializer_list<TensorT<T>> parents, const char* op) {
  bool rg = false;
  if (grad_enabled()) {
    for (const auto& p : parents) rg = rg || p.requires_grad;
  }
  TensorT<T> out = TensorT<T>::zeros(std::move(shape), rg);
  if (rg) {
    out.node = std::make_shared<NodeT<T>>();
    out.node->op = op;
    out.node->parents = parents;
    out.node->out = out.detached();
    out.node->out.grad = out.grad;
    out.node->out.requires_grad = true;
  }
  return out;
}

template <typename T>
bool wants_grad(const TensorT<T>& t) {
  return t.requires_grad && t.grad;
}

}  // namespace detail

// C[m,n] = A[m,k] * B[k,n]
template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  detail::require_nonempty(a, "matmul");
  detail::require_nonempty(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  TensorT<T> out = detail::make_out<T>({m, n}, {a, b}, "matmul");
  const T* pa = a.data->data();
  const T* pb = b.data->data();
  T* pc = out.data->data();
  for (int i = 0; i < m; ++i) {
    const T* arow = pa + std::size_t(i) * k;
    T* crow = pc + std::size_t(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      const T* brow = pb + std::size_t(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  if (out.node) {
    out.node->backprop = [m, k, n](NodeT<T>& node) {
      const TensorT<T>& pa_t = node.parents[0];
      const TensorT<T>& pb_t = node.parents[1];
      const T* g = node.out.grad->data();
      if (detail::wants_grad(pa_t)) {
        // dA = dC * B^T; materialize B^T so the inner loop is contiguous.
        std::vector<T> bt(std::size_t(n) * k);
        const T* pb = pb_t.data->data();
        for (int kk = 0; kk < k; ++kk)
          for (int j = 0; j < n; ++j) bt[std::size_t(j) * k + kk] = pb[std::size_t(kk) * n + j];
        T* da = pa_t.grad->data();
        for (int i = 0; i < m; ++i) {
          const T* grow = g + std::size_t(i) * n;
          T* darow = da + std::size_t(i) * k;
          for (int j = 0; j < n; ++j) {
            const T gv = grow[j];
            const T* btrow = bt.data() + std::size_t(j) * k;
            for (int kk = 0; kk < k; ++kk) darow[kk] += gv * btrow[kk];
          }
        }
      }
      if (detail::wants_grad(pb_t)) {
        // dB = A^T * dC
        const T* pa = pa_t.data->data();
        T* db = pb_t.grad->data();
        for (int i = 0; i < m; ++i) {
          const T* arow = pa + std::size_t(i) * k;
          const T* grow = g + std::size_t(i) * n;
          for (int kk = 0; kk < k; ++kk) {
            const T av = arow[kk];
            T* dbrow = db + std::size_t(kk) * n;
            for (int j = 0; j < n; ++j) dbrow[j] += av * grow[j];
          }
        }
      }
    };
  }
  return out;
}

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.shape != b.shape) {
    throw ShapeError("add: shape mismatch, " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  }
  detail::require_nonempty(a, "add");
  TensorT<T> out = detail::make_out<T>(a.shape, {a, b}, "add");
  const std::size_t n = out.numel();
  const T* pa = a.data->data();
  const T* pb = b.data->data();
  T* po = out.data->data();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  if (out.node) {
    out.node->backprop = [](NodeT<T>& node) {
      const T* g = node.out.grad->data();
      const std::size_t n = node.out.numel();
      for (int p = 0; p < 2; ++p) {
        const TensorT<T>& par = node.parents[p];
        if (!detail::wants_grad(par)) continue;
        T* d = par.grad->data();
        for (std::size_t i = 0; i < n; ++i) d[i] += g[i];
      }
    };
  }
  return out;
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.shape != b.shape) {
    throw ShapeError("mul: shape mismatch, " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  }
  detail::require_nonempty(a, "mul");
  TensorT<T> out = detail::make_out<T>(a.shape, {a, b}, "mul");
  const std::size_t n = out.numel();
  const T* pa = a.data->data();
  const T* pb = b.data->data();
  T* po = out.data->data();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  if (out.node) {
    out.node->backprop = [](NodeT<T>& node) {
      const TensorT<T>& a = node.parents[0];
      const TensorT<T>& b = node.parents[1];
      const T* g = node.out.grad->data();
      const std::size_t n = node.out.numel();
      if (detail::wants_grad(a)) {
        T* d = a.grad->data();
        const T* pb = b.data->data();
        for (std::size_t i = 0; i < n; ++i) d[i] += g[i] * pb[i];
      }
      if (detail::wants_grad(b)) {
        T* d = b.grad->data();
        const T* pa = a.data->data();
        for (std::size_t i = 0; i < n; ++i) d[i] += g[i] * pa[i];
      }
    };
  }
  return out;
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, double s) {
  detail::require_nonempty(a, "scale");
  TensorT<T> out = detail::make_out<T>(a.shape, {a}, "scale");
  const std::size_t n = out.numel();
  const T sv = static_cast<T>(s);
  const T* pa = a.data->data();
  T* po = out.data->data();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] * sv;
  if (out.node) {
    out.node->backprop = [sv](NodeT<T>& node) {
      const TensorT<T>& a = node.parents[0];
      if (!detail::wants_grad(a)) return;
      const T* g = node.out.grad->data();
      T* d = a.grad->data();
      const std::size_t n = node.out.numel();
      for (std::size_t i = 0; i < n; ++i) d[i] += g[i] * sv;
    };
  }
  return out;
}

template <typename T>
TensorT<T> transpose(const TensorT<T>& a) {
  detail::require_rank(a, 2, "transpose");
  detail::require_nonempty(a, "transpose");
  const int m = a.dim(0), n = a.dim(1);
  TensorT<T> out = detail::make_out<T>({n, m}, {a}, "transpose");
  const T* pa = a.data->data();
  T* po = out.data->data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) po[std::size_t(j) * m + i] = pa[std::size_t(i) * n + j];
  if (out.node) {
    out.node->backprop = [m, n](NodeT<T>& node) {
      const TensorT<T>& a = node.parents[0];
      if (!detail::wants_grad(a)) return;
      const T* g = node.out.grad->data();
      T* d = a.grad->data();
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < m; ++i) d[std::size_t(i) * n + j] += g[std::size_t(j) * m + i];
    };
  }
  return out;
}

// View: shares storage (and the gradient buffer) with the input.
template <typename T>
TensorT<T> reshape(const TensorT<T>& a, Shape new_shape) {
  detail::require_nonempty(a, "reshape");
  if (numel_of(new_shape) != a.numel()) {
    throw ShapeError("reshape: element count mismatch, " + shape_str(a.shape) + " vs " +
                     shape_str(new_shape));
  }
  TensorT<T> out;
  out.shape = std::move(new_shape);
  out.data = a.data;
  out.requires_grad = grad_enabled() && a.requires_grad;
  if (out.requires_grad) {
    out.grad = a.grad;
    out.node = std::make_shared<NodeT<T>>();
    out.node->op = "reshape";
    out.node->parents = {a};
    out.node->out = out.detached();
    // Gradient buffer is shared, so there is nothing to route.
  }
  return out;
}

template <typename T>
TensorT<T> concat(const std::vector<TensorT<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  for (const auto& p : parts) detail::require_rank(p, 2, "concat");
  const int other = 1 - axis;
  int total = 0;
  for (const auto& p : parts) {
    if (p.dim(other) != parts[0].dim(other)) {
      throw ShapeError("concat: mismatched shapes " + shape_str(parts[0].shape) + " vs " +
                       shape_str(p.shape));
    }
    total += p.dim(axis);
  }
  Shape out_shape = parts[0].shape;
  out_shape[static_cast<std::size_t>(axis)] = total;

  bool rg = false;
  if (grad_enabled())
    for (const auto& p : parts) rg = rg || p.requires_grad;
  TensorT<T> out = TensorT<T>::zeros(out_shape, rg);
  if (rg) {
    out.node = std::make_shared<NodeT<T>>();
    out.node->op = "concat";
    out.node->parents = parts;
    out.node->out = out.detached();
    out.node->out.grad = out.grad;
    out.node->out.requires_grad = true;
  }

  const int rows = out.dim(0), cols = out.dim(1);
  T* po = out.data->data();
  if (axis == 0) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      std::copy(p.data->begin(), p.data->end(), po + off);
      off += p.numel();
    }
  } else {
    int col0 = 0;
    for (const auto& p : parts) {
      const int w = p.dim(1);
      const T* pp = p.data->data();
      for (int i = 0; i < rows; ++i)
        std::copy(pp + std::size_t(i) * w, pp + std::size_t(i + 1) * w,
                  po + std::size_t(i) * cols + col0);
      col0 += w;
    }
  }
  if (out.node) {
    out.node->backprop = [axis, rows, cols](NodeT<T>& node) {
      const T* g = node.out.grad->data();
      if (axis == 0) {
        std::size_t off = 0;
        for (const auto& p : node.parents) {
          if (detail::wants_grad(p)) {
            T* d = p.grad->data();
            const std::size_t n = p.numel();
            for (std::size_t i = 0; i < n; ++i) d[i] += g[off + i];
          }
          off += p.numel();
        }
      } else {
        int col0 = 0;
        for (const auto& p : node.parents) {
          const int w = p.dim(1);
          if (detail::wants_grad(p)) {
            T* d = p.grad->data();
            for (int i = 0; i < rows; ++i) {
              const T* grow = g + std::size_t(i) * cols + col0;
              T* drow = d + std::size_t(i) * w;
              for (int j = 0; j < w; ++j) drow[j] += grow[j];
            }
          }
          col0 += w;
        }
      }
    };
  }
  return out;
}

template <typename T>
TensorT<T> slice_cols(const TensorT<T>& a, int col0, int width) {
  detail::require_rank(a, 2, "slice_cols");
  const int rows = a.dim(0), cols = a.dim(1);
  if (col0 < 0 || width <= 0 || col0 + width > cols) {
    throw ShapeError("slice_cols: range [" + std::to_string(col0) + ", " +
                     std::to_string(col0 + width) + ") out of " + shape_str(a.shape));
  }
  TensorT<T> out = detail::make_out<T>({rows, width}, {a}, "slice_cols");
  const T* pa = a.data->data();
  T* po = out.data->data();
  for (int i = 0; i < rows; ++i)
    std::copy(pa + std::size_t(i) * cols + col0, pa + std::size_t(i) * cols + col0 + width,
              po + std::size_t(i) * width);
  if (out.node) {
    out.node->backprop = [col0, width, rows, cols](NodeT<T>& node) {
      const TensorT<T>& a = node.parents[0];
      if (!detail::wants_grad(a)) return;
      const T* g = node.out.grad->data();
      T* d = a.grad->data();
      for (int i = 0; i < rows; ++i) {
        const T* grow = g + std::size_t(i) * width;
        T* drow = d + std::size_t(i) * cols + col0;
        for (int j = 0; j < width; ++j) drow[j] += grow[j];
      }
    };
  }
  return out;
}

template <typename T>
TensorT<T> slice_rows(const TensorT<T>& a, int row0, int height) {
  detail::require_rank(a, 2, "slice_rows");
  const int rows = a.dim(0), cols = a.dim(1);
  if (row0 < 0 || height <= 0 || row0 + height > rows) {
    throw ShapeError("slice_rows: range [" + std::to_string(row0) + ", " +
                     std::to_string(row0 + height) + ") out of " + shape_str(a.shape));
  }
  TensorT<T> out = detail::make_out<T>({height, cols}, {a}, "slice_rows");
  std::copy(a.data->begin() + std::size_t(row0) * cols,
            a.data->begin() + std::size_t(row0 + height) * cols, out.data->begin());
  if (out.node) {
    out.node->backprop = [row0, height, cols](NodeT<T>& node) {
      const TensorT<T>& a = node.parents[0];
      if (!detail::wants_grad(a)) return;
      const T* g = node.out.grad->data();
      T* d = a.grad->data() + std::size_t(row0) * cols;
      const std::size_t n = std::size_t(height) * cols;
      for (std::size_t i = 0; i < n; ++i) d[i] += g[i];
    };
  }
  return out;
}

// Embedding lookup: out[t, :] = table[ids[t], :]. Duplicate ids accumulate
// their gradients into the same table row.
template <typename T>
TensorT<T> gather_rows(const TensorT<T>& table, std::span<const int> ids) {
  detail::require_rank(table, 2, "gather_rows");
  if (ids.empty()) throw ShapeError("gather_rows: empty id list");
  const int v = table.dim(0), d = table.dim(1);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || ids[t] >= v) {
      throw TokenIdError("gather_rows: id " + std::to_string(ids[t]) + " at position " +
                         std::to_string(t) + " outside [0, " + std::to_string(v) + ")");
    }
  }
  TensorT<T> out = detail::make_out<T>({static_cast<int>(ids.size()), d}, {table}, "gather_rows");
  const T* pt = table.data->data();
  T* po = out.data->data();
  for (std::size_t t = 0; t < ids.size(); ++t)
    std::copy(pt + std::size_t(ids[t]) * d, pt + std::size_t(ids[t] + 1) * d, po + t * d);
  if (out.node) {
    std::vector<int> idv(ids.begin(), ids.end());
    out.node->backprop = [idv = std::move(idv), d](NodeT<T>& node) {
      const TensorT<T>& table = node.parents[0];
      if (!detail::wants_grad(table)) return;
      const T* g = node.out.grad->data();
      T* dt = table.grad->data();
      for (std::size_t t = 0; t < idv.size(); ++t) {
        const T* grow = g + t * d;
        T* drow = dt + std::size_t(idv[t]) * d;
        for (int j = 0; j < d; ++j) drow[j] += grow[j];
      }
    };
  }
  return out;
}

// Softmax over the last axis of a 2-D tensor, max-shifted.
template <typename T>
TensorT<T> softmax_rows(const TensorT<T>& a) {
  detail::require_rank(a, 2, "softmax_rows");
  detail::require_nonempty(a, "softmax_rows");
  const int rows = a.dim(0), cols = a.dim(1);
  TensorT<T> out = detail::make_out<T>(a.shape, {a}, "softmax_rows");
  const T* pa = a.data->data();
  T* po = out.data->data();
  for (int i = 0; i < rows; ++i) {
    const T* x = pa + std::size_t(i) * cols;
    T* y = po + std::size_t(i) * cols;
    T mx = x[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    T z = T(0);
    for (int j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    const T inv = T(1) / z;
    for (int j = 0; j < cols; ++j) y[j] *= inv;
  }
  if (out.node) {
    out.node->backprop = [rows, cols](NodeT<T>& node) {
      const TensorT<T>& a = node.parents[0];
      if (!detail::wants_grad(a)) return;
      const T* y = node.out.data->data();
      const T* g = node.out.grad->data();
      T* d = a.grad->data();
      for (int i = 0; i < rows; ++i) {
        const T* yr = y + std::size_t(i) * cols;
        const T* gr = g + std::size_t(i) * cols;
        T* dr = d + std::size_t(i) * cols;
        T dot = T(0);
        for (int j = 0; j < cols; ++j) dot += gr[j] * yr[j];
        for (int j = 0; j < cols; ++j) dr[j] += yr[j] * (gr[j] - dot);
      }
    };
  }
  return out;
}

// Causal softmax over a square score matrix: row i is a softmax over columns
// 0..i and exactly zero beyond. Masked columns are never read, so outputs at
// position i cannot depend on later positions.
template <typename T>
TensorT<T> causal_softmax_rows(const TensorT<T>& a) {
  detail::require_rank(a, 2, "causal_softmax_rows");
  if (a.dim(0) != a.dim(1)) {
    throw ShapeError("causal_softmax_rows: expected square scores, got " + shape_str(a.shape));
  }
  const int n = a.dim(0);
  TensorT<T> out = detail::make_out<T>(a.shape, {a}, "causal_softmax_rows");
  const T* pa = a.data->data();
  T* po = out.data->data();
  for (int i = 0; i < n; ++i) {
    const T* x = pa + std::size_t(i) * n;
    T* y = po + std::size_t(i) * n;
    T mx = x[0];
    for (int j = 1; j <= i; ++j) mx = std::max(mx, x[j]);
    T z = T(0);
    for (int j = 0; j <= i; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    const T inv = T(1) / z;
    for (int j = 0; j <= i; ++j) y[j] *= inv;
  }
  if (out.node) {
    out.node->backprop = [n](NodeT<T>& node) {
      const TensorT<T>& a = node.parents[0];
      if (!detail::wants_grad(a)) return;
      const T* y = node.out.data->data();
      const T* g = node.out.grad->data();
      T* d = a.grad->data();
      for (int i = 0; i < n; ++i) {
        const T* yr = y + std::size_t(i) * n;
        const T* gr = g + std::size_t(i) * n;
        T* dr = d + std::size_t(i) * n;
        T dot = T(0);
        for (int j = 0; j <= i; ++j) dot += gr[j] * yr[j];
        for (int j = 0; j <= i; ++j) dr[j] += yr[j] * (gr[j] - dot);
      }
    };
  }
  return out;
}

// RMS normalization with a learned per-channel scale:
//   y[r,c] = x[r,c] / sqrt(mean_c(x[r,:]^2) + eps) * w[c]
template <typename T>
TensorT<T> rmsnorm_rows(const TensorT<T>& x, const TensorT<T>& weight, double eps) {
  detail::require_rank(x, 2, "rmsnorm_rows");
  detail::require_rank(weight, 1, "rmsnorm_rows");
  const int rows = x.dim(0), cols = x.dim(1);
  if (weight.dim(0) != cols) {
    throw ShapeError("rmsnorm_rows: weight " + shape_str(weight.shape) + " does not match " +
                     shape_str(x.shape));
  }
  TensorT<T> out = detail::make_out<T>(x.shape, {x, weight}, "rmsnorm_rows");
  std::vector<T> inv_rms(static_cast<std::size_t>(rows));
  const T* px = x.data->data();
  const T* pw = weight.data->data();
  T* po = out.data->data();
  for (int i = 0; i < rows; ++i) {
    const T* xr = px + std::size_t(i) * cols;
    T* yr = po + std::size_t(i) * cols;
    T ms = T(0);
    for (int j = 0; j < cols; ++j) ms += xr[j] * xr[j];
    ms /= T(cols);
    const T inv = T(1) / std::sqrt(ms + static_cast<T>(eps));
    inv_rms[static_cast<std::size_t>(i)] = inv;
    for (int j = 0; j < cols; ++j) yr[j] = xr[j] * inv * pw[j];
  }
  if (out.node) {
    out.node->backprop = [rows, cols, inv_rms = std::move(inv_rms)](NodeT<T>& node) {
      const TensorT<T>& x = node.parents[0];
      const TensorT<T>& w = node.parents[1];
      const T* px = x.data->data();
      const T* pw = w.data->data();
      const T* g = node.out.grad->data();
      for (int i = 0; i < rows; ++i) {
        const T inv = inv_rms[static_cast<std::size_t>(i)];
        const T* xr = px + std::size_t(i) * cols;
        const T* gr = g + std::size_t(i) * cols;
        if (detail::wants_grad(w)) {
          T* dw = w.grad->data();
          for (int j = 0; j < cols; ++j) dw[j] += gr[j] * xr[j] * inv;
        }
        if (detail::wants_grad(x)) {
          T* dx = x.grad->data() + std::size_t(i) * cols;
          T dot = T(0);
          for (int j = 0; j < cols; ++j) dot += gr[j] * pw[j] * xr[j];
          const T coef = dot * inv * inv * inv / T(cols);
          for (int j = 0; j < cols; ++j) dx[j] += inv * pw[j] * gr[j] - coef * xr[j];
        }
      }
    };
  }
  return out;
}

template <typename T>
TensorT<T> silu(const TensorT<T>& a) {
  detail::require_nonempty(a, "silu");
  TensorT<T> out = detail::make_out<T>(a.shape, {a}, "silu");
  const std::size_t n = out.numel();
  const T* pa = a.data->data();
  T* po = out.data->data();
  for (std::size_t i = 0; i < n; ++i) {
    const T s = T(1) / (T(1) + std::exp(-pa[i]));
    po[i] = pa[i] * s;
  }
  if (out.node) {
    out.node->backprop = [](NodeT<T>& node) {
      const TensorT<T>& a = node.parents[0];
      if (!detail::wants_grad(a)) return;
      const T* pa = a.data->data();
      const T* g = node.out.grad->data();
      T* d = a.grad->data();
      const std::size_t n = node.out.numel();
      for (std::size_t i = 0; i < n; ++i) {
        const T s = T(1) / (T(1) + std::exp(-pa[i]));
        d[i] += g[i] * s * (T(1) + pa[i] * (T(1) - s));
      }
    };
  }
  return out;
}

template <typename T>
TensorT<T> sum(const TensorT<T>& a) {
  detail::require_nonempty(a, "sum");
  TensorT<T> out = detail::make_out<T>({1}, {a}, "sum");
  const std::size_t n = a.numel();
  const T* pa = a.data->data();
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += pa[i];
  (*out.data)[0] = acc;
  if (out.node) {
    out.node->backprop = [](NodeT<T>& node) {
      const TensorT<T>& a = node.parents[0];
      if (!detail::wants_grad(a)) return;
      const T g = (*node.out.grad)[0];
      T* d = a.grad->data();
      const std::size_t n = a.numel();
      for (std::size_t i = 0; i < n; ++i) d[i] += g;
    };
  }
  return out;
}

// Mean negative log-likelihood over the positions selected by `mask`:
//   -(1/count) * sum_{i: mask[i]} log softmax(logits[i])[targets[i]]
// Stable via max-shifted log-sum-exp. Rows with mask[i]==0 are never read,
// so the result is bitwise independent of them.
template <typename T>
TensorT<T> masked_cross_entropy(const TensorT<T>& logits, std::span<const int> targets,
                                std::span<const std::uint8_t> mask) {
  detail::require_rank(logits, 2, "masked_cross_entropy");
  const int rows = logits.dim(0), cols = logits.dim(1);
  if (targets.size() != static_cast<std::size_t>(rows) ||
      mask.size() != static_cast<std::size_t>(rows)) {
    throw ShapeError("masked_cross_entropy: logits " + shape_str(logits.shape) + " need " +
                     std::to_string(rows) + " targets/mask entries, got " +
                     std::to_string(targets.size()) + "/" + std::to_string(mask.size()));
  }
  long count = 0;
  for (int i = 0; i < rows; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    ++count;
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= cols) {
      throw TokenIdError("masked_cross_entropy: target " + std::to_string(t) + " at row " +
                         std::to_string(i) + " outside [0, " + std::to_string(cols) + ")");
    }
  }
  if (count == 0) {
    throw EmptySupervisionError("masked_cross_entropy: mask selects no positions");
  }

  TensorT<T> out = detail::make_out<T>({1}, {logits}, "masked_cross_entropy");
  const T* pl = logits.data->data();
  double acc = 0.0;  // accumulate in double regardless of T
  for (int i = 0; i < rows; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const T* x = pl + std::size_t(i) * cols;
    T mx = x[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    T z = T(0);
    for (int j = 0; j < cols; ++j) z += std::exp(x[j] - mx);
    const double lse = static_cast<double>(mx) + std::log(static_cast<double>(z));
    acc += lse - static_cast<double>(x[targets[static_cast<std::size_t>(i)]]);
  }
  (*out.data)[0] = static_cast<T>(acc / static_cast<double>(count));

  if (out.node) {
    std::vector<int> tv(targets.begin(), targets.end());
    std::vector<std::uint8_t> mv(mask.begin(), mask.end());
    out.node->backprop = [rows, cols, count, tv = std::move(tv),
                          mv = std::move(mv)](NodeT<T>& node) {
      const TensorT<T>& logits = node.parents[0];
      if (!detail::wants_grad(logits)) return;
      const T g = (*node.out.grad)[0] / T(count);
      const T* pl = logits.data->data();
      T* d = logits.grad->data();
      for (int i = 0; i < rows; ++i) {
        if (!mv[static_cast<std::size_t>(i)]) continue;
        const T* x = pl + std::size_t(i) * cols;
        T* dr = d + std::size_t(i) * cols;
        T mx = x[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
        T z = T(0);
        for (int j = 0; j < cols; ++j) z += std::exp(x[j] - mx);
        const T inv = T(1) / z;
        for (int j = 0; j < cols; ++j) dr[j] += g * std::exp(x[j] - mx) * inv;
        dr[tv[static_cast<std::size_t>(i)]] -= g;
      }
    };
  }
  return out;
}

}  // namespace methanol
