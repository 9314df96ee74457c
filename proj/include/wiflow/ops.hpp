#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "wiflow/tape.hpp"
#include "wiflow/tensor.hpp"

// Differentiable tensor operations. Every op computes eagerly and, when a
// tape is active and an input is tracked, records a backward closure that
// accumulates (sums) into input grad buffers. Reductions and statistics
// accumulate in double regardless of the scalar type.
namespace wiflow {

namespace detail {

template <typename S>
using StoragePtr = std::shared_ptr<typename Tensor<S>::Storage>;

template <typename S>
VecX<S>& gbuf(const StoragePtr<S>& st) {
  if (st->grad.size() == 0) st->grad = VecX<S>::Zero(st->values.size());
  return st->grad;
}

template <typename S>
bool has_out_grad(const StoragePtr<S>& st) {
  return st->grad.size() > 0;
}

template <typename S>
void mark(Tensor<S>& out) {
  out.set_tape_tag(Tape<S>::current());
}

inline std::vector<std::int64_t> strides_of(const Shape& s) {
  std::vector<std::int64_t> st(s.size());
  std::int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<std::size_t>(i)] = acc;
    acc *= s[static_cast<std::size_t>(i)];
  }
  return st;
}

// outer / axis-length / inner decomposition around one axis
struct AxisSplit {
  std::int64_t outer, len, inner;
};

inline AxisSplit split_axis(const Shape& s, int axis) {
  check(axis >= 0 && axis < static_cast<int>(s.size()),
        "axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  AxisSplit a{1, s[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) a.outer *= s[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <typename S, typename Fwd, typename Bwd>
Tensor<S> unary_op(const Tensor<S>& x, Fwd f, Bwd dfdx) {
  Tensor<S> y(x.shape());
  const std::int64_t n = x.size();
  for (std::int64_t i = 0; i < n; ++i) y[i] = f(x[i]);
  if (tracked(x)) {
    detail::mark(y);
    auto xs = x.storage();
    auto ys = y.storage();
    Tape<S>::current()->record([xs, ys, dfdx]() {
      if (!detail::has_out_grad<S>(ys)) return;
      auto& gx = detail::gbuf<S>(xs);
      for (std::int64_t i = 0; i < xs->values.size(); ++i)
        gx[i] += ys->grad[i] * dfdx(xs->values[i], ys->values[i]);
    });
  }
  return y;
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  return unary_op(
      x, [](S v) { return S(1) / (S(1) + std::exp(-v)); },
      [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
Tensor<S> silu(const Tensor<S>& x) {
  return unary_op(
      x,
      [](S v) {
        const S s = S(1) / (S(1) + std::exp(-v));
        return v * s;
      },
      [](S v, S) {
        const S s = S(1) / (S(1) + std::exp(-v));
        return s + v * s * (S(1) - s);
      });
}

template <typename S>
Tensor<S> square(const Tensor<S>& x) {
  return unary_op(
      x, [](S v) { return v * v; }, [](S v, S) { return S(2) * v; });
}

// sqrt with a guarded derivative at 0; inputs are expected non-negative
// (sums of squares).
template <typename S>
Tensor<S> sqrt_guarded(const Tensor<S>& x) {
  return unary_op(
      x, [](S v) { return std::sqrt(std::max(v, S(0))); },
      [](S, S y) { return S(0.5) / std::max(y, S(1e-12)); });
}

// Smooth-L1 kernel h: quadratic inside |x| < beta, linear outside, once
// differentiable at the joint.
template <typename S>
Tensor<S> smooth_l1(const Tensor<S>& x, S beta) {
  check(beta > S(0), "smooth_l1 beta must be positive");
  return unary_op(
      x,
      [beta](S v) {
        const S a = std::abs(v);
        return a < beta ? S(0.5) * v * v / beta : a - S(0.5) * beta;
      },
      [beta](S v, S) {
        const S a = std::abs(v);
        return a < beta ? v / beta : (v > S(0) ? S(1) : (v < S(0) ? S(-1) : S(0)));
      });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S c) {
  return unary_op(
      x, [c](S v) { return c * v; }, [c](S, S) { return c; });
}

template <typename S, typename Fwd>
Tensor<S> binary_op(const Tensor<S>& a, const Tensor<S>& b, Fwd f, S dfda_lin, S dfdb_lin,
                    bool mul_rule) {
  check(a.shape() == b.shape(),
        "elementwise op needs equal shapes, got " + shape_str(a.shape()) + " vs " +
            shape_str(b.shape()));
  Tensor<S> y(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) y[i] = f(a[i], b[i]);
  if (tracked(a) || tracked(b)) {
    detail::mark(y);
    auto as = a.storage();
    auto bs = b.storage();
    auto ys = y.storage();
    const bool ta = tracked(a), tb = tracked(b);
    Tape<S>::current()->record([as, bs, ys, dfda_lin, dfdb_lin, mul_rule, ta, tb]() {
      if (!detail::has_out_grad<S>(ys)) return;
      const auto& gy = ys->grad;
      if (ta) {
        auto& ga = detail::gbuf<S>(as);
        if (mul_rule)
          for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * bs->values[i];
        else
          for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += gy[i] * dfda_lin;
      }
      if (tb) {
        auto& gb = detail::gbuf<S>(bs);
        if (mul_rule)
          for (std::int64_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * as->values[i];
        else
          for (std::int64_t i = 0; i < gb.size(); ++i) gb[i] += gy[i] * dfdb_lin;
      }
    });
  }
  return y;
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      a, b, [](S x, S y) { return x + y; }, S(1), S(1), false);
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      a, b, [](S x, S y) { return x - y; }, S(1), S(-1), false);
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op(
      a, b, [](S x, S y) { return x * y; }, S(0), S(0), true);
}

// ------------------------------------------------------------------- softmax

template <typename S>
Tensor<S> softmax(const Tensor<S>& x, int axis) {
  const auto ax = detail::split_axis(x.shape(), axis);
  Tensor<S> y(x.shape());
  const S* xp = x.data();
  S* yp = y.data();
  for (std::int64_t o = 0; o < ax.outer; ++o)
    for (std::int64_t in = 0; in < ax.inner; ++in) {
      const std::int64_t base = o * ax.len * ax.inner + in;
      S m = xp[base];
      for (std::int64_t l = 1; l < ax.len; ++l)
        m = std::max(m, xp[base + l * ax.inner]);
      double sum = 0.0;
      for (std::int64_t l = 0; l < ax.len; ++l) {
        const S e = std::exp(xp[base + l * ax.inner] - m);
        yp[base + l * ax.inner] = e;
        sum += static_cast<double>(e);
      }
      const S inv = static_cast<S>(1.0 / sum);
      for (std::int64_t l = 0; l < ax.len; ++l) yp[base + l * ax.inner] *= inv;
    }
  if (tracked(x)) {
    detail::mark(y);
    auto xs = x.storage();
    auto ys = y.storage();
    Tape<S>::current()->record([xs, ys, ax]() {
      if (!detail::has_out_grad<S>(ys)) return;
      auto& gx = detail::gbuf<S>(xs);
      const auto& gy = ys->grad;
      const auto& yv = ys->values;
      for (std::int64_t o = 0; o < ax.outer; ++o)
        for (std::int64_t in = 0; in < ax.inner; ++in) {
          const std::int64_t base = o * ax.len * ax.inner + in;
          double dot = 0.0;
          for (std::int64_t l = 0; l < ax.len; ++l) {
            const std::int64_t i = base + l * ax.inner;
            dot += static_cast<double>(gy[i]) * static_cast<double>(yv[i]);
          }
          for (std::int64_t l = 0; l < ax.len; ++l) {
            const std::int64_t i = base + l * ax.inner;
            gx[i] += yv[i] * (gy[i] - static_cast<S>(dot));
          }
        }
    });
  }
  return y;
}

// ---------------------------------------------------------------- reductions

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < x.size(); ++i) acc += static_cast<double>(x[i]);
  Tensor<S> y = Tensor<S>::scalar(static_cast<S>(acc));
  if (tracked(x)) {
    detail::mark(y);
    auto xs = x.storage();
    auto ys = y.storage();
    Tape<S>::current()->record([xs, ys]() {
      if (!detail::has_out_grad<S>(ys)) return;
      detail::gbuf<S>(xs).array() += ys->grad[0];
    });
  }
  return y;
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& x) {
  const std::int64_t n = x.size();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]);
  Tensor<S> y = Tensor<S>::scalar(static_cast<S>(acc / static_cast<double>(n)));
  if (tracked(x)) {
    detail::mark(y);
    auto xs = x.storage();
    auto ys = y.storage();
    Tape<S>::current()->record([xs, ys, n]() {
      if (!detail::has_out_grad<S>(ys)) return;
      detail::gbuf<S>(xs).array() += ys->grad[0] / static_cast<S>(n);
    });
  }
  return y;
}

// Sum over the trailing axis; output drops that axis (rank-1 input -> {1}).
template <typename S>
Tensor<S> sum_last(const Tensor<S>& x) {
  const std::int64_t L = x.dim(x.rank() - 1);
  const std::int64_t rows = x.size() / L;
  Tensor<S> y(drop_last(x.shape()));
  for (std::int64_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::int64_t l = 0; l < L; ++l) acc += static_cast<double>(x[r * L + l]);
    y[r] = static_cast<S>(acc);
  }
  if (tracked(x)) {
    detail::mark(y);
    auto xs = x.storage();
    auto ys = y.storage();
    Tape<S>::current()->record([xs, ys, L, rows]() {
      if (!detail::has_out_grad<S>(ys)) return;
      auto& gx = detail::gbuf<S>(xs);
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t l = 0; l < L; ++l) gx[r * L + l] += ys->grad[r];
    });
  }
  return y;
}

// Mean over the trailing axis, keeping it as extent 1.
template <typename S>
Tensor<S> adaptive_avg_pool_last(const Tensor<S>& x) {
  check(x.rank() >= 1, "adaptive_avg_pool_last needs rank >= 1");
  const std::int64_t L = x.dim(x.rank() - 1);
  const std::int64_t rows = x.size() / L;
  Shape out_shape = x.shape();
  out_shape.back() = 1;
  Tensor<S> y(out_shape);
  for (std::int64_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::int64_t l = 0; l < L; ++l) acc += static_cast<double>(x[r * L + l]);
    y[r] = static_cast<S>(acc / static_cast<double>(L));
  }
  if (tracked(x)) {
    detail::mark(y);
    auto xs = x.storage();
    auto ys = y.storage();
    Tape<S>::current()->record([xs, ys, L, rows]() {
      if (!detail::has_out_grad<S>(ys)) return;
      auto& gx = detail::gbuf<S>(xs);
      for (std::int64_t r = 0; r < rows; ++r) {
        const S g = ys->grad[r] / static_cast<S>(L);
        for (std::int64_t l = 0; l < L; ++l) gx[r * L + l] += g;
      }
    });
  }
  return y;
}

// ------------------------------------------------------------- data movement

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  check(numel(shape) == x.size(),
        "reshape to " + shape_str(shape) + " incompatible with " + shape_str(x.shape()));
  Tensor<S> y(std::move(shape));
  y.flat() = x.flat();
  if (tracked(x)) {
    detail::mark(y);
    auto xs = x.storage();
    auto ys = y.storage();
    Tape<S>::current()->record([xs, ys]() {
      if (!detail::has_out_grad<S>(ys)) return;
      detail::gbuf<S>(xs) += ys->grad;
    });
  }
  return y;
}

namespace detail {

// dst, laid out as src.shape permuted by axes, gets dst[i0,..] (+)= src[...].
template <typename S, bool Accumulate>
void permute_copy(const S* src, const Shape& src_shape, const std::vector<int>& axes, S* dst) {
  const int r = static_cast<int>(src_shape.size());
  const auto sstr = strides_of(src_shape);
  Shape dshape(static_cast<std::size_t>(r));
  std::vector<std::int64_t> step(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    dshape[static_cast<std::size_t>(i)] = src_shape[static_cast<std::size_t>(axes[i])];
    step[static_cast<std::size_t>(i)] = sstr[static_cast<std::size_t>(axes[i])];
  }
  std::vector<std::int64_t> idx(static_cast<std::size_t>(r), 0);
  std::int64_t soff = 0;
  const std::int64_t total = numel(src_shape);
  for (std::int64_t o = 0; o < total; ++o) {
    if constexpr (Accumulate)
      dst[o] += src[soff];
    else
      dst[o] = src[soff];
    for (int i = r - 1; i >= 0; --i) {
      auto ii = static_cast<std::size_t>(i);
      if (++idx[ii] < dshape[ii]) {
        soff += step[ii];
        break;
      }
      soff -= step[ii] * (dshape[ii] - 1);
      idx[ii] = 0;
    }
  }
}

}  // namespace detail

// General axis permutation (transpose). axes[i] names the source axis that
// becomes output axis i.
template <typename S>
Tensor<S> permute(const Tensor<S>& x, const std::vector<int>& axes) {
  const int r = x.rank();
  check(static_cast<int>(axes.size()) == r, "permute needs one entry per axis");
  std::vector<bool> seen(static_cast<std::size_t>(r), false);
  for (int a : axes) {
    check(a >= 0 && a < r && !seen[static_cast<std::size_t>(a)],
          "permute axes must be a permutation of 0.." + std::to_string(r - 1));
    seen[static_cast<std::size_t>(a)] = true;
  }
  Shape out_shape(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i)
    out_shape[static_cast<std::size_t>(i)] = x.dim(axes[static_cast<std::size_t>(i)]);
  Tensor<S> y(out_shape);
  detail::permute_copy<S, false>(x.data(), x.shape(), axes, y.data());
  if (tracked(x)) {
    detail::mark(y);
    auto xs = x.storage();
    auto ys = y.storage();
    std::vector<int> inv(axes.size());
    for (int i = 0; i < r; ++i) inv[static_cast<std::size_t>(axes[static_cast<std::size_t>(i)])] = i;
    Shape yshape = out_shape;
    Tape<S>::current()->record([xs, ys, inv, yshape]() {
      if (!detail::has_out_grad<S>(ys)) return;
      detail::permute_copy<S, true>(ys->grad.data(), yshape, inv, detail::gbuf<S>(xs).data());
    });
  }
  return y;
}

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis) {
  check(!parts.empty(), "concat needs at least one input");
  const Shape& s0 = parts[0].shape();
  std::int64_t total_len = 0;
  for (const auto& p : parts) {
    check(p.rank() == parts[0].rank(), "concat rank mismatch");
    for (int i = 0; i < p.rank(); ++i)
      if (i != axis)
        check(p.dim(i) == s0[static_cast<std::size_t>(i)],
              "concat shape mismatch: " + shape_str(p.shape()) + " vs " + shape_str(s0));
    total_len += p.dim(axis);
  }
  Shape out_shape = s0;
  out_shape[static_cast<std::size_t>(axis)] = total_len;
  Tensor<S> y(out_shape);
  const auto ax = detail::split_axis(out_shape, axis);
  std::int64_t off = 0;
  bool rec = false;
  for (const auto& p : parts) rec = rec || tracked(p);
  for (const auto& p : parts) {
    const std::int64_t plen = p.dim(axis);
    for (std::int64_t o = 0; o < ax.outer; ++o)
      std::copy(p.data() + o * plen * ax.inner, p.data() + (o + 1) * plen * ax.inner,
                y.data() + (o * total_len + off) * ax.inner);
    off += plen;
  }
  if (rec) {
    detail::mark(y);
    std::vector<detail::StoragePtr<S>> srcs;
    std::vector<std::int64_t> lens;
    std::vector<bool> need;
    for (const auto& p : parts) {
      srcs.push_back(p.storage());
      lens.push_back(p.dim(axis));
      need.push_back(tracked(p));
    }
    auto ys = y.storage();
    Tape<S>::current()->record([srcs, lens, need, ys, ax, total_len]() {
      if (!detail::has_out_grad<S>(ys)) return;
      std::int64_t off2 = 0;
      for (std::size_t k = 0; k < srcs.size(); ++k) {
        if (need[k]) {
          auto& g = detail::gbuf<S>(srcs[k]);
          for (std::int64_t o = 0; o < ax.outer; ++o)
            for (std::int64_t i = 0; i < lens[k] * ax.inner; ++i)
              g[o * lens[k] * ax.inner + i] += ys->grad[(o * total_len + off2) * ax.inner + i];
        }
        off2 += lens[k];
      }
    });
  }
  return y;
}

// Gathers slices along an axis; backward scatter-adds. Indices may repeat.
template <typename S>
Tensor<S> index_select(const Tensor<S>& x, int axis, const std::vector<std::int64_t>& idx) {
  const auto ax = detail::split_axis(x.shape(), axis);
  for (auto i : idx)
    check(i >= 0 && i < ax.len, "index_select index " + std::to_string(i) + " out of range");
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = static_cast<std::int64_t>(idx.size());
  Tensor<S> y(out_shape);
  const std::int64_t m = static_cast<std::int64_t>(idx.size());
  for (std::int64_t o = 0; o < ax.outer; ++o)
    for (std::int64_t j = 0; j < m; ++j)
      std::copy(x.data() + (o * ax.len + idx[static_cast<std::size_t>(j)]) * ax.inner,
                x.data() + (o * ax.len + idx[static_cast<std::size_t>(j)] + 1) * ax.inner,
                y.data() + (o * m + j) * ax.inner);
  if (tracked(x)) {
    detail::mark(y);
    auto xs = x.storage();
    auto ys = y.storage();
    Tape<S>::current()->record([xs, ys, idx, ax, m]() {
      if (!detail::has_out_grad<S>(ys)) return;
      auto& gx = detail::gbuf<S>(xs);
      for (std::int64_t o = 0; o < ax.outer; ++o)
        for (std::int64_t j = 0; j < m; ++j)
          for (std::int64_t i = 0; i < ax.inner; ++i)
            gx[(o * ax.len + idx[static_cast<std::size_t>(j)]) * ax.inner + i] +=
                ys->grad[(o * m + j) * ax.inner + i];
    });
  }
  return y;
}

// ------------------------------------------------------------ matrix product

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  check(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
        "matmul shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::int64_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  Tensor<S> y({M, N});
  Eigen::Map<RowMat<S>>(y.data(), M, N).noalias() =
      Eigen::Map<const RowMat<S>>(a.data(), M, K) * Eigen::Map<const RowMat<S>>(b.data(), K, N);
  if (tracked(a) || tracked(b)) {
    detail::mark(y);
    auto as = a.storage();
    auto bs = b.storage();
    auto ys = y.storage();
    const bool ta = tracked(a), tb = tracked(b);
    Tape<S>::current()->record([as, bs, ys, M, K, N, ta, tb]() {
      if (!detail::has_out_grad<S>(ys)) return;
      Eigen::Map<const RowMat<S>> gy(ys->grad.data(), M, N);
      if (ta) {
        Eigen::Map<RowMat<S>> ga(detail::gbuf<S>(as).data(), M, K);
        ga.noalias() += gy * Eigen::Map<const RowMat<S>>(bs->values.data(), K, N).transpose();
      }
      if (tb) {
        Eigen::Map<RowMat<S>> gb(detail::gbuf<S>(bs).data(), K, N);
        gb.noalias() += Eigen::Map<const RowMat<S>>(as->values.data(), M, K).transpose() * gy;
      }
    });
  }
  return y;
}

// Batched matmul over the leading axis: (L,M,K) x (L,K,N) -> (L,M,N).
template <typename S>
Tensor<S> bmm(const Tensor<S>& a, const Tensor<S>& b) {
  check(a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(1),
        "bmm shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::int64_t L = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
  Tensor<S> y({L, M, N});
  for (std::int64_t l = 0; l < L; ++l)
    Eigen::Map<RowMat<S>>(y.data() + l * M * N, M, N).noalias() =
        Eigen::Map<const RowMat<S>>(a.data() + l * M * K, M, K) *
        Eigen::Map<const RowMat<S>>(b.data() + l * K * N, K, N);
  if (tracked(a) || tracked(b)) {
    detail::mark(y);
    auto as = a.storage();
    auto bs = b.storage();
    auto ys = y.storage();
    const bool ta = tracked(a), tb = tracked(b);
    Tape<S>::current()->record([as, bs, ys, L, M, K, N, ta, tb]() {
      if (!detail::has_out_grad<S>(ys)) return;
      for (std::int64_t l = 0; l < L; ++l) {
        Eigen::Map<const RowMat<S>> gy(ys->grad.data() + l * M * N, M, N);
        if (ta)
          Eigen::Map<RowMat<S>>(detail::gbuf<S>(as).data() + l * M * K, M, K).noalias() +=
              gy * Eigen::Map<const RowMat<S>>(bs->values.data() + l * K * N, K, N).transpose();
        if (tb)
          Eigen::Map<RowMat<S>>(detail::gbuf<S>(bs).data() + l * K * N, K, N).noalias() +=
              Eigen::Map<const RowMat<S>>(as->values.data() + l * M * K, M, K).transpose() * gy;
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------- convolution

// Causal dilated grouped 1-D convolution (cross-correlation against past
// samples): y[b,co,s] = sum_i w[co,ci,i] * x[b,c,s - d*i], with implicit
// left zero padding of (k-1)*d so the output keeps length T. Output column s
// therefore never reads input columns > s.
template <typename S>
Tensor<S> conv1d_causal(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias,
                        std::int64_t dilation, std::int64_t groups) {
  check(x.rank() == 3, "conv1d input must be BxCxT, got " + shape_str(x.shape()));
  check(w.rank() == 3, "conv1d weight must be CoutxCingxk, got " + shape_str(w.shape()));
  check(dilation >= 1, "dilation must be >= 1");
  const std::int64_t B = x.dim(0), Cin = x.dim(1), T = x.dim(2);
  const std::int64_t Cout = w.dim(0), Cing = w.dim(1), k = w.dim(2);
  check(groups >= 1 && Cin % groups == 0 && Cout % groups == 0,
        "groups=" + std::to_string(groups) + " must divide Cin=" + std::to_string(Cin) +
            " and Cout=" + std::to_string(Cout));
  check(Cing == Cin / groups, "conv1d weight " + shape_str(w.shape()) + " expects Cin/groups=" +
                                  std::to_string(Cin / groups) + " input channels");
  if (bias.defined())
    check(bias.size() == Cout, "bias length " + std::to_string(bias.size()) + " != Cout");

  const std::int64_t cols = B * T;
  auto im2col = std::make_shared<RowMat<S>>(Cin * k, cols);
  {
    RowMat<S>& M = *im2col;
    for (std::int64_t c = 0; c < Cin; ++c)
      for (std::int64_t i = 0; i < k; ++i) {
        S* row = M.data() + (c * k + i) * cols;
        const std::int64_t shift = dilation * i;
        for (std::int64_t b = 0; b < B; ++b) {
          const S* xc = x.data() + (b * Cin + c) * T;
          S* dst = row + b * T;
          for (std::int64_t s = 0; s < T; ++s) dst[s] = s >= shift ? xc[s - shift] : S(0);
        }
      }
  }

  RowMat<S> ymat(Cout, cols);
  const std::int64_t cog = Cout / groups;
  for (std::int64_t g = 0; g < groups; ++g)
    ymat.middleRows(g * cog, cog).noalias() =
        Eigen::Map<const RowMat<S>>(w.data() + g * cog * Cing * k, cog, Cing * k) *
        im2col->middleRows(g * Cing * k, Cing * k);

  Tensor<S> y({B, Cout, T});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t co = 0; co < Cout; ++co) {
      const S add_b = bias.defined() ? bias[co] : S(0);
      const S* src = ymat.data() + co * cols + b * T;
      S* dst = y.data() + (b * Cout + co) * T;
      for (std::int64_t s = 0; s < T; ++s) dst[s] = src[s] + add_b;
    }

  if (tracked(x) || tracked(w) || (bias.defined() && tracked(bias))) {
    detail::mark(y);
    auto xs = x.storage();
    auto ws = w.storage();
    auto ys = y.storage();
    detail::StoragePtr<S> bsp = bias.defined() ? bias.storage() : nullptr;
    const bool tx = tracked(x), tw = tracked(w), tb = bias.defined() && tracked(bias);
    Tape<S>::current()->record([xs, ws, bsp, ys, im2col, B, Cin, Cout, T, k, dilation, groups, cog,
                                Cing, cols, tx, tw, tb]() {
      if (!detail::has_out_grad<S>(ys)) return;
      RowMat<S> gymat(Cout, cols);
      for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t co = 0; co < Cout; ++co)
          for (std::int64_t s = 0; s < T; ++s)
            gymat(co, b * T + s) = ys->grad[(b * Cout + co) * T + s];
      if (tb) {
        auto& gb = detail::gbuf<S>(bsp);
        for (std::int64_t co = 0; co < Cout; ++co) {
          double acc = 0.0;
          for (std::int64_t c2 = 0; c2 < cols; ++c2)
            acc += static_cast<double>(gymat(co, c2));
          gb[co] += static_cast<S>(acc);
        }
      }
      if (tw) {
        auto& gw = detail::gbuf<S>(ws);
        for (std::int64_t g = 0; g < groups; ++g)
          Eigen::Map<RowMat<S>>(gw.data() + g * cog * Cing * k, cog, Cing * k).noalias() +=
              gymat.middleRows(g * cog, cog) *
              im2col->middleRows(g * Cing * k, Cing * k).transpose();
      }
      if (tx) {
        RowMat<S> gcol(Cin * k, cols);
        for (std::int64_t g = 0; g < groups; ++g)
          gcol.middleRows(g * Cing * k, Cing * k).noalias() =
              Eigen::Map<const RowMat<S>>(ws->values.data() + g * cog * Cing * k, cog, Cing * k)
                  .transpose() *
              gymat.middleRows(g * cog, cog);
        auto& gx = detail::gbuf<S>(xs);
        for (std::int64_t c = 0; c < Cin; ++c)
          for (std::int64_t i = 0; i < k; ++i) {
            const S* row = gcol.data() + (c * k + i) * cols;
            const std::int64_t shift = dilation * i;
            for (std::int64_t b = 0; b < B; ++b) {
              S* gxc = gx.data() + (b * Cin + c) * T;
              const S* src = row + b * T;
              for (std::int64_t s = shift; s < T; ++s) gxc[s - shift] += src[s];
            }
          }
      }
    });
  }
  return y;
}

// Standard 2-D cross-correlation with stride and zero padding.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias, std::int64_t sh,
                 std::int64_t sw, std::int64_t ph, std::int64_t pw) {
  check(x.rank() == 4, "conv2d input must be BxCxHxW, got " + shape_str(x.shape()));
  check(w.rank() == 4, "conv2d weight must be CoutxCinxKhxKw, got " + shape_str(w.shape()));
  const std::int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  check(w.dim(1) == Cin, "conv2d weight expects " + std::to_string(Cin) + " input channels, got " +
                             std::to_string(w.dim(1)));
  check(sh >= 1 && sw >= 1 && ph >= 0 && pw >= 0, "invalid stride/padding");
  const std::int64_t Ho = (H + 2 * ph - kh) / sh + 1;
  const std::int64_t Wo = (W + 2 * pw - kw) / sw + 1;
  check(H + 2 * ph >= kh && W + 2 * pw >= kw && Ho > 0 && Wo > 0,
        "conv2d produces non-positive output extent for input " + shape_str(x.shape()) +
            " kernel " + shape_str(w.shape()));
  if (bias.defined())
    check(bias.size() == Cout, "bias length " + std::to_string(bias.size()) + " != Cout");

  const std::int64_t cols = B * Ho * Wo;
  const std::int64_t krows = Cin * kh * kw;
  auto im2col = std::make_shared<RowMat<S>>(krows, cols);
  {
    RowMat<S>& M = *im2col;
    for (std::int64_t c = 0; c < Cin; ++c)
      for (std::int64_t u = 0; u < kh; ++u)
        for (std::int64_t v = 0; v < kw; ++v) {
          S* row = M.data() + ((c * kh + u) * kw + v) * cols;
          for (std::int64_t b = 0; b < B; ++b) {
            const S* xc = x.data() + (b * Cin + c) * H * W;
            for (std::int64_t oh = 0; oh < Ho; ++oh) {
              const std::int64_t ih = oh * sh - ph + u;
              S* dst = row + (b * Ho + oh) * Wo;
              if (ih < 0 || ih >= H) {
                std::fill(dst, dst + Wo, S(0));
                continue;
              }
              for (std::int64_t ow = 0; ow < Wo; ++ow) {
                const std::int64_t iw = ow * sw - pw + v;
                dst[ow] = (iw >= 0 && iw < W) ? xc[ih * W + iw] : S(0);
              }
            }
          }
        }
  }

  RowMat<S> ymat(Cout, cols);
  ymat.noalias() = Eigen::Map<const RowMat<S>>(w.data(), Cout, krows) * (*im2col);

  Tensor<S> y({B, Cout, Ho, Wo});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t co = 0; co < Cout; ++co) {
      const S add_b = bias.defined() ? bias[co] : S(0);
      const S* src = ymat.data() + co * cols + b * Ho * Wo;
      S* dst = y.data() + (b * Cout + co) * Ho * Wo;
      for (std::int64_t i = 0; i < Ho * Wo; ++i) dst[i] = src[i] + add_b;
    }

  if (tracked(x) || tracked(w) || (bias.defined() && tracked(bias))) {
    detail::mark(y);
    auto xs = x.storage();
    auto ws = w.storage();
    auto ys = y.storage();
    detail::StoragePtr<S> bsp = bias.defined() ? bias.storage() : nullptr;
    const bool tx = tracked(x), tw = tracked(w), tb = bias.defined() && tracked(bias);
    Tape<S>::current()->record([xs, ws, bsp, ys, im2col, B, Cin, Cout, H, W, Ho, Wo, kh, kw, sh,
                                sw, ph, pw, krows, cols, tx, tw, tb]() {
      if (!detail::has_out_grad<S>(ys)) return;
      RowMat<S> gymat(Cout, cols);
      for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t co = 0; co < Cout; ++co)
          std::copy(ys->grad.data() + (b * Cout + co) * Ho * Wo,
                    ys->grad.data() + (b * Cout + co + 1) * Ho * Wo,
                    gymat.data() + co * cols + b * Ho * Wo);
      if (tb) {
        auto& gb = detail::gbuf<S>(bsp);
        for (std::int64_t co = 0; co < Cout; ++co) {
          double acc = 0.0;
          for (std::int64_t c2 = 0; c2 < cols; ++c2)
            acc += static_cast<double>(gymat(co, c2));
          gb[co] += static_cast<S>(acc);
        }
      }
      if (tw)
        Eigen::Map<RowMat<S>>(detail::gbuf<S>(ws).data(), Cout, krows).noalias() +=
            gymat * im2col->transpose();
      if (tx) {
        RowMat<S> gcol(krows, cols);
        gcol.noalias() =
            Eigen::Map<const RowMat<S>>(ws->values.data(), Cout, krows).transpose() * gymat;
        auto& gx = detail::gbuf<S>(xs);
        for (std::int64_t c = 0; c < Cin; ++c)
          for (std::int64_t u = 0; u < kh; ++u)
            for (std::int64_t v = 0; v < kw; ++v) {
              const S* row = gcol.data() + ((c * kh + u) * kw + v) * cols;
              for (std::int64_t b = 0; b < B; ++b) {
                S* gxc = gx.data() + (b * Cin + c) * H * W;
                for (std::int64_t oh = 0; oh < Ho; ++oh) {
                  const std::int64_t ih = oh * sh - ph + u;
                  if (ih < 0 || ih >= H) continue;
                  const S* src = row + (b * Ho + oh) * Wo;
                  for (std::int64_t ow = 0; ow < Wo; ++ow) {
                    const std::int64_t iw = ow * sw - pw + v;
                    if (iw >= 0 && iw < W) gxc[ih * W + iw] += src[ow];
                  }
                }
              }
            }
      }
    });
  }
  return y;
}

// Single-sample convenience forms: C x T and C x H x W inputs run as a
// batch of one.
template <typename S>
Tensor<S> conv1d_causal_single(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias,
                               std::int64_t dilation, std::int64_t groups) {
  check(x.rank() == 2, "expected CxT input, got " + shape_str(x.shape()));
  Tensor<S> xb = reshape(x, {1, x.dim(0), x.dim(1)});
  Tensor<S> yb = conv1d_causal(xb, w, bias, dilation, groups);
  return reshape(yb, {yb.dim(1), yb.dim(2)});
}

template <typename S>
Tensor<S> conv2d_single(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias,
                        std::int64_t sh, std::int64_t sw, std::int64_t ph, std::int64_t pw) {
  check(x.rank() == 3, "expected CxHxW input, got " + shape_str(x.shape()));
  Tensor<S> xb = reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)});
  Tensor<S> yb = conv2d(xb, w, bias, sh, sw, ph, pw);
  return reshape(yb, {yb.dim(1), yb.dim(2), yb.dim(3)});
}

// ---------------------------------------------------------------- batch norm

// Normalizes over every axis except `channel_axis`. In training mode the
// batch statistics are used and the running estimates are updated in place
// (running tensors are buffers, not graph nodes); in eval mode the running
// estimates are used and the op is affine in x.
template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     Tensor<S>& running_mean, Tensor<S>& running_var, double momentum, double eps,
                     bool training, int channel_axis = 1) {
  const auto ax = detail::split_axis(x.shape(), channel_axis);
  const std::int64_t C = ax.len;
  check(gamma.size() == C && beta.size() == C && running_mean.size() == C &&
            running_var.size() == C,
        "batch_norm parameter size mismatch for C=" + std::to_string(C));
  check(eps > 0.0, "batch_norm eps must be positive");
  const std::int64_t n_per_c = ax.outer * ax.inner;

  std::vector<double> mean(static_cast<std::size_t>(C)), invstd(static_cast<std::size_t>(C));
  if (training) {
    std::vector<double> var(static_cast<std::size_t>(C));
    for (std::int64_t c = 0; c < C; ++c) {
      double m = 0.0;
      for (std::int64_t o = 0; o < ax.outer; ++o) {
        const S* p = x.data() + (o * C + c) * ax.inner;
        for (std::int64_t i = 0; i < ax.inner; ++i) m += static_cast<double>(p[i]);
      }
      m /= static_cast<double>(n_per_c);
      double v = 0.0;
      for (std::int64_t o = 0; o < ax.outer; ++o) {
        const S* p = x.data() + (o * C + c) * ax.inner;
        for (std::int64_t i = 0; i < ax.inner; ++i) {
          const double d = static_cast<double>(p[i]) - m;
          v += d * d;
        }
      }
      v /= static_cast<double>(n_per_c);
      mean[static_cast<std::size_t>(c)] = m;
      var[static_cast<std::size_t>(c)] = v;
      invstd[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(v + eps);
    }
    // unbiased running variance, matching the usual deep-learning convention
    const double bessel =
        n_per_c > 1 ? static_cast<double>(n_per_c) / static_cast<double>(n_per_c - 1) : 1.0;
    for (std::int64_t c = 0; c < C; ++c) {
      running_mean[c] = static_cast<S>((1.0 - momentum) * static_cast<double>(running_mean[c]) +
                                       momentum * mean[static_cast<std::size_t>(c)]);
      running_var[c] = static_cast<S>((1.0 - momentum) * static_cast<double>(running_var[c]) +
                                      momentum * var[static_cast<std::size_t>(c)] * bessel);
    }
  } else {
    for (std::int64_t c = 0; c < C; ++c) {
      mean[static_cast<std::size_t>(c)] = static_cast<double>(running_mean[c]);
      invstd[static_cast<std::size_t>(c)] =
          1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps);
    }
  }

  Tensor<S> y(x.shape());
  auto xhat = std::make_shared<std::vector<S>>(static_cast<std::size_t>(x.size()));
  for (std::int64_t o = 0; o < ax.outer; ++o)
    for (std::int64_t c = 0; c < C; ++c) {
      const S* p = x.data() + (o * C + c) * ax.inner;
      S* q = y.data() + (o * C + c) * ax.inner;
      S* h = xhat->data() + (o * C + c) * ax.inner;
      const double m = mean[static_cast<std::size_t>(c)];
      const double is = invstd[static_cast<std::size_t>(c)];
      const S g = gamma[c], bta = beta[c];
      for (std::int64_t i = 0; i < ax.inner; ++i) {
        const S xh = static_cast<S>((static_cast<double>(p[i]) - m) * is);
        h[i] = xh;
        q[i] = g * xh + bta;
      }
    }

  if (tracked(x) || tracked(gamma) || tracked(beta)) {
    detail::mark(y);
    auto xs = x.storage();
    auto gs = gamma.storage();
    auto bs = beta.storage();
    auto ys = y.storage();
    const bool tx = tracked(x), tg = tracked(gamma), tb = tracked(beta);
    Tape<S>::current()->record([xs, gs, bs, ys, xhat, invstd, ax, C, n_per_c, training, tx, tg,
                                tb]() {
      if (!detail::has_out_grad<S>(ys)) return;
      const auto& gy = ys->grad;
      std::vector<double> sum_gy(static_cast<std::size_t>(C), 0.0);
      std::vector<double> sum_gy_xhat(static_cast<std::size_t>(C), 0.0);
      for (std::int64_t o = 0; o < ax.outer; ++o)
        for (std::int64_t c = 0; c < C; ++c) {
          const std::int64_t base = (o * C + c) * ax.inner;
          for (std::int64_t i = 0; i < ax.inner; ++i) {
            sum_gy[static_cast<std::size_t>(c)] += static_cast<double>(gy[base + i]);
            sum_gy_xhat[static_cast<std::size_t>(c)] +=
                static_cast<double>(gy[base + i]) * static_cast<double>((*xhat)[static_cast<std::size_t>(base + i)]);
          }
        }
      if (tg) {
        auto& gg = detail::gbuf<S>(gs);
        for (std::int64_t c = 0; c < C; ++c)
          gg[c] += static_cast<S>(sum_gy_xhat[static_cast<std::size_t>(c)]);
      }
      if (tb) {
        auto& gb = detail::gbuf<S>(bs);
        for (std::int64_t c = 0; c < C; ++c)
          gb[c] += static_cast<S>(sum_gy[static_cast<std::size_t>(c)]);
      }
      if (tx) {
        auto& gx = detail::gbuf<S>(xs);
        const double inv_n = 1.0 / static_cast<double>(n_per_c);
        for (std::int64_t o = 0; o < ax.outer; ++o)
          for (std::int64_t c = 0; c < C; ++c) {
            const std::int64_t base = (o * C + c) * ax.inner;
            const double g = static_cast<double>(gs->values[c]);
            const double is = invstd[static_cast<std::size_t>(c)];
            const double mg = sum_gy[static_cast<std::size_t>(c)] * inv_n;
            const double mgx = sum_gy_xhat[static_cast<std::size_t>(c)] * inv_n;
            for (std::int64_t i = 0; i < ax.inner; ++i) {
              const double d = static_cast<double>(gy[base + i]);
              const double xh = static_cast<double>((*xhat)[static_cast<std::size_t>(base + i)]);
              const double dx = training ? g * is * (d - mg - xh * mgx) : g * is * d;
              gx[base + i] += static_cast<S>(dx);
            }
          }
      }
    });
  }
  return y;
}

}  // namespace wiflow
