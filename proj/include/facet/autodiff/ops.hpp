#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "facet/autodiff/tape.hpp"

// Differentiable primitives over 2-D tensors. Every primitive checks its
// result for NaN/Inf and throws NumericError naming itself.

namespace facet::ad {

namespace detail {

inline Tape& same_tape(Var a, Var b, const char* op) {
  if (a.tape != b.tape || a.tape == nullptr) throw Error(std::string(op) + ": operands on different tapes");
  return *a.tape;
}

inline Var finish(Tape& tape, Tensor value, bool needs_grad, Tape::BackwardFn fn, const char* op) {
  value.require_finite(op);
  if (!needs_grad) return tape.push(std::move(value), false, nullptr);
  return tape.push(std::move(value), true, std::move(fn));
}

inline bool any_grad(Tape& t, std::initializer_list<Var> vs) {
  for (Var v : vs)
    if (t.needs_grad(v.id)) return true;
  return false;
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions differ (" + shape_string(av.shape()) + " x " +
                         shape_string(bv.shape()) + ")");
  }
  Tensor out = Tensor::zeros(av.rows(), bv.cols());
  out.matrix().noalias() = av.matrix() * bv.matrix();
  const std::size_t ai = a.id, bi = b.id;
  return detail::finish(
      t, std::move(out), detail::any_grad(t, {a, b}),
      [ai, bi](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_slot(self);
        if (tp.needs_grad(ai)) tp.grad_slot(ai).matrix().noalias() += g.matrix() * tp.value(bi).matrix().transpose();
        if (tp.needs_grad(bi)) tp.grad_slot(bi).matrix().noalias() += tp.value(ai).matrix().transpose() * g.matrix();
      },
      "matmul");
}

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out.matrix() += b.value().matrix();
  const std::size_t ai = a.id, bi = b.id;
  return detail::finish(
      t, std::move(out), detail::any_grad(t, {a, b}),
      [ai, bi](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_slot(self);
        if (tp.needs_grad(ai)) tp.grad_slot(ai).matrix() += g.matrix();
        if (tp.needs_grad(bi)) tp.grad_slot(bi).matrix() += g.matrix();
      },
      "add");
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  out.matrix() -= b.value().matrix();
  const std::size_t ai = a.id, bi = b.id;
  return detail::finish(
      t, std::move(out), detail::any_grad(t, {a, b}),
      [ai, bi](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_slot(self);
        if (tp.needs_grad(ai)) tp.grad_slot(ai).matrix() += g.matrix();
        if (tp.needs_grad(bi)) tp.grad_slot(bi).matrix() -= g.matrix();
      },
      "sub");
}

inline Var mul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  out.matrix().array() *= b.value().matrix().array();
  const std::size_t ai = a.id, bi = b.id;
  return detail::finish(
      t, std::move(out), detail::any_grad(t, {a, b}),
      [ai, bi](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_slot(self);
        if (tp.needs_grad(ai))
          tp.grad_slot(ai).matrix().array() += g.matrix().array() * tp.value(bi).matrix().array();
        if (tp.needs_grad(bi))
          tp.grad_slot(bi).matrix().array() += g.matrix().array() * tp.value(ai).matrix().array();
      },
      "mul");
}

inline Var div(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "div");
  require_same_shape(a.value(), b.value(), "div");
  Tensor out = a.value();
  out.matrix().array() /= b.value().matrix().array();
  const std::size_t ai = a.id, bi = b.id;
  return detail::finish(
      t, std::move(out), detail::any_grad(t, {a, b}),
      [ai, bi](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_slot(self);
        const Tensor& bv = tp.value(bi);
        if (tp.needs_grad(ai)) tp.grad_slot(ai).matrix().array() += g.matrix().array() / bv.matrix().array();
        if (tp.needs_grad(bi))
          tp.grad_slot(bi).matrix().array() -=
              g.matrix().array() * tp.value(self).matrix().array() / bv.matrix().array();
      },
      "div");
}

/// a (r x c) + row (1 x c), broadcast over rows.
inline Var add_row(Var a, Var row) {
  Tape& t = detail::same_tape(a, row, "add_row");
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != a.cols()) {
    throw DimensionError("add_row: row shape " + shape_string(rv.shape()) + " does not broadcast over " +
                         shape_string(a.value().shape()));
  }
  Tensor out = a.value();
  out.matrix().rowwise() += rv.matrix().row(0);
  const std::size_t ai = a.id, ri = row.id;
  return detail::finish(
      t, std::move(out), detail::any_grad(t, {a, row}),
      [ai, ri](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_slot(self);
        if (tp.needs_grad(ai)) tp.grad_slot(ai).matrix() += g.matrix();
        if (tp.needs_grad(ri)) tp.grad_slot(ri).matrix().row(0) += g.matrix().colwise().sum();
      },
      "add_row");
}

inline Var scale(Var a, double s) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  out.matrix() *= s;
  const std::size_t ai = a.id;
  return detail::finish(
      t, std::move(out), t.needs_grad(ai),
      [ai, s](Tape& tp, std::size_t self) { tp.grad_slot(ai).matrix() += s * tp.grad_slot(self).matrix(); },
      "scale");
}

inline Var add_scalar(Var a, double s) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  out.matrix().array() += s;
  const std::size_t ai = a.id;
  return detail::finish(
      t, std::move(out), t.needs_grad(ai),
      [ai](Tape& tp, std::size_t self) { tp.grad_slot(ai).matrix() += tp.grad_slot(self).matrix(); },
      "add_scalar");
}

inline Var square(Var a) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  out.matrix().array() = out.matrix().array().square();
  const std::size_t ai = a.id;
  return detail::finish(
      t, std::move(out), t.needs_grad(ai),
      [ai](Tape& tp, std::size_t self) {
        tp.grad_slot(ai).matrix().array() +=
            2.0 * tp.grad_slot(self).matrix().array() * tp.value(ai).matrix().array();
      },
      "square");
}

inline Var exp(Var a) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  out.matrix().array() = out.matrix().array().exp();
  const std::size_t ai = a.id;
  return detail::finish(
      t, std::move(out), t.needs_grad(ai),
      [ai](Tape& tp, std::size_t self) {
        tp.grad_slot(ai).matrix().array() +=
            tp.grad_slot(self).matrix().array() * tp.value(self).matrix().array();
      },
      "exp");
}

/// log(max(a, floor)); the gradient is zero where the floor is active.
inline Var log_clamped(Var a, double floor) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  for (double& v : out.data()) v = std::log(std::max(v, floor));
  const std::size_t ai = a.id;
  return detail::finish(
      t, std::move(out), t.needs_grad(ai),
      [ai, floor](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_slot(self);
        const Tensor& x = tp.value(ai);
        Tensor& ga = tp.grad_slot(ai);
        for (std::size_t i = 0; i < x.size(); ++i)
          if (x[i] > floor) ga[i] += g[i] / x[i];
      },
      "log");
}

inline Var log(Var a) { return log_clamped(a, 0.0); }

inline Var sigmoid(Var a) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  for (double& v : out.data()) v = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  const std::size_t ai = a.id;
  return detail::finish(
      t, std::move(out), t.needs_grad(ai),
      [ai](Tape& tp, std::size_t self) {
        const Tensor& y = tp.value(self);
        const Tensor& g = tp.grad_slot(self);
        Tensor& ga = tp.grad_slot(ai);
        for (std::size_t i = 0; i < y.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
      },
      "sigmoid");
}

inline Var leaky_relu(Var a, double slope = 0.01) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  for (double& v : out.data()) v = v > 0 ? v : slope * v;
  const std::size_t ai = a.id;
  return detail::finish(
      t, std::move(out), t.needs_grad(ai),
      [ai, slope](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_slot(self);
        const Tensor& x = tp.value(ai);
        Tensor& ga = tp.grad_slot(ai);
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] += x[i] > 0 ? g[i] : slope * g[i];
      },
      "leaky_relu");
}

/// Row-wise softmax.
inline Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  auto m = out.matrix();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
  const std::size_t ai = a.id;
  return detail::finish(
      t, std::move(out), t.needs_grad(ai),
      [ai](Tape& tp, std::size_t self) {
        const auto y = tp.value(self).matrix();
        const auto g = tp.grad_slot(self).matrix();
        auto ga = tp.grad_slot(ai).matrix();
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
          const double dot = y.row(r).dot(g.row(r));
          ga.row(r).array() += y.row(r).array() * (g.row(r).array() - dot);
        }
      },
      "softmax");
}

/// Elementwise minimum; ties route the gradient to the first operand.
inline Var minimum(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "minimum");
  require_same_shape(a.value(), b.value(), "minimum");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(out[i], bv[i]);
  const std::size_t ai = a.id, bi = b.id;
  return detail::finish(
      t, std::move(out), detail::any_grad(t, {a, b}),
      [ai, bi](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_slot(self);
        const Tensor& x = tp.value(ai);
        const Tensor& y = tp.value(bi);
        const bool ga_needed = tp.needs_grad(ai), gb_needed = tp.needs_grad(bi);
        for (std::size_t i = 0; i < x.size(); ++i) {
          if (x[i] <= y[i]) {
            if (ga_needed) tp.grad_slot(ai)[i] += g[i];
          } else if (gb_needed) {
            tp.grad_slot(bi)[i] += g[i];
          }
        }
      },
      "minimum");
}

inline Var sum(Var a) {
  Tape& t = *a.tape;
  Tensor out = Tensor::scalar(a.value().matrix().sum());
  const std::size_t ai = a.id;
  return detail::finish(
      t, std::move(out), t.needs_grad(ai),
      [ai](Tape& tp, std::size_t self) {
        tp.grad_slot(ai).matrix().array() += tp.grad_slot(self)[0];
      },
      "sum");
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

/// Per-row sums: (r x c) -> (r x 1).
inline Var sum_cols(Var a) {
  Tape& t = *a.tape;
  Tensor out = Tensor::zeros(a.rows(), 1);
  out.matrix() = a.value().matrix().rowwise().sum();
  const std::size_t ai = a.id;
  return detail::finish(
      t, std::move(out), t.needs_grad(ai),
      [ai](Tape& tp, std::size_t self) {
        tp.grad_slot(ai).matrix().colwise() += tp.grad_slot(self).matrix().col(0);
      },
      "sum_cols");
}

/// Columns [begin, end).
inline Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  if (begin >= end || end > av.cols()) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside " + std::to_string(av.cols()) + " columns");
  }
  const auto width = static_cast<Eigen::Index>(end - begin);
  Tensor out = Tensor::zeros(av.rows(), end - begin);
  out.matrix() = av.matrix().middleCols(static_cast<Eigen::Index>(begin), width);
  const std::size_t ai = a.id;
  return detail::finish(
      t, std::move(out), t.needs_grad(ai),
      [ai, begin, width](Tape& tp, std::size_t self) {
        tp.grad_slot(ai).matrix().middleCols(static_cast<Eigen::Index>(begin), width) +=
            tp.grad_slot(self).matrix();
      },
      "slice_cols");
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  Tape& t = *parts.front().tape;
  const std::size_t rows = parts.front().rows();
  std::size_t total = 0;
  bool needs = false;
  for (Var p : parts) {
    if (p.tape != &t) throw Error("concat_cols: operands on different tapes");
    if (p.rows() != rows) throw DimensionError("concat_cols: row counts differ");
    total += p.cols();
    needs = needs || t.needs_grad(p.id);
  }
  Tensor out = Tensor::zeros(rows, total);
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::size_t offset = 0;
  for (Var p : parts) {
    out.matrix().middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(p.cols())) =
        p.value().matrix();
    spans.emplace_back(p.id, offset);
    offset += p.cols();
  }
  return detail::finish(
      t, std::move(out), needs,
      [spans](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_slot(self);
        for (auto [id, off] : spans) {
          if (!tp.needs_grad(id)) continue;
          Tensor& gi = tp.grad_slot(id);
          gi.matrix() += g.matrix().middleCols(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(gi.cols()));
        }
      },
      "concat_cols");
}

/// Running sum along each row.
inline Var cumsum_cols(Var a) {
  Tape& t = *a.tape;
  Tensor out = a.value();
  const std::size_t r = out.rows(), c = out.cols();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 1; j < c; ++j) out.at(i, j) += out.at(i, j - 1);
  const std::size_t ai = a.id;
  return detail::finish(
      t, std::move(out), t.needs_grad(ai),
      [ai, r, c](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_slot(self);
        Tensor& ga = tp.grad_slot(ai);
        for (std::size_t i = 0; i < r; ++i) {
          double acc = 0.0;
          for (std::size_t j = c; j-- > 0;) {
            acc += g.at(i, j);
            ga.at(i, j) += acc;
          }
        }
      },
      "cumsum_cols");
}

/// (r x 1) -> (r x n), each row filled with its single value.
inline Var broadcast_cols(Var a, std::size_t n) {
  Tape& t = *a.tape;
  if (a.cols() != 1) throw DimensionError("broadcast_cols: expected a column vector");
  Tensor out = Tensor::zeros(a.rows(), n);
  out.matrix().colwise() = a.value().matrix().col(0);
  const std::size_t ai = a.id;
  return detail::finish(
      t, std::move(out), t.needs_grad(ai),
      [ai](Tape& tp, std::size_t self) {
        tp.grad_slot(ai).matrix().col(0) += tp.grad_slot(self).matrix().rowwise().sum();
      },
      "broadcast_cols");
}

/// (r x n) -> (r x n*k): column j is repeated k times in place, so element
/// [i, j*k + m] = a[i, j]. Expands per-frame weights over latent dimensions.
inline Var repeat_each(Var a, std::size_t k) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), n = av.cols();
  Tensor out = Tensor::zeros(r, n * k);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t m = 0; m < k; ++m) out.at(i, j * k + m) = av.at(i, j);
  const std::size_t ai = a.id;
  return detail::finish(
      t, std::move(out), t.needs_grad(ai),
      [ai, r, n, k](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_slot(self);
        Tensor& ga = tp.grad_slot(ai);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t m = 0; m < k; ++m) acc += g.at(i, j * k + m);
            ga.at(i, j) += acc;
          }
      },
      "repeat_each");
}

/// (r x n) -> (r x n*k): the whole row is tiled k times, so element
/// [i, m*n + j] = a[i, j]. Spreads a per-latent vector over every frame.
inline Var tile(Var a, std::size_t k) {
  Tape& t = *a.tape;
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), n = av.cols();
  Tensor out = Tensor::zeros(r, n * k);
  for (std::size_t m = 0; m < k; ++m)
    out.matrix().middleCols(static_cast<Eigen::Index>(m * n), static_cast<Eigen::Index>(n)) = av.matrix();
  const std::size_t ai = a.id;
  return detail::finish(
      t, std::move(out), t.needs_grad(ai),
      [ai, n, k](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad_slot(self);
        Tensor& ga = tp.grad_slot(ai);
        for (std::size_t m = 0; m < k; ++m)
          ga.matrix() += g.matrix().middleCols(static_cast<Eigen::Index>(m * n), static_cast<Eigen::Index>(n));
      },
      "tile");
}

/// Inverted dropout: kept activations are divided by (1 - rate).
inline Var dropout(Var a, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ParameterError("dropout rate must lie in [0, 1)");
  Tape& t = *a.tape;
  if (rate == 0.0) return a;
  std::bernoulli_distribution keep(1.0 - rate);
  const double inv = 1.0 / (1.0 - rate);
  Tensor mask = Tensor::zeros_like(a.value());
  for (double& m : mask.data()) m = keep(rng) ? inv : 0.0;
  Tensor out = a.value();
  out.matrix().array() *= mask.matrix().array();
  const std::size_t ai = a.id;
  return detail::finish(
      t, std::move(out), t.needs_grad(ai),
      [ai, mask = std::move(mask)](Tape& tp, std::size_t self) {
        tp.grad_slot(ai).matrix().array() += tp.grad_slot(self).matrix().array() * mask.matrix().array();
      },
      "dropout");
}

}  // namespace facet::ad
