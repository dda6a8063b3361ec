#pragma once

#include <cmath>
#include <initializer_list>
#include <span>
#include <string>

#include <Eigen/SparseCore>

#include "lego/nn/tensor.hpp"

namespace lego::nn {

template <class S>
using SparseMatrix = Eigen::SparseMatrix<S, Eigen::RowMajor>;

namespace detail {

template <class S>
bool any_needs_grad(std::initializer_list<Var<S>> inputs) {
  for (const auto& v : inputs)
    if (v.tape->needs_grad(v.id)) return true;
  return false;
}

template <class S>
Tape<S>& tape_of(std::initializer_list<Var<S>> inputs) {
  for (const auto& v : inputs) require(v.tape == inputs.begin()->tape, "operands recorded on different tapes");
  return *inputs.begin()->tape;
}

template <class S, class F>
Var<S> record(Matrix<S> value, std::initializer_list<Var<S>> inputs, F&& backprop) {
  auto& tape = tape_of(inputs);
  if (!any_needs_grad(inputs)) return tape.push(std::move(value), false, {});
  return tape.push(std::move(value), true, std::forward<F>(backprop));
}

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <class S>
void require_same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ContractError(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) + " vs " +
                        shape_str(b.rows(), b.cols()));
}

}  // namespace detail

template <class S>
Var<S> matmul(Var<S> a, Var<S> b) {
  if (a.cols() != b.rows())
    throw ContractError("matmul: shape mismatch " + detail::shape_str(a.rows(), a.cols()) + " * " +
                        detail::shape_str(b.rows(), b.cols()));
  Matrix<S> out = a.value() * b.value();
  return detail::record<S>(std::move(out), {a, b}, [a, b](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(a.id)) t.accumulate(a.id, g * t.value(b.id).transpose());
    if (t.needs_grad(b.id)) t.accumulate(b.id, t.value(a.id).transpose() * g);
  });
}

template <class S>
Var<S> add(Var<S> a, Var<S> b) {
  detail::require_same_shape(a, b, "add");
  Matrix<S> out = a.value() + b.value();
  return detail::record<S>(std::move(out), {a, b}, [a, b](Tape<S>& t, std::size_t self) {
    t.accumulate(a.id, t.grad(self));
    t.accumulate(b.id, t.grad(self));
  });
}

template <class S>
Var<S> sub(Var<S> a, Var<S> b) {
  detail::require_same_shape(a, b, "sub");
  Matrix<S> out = a.value() - b.value();
  return detail::record<S>(std::move(out), {a, b}, [a, b](Tape<S>& t, std::size_t self) {
    t.accumulate(a.id, t.grad(self));
    t.accumulate(b.id, -t.grad(self));
  });
}

/// Elementwise product.
template <class S>
Var<S> mul(Var<S> a, Var<S> b) {
  detail::require_same_shape(a, b, "mul");
  Matrix<S> out = a.value().cwiseProduct(b.value());
  return detail::record<S>(std::move(out), {a, b}, [a, b](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(a.id)) t.accumulate(a.id, g.cwiseProduct(t.value(b.id)));
    if (t.needs_grad(b.id)) t.accumulate(b.id, g.cwiseProduct(t.value(a.id)));
  });
}

/// a + row, broadcasting a 1 x c row over every row of a.
template <class S>
Var<S> add_row(Var<S> a, Var<S> row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row: row must be 1 x cols(a)");
  Matrix<S> out = a.value().rowwise() + row.value().row(0);
  return detail::record<S>(std::move(out), {a, row}, [a, row](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    t.accumulate(a.id, g);
    if (t.needs_grad(row.id)) t.accumulate(row.id, g.colwise().sum());
  });
}

/// a * row elementwise, broadcasting a 1 x c row over every row of a.
template <class S>
Var<S> mul_row(Var<S> a, Var<S> row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "mul_row: row must be 1 x cols(a)");
  Matrix<S> out = a.value().array().rowwise() * row.value().row(0).array();
  return detail::record<S>(std::move(out), {a, row}, [a, row](Tape<S>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(a.id)) {
      Matrix<S> ga = g.array().rowwise() * t.value(row.id).row(0).array();
      t.accumulate(a.id, ga);
    }
    if (t.needs_grad(row.id)) t.accumulate(row.id, g.cwiseProduct(t.value(a.id)).colwise().sum());
  });
}

template <class S>
Var<S> scale(Var<S> a, S factor) {
  Matrix<S> out = a.value() * factor;
  return detail::record<S>(std::move(out), {a},
                           [a, factor](Tape<S>& t, std::size_t self) { t.accumulate(a.id, t.grad(self) * factor); });
}

template <class S>
Var<S> add_scalar(Var<S> a, S c) {
  Matrix<S> out = a.value().array() + c;
  return detail::record<S>(std::move(out), {a},
                           [a](Tape<S>& t, std::size_t self) { t.accumulate(a.id, t.grad(self)); });
}

template <class S>
Var<S> relu(Var<S> a) {
  Matrix<S> out = a.value().cwiseMax(S(0));
  return detail::record<S>(std::move(out), {a}, [a](Tape<S>& t, std::size_t self) {
    Matrix<S> g = (t.value(a.id).array() > S(0)).select(t.grad(self), S(0));
    t.accumulate(a.id, g);
  });
}

template <class S>
Var<S> tanh(Var<S> a) {
  Matrix<S> out = a.value().array().tanh();
  return detail::record<S>(std::move(out), {a}, [a](Tape<S>& t, std::size_t self) {
    const auto& y = t.value(self);
    Matrix<S> g = t.grad(self).array() * (S(1) - y.array().square());
    t.accumulate(a.id, g);
  });
}

template <class S>
Var<S> exp(Var<S> a) {
  Matrix<S> out = a.value().array().exp();
  return detail::record<S>(std::move(out), {a}, [a](Tape<S>& t, std::size_t self) {
    t.accumulate(a.id, t.grad(self).cwiseProduct(t.value(self)));
  });
}

template <class S>
Var<S> log(Var<S> a) {
  Matrix<S> out = a.value().array().log();
  return detail::record<S>(std::move(out), {a}, [a](Tape<S>& t, std::size_t self) {
    t.accumulate(a.id, t.grad(self).cwiseQuotient(t.value(a.id)));
  });
}

template <class S>
Var<S> square(Var<S> a) {
  Matrix<S> out = a.value().array().square();
  return detail::record<S>(std::move(out), {a}, [a](Tape<S>& t, std::size_t self) {
    t.accumulate(a.id, S(2) * t.grad(self).cwiseProduct(t.value(a.id)));
  });
}

template <class S>
Var<S> sum(Var<S> a) {
  Matrix<S> out(1, 1);
  out(0, 0) = a.value().sum();
  return detail::record<S>(std::move(out), {a}, [a](Tape<S>& t, std::size_t self) {
    const S g = t.grad(self)(0, 0);
    t.accumulate(a.id, Matrix<S>::Constant(t.value(a.id).rows(), t.value(a.id).cols(), g));
  });
}

template <class S>
Var<S> mean(Var<S> a) {
  require(a.value().size() > 0, "mean of an empty tensor");
  return scale(sum(a), S(1) / static_cast<S>(a.value().size()));
}

/// n x c -> n x 1 row sums.
template <class S>
Var<S> row_sum(Var<S> a) {
  Matrix<S> out = a.value().rowwise().sum();
  return detail::record<S>(std::move(out), {a}, [a](Tape<S>& t, std::size_t self) {
    Matrix<S> g = t.grad(self).col(0).replicate(1, t.value(a.id).cols());
    t.accumulate(a.id, g);
  });
}

template <class S>
Var<S> concat_cols(std::span<const Var<S>> parts) {
  require(!parts.empty(), "concat_cols of nothing");
  const auto rows = parts[0].rows();
  Eigen::Index cols = 0;
  bool needs = false;
  for (const auto& p : parts) {
    require(p.rows() == rows && p.tape == parts[0].tape, "concat_cols: row mismatch");
    cols += p.cols();
    needs = needs || p.tape->needs_grad(p.id);
  }
  Matrix<S> out(rows, cols);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  auto& tape = *parts[0].tape;
  if (!needs) return tape.push(std::move(out), false, {});
  std::vector<Var<S>> inputs(parts.begin(), parts.end());
  return tape.push(std::move(out), true, [inputs](Tape<S>& t, std::size_t self) {
    Eigen::Index off = 0;
    for (const auto& p : inputs) {
      const auto c = t.value(p.id).cols();
      if (t.needs_grad(p.id)) t.accumulate(p.id, t.grad(self).middleCols(off, c));
      off += c;
    }
  });
}

template <class S>
Var<S> slice_cols(Var<S> a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols out of range");
  Matrix<S> out = a.value().middleCols(start, count);
  return detail::record<S>(std::move(out), {a}, [a, start, count](Tape<S>& t, std::size_t self) {
    t.grad_buffer(a.id).middleCols(start, count) += t.grad(self);
  });
}

/// Elementwise clamp; the gradient is zero wherever the bound is active.
template <class S>
Var<S> clamp(Var<S> a, S lo, S hi) {
  Matrix<S> out = a.value().cwiseMax(lo).cwiseMin(hi);
  return detail::record<S>(std::move(out), {a}, [a, lo, hi](Tape<S>& t, std::size_t self) {
    const auto& x = t.value(a.id).array();
    Matrix<S> g = ((x > lo) && (x < hi)).select(t.grad(self), S(0));
    t.accumulate(a.id, g);
  });
}

/// Elementwise minimum; ties route the gradient to `a`.
template <class S>
Var<S> minimum(Var<S> a, Var<S> b) {
  detail::require_same_shape(a, b, "minimum");
  Matrix<S> out = a.value().cwiseMin(b.value());
  return detail::record<S>(std::move(out), {a, b}, [a, b](Tape<S>& t, std::size_t self) {
    const auto pick_a = (t.value(a.id).array() <= t.value(b.id).array());
    const auto& g = t.grad(self);
    if (t.needs_grad(a.id)) t.accumulate(a.id, Matrix<S>(pick_a.select(g, S(0))));
    if (t.needs_grad(b.id)) t.accumulate(b.id, Matrix<S>(pick_a.select(S(0), g)));
  });
}

/// Segment layout for batched graphs: rows [offsets[s], offsets[s+1]) belong to segment s.
using Offsets = std::vector<Eigen::Index>;

/// Mean of the rows in each segment; empty segments produce a zero row.
template <class S>
Var<S> segment_mean(Var<S> x, const Offsets& offsets) {
  require(!offsets.empty() && offsets.back() == x.rows(), "segment_mean: offsets do not cover the rows");
  const auto segments = static_cast<Eigen::Index>(offsets.size()) - 1;
  Matrix<S> out = Matrix<S>::Zero(segments, x.cols());
  for (Eigen::Index s = 0; s < segments; ++s) {
    const auto n = offsets[s + 1] - offsets[s];
    if (n > 0) out.row(s) = x.value().middleRows(offsets[s], n).colwise().sum() / static_cast<S>(n);
  }
  return detail::record<S>(std::move(out), {x}, [x, offsets, segments](Tape<S>& t, std::size_t self) {
    auto& gx = t.grad_buffer(x.id);
    const auto& g = t.grad(self);
    for (Eigen::Index s = 0; s < segments; ++s) {
      const auto n = offsets[s + 1] - offsets[s];
      if (n == 0) continue;
      gx.middleRows(offsets[s], n).rowwise() += g.row(s) / static_cast<S>(n);
    }
  });
}

/// Multi-head scaled dot-product attention restricted to dense segments.
///
/// Columns of q, k, v are split into `heads` equal blocks; within every
/// segment, row u of head h receives sum_v softmax_v(q_u k_v^T / sqrt(d_h)) v_v.
/// Heads are written back side by side, so the output has the shape of v.
template <class S>
Var<S> segment_attention(Var<S> q, Var<S> k, Var<S> v, const Offsets& offsets, Eigen::Index heads) {
  detail::require_same_shape(q, k, "segment_attention");
  detail::require_same_shape(q, v, "segment_attention");
  require(heads > 0 && q.cols() % heads == 0, "segment_attention: width not divisible by head count");
  require(!offsets.empty() && offsets.back() == q.rows(), "segment_attention: offsets do not cover the rows");
  const Eigen::Index dh = q.cols() / heads;
  const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dh));
  const auto segments = static_cast<Eigen::Index>(offsets.size()) - 1;

  const auto& Q = q.value();
  const auto& K = k.value();
  const auto& V = v.value();
  Matrix<S> out = Matrix<S>::Zero(Q.rows(), Q.cols());
  // Softmax weights per (segment, head), kept for the backward pass.
  auto weights = std::make_shared<std::vector<Matrix<S>>>();
  weights->reserve(static_cast<std::size_t>(segments * heads));
  for (Eigen::Index s = 0; s < segments; ++s) {
    const auto o = offsets[s];
    const auto n = offsets[s + 1] - o;
    for (Eigen::Index h = 0; h < heads; ++h) {
      if (n == 0) {
        weights->emplace_back();
        continue;
      }
      Matrix<S> logits = Q.block(o, h * dh, n, dh) * K.block(o, h * dh, n, dh).transpose() * inv_sqrt;
      for (Eigen::Index r = 0; r < n; ++r) {
        const S m = logits.row(r).maxCoeff();
        logits.row(r) = (logits.row(r).array() - m).exp();
        logits.row(r) /= logits.row(r).sum();
      }
      out.block(o, h * dh, n, dh).noalias() = logits * V.block(o, h * dh, n, dh);
      weights->push_back(std::move(logits));
    }
  }
  return detail::record<S>(
      std::move(out), {q, k, v}, [q, k, v, offsets, heads, dh, inv_sqrt, weights](Tape<S>& t, std::size_t self) {
        const auto& G = t.grad(self);
        const auto& Qv = t.value(q.id);
        const auto& Kv = t.value(k.id);
        const auto& Vv = t.value(v.id);
        const bool gq = t.needs_grad(q.id), gk = t.needs_grad(k.id), gv = t.needs_grad(v.id);
        Matrix<S> dQ, dK, dV;
        if (gq) dQ = Matrix<S>::Zero(Qv.rows(), Qv.cols());
        if (gk) dK = Matrix<S>::Zero(Kv.rows(), Kv.cols());
        if (gv) dV = Matrix<S>::Zero(Vv.rows(), Vv.cols());
        const auto segments = static_cast<Eigen::Index>(offsets.size()) - 1;
        for (Eigen::Index s = 0; s < segments; ++s) {
          const auto o = offsets[s];
          const auto n = offsets[s + 1] - o;
          if (n == 0) continue;
          for (Eigen::Index h = 0; h < heads; ++h) {
            const auto& P = (*weights)[static_cast<std::size_t>(s * heads + h)];
            const auto Gh = G.block(o, h * dh, n, dh);
            if (gv) dV.block(o, h * dh, n, dh).noalias() += P.transpose() * Gh;
            if (!gq && !gk) continue;
            Matrix<S> dP = Gh * Vv.block(o, h * dh, n, dh).transpose();
            Matrix<S> dlogits = P.cwiseProduct(dP);
            const Matrix<S> row_dot = dlogits.rowwise().sum();
            dlogits.noalias() -= (P.array().colwise() * row_dot.col(0).array()).matrix();
            dlogits *= inv_sqrt;
            if (gq) dQ.block(o, h * dh, n, dh).noalias() += dlogits * Kv.block(o, h * dh, n, dh);
            if (gk) dK.block(o, h * dh, n, dh).noalias() += dlogits.transpose() * Qv.block(o, h * dh, n, dh);
          }
        }
        if (gq) t.accumulate(q.id, dQ);
        if (gk) t.accumulate(k.id, dK);
        if (gv) t.accumulate(v.id, dV);
      });
}

/// Sparse-dense product A * x with a constant sparse operator.
template <class S>
Var<S> spmm(std::shared_ptr<const SparseMatrix<S>> a, Var<S> x) {
  require(a->cols() == x.rows(), "spmm: shape mismatch");
  Matrix<S> out = (*a) * x.value();
  return detail::record<S>(std::move(out), {x}, [a, x](Tape<S>& t, std::size_t self) {
    Matrix<S> g = a->transpose() * t.grad(self);
    t.accumulate(x.id, g);
  });
}

}  // namespace lego::nn
