#include "aroma/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace aroma {

namespace {

std::string shape_str(int64_t r, int64_t c) {
  return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

// C[m x n] (+)= op(A) * op(B). Loop orders keep the inner stride 1 where
// the layout allows.
void mm_kernel(const double* A, int64_t ar, int64_t ac, bool ta,
               const double* B, int64_t br, int64_t bc, bool tb, double* C,
               bool accumulate) {
  const int64_t m = ta ? ac : ar;
  const int64_t k = ta ? ar : ac;
  const int64_t n = tb ? br : bc;
  if (!accumulate) std::fill(C, C + m * n, 0.0);
  if (!ta && !tb) {
    for (int64_t i = 0; i < m; ++i)
      for (int64_t p = 0; p < k; ++p) {
        const double a = A[i * ac + p];
        if (a == 0.0) continue;
        const double* brow = B + p * bc;
        double* crow = C + i * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += a * brow[j];
      }
  } else if (!ta && tb) {
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) {
        const double* arow = A + i * ac;
        const double* brow = B + j * bc;
        double s = 0.0;
        for (int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
        C[i * n + j] += s;
      }
  } else if (ta && !tb) {
    for (int64_t p = 0; p < k; ++p)
      for (int64_t i = 0; i < m; ++i) {
        const double a = A[p * ac + i];
        if (a == 0.0) continue;
        const double* brow = B + p * bc;
        double* crow = C + i * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += a * brow[j];
      }
  } else {
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (int64_t p = 0; p < k; ++p) s += A[p * ac + i] * B[j * bc + p];
        C[i * n + j] += s;
      }
  }
}

enum class BroadcastKind { Same, RowVector, Scalar };

BroadcastKind broadcast_kind(const Tensor& big, const Tensor& small) {
  if (big.rows() == small.rows() && big.cols() == small.cols())
    return BroadcastKind::Same;
  if (small.rows() == 1 && small.cols() == 1) return BroadcastKind::Scalar;
  if (small.rows() == 1 && small.cols() == big.cols())
    return BroadcastKind::RowVector;
  throw ShapeMismatch("cannot broadcast " +
                      shape_str(small.rows(), small.cols()) + " against " +
                      shape_str(big.rows(), big.cols()));
}

}  // namespace

Tensor Tensor::zeros(int64_t rows, int64_t cols) {
  Tensor t;
  t.impl_->rows = rows;
  t.impl_->cols = cols;
  t.impl_->data.assign(rows * cols, 0.0);
  return t;
}

Tensor Tensor::full(int64_t rows, int64_t cols, double value) {
  Tensor t = zeros(rows, cols);
  std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
  return t;
}

Tensor Tensor::from(std::vector<double> values, int64_t rows, int64_t cols) {
  if (static_cast<int64_t>(values.size()) != rows * cols)
    throw ShapeMismatch("from: " + std::to_string(values.size()) +
                        " values for " + shape_str(rows, cols));
  Tensor t;
  t.impl_->rows = rows;
  t.impl_->cols = cols;
  t.impl_->data = std::move(values);
  return t;
}

Tensor Tensor::scalar(double value) { return from({value}, 1, 1); }

Tensor Tensor::param(std::vector<double> values, int64_t rows, int64_t cols) {
  Tensor t = from(std::move(values), rows, cols);
  t.impl_->requires_grad = true;
  t.impl_->grad.assign(rows * cols, 0.0);
  return t;
}

double Tensor::item() const {
  if (numel() != 1)
    throw ShapeMismatch("item() on " + shape_str(rows(), cols()));
  return impl_->data[0];
}

std::vector<double>& Tensor::grad() {
  if (!impl_->requires_grad)
    throw TensorError("grad() on a tensor that does not require grad");
  return impl_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (!impl_->requires_grad)
    throw TensorError("grad() on a tensor that does not require grad");
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_->requires_grad)
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tape::make_output(int64_t rows, int64_t cols,
                         std::initializer_list<const Tensor*> inputs) {
  Tensor out = Tensor::zeros(rows, cols);
  for (const Tensor* in : inputs) {
    if (in->requires_grad()) {
      out.impl_->requires_grad = true;
      out.impl_->grad.assign(rows * cols, 0.0);
      break;
    }
  }
  return out;
}

void Tape::record(std::function<void()> fn) {
  nodes_.push_back(std::move(fn));
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b, bool transpose_a,
                    bool transpose_b) {
  const int64_t m = transpose_a ? a.cols() : a.rows();
  const int64_t ka = transpose_a ? a.rows() : a.cols();
  const int64_t kb = transpose_b ? b.cols() : b.rows();
  const int64_t n = transpose_b ? b.rows() : b.cols();
  if (ka != kb)
    throw ShapeMismatch("matmul: " + shape_str(a.rows(), a.cols()) +
                        (transpose_a ? "^T" : "") + " x " +
                        shape_str(b.rows(), b.cols()) +
                        (transpose_b ? "^T" : ""));
  Tensor out = make_output(m, n, {&a, &b});
  mm_kernel(a.data().data(), a.rows(), a.cols(), transpose_a, b.data().data(),
            b.rows(), b.cols(), transpose_b, out.data().data(), false);
  if (!out.requires_grad()) return out;

  auto ai = a.impl_, bi = b.impl_, oi = out.impl_;
  record([ai, bi, oi, transpose_a, transpose_b, m, n, ka]() {
    const double* g = oi->grad.data();
    if (ai->requires_grad) {
      // dA' = g * B'^T, then transpose back when A was transposed.
      std::vector<double> da(m * ka);
      mm_kernel(g, m, n, false, bi->data.data(), bi->rows, bi->cols,
                !transpose_b, da.data(), false);
      if (!transpose_a) {
        for (int64_t i = 0; i < m * ka; ++i) ai->grad[i] += da[i];
      } else {
        for (int64_t i = 0; i < m; ++i)
          for (int64_t p = 0; p < ka; ++p) ai->grad[p * m + i] += da[i * ka + p];
      }
    }
    if (bi->requires_grad) {
      // dB' = A'^T * g.
      std::vector<double> db(ka * n);
      mm_kernel(ai->data.data(), ai->rows, ai->cols, !transpose_a, g, m, n,
                false, db.data(), false);
      if (!transpose_b) {
        for (int64_t i = 0; i < ka * n; ++i) bi->grad[i] += db[i];
      } else {
        for (int64_t p = 0; p < ka; ++p)
          for (int64_t j = 0; j < n; ++j) bi->grad[j * ka + p] += db[p * n + j];
      }
    }
  });
  return out;
}

namespace {

// add/mul share the element pairing logic: `small` is indexed modulo the
// broadcast pattern.
template <class F>
void broadcast_apply(const Tensor& big, BroadcastKind kind, F&& f) {
  const int64_t rows = big.rows(), cols = big.cols();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) {
      int64_t si = 0;
      if (kind == BroadcastKind::Same) si = r * cols + c;
      else if (kind == BroadcastKind::RowVector) si = c;
      f(r * cols + c, si);
    }
}

}  // namespace

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  const bool a_big = a.numel() >= b.numel();
  const Tensor& big = a_big ? a : b;
  const Tensor& small = a_big ? b : a;
  const BroadcastKind kind = broadcast_kind(big, small);

  Tensor out = make_output(big.rows(), big.cols(), {&a, &b});
  broadcast_apply(big, kind, [&](int64_t bi, int64_t si) {
    out.data()[bi] = big.data()[bi] + small.data()[si];
  });
  if (!out.requires_grad()) return out;

  auto big_i = big.impl_, small_i = small.impl_, oi = out.impl_;
  record([big_i, small_i, oi, kind, rows = big.rows(), cols = big.cols()]() {
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) {
        const double g = oi->grad[r * cols + c];
        if (big_i->requires_grad) big_i->grad[r * cols + c] += g;
        if (small_i->requires_grad) {
          int64_t si = 0;
          if (kind == BroadcastKind::Same) si = r * cols + c;
          else if (kind == BroadcastKind::RowVector) si = c;
          small_i->grad[si] += g;
        }
      }
  });
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  const bool a_big = a.numel() >= b.numel();
  const Tensor& big = a_big ? a : b;
  const Tensor& small = a_big ? b : a;
  const BroadcastKind kind = broadcast_kind(big, small);

  Tensor out = make_output(big.rows(), big.cols(), {&a, &b});
  broadcast_apply(big, kind, [&](int64_t bi, int64_t si) {
    out.data()[bi] = big.data()[bi] * small.data()[si];
  });
  if (!out.requires_grad()) return out;

  auto big_i = big.impl_, small_i = small.impl_, oi = out.impl_;
  record([big_i, small_i, oi, kind, rows = big.rows(), cols = big.cols()]() {
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) {
        const int64_t bi = r * cols + c;
        int64_t si = 0;
        if (kind == BroadcastKind::Same) si = bi;
        else if (kind == BroadcastKind::RowVector) si = c;
        const double g = oi->grad[bi];
        if (big_i->requires_grad) big_i->grad[bi] += g * small_i->data[si];
        if (small_i->requires_grad) small_i->grad[si] += g * big_i->data[bi];
      }
  });
  return out;
}

Tensor Tape::concat(const Tensor& a, const Tensor& b, int axis) {
  if (axis != 0 && axis != 1) throw TensorError("concat: axis must be 0 or 1");
  if (axis == 0 && a.cols() != b.cols())
    throw ShapeMismatch("concat axis 0: " + shape_str(a.rows(), a.cols()) +
                        " vs " + shape_str(b.rows(), b.cols()));
  if (axis == 1 && a.rows() != b.rows())
    throw ShapeMismatch("concat axis 1: " + shape_str(a.rows(), a.cols()) +
                        " vs " + shape_str(b.rows(), b.cols()));

  const int64_t rows = axis == 0 ? a.rows() + b.rows() : a.rows();
  const int64_t cols = axis == 1 ? a.cols() + b.cols() : a.cols();
  Tensor out = make_output(rows, cols, {&a, &b});
  if (axis == 0) {
    std::copy(a.data().begin(), a.data().end(), out.data().begin());
    std::copy(b.data().begin(), b.data().end(),
              out.data().begin() + a.numel());
  } else {
    for (int64_t r = 0; r < rows; ++r) {
      std::copy(a.data().begin() + r * a.cols(),
                a.data().begin() + (r + 1) * a.cols(),
                out.data().begin() + r * cols);
      std::copy(b.data().begin() + r * b.cols(),
                b.data().begin() + (r + 1) * b.cols(),
                out.data().begin() + r * cols + a.cols());
    }
  }
  if (!out.requires_grad()) return out;

  auto ai = a.impl_, bi = b.impl_, oi = out.impl_;
  record([ai, bi, oi, axis, rows, cols, acols = a.cols(), arows = a.rows()]() {
    if (axis == 0) {
      const int64_t an = arows * acols;
      if (ai->requires_grad)
        for (int64_t i = 0; i < an; ++i) ai->grad[i] += oi->grad[i];
      if (bi->requires_grad)
        for (size_t i = 0; i < bi->grad.size(); ++i)
          bi->grad[i] += oi->grad[an + i];
    } else {
      for (int64_t r = 0; r < rows; ++r) {
        if (ai->requires_grad)
          for (int64_t c = 0; c < acols; ++c)
            ai->grad[r * acols + c] += oi->grad[r * cols + c];
        if (bi->requires_grad) {
          const int64_t bcols = cols - acols;
          for (int64_t c = 0; c < bcols; ++c)
            bi->grad[r * bcols + c] += oi->grad[r * cols + acols + c];
        }
      }
    }
  });
  return out;
}

Tensor Tape::slice(const Tensor& x, int axis, int64_t start, int64_t len) {
  if (axis != 0 && axis != 1) throw TensorError("slice: axis must be 0 or 1");
  const int64_t extent = axis == 0 ? x.rows() : x.cols();
  if (start < 0 || len < 1 || start + len > extent)
    throw ShapeMismatch("slice: range [" + std::to_string(start) + ", " +
                        std::to_string(start + len) + ") out of " +
                        std::to_string(extent));
  const int64_t rows = axis == 0 ? len : x.rows();
  const int64_t cols = axis == 1 ? len : x.cols();
  Tensor out = make_output(rows, cols, {&x});
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c)
      out.at(r, c) = axis == 0 ? x.at(start + r, c) : x.at(r, start + c);
  if (!out.requires_grad()) return out;

  auto xi = x.impl_, oi = out.impl_;
  record([xi, oi, axis, start, rows, cols]() {
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) {
        const int64_t xr = axis == 0 ? start + r : r;
        const int64_t xc = axis == 1 ? start + c : c;
        xi->grad[xr * xi->cols + xc] += oi->grad[r * cols + c];
      }
  });
  return out;
}

Tensor Tape::gather_rows(const Tensor& x, const std::vector<int32_t>& indices) {
  for (int32_t i : indices)
    if (i < 0 || i >= x.rows())
      throw ShapeMismatch("gather_rows: index " + std::to_string(i) +
                          " out of " + std::to_string(x.rows()));
  const int64_t cols = x.cols();
  Tensor out = make_output(static_cast<int64_t>(indices.size()), cols, {&x});
  for (size_t r = 0; r < indices.size(); ++r)
    std::copy(x.data().begin() + indices[r] * cols,
              x.data().begin() + (indices[r] + 1) * cols,
              out.data().begin() + r * cols);
  if (!out.requires_grad()) return out;

  auto xi = x.impl_, oi = out.impl_;
  record([xi, oi, indices, cols]() {
    for (size_t r = 0; r < indices.size(); ++r)
      for (int64_t c = 0; c < cols; ++c)
        xi->grad[indices[r] * cols + c] += oi->grad[r * cols + c];
  });
  return out;
}

Tensor Tape::scatter_add_rows(const Tensor& x,
                              const std::vector<int32_t>& indices,
                              int64_t out_rows) {
  if (static_cast<int64_t>(indices.size()) != x.rows())
    throw ShapeMismatch("scatter_add_rows: " + std::to_string(indices.size()) +
                        " indices for " + std::to_string(x.rows()) + " rows");
  for (int32_t i : indices)
    if (i < 0 || i >= out_rows)
      throw ShapeMismatch("scatter_add_rows: target " + std::to_string(i) +
                          " out of " + std::to_string(out_rows));
  const int64_t cols = x.cols();
  Tensor out = make_output(out_rows, cols, {&x});
  for (size_t r = 0; r < indices.size(); ++r)
    for (int64_t c = 0; c < cols; ++c)
      out.data()[indices[r] * cols + c] += x.data()[r * cols + c];
  if (!out.requires_grad()) return out;

  auto xi = x.impl_, oi = out.impl_;
  record([xi, oi, indices, cols]() {
    for (size_t r = 0; r < indices.size(); ++r)
      for (int64_t c = 0; c < cols; ++c)
        xi->grad[r * cols + c] += oi->grad[indices[r] * cols + c];
  });
  return out;
}

Tensor Tape::relu(const Tensor& x) {
  Tensor out = make_output(x.rows(), x.cols(), {&x});
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double v = x.data()[i];
    out.data()[i] = std::isnan(v) ? v : (v > 0.0 ? v : 0.0);
  }
  if (!out.requires_grad()) return out;
  auto xi = x.impl_, oi = out.impl_;
  record([xi, oi]() {
    for (size_t i = 0; i < xi->grad.size(); ++i)
      if (xi->data[i] > 0.0) xi->grad[i] += oi->grad[i];
  });
  return out;
}

Tensor Tape::sigmoid(const Tensor& x) {
  Tensor out = make_output(x.rows(), x.cols(), {&x});
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double v = x.data()[i];
    // Log-space form: never exponentiates a positive argument.
    out.data()[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                             : std::exp(v) / (1.0 + std::exp(v));
  }
  if (!out.requires_grad()) return out;
  auto xi = x.impl_, oi = out.impl_;
  record([xi, oi]() {
    for (size_t i = 0; i < xi->grad.size(); ++i) {
      const double s = oi->data[i];
      xi->grad[i] += oi->grad[i] * s * (1.0 - s);
    }
  });
  return out;
}

Tensor Tape::tanh_(const Tensor& x) {
  Tensor out = make_output(x.rows(), x.cols(), {&x});
  for (int64_t i = 0; i < x.numel(); ++i) out.data()[i] = std::tanh(x.data()[i]);
  if (!out.requires_grad()) return out;
  auto xi = x.impl_, oi = out.impl_;
  record([xi, oi]() {
    for (size_t i = 0; i < xi->grad.size(); ++i) {
      const double t = oi->data[i];
      xi->grad[i] += oi->grad[i] * (1.0 - t * t);
    }
  });
  return out;
}

Tensor Tape::softmax_rows(const Tensor& x) {
  Tensor out = make_output(x.rows(), x.cols(), {&x});
  const int64_t cols = x.cols();
  for (int64_t r = 0; r < x.rows(); ++r) {
    const double* in = x.data().data() + r * cols;
    double* o = out.data().data() + r * cols;
    double mx = in[0];
    for (int64_t c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    double sum = 0.0;
    for (int64_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      sum += o[c];
    }
    for (int64_t c = 0; c < cols; ++c) o[c] /= sum;
  }
  if (!out.requires_grad()) return out;
  auto xi = x.impl_, oi = out.impl_;
  record([xi, oi, cols]() {
    for (int64_t r = 0; r < xi->rows; ++r) {
      const double* s = oi->data.data() + r * cols;
      const double* g = oi->grad.data() + r * cols;
      double dot = 0.0;
      for (int64_t c = 0; c < cols; ++c) dot += g[c] * s[c];
      for (int64_t c = 0; c < cols; ++c)
        xi->grad[r * cols + c] += s[c] * (g[c] - dot);
    }
  });
  return out;
}

Tensor Tape::sum_rows(const Tensor& x) {
  Tensor out = make_output(1, x.cols(), {&x});
  for (int64_t r = 0; r < x.rows(); ++r)
    for (int64_t c = 0; c < x.cols(); ++c) out.data()[c] += x.at(r, c);
  if (!out.requires_grad()) return out;
  auto xi = x.impl_, oi = out.impl_;
  record([xi, oi]() {
    for (int64_t r = 0; r < xi->rows; ++r)
      for (int64_t c = 0; c < xi->cols; ++c)
        xi->grad[r * xi->cols + c] += oi->grad[c];
  });
  return out;
}

Tensor Tape::mean_rows(const Tensor& x) {
  if (x.rows() == 0) throw ShapeMismatch("mean_rows: empty tensor");
  Tensor out = make_output(1, x.cols(), {&x});
  const double inv = 1.0 / static_cast<double>(x.rows());
  for (int64_t r = 0; r < x.rows(); ++r)
    for (int64_t c = 0; c < x.cols(); ++c) out.data()[c] += x.at(r, c) * inv;
  if (!out.requires_grad()) return out;
  auto xi = x.impl_, oi = out.impl_;
  record([xi, oi, inv]() {
    for (int64_t r = 0; r < xi->rows; ++r)
      for (int64_t c = 0; c < xi->cols; ++c)
        xi->grad[r * xi->cols + c] += oi->grad[c] * inv;
  });
  return out;
}

Tensor Tape::sum_all(const Tensor& x) {
  Tensor out = make_output(1, 1, {&x});
  double s = 0.0;
  for (double v : x.data()) s += v;
  out.data()[0] = s;
  if (!out.requires_grad()) return out;
  auto xi = x.impl_, oi = out.impl_;
  record([xi, oi]() {
    const double g = oi->grad[0];
    for (double& gv : xi->grad) gv += g;
  });
  return out;
}

Tensor Tape::broadcast(const Tensor& x, int64_t rows, int64_t cols) {
  const BroadcastKind kind = [&] {
    if (x.rows() == 1 && x.cols() == 1) return BroadcastKind::Scalar;
    if (x.rows() == 1 && x.cols() == cols) return BroadcastKind::RowVector;
    throw ShapeMismatch("broadcast: " + shape_str(x.rows(), x.cols()) +
                        " to " + shape_str(rows, cols));
  }();
  Tensor out = make_output(rows, cols, {&x});
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c)
      out.at(r, c) = kind == BroadcastKind::Scalar ? x.data()[0] : x.data()[c];
  if (!out.requires_grad()) return out;
  auto xi = x.impl_, oi = out.impl_;
  record([xi, oi, kind, rows, cols]() {
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c)
        xi->grad[kind == BroadcastKind::Scalar ? 0 : c] +=
            oi->grad[r * cols + c];
  });
  return out;
}

Tensor Tape::reshape(const Tensor& x, int64_t rows, int64_t cols) {
  if (rows * cols != x.numel())
    throw ShapeMismatch("reshape: " + shape_str(x.rows(), x.cols()) + " to " +
                        shape_str(rows, cols));
  Tensor out = make_output(rows, cols, {&x});
  std::copy(x.data().begin(), x.data().end(), out.data().begin());
  if (!out.requires_grad()) return out;
  auto xi = x.impl_, oi = out.impl_;
  record([xi, oi]() {
    for (size_t i = 0; i < xi->grad.size(); ++i) xi->grad[i] += oi->grad[i];
  });
  return out;
}

Tensor Tape::edge_matvec(const Tensor& mats, const Tensor& vecs) {
  const int64_t e = vecs.rows();
  const int64_t d = vecs.cols();
  if (mats.rows() != e || mats.cols() != d * d)
    throw ShapeMismatch("edge_matvec: mats " +
                        shape_str(mats.rows(), mats.cols()) + " vs vecs " +
                        shape_str(vecs.rows(), vecs.cols()));
  Tensor out = make_output(e, d, {&mats, &vecs});
  for (int64_t k = 0; k < e; ++k) {
    const double* m = mats.data().data() + k * d * d;
    const double* v = vecs.data().data() + k * d;
    double* o = out.data().data() + k * d;
    for (int64_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (int64_t j = 0; j < d; ++j) s += m[i * d + j] * v[j];
      o[i] = s;
    }
  }
  if (!out.requires_grad()) return out;
  auto mi = mats.impl_, vi = vecs.impl_, oi = out.impl_;
  record([mi, vi, oi, e, d]() {
    for (int64_t k = 0; k < e; ++k) {
      const double* g = oi->grad.data() + k * d;
      const double* m = mi->data.data() + k * d * d;
      const double* v = vi->data.data() + k * d;
      if (mi->requires_grad) {
        double* gm = mi->grad.data() + k * d * d;
        for (int64_t i = 0; i < d; ++i)
          for (int64_t j = 0; j < d; ++j) gm[i * d + j] += g[i] * v[j];
      }
      if (vi->requires_grad) {
        double* gv = vi->grad.data() + k * d;
        for (int64_t i = 0; i < d; ++i)
          for (int64_t j = 0; j < d; ++j) gv[j] += m[i * d + j] * g[i];
      }
    }
  });
  return out;
}

Tensor Tape::bce_with_logits(const Tensor& logits, const Tensor& targets,
                             const std::vector<double>& label_weights) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols())
    throw ShapeMismatch("bce_with_logits: " +
                        shape_str(logits.rows(), logits.cols()) + " vs " +
                        shape_str(targets.rows(), targets.cols()));
  if (!label_weights.empty() &&
      static_cast<int64_t>(label_weights.size()) != logits.cols())
    throw ShapeMismatch("bce_with_logits: " +
                        std::to_string(label_weights.size()) +
                        " weights for " + std::to_string(logits.cols()) +
                        " labels");
  Tensor out = make_output(1, 1, {&logits, &targets});
  const int64_t cols = logits.cols();
  double total = 0.0;
  for (int64_t r = 0; r < logits.rows(); ++r)
    for (int64_t c = 0; c < cols; ++c) {
      const double z = logits.at(r, c);
      const double y = targets.at(r, c);
      const double w = label_weights.empty() ? 1.0 : label_weights[c];
      // max(z,0) - z*y + log(1 + exp(-|z|)); stable for |z| up to overflow.
      const double maxz = z > 0.0 ? z : 0.0;
      total += w * (maxz - z * y + std::log1p(std::exp(-std::fabs(z))));
    }
  out.data()[0] = total;
  if (!out.requires_grad()) return out;
  auto zi = logits.impl_, yi = targets.impl_, oi = out.impl_;
  record([zi, yi, oi, label_weights, cols]() {
    const double g = oi->grad[0];
    for (int64_t r = 0; r < zi->rows; ++r)
      for (int64_t c = 0; c < cols; ++c) {
        const int64_t i = r * cols + c;
        const double z = zi->data[i];
        const double w = label_weights.empty() ? 1.0 : label_weights[c];
        if (zi->requires_grad) {
          const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                                    : std::exp(z) / (1.0 + std::exp(z));
          zi->grad[i] += g * w * (s - yi->data[i]);
        }
        if (yi->requires_grad) yi->grad[i] += g * w * (-z);
      }
  });
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw TensorError("backward: non-scalar loss " +
                      shape_str(loss.rows(), loss.cols()));
  if (!loss.requires_grad())
    throw TensorError("backward: loss does not depend on any parameter");
  if (consumed_) throw TensorError("backward: tape already consumed");
  consumed_ = true;
  loss.impl_->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

void Tape::clear() {
  nodes_.clear();
  consumed_ = false;
}

void adam_step(std::vector<Tensor>& params, AdamState& state,
               const AdamConfig& cfg) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].numel(), 0.0);
      state.v[i].assign(params[i].numel(), 0.0);
    }
  }
  if (state.m.size() != params.size())
    throw ShapeMismatch("adam_step: state holds " +
                        std::to_string(state.m.size()) + " tensors, got " +
                        std::to_string(params.size()));
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    if (state.m[i].size() != static_cast<size_t>(p.numel()))
      throw ShapeMismatch("adam_step: state/parameter shape mismatch");
    const std::vector<double>& g = p.grad();
    for (int64_t j = 0; j < p.numel(); ++j) {
      const double gj = g[j] + cfg.weight_decay * p.data()[j];
      state.m[i][j] = cfg.beta1 * state.m[i][j] + (1.0 - cfg.beta1) * gj;
      state.v[i][j] = cfg.beta2 * state.v[i][j] + (1.0 - cfg.beta2) * gj * gj;
      const double mhat = state.m[i][j] / bc1;
      const double vhat = state.v[i][j] / bc2;
      p.data()[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

double lr_at(const ScheduleConfig& cfg, double step_or_epoch) {
  switch (cfg.kind) {
    case ScheduleConfig::Kind::Constant:
      return cfg.lr0;
    case ScheduleConfig::Kind::ExponentialSteps:
      return cfg.lr0 * std::pow(cfg.rate, step_or_epoch / cfg.decay_steps);
    case ScheduleConfig::Kind::FractionalSpan: {
      const double span = 0.9 * cfg.total_epochs;
      const double t = std::min(step_or_epoch, span);
      return cfg.lr0 * std::pow(cfg.decay, t / span);
    }
  }
  return cfg.lr0;
}

namespace {
constexpr uint32_t kCheckpointMagic = 0x414B5031;  // "AKP1"
constexpr uint32_t kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const std::string& path, const NamedTensors& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  auto put32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  put32(kCheckpointMagic);
  put32(kCheckpointVersion);
  put32(static_cast<uint32_t>(tensors.size()));
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& [name, t] : tensors) {
    put32(static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const char dtype[4] = {'f', '6', '4', '\0'};
    out.write(dtype, 4);
    put32(static_cast<uint32_t>(t.rows()));
    put32(static_cast<uint32_t>(t.cols()));
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
    manifest.push_back({{"name", name},
                        {"dtype", "f64"},
                        {"shape", {t.rows(), t.cols()}}});
  }
  std::ofstream mout(path + ".json");
  if (!mout) throw IoError("cannot write " + path + ".json");
  mout << manifest.dump(2) << "\n";
}

NamedTensors load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  auto get32 = [&] {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  if (get32() != kCheckpointMagic) throw IoError("bad checkpoint magic");
  if (get32() != kCheckpointVersion) throw IoError("unsupported checkpoint version");
  const uint32_t count = get32();
  NamedTensors tensors;
  tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = get32();
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    char dtype[4];
    in.read(dtype, 4);
    if (std::strncmp(dtype, "f64", 3) != 0)
      throw IoError("unsupported dtype in checkpoint");
    const uint32_t rows = get32();
    const uint32_t cols = get32();
    std::vector<double> data(static_cast<size_t>(rows) * cols);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    tensors.emplace_back(name, Tensor::from(std::move(data), rows, cols));
  }
  if (!in) throw IoError("truncated checkpoint: " + path);
  return tensors;
}

}  // namespace aroma
