#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "moexda/errors.hpp"

namespace moexda {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

inline std::vector<std::int64_t> row_major_strides(const Shape& shape) {
  std::vector<std::int64_t> s(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) s[i] = s[i + 1] * shape[i + 1];
  return s;
}

// Dense row-major tensor of doubles with value semantics. Rank 0 is a scalar.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    validate_dims();
    data_.assign(static_cast<std::size_t>(numel(shape_)), fill);
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_dims();
    if (static_cast<std::int64_t>(data_.size()) != numel(shape_)) {
      throw ShapeError("Tensor: data size " + std::to_string(data_.size()) + " does not match shape " +
                       shape_str(shape_));
    }
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  template <typename... Is>
  double& operator()(Is... is) {
    return data_[static_cast<std::size_t>(offset({static_cast<std::int64_t>(is)...}))];
  }
  template <typename... Is>
  double operator()(Is... is) const {
    return data_[static_cast<std::size_t>(offset({static_cast<std::int64_t>(is)...}))];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape shape) const {
    if (numel(shape) != size()) {
      throw ShapeError("reshape: cannot view " + shape_str(shape_) + " as " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  double item() const {
    if (size() != 1) throw ShapeError("item: tensor is not a scalar, shape " + shape_str(shape_));
    return data_[0];
  }

 private:
  std::int64_t offset(std::initializer_list<std::int64_t> idx) const {
    std::int64_t off = 0;
    std::size_t i = 0;
    for (auto v : idx) {
      off = off * shape_[i] + v;
      ++i;
    }
    return off;
  }

  void validate_dims() const {
    for (auto d : shape_) {
      if (d <= 0) throw ShapeError("Tensor: non-positive dimension in shape " + shape_str(shape_));
    }
  }

  Shape shape_;
  std::vector<double> data_;
};

namespace detail {

// Element strides of `shape` when broadcast against `out`, 0 on expanded dims.
inline std::vector<std::int64_t> broadcast_strides(const Shape& shape, const Shape& out) {
  const int off = static_cast<int>(out.size()) - static_cast<int>(shape.size());
  if (off < 0) throw ShapeError("broadcast: rank of " + shape_str(shape) + " exceeds " + shape_str(out));
  auto st = row_major_strides(shape);
  std::vector<std::int64_t> r(out.size(), 0);
  for (int i = 0; i < static_cast<int>(shape.size()); ++i) {
    if (shape[i] == out[off + i]) {
      r[off + i] = st[i];
    } else if (shape[i] == 1) {
      r[off + i] = 0;
    } else {
      throw ShapeError("broadcast: incompatible shapes " + shape_str(shape) + " vs " + shape_str(out));
    }
  }
  return r;
}

}  // namespace detail

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("broadcast: incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Elementwise binary op with NumPy-style broadcasting.
template <class F>
Tensor binary_broadcast(const Tensor& a, const Tensor& b, F&& f) {
  if (a.shape() == b.shape()) {
    Tensor out(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    const std::int64_t n = out.size();
    for (std::int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
    return out;
  }
  const Shape os = broadcast_shape(a.shape(), b.shape());
  Tensor out(os);
  const auto sa = detail::broadcast_strides(a.shape(), os);
  const auto sb = detail::broadcast_strides(b.shape(), os);
  const int r = static_cast<int>(os.size());
  const std::int64_t inner = os[static_cast<std::size_t>(r - 1)];
  const std::int64_t sa_in = sa[static_cast<std::size_t>(r - 1)];
  const std::int64_t sb_in = sb[static_cast<std::size_t>(r - 1)];
  const std::int64_t rows = out.size() / inner;

  std::vector<std::int64_t> idx(static_cast<std::size_t>(r), 0);
  std::int64_t offa = 0, offb = 0;
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::int64_t row = 0; row < rows; ++row) {
    for (std::int64_t j = 0; j < inner; ++j) {
      po[row * inner + j] = f(pa[offa + j * sa_in], pb[offb + j * sb_in]);
    }
    for (int d = r - 2; d >= 0; --d) {
      ++idx[static_cast<std::size_t>(d)];
      offa += sa[static_cast<std::size_t>(d)];
      offb += sb[static_cast<std::size_t>(d)];
      if (idx[static_cast<std::size_t>(d)] < os[static_cast<std::size_t>(d)]) break;
      offa -= sa[static_cast<std::size_t>(d)] * os[static_cast<std::size_t>(d)];
      offb -= sb[static_cast<std::size_t>(d)] * os[static_cast<std::size_t>(d)];
      idx[static_cast<std::size_t>(d)] = 0;
    }
  }
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  return binary_broadcast(a, b, [](double x, double y) { return x + y; });
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_broadcast(a, b, [](double x, double y) { return x - y; });
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_broadcast(a, b, [](double x, double y) { return x * y; });
}
inline Tensor div(const Tensor& a, const Tensor& b) {
  return binary_broadcast(a, b, [](double x, double y) { return x / y; });
}

template <class F>
Tensor map(const Tensor& a, F&& f) {
  Tensor out(a.shape());
  const double* pa = a.data();
  double* po = out.data();
  const std::int64_t n = a.size();
  for (std::int64_t i = 0; i < n; ++i) po[i] = f(pa[i]);
  return out;
}

inline Tensor scale(const Tensor& a, double c) {
  return map(a, [c](double x) { return x * c; });
}
inline Tensor add_scalar(const Tensor& a, double c) {
  return map(a, [c](double x) { return x + c; });
}

// Sums `g` down to `target` (inverse of broadcasting `target` up to g.shape()).
inline Tensor reduce_to_shape(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  Tensor out(target, 0.0);
  const auto st = detail::broadcast_strides(target, g.shape());
  const Shape& gs = g.shape();
  const int r = g.rank();
  if (r == 0) throw ShapeError("reduce_to_shape: cannot reduce scalar to " + shape_str(target));
  std::vector<std::int64_t> idx(static_cast<std::size_t>(r), 0);
  std::int64_t offt = 0;
  const double* pg = g.data();
  double* po = out.data();
  const std::int64_t inner = gs[static_cast<std::size_t>(r - 1)];
  const std::int64_t st_in = st[static_cast<std::size_t>(r - 1)];
  const std::int64_t rows = g.size() / inner;
  for (std::int64_t row = 0; row < rows; ++row) {
    for (std::int64_t j = 0; j < inner; ++j) {
      po[offt + j * st_in] += pg[row * inner + j];
    }
    for (int d = r - 2; d >= 0; --d) {
      ++idx[static_cast<std::size_t>(d)];
      offt += st[static_cast<std::size_t>(d)];
      if (idx[static_cast<std::size_t>(d)] < gs[static_cast<std::size_t>(d)]) break;
      offt -= st[static_cast<std::size_t>(d)] * gs[static_cast<std::size_t>(d)];
      idx[static_cast<std::size_t>(d)] = 0;
    }
  }
  return out;
}

// Materializes `a` broadcast up to `shape`.
inline Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  Tensor ones(shape, 0.0);
  return binary_broadcast(ones, a, [](double, double y) { return y; });
}

inline Tensor permute(const Tensor& t, const std::vector<int>& axes) {
  const int r = t.rank();
  if (static_cast<int>(axes.size()) != r) throw ShapeError("permute: axes rank mismatch");
  std::vector<bool> seen(static_cast<std::size_t>(r), false);
  for (int a : axes) {
    if (a < 0 || a >= r || seen[static_cast<std::size_t>(a)]) throw ShapeError("permute: invalid axes");
    seen[static_cast<std::size_t>(a)] = true;
  }
  Shape os(static_cast<std::size_t>(r));
  const auto ist = row_major_strides(t.shape());
  std::vector<std::int64_t> st(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    os[static_cast<std::size_t>(i)] = t.dim(axes[static_cast<std::size_t>(i)]);
    st[static_cast<std::size_t>(i)] = ist[static_cast<std::size_t>(axes[static_cast<std::size_t>(i)])];
  }
  Tensor out(os);
  if (r == 0) {
    out[0] = t[0];
    return out;
  }
  std::vector<std::int64_t> idx(static_cast<std::size_t>(r), 0);
  std::int64_t off = 0;
  const double* pt = t.data();
  double* po = out.data();
  const std::int64_t n = out.size();
  for (std::int64_t e = 0; e < n; ++e) {
    po[e] = pt[off];
    for (int d = r - 1; d >= 0; --d) {
      ++idx[static_cast<std::size_t>(d)];
      off += st[static_cast<std::size_t>(d)];
      if (idx[static_cast<std::size_t>(d)] < os[static_cast<std::size_t>(d)]) break;
      off -= st[static_cast<std::size_t>(d)] * os[static_cast<std::size_t>(d)];
      idx[static_cast<std::size_t>(d)] = 0;
    }
  }
  return out;
}

inline std::vector<int> inverse_permutation(const std::vector<int>& axes) {
  std::vector<int> inv(axes.size());
  for (int i = 0; i < static_cast<int>(axes.size()); ++i) inv[static_cast<std::size_t>(axes[static_cast<std::size_t>(i)])] = i;
  return inv;
}

// Reduction over a single axis. keepdim keeps the axis with extent 1.
inline Tensor sum_axis(const Tensor& t, int axis, bool keepdim) {
  const int r = t.rank();
  if (axis < 0 || axis >= r) throw ShapeError("sum_axis: axis out of range");
  std::int64_t pre = 1, post = 1;
  for (int i = 0; i < axis; ++i) pre *= t.dim(i);
  for (int i = axis + 1; i < r; ++i) post *= t.dim(i);
  const std::int64_t len = t.dim(axis);

  Shape os;
  for (int i = 0; i < r; ++i) {
    if (i == axis) {
      if (keepdim) os.push_back(1);
    } else {
      os.push_back(t.dim(i));
    }
  }
  Tensor out(os, 0.0);
  const double* pt = t.data();
  double* po = out.data();
  for (std::int64_t p = 0; p < pre; ++p) {
    for (std::int64_t a = 0; a < len; ++a) {
      const double* src = pt + (p * len + a) * post;
      double* dst = po + p * post;
      for (std::int64_t q = 0; q < post; ++q) dst[q] += src[q];
    }
  }
  return out;
}

inline Tensor mean_axis(const Tensor& t, int axis, bool keepdim) {
  Tensor s = sum_axis(t, axis, keepdim);
  const double inv = 1.0 / static_cast<double>(t.dim(axis));
  for (std::int64_t i = 0; i < s.size(); ++i) s[i] *= inv;
  return s;
}

inline double sum_all(const Tensor& t) {
  double s = 0.0;
  for (std::int64_t i = 0; i < t.size(); ++i) s += t[i];
  return s;
}

inline double max_abs(const Tensor& t) {
  double m = 0.0;
  for (std::int64_t i = 0; i < t.size(); ++i) m = std::max(m, std::abs(t[i]));
  return m;
}

// Index of the largest entry in one row of a rank-2 tensor; ties go to the
// lowest index.
inline int argmax_row(const Tensor& m, std::int64_t row) {
  if (m.rank() != 2) throw ShapeError("argmax_row: expected rank-2 tensor, got " + shape_str(m.shape()));
  if (row < 0 || row >= m.shape()[0]) throw ShapeError("argmax_row: row out of range");
  const std::int64_t K = m.shape()[1];
  std::int64_t best = 0;
  for (std::int64_t k = 1; k < K; ++k) {
    if (m[row * K + k] > m[row * K + best]) best = k;
  }
  return static_cast<int>(best);
}

inline bool all_finite(const Tensor& t) {
  for (std::int64_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i])) return false;
  }
  return true;
}

namespace detail {

inline void gemm_nn(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    std::memset(crow, 0, static_cast<std::size_t>(n) * sizeof(double));
    const double* arow = a + i * k;
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      const double* brow = b + kk * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}

// c[i,j] = sum_k a[i,k] * b[j,k]
inline void gemm_nt(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k, std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::int64_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] = acc;
    }
  }
}

// c[i,j] = sum_k a[k,i] * b[k,j]; accumulates into c (caller zeroes).
inline void gemm_tn_acc(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k, std::int64_t n) {
  for (std::int64_t kk = 0; kk < k; ++kk) {
    const double* arow = a + kk * m;
    const double* brow = b + kk * n;
    for (std::int64_t i = 0; i < m; ++i) {
      const double aki = arow[i];
      double* crow = c + i * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += aki * brow[j];
    }
  }
}

}  // namespace detail

// Batched matrix product with broadcasting over leading (batch) dims.
// ta / tb transpose the trailing two dims of the respective operand.
inline Tensor matmul(const Tensor& a, const Tensor& b, bool ta = false, bool tb = false) {
  if (a.rank() < 2 || b.rank() < 2) throw ShapeError("matmul: operands must have rank >= 2");
  const std::int64_t am = a.dim(a.rank() - 2), an = a.dim(a.rank() - 1);
  const std::int64_t bm = b.dim(b.rank() - 2), bn = b.dim(b.rank() - 1);
  const std::int64_t m = ta ? an : am;
  const std::int64_t ka = ta ? am : an;
  const std::int64_t kb = tb ? bn : bm;
  const std::int64_t n = tb ? bm : bn;
  if (ka != kb) {
    throw ShapeError("matmul: inner dims disagree, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Shape abatch(a.shape().begin(), a.shape().end() - 2);
  Shape bbatch(b.shape().begin(), b.shape().end() - 2);
  Shape batch = broadcast_shape(abatch, bbatch);
  Shape os = batch;
  os.push_back(m);
  os.push_back(n);
  Tensor out(os);

  const auto sa = detail::broadcast_strides(abatch, batch);
  const auto sb = detail::broadcast_strides(bbatch, batch);
  const std::int64_t a_mat = am * an, b_mat = bm * bn, c_mat = m * n;
  const std::int64_t nbatch = numel(batch);
  const int br = static_cast<int>(batch.size());
  std::vector<std::int64_t> idx(static_cast<std::size_t>(br), 0);
  std::int64_t offa = 0, offb = 0;
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = out.data();

  std::vector<double> scratch;  // holds an explicit transpose when both flags set
  for (std::int64_t e = 0; e < nbatch; ++e) {
    const double* pa_e = pa + offa * a_mat;
    const double* pb_e = pb + offb * b_mat;
    double* pc_e = pc + e * c_mat;
    if (!ta && !tb) {
      detail::gemm_nn(pa_e, pb_e, pc_e, m, ka, n);
    } else if (!ta && tb) {
      detail::gemm_nt(pa_e, pb_e, pc_e, m, ka, n);
    } else if (ta && !tb) {
      std::memset(pc_e, 0, static_cast<std::size_t>(c_mat) * sizeof(double));
      detail::gemm_tn_acc(pa_e, pb_e, pc_e, m, ka, n);
    } else {
      // (a^T b^T): transpose b once, then use tn path.
      scratch.assign(static_cast<std::size_t>(b_mat), 0.0);
      for (std::int64_t i = 0; i < bm; ++i)
        for (std::int64_t j = 0; j < bn; ++j) scratch[static_cast<std::size_t>(j * bm + i)] = pb_e[i * bn + j];
      std::memset(pc_e, 0, static_cast<std::size_t>(c_mat) * sizeof(double));
      detail::gemm_tn_acc(pa_e, scratch.data(), pc_e, m, ka, n);
    }
    for (int d = br - 1; d >= 0; --d) {
      ++idx[static_cast<std::size_t>(d)];
      offa += sa[static_cast<std::size_t>(d)];
      offb += sb[static_cast<std::size_t>(d)];
      if (idx[static_cast<std::size_t>(d)] < batch[static_cast<std::size_t>(d)]) break;
      offa -= sa[static_cast<std::size_t>(d)] * batch[static_cast<std::size_t>(d)];
      offb -= sb[static_cast<std::size_t>(d)] * batch[static_cast<std::size_t>(d)];
      idx[static_cast<std::size_t>(d)] = 0;
    }
  }
  return out;
}

// sum over all batch elements of a_e^T @ g_e; a [*, p, k], g [*, p, n] -> [k, n].
// Used for weight gradients so the per-batch outer products never materialize.
inline Tensor matmul_tn_batchsum(const Tensor& a, const Tensor& g) {
  if (a.rank() < 2 || g.rank() < 2 || a.rank() != g.rank()) {
    throw ShapeError("matmul_tn_batchsum: rank mismatch");
  }
  for (int i = 0; i + 2 < a.rank(); ++i) {
    if (a.dim(i) != g.dim(i)) throw ShapeError("matmul_tn_batchsum: batch dims disagree");
  }
  const std::int64_t p = a.dim(a.rank() - 2), k = a.dim(a.rank() - 1);
  const std::int64_t pg = g.dim(g.rank() - 2), n = g.dim(g.rank() - 1);
  if (p != pg) throw ShapeError("matmul_tn_batchsum: row dims disagree");
  std::int64_t nbatch = 1;
  for (int i = 0; i + 2 < a.rank(); ++i) nbatch *= a.dim(i);
  Tensor out(Shape{k, n}, 0.0);
  const double* pa = a.data();
  const double* pgd = g.data();
  for (std::int64_t e = 0; e < nbatch; ++e) {
    detail::gemm_tn_acc(pa + e * p * k, pgd + e * p * n, out.data(), k, p, n);
  }
  return out;
}

}  // namespace moexda
