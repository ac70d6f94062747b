#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "moexda/tensor.hpp"

namespace moexda::ag {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad() {
    if (grad.size() != value.size()) grad = Tensor(value.shape(), 0.0);
    return grad;
  }
};

// Value-semantic handle to a node of the reverse-mode tape.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : n_(std::move(n)) {}
  Var(Tensor value, bool requires_grad) : n_(std::make_shared<Node>()) {
    n_->value = std::move(value);
    n_->requires_grad = requires_grad;
  }

  bool defined() const { return static_cast<bool>(n_); }
  const Tensor& value() const { return n_->value; }
  Tensor& mutable_value() { return n_->value; }
  const Tensor& grad() const { return n_->grad; }
  Tensor& grad_ref() { return n_->ensure_grad(); }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  void zero_grad() {
    if (n_) n_->ensure_grad().fill(0.0);
  }
  const std::shared_ptr<Node>& node() const { return n_; }

  const Shape& shape() const { return n_->value.shape(); }

 private:
  std::shared_ptr<Node> n_;
};

inline Var constant(Tensor t) { return Var(std::move(t), false); }
inline Var parameter(Tensor t) { return Var(std::move(t), true); }

inline void accum(const Var& p, const Tensor& contrib) {
  Node& n = *p.node();
  if (!n.requires_grad) return;
  Tensor& g = n.ensure_grad();
  if (contrib.shape() == n.value.shape()) {
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] += contrib[i];
  } else {
    Tensor reduced = reduce_to_shape(contrib, n.value.shape());
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] += reduced[i];
  }
}

inline Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool req = false;
  for (const auto& p : parents) req = req || p.requires_grad();
  n->requires_grad = req;
  if (req) {
    for (const auto& p : parents) n->parents.push_back(p.node());
    n->backward_fn = std::move(backward);
  }
  return Var(std::move(n));
}

// Backpropagates from a scalar root. Gradients accumulate into every
// reachable node with requires_grad (leaves keep them until zero_grad).
inline void backward(const Var& root) {
  if (root.value().size() != 1) {
    throw ShapeError("backward: root must be a scalar, got " + shape_str(root.value().shape()));
  }
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* n;
    std::size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({root.node().get(), 0});
  visited.insert(root.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      Node* p = f.n->parents[f.next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }
  root.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

// Re-enters the graph as a constant; gradients do not flow past this point.
inline Var detach(const Var& a) { return constant(a.value()); }

inline Var add(const Var& a, const Var& b) {
  return make_op(moexda::add(a.value(), b.value()), {a, b}, [a, b](Node& n) {
    accum(a, n.grad);
    accum(b, n.grad);
  });
}

inline Var sub(const Var& a, const Var& b) {
  return make_op(moexda::sub(a.value(), b.value()), {a, b}, [a, b](Node& n) {
    accum(a, n.grad);
    accum(b, scale(n.grad, -1.0));
  });
}

inline Var mul(const Var& a, const Var& b) {
  return make_op(moexda::mul(a.value(), b.value()), {a, b}, [a, b](Node& n) {
    accum(a, moexda::mul(n.grad, b.value()));
    accum(b, moexda::mul(n.grad, a.value()));
  });
}

inline Var div(const Var& a, const Var& b) {
  return make_op(moexda::div(a.value(), b.value()), {a, b}, [a, b](Node& n) {
    accum(a, moexda::div(n.grad, b.value()));
    Tensor gb = moexda::mul(n.grad, moexda::div(a.value(), moexda::mul(b.value(), b.value())));
    accum(b, scale(gb, -1.0));
  });
}

inline Var scale(const Var& a, double c) {
  return make_op(moexda::scale(a.value(), c), {a}, [a, c](Node& n) { accum(a, moexda::scale(n.grad, c)); });
}

inline Var add_scalar(const Var& a, double c) {
  return make_op(moexda::add_scalar(a.value(), c), {a}, [a](Node& n) { accum(a, n.grad); });
}

inline Var sqrt(const Var& a) {
  return make_op(map(a.value(), [](double x) { return std::sqrt(x); }), {a}, [a](Node& n) {
    Tensor ga = binary_broadcast(n.grad, a.value(), [](double g, double x) { return g * 0.5 / std::sqrt(x); });
    accum(a, ga);
  });
}

inline Var gelu(const Var& a) {
  Tensor v = map(a.value(), [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); });
  return make_op(std::move(v), {a}, [a](Node& n) {
    Tensor ga = binary_broadcast(n.grad, a.value(), [](double g, double x) {
      const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      const double pdf = std::exp(-0.5 * x * x) * kInvSqrt2Pi;
      return g * (cdf + x * pdf);
    });
    accum(a, ga);
  });
}

// Softmax over the trailing axis, numerically shifted by the row max.
inline Var softmax_last(const Var& a) {
  const Tensor& x = a.value();
  if (x.rank() < 1) throw ShapeError("softmax_last: rank must be >= 1");
  const std::int64_t inner = x.dim(x.rank() - 1);
  const std::int64_t rows = x.size() / inner;
  Tensor y(x.shape());
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * inner;
    double* yr = y.data() + r * inner;
    double m = xr[0];
    for (std::int64_t j = 1; j < inner; ++j) m = std::max(m, xr[j]);
    double s = 0.0;
    for (std::int64_t j = 0; j < inner; ++j) {
      yr[j] = std::exp(xr[j] - m);
      s += yr[j];
    }
    const double inv = 1.0 / s;
    for (std::int64_t j = 0; j < inner; ++j) yr[j] *= inv;
  }
  return make_op(std::move(y), {a}, [a](Node& n) {
    const Tensor& y = n.value;
    const Tensor& g = n.grad;
    const std::int64_t inner = y.dim(y.rank() - 1);
    const std::int64_t rows = y.size() / inner;
    Tensor ga(y.shape());
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* yr = y.data() + r * inner;
      const double* gr = g.data() + r * inner;
      double* ar = ga.data() + r * inner;
      double dot = 0.0;
      for (std::int64_t j = 0; j < inner; ++j) dot += yr[j] * gr[j];
      for (std::int64_t j = 0; j < inner; ++j) ar[j] = yr[j] * (gr[j] - dot);
    }
    accum(a, ga);
  });
}

inline Var matmul(const Var& a, const Var& b, bool ta = false, bool tb = false) {
  Tensor v = moexda::matmul(a.value(), b.value(), ta, tb);
  return make_op(std::move(v), {a, b}, [a, b, ta, tb](Node& n) {
    const Tensor& g = n.grad;
    if (a.requires_grad()) {
      Tensor ga = ta ? moexda::matmul(b.value(), g, tb, true) : moexda::matmul(g, b.value(), false, !tb);
      accum(a, ga);
    }
    if (b.requires_grad()) {
      if (!ta && !tb && b.value().rank() == 2 && a.value().rank() > 2) {
        accum(b, matmul_tn_batchsum(a.value(), g));
      } else {
        Tensor gb = tb ? moexda::matmul(g, a.value(), true, ta) : moexda::matmul(a.value(), g, !ta, false);
        accum(b, gb);
      }
    }
  });
}

inline Var permute(const Var& a, std::vector<int> axes) {
  Tensor v = moexda::permute(a.value(), axes);
  return make_op(std::move(v), {a}, [a, axes](Node& n) {
    accum(a, moexda::permute(n.grad, inverse_permutation(axes)));
  });
}

inline Var reshape(const Var& a, Shape shape) {
  Tensor v = a.value().reshaped(std::move(shape));
  return make_op(std::move(v), {a}, [a](Node& n) { accum(a, n.grad.reshaped(a.value().shape())); });
}

inline Var sum_axis(const Var& a, int axis, bool keepdim) {
  Tensor v = moexda::sum_axis(a.value(), axis, keepdim);
  return make_op(std::move(v), {a}, [a, axis, keepdim](Node& n) {
    Tensor g = n.grad;
    if (!keepdim) {
      Shape ks = a.value().shape();
      ks[static_cast<std::size_t>(axis)] = 1;
      g = g.reshaped(ks);
    }
    accum(a, broadcast_to(g, a.value().shape()));
  });
}

inline Var mean_axis(const Var& a, int axis, bool keepdim) {
  const double inv = 1.0 / static_cast<double>(a.value().dim(axis));
  return scale(sum_axis(a, axis, keepdim), inv);
}

inline Var sum_all(const Var& a) {
  Tensor v = Tensor::scalar(moexda::sum_all(a.value()));
  return make_op(std::move(v), {a}, [a](Node& n) {
    accum(a, Tensor(a.value().shape(), n.grad[0]));
  });
}

inline Var mean_all(const Var& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size())); }

// Prepends a learned token to every row: [R x N x C], [C] -> [R x (N+1) x C].
inline Var prepend_token(const Var& tokens, const Var& tok) {
  const Tensor& t = tokens.value();
  if (t.rank() != 3 || tok.value().rank() != 1 || tok.value().dim(0) != t.dim(2)) {
    throw ShapeError("prepend_token: expected [RxNxC] tokens and [C] token");
  }
  const std::int64_t rows = t.dim(0), npatch = t.dim(1), ch = t.dim(2);
  Tensor v(Shape{rows, npatch + 1, ch});
  for (std::int64_t r = 0; r < rows; ++r) {
    double* dst = v.data() + r * (npatch + 1) * ch;
    std::memcpy(dst, tok.value().data(), static_cast<std::size_t>(ch) * sizeof(double));
    std::memcpy(dst + ch, t.data() + r * npatch * ch, static_cast<std::size_t>(npatch * ch) * sizeof(double));
  }
  return make_op(std::move(v), {tokens, tok}, [tokens, tok, rows, npatch, ch](Node& n) {
    if (tokens.requires_grad()) {
      Tensor gt(Shape{rows, npatch, ch});
      for (std::int64_t r = 0; r < rows; ++r) {
        std::memcpy(gt.data() + r * npatch * ch, n.grad.data() + (r * (npatch + 1) + 1) * ch,
                    static_cast<std::size_t>(npatch * ch) * sizeof(double));
      }
      accum(tokens, gt);
    }
    if (tok.requires_grad()) {
      Tensor gk(Shape{ch}, 0.0);
      for (std::int64_t r = 0; r < rows; ++r) {
        const double* src = n.grad.data() + r * (npatch + 1) * ch;
        for (std::int64_t c = 0; c < ch; ++c) gk[c] += src[c];
      }
      accum(tok, gk);
    }
  });
}

// Extracts one position along axis 1: [R x M x C] -> [R x C].
inline Var select_token(const Var& a, std::int64_t index) {
  const Tensor& t = a.value();
  if (t.rank() != 3 || index < 0 || index >= t.dim(1)) throw ShapeError("select_token: bad input");
  const std::int64_t rows = t.dim(0), m = t.dim(1), ch = t.dim(2);
  Tensor v(Shape{rows, ch});
  for (std::int64_t r = 0; r < rows; ++r) {
    std::memcpy(v.data() + r * ch, t.data() + (r * m + index) * ch, static_cast<std::size_t>(ch) * sizeof(double));
  }
  return make_op(std::move(v), {a}, [a, index, rows, m, ch](Node& n) {
    Tensor ga(a.value().shape(), 0.0);
    for (std::int64_t r = 0; r < rows; ++r) {
      std::memcpy(ga.data() + (r * m + index) * ch, n.grad.data() + r * ch,
                  static_cast<std::size_t>(ch) * sizeof(double));
    }
    accum(a, ga);
  });
}

// Mean cross-entropy over the batch: logits [B x K], labels in [0, K).
inline Var cross_entropy_mean(const Var& logits, const std::vector<int>& labels) {
  const Tensor& z = logits.value();
  if (z.rank() != 2) throw ShapeError("cross_entropy_mean: logits must be [BxK]");
  const std::int64_t bsz = z.dim(0), k = z.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != bsz) {
    throw ShapeError("cross_entropy_mean: labels size mismatch");
  }
  for (int lab : labels) {
    if (lab < 0 || lab >= k) {
      throw ShapeError("cross_entropy_mean: label " + std::to_string(lab) + " out of range [0," +
                       std::to_string(k) + ")");
    }
  }
  double total = 0.0;
  for (std::int64_t b = 0; b < bsz; ++b) {
    const double* zr = z.data() + b * k;
    double m = zr[0];
    for (std::int64_t j = 1; j < k; ++j) m = std::max(m, zr[j]);
    double s = 0.0;
    for (std::int64_t j = 0; j < k; ++j) s += std::exp(zr[j] - m);
    total += m + std::log(s) - zr[labels[static_cast<std::size_t>(b)]];
  }
  Tensor v = Tensor::scalar(total / static_cast<double>(bsz));
  return make_op(std::move(v), {logits}, [logits, labels, bsz, k](Node& n) {
    const Tensor& z = logits.value();
    const double gs = n.grad[0] / static_cast<double>(bsz);
    Tensor ga(z.shape());
    for (std::int64_t b = 0; b < bsz; ++b) {
      const double* zr = z.data() + b * k;
      double* gr = ga.data() + b * k;
      double m = zr[0];
      for (std::int64_t j = 1; j < k; ++j) m = std::max(m, zr[j]);
      double s = 0.0;
      for (std::int64_t j = 0; j < k; ++j) {
        gr[j] = std::exp(zr[j] - m);
        s += gr[j];
      }
      const double inv = 1.0 / s;
      for (std::int64_t j = 0; j < k; ++j) gr[j] *= inv * gs;
      gr[labels[static_cast<std::size_t>(b)]] -= gs;
    }
    accum(logits, ga);
  });
}

}  // namespace moexda::ag
