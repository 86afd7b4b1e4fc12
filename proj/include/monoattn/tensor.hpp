#pragma once

// Dense double-precision tensors with reverse-mode autodiff.
// Define-by-run: every op records a backward closure unless recording
// is disabled (NoGradGuard).

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace monoattn {

using Shape = std::vector<int>;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

namespace detail {
inline bool& grad_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_flag(); }

// RAII scope that disables graph recording.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_flag()) { detail::grad_flag() = false; }
  ~NoGradGuard() { detail::grad_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(TensorNode&)> backprop;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = std::make_shared<TensorNode>();
    n->value.assign(static_cast<size_t>(numel(shape)), 0.0);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(n);
  }
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false) {
    if (static_cast<int64_t>(values.size()) != numel(shape))
      throw std::invalid_argument("Tensor::from: size mismatch");
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(n);
  }
  static Tensor scalar(double v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(node_->value.size()); }
  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<double>& values() const { return node_->value; }
  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& grad() const { return node_->grad; }

  double item() const {
    if (node_->value.size() != 1)
      throw std::logic_error("item() on non-scalar tensor");
    return node_->value[0];
  }
  double at(int64_t i) const { return node_->value[static_cast<size_t>(i)]; }

  void zero_grad() {
    node_->grad.assign(node_->value.size(), 0.0);
  }

  std::shared_ptr<TensorNode> node() const { return node_; }

  // Detached copy: same values, no history, no grad.
  Tensor detach() const {
    return Tensor::from(node_->shape, node_->value, false);
  }

 private:
  std::shared_ptr<TensorNode> node_;
};

namespace detail {

inline Tensor make_op(Shape shape, std::vector<double> value,
                      std::vector<Tensor> inputs,
                      std::function<void(TensorNode&)> backprop) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      n->requires_grad = true;
      for (const auto& in : inputs) n->parents.push_back(in.node());
      n->backprop = std::move(backprop);
    }
  }
  return Tensor(n);
}

inline void check_same_shape(const Tensor& a, const Tensor& b,
                             const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<double> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] += b.values()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op(a.shape(), std::move(out), {a, b},
                         [an, bn](TensorNode& self) {
                           if (an->requires_grad) {
                             an->ensure_grad();
                             for (size_t i = 0; i < self.grad.size(); ++i)
                               an->grad[i] += self.grad[i];
                           }
                           if (bn->requires_grad) {
                             bn->ensure_grad();
                             for (size_t i = 0; i < self.grad.size(); ++i)
                               bn->grad[i] += self.grad[i];
                           }
                         });
}

inline Tensor add_all(const std::vector<Tensor>& ts) {
  if (ts.empty()) throw std::invalid_argument("add_all: empty");
  Tensor acc = ts[0];
  for (size_t i = 1; i < ts.size(); ++i) acc = add(acc, ts[i]);
  return acc;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<double> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] -= b.values()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op(a.shape(), std::move(out), {a, b},
                         [an, bn](TensorNode& self) {
                           if (an->requires_grad) {
                             an->ensure_grad();
                             for (size_t i = 0; i < self.grad.size(); ++i)
                               an->grad[i] += self.grad[i];
                           }
                           if (bn->requires_grad) {
                             bn->ensure_grad();
                             for (size_t i = 0; i < self.grad.size(); ++i)
                               bn->grad[i] -= self.grad[i];
                           }
                         });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<double> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] *= b.values()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op(a.shape(), std::move(out), {a, b},
                         [an, bn](TensorNode& self) {
                           if (an->requires_grad) {
                             an->ensure_grad();
                             for (size_t i = 0; i < self.grad.size(); ++i)
                               an->grad[i] += self.grad[i] * bn->value[i];
                           }
                           if (bn->requires_grad) {
                             bn->ensure_grad();
                             for (size_t i = 0; i < self.grad.size(); ++i)
                               bn->grad[i] += self.grad[i] * an->value[i];
                           }
                         });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "div");
  std::vector<double> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] /= b.values()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op(a.shape(), std::move(out), {a, b},
                         [an, bn](TensorNode& self) {
                           if (an->requires_grad) {
                             an->ensure_grad();
                             for (size_t i = 0; i < self.grad.size(); ++i)
                               an->grad[i] += self.grad[i] / bn->value[i];
                           }
                           if (bn->requires_grad) {
                             bn->ensure_grad();
                             for (size_t i = 0; i < self.grad.size(); ++i)
                               bn->grad[i] -= self.grad[i] * an->value[i] /
                                              (bn->value[i] * bn->value[i]);
                           }
                         });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.values());
  for (double& v : out) v *= s;
  auto an = a.node();
  return detail::make_op(a.shape(), std::move(out), {a},
                         [an, s](TensorNode& self) {
                           an->ensure_grad();
                           for (size_t i = 0; i < self.grad.size(); ++i)
                             an->grad[i] += self.grad[i] * s;
                         });
}

inline Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.values());
  for (double& v : out) v += s;
  auto an = a.node();
  return detail::make_op(a.shape(), std::move(out), {a},
                         [an](TensorNode& self) {
                           an->ensure_grad();
                           for (size_t i = 0; i < self.grad.size(); ++i)
                             an->grad[i] += self.grad[i];
                         });
}

inline Tensor exp(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& v : out) v = std::exp(v);
  auto an = a.node();
  return detail::make_op(a.shape(), std::move(out), {a},
                         [an](TensorNode& self) {
                           an->ensure_grad();
                           for (size_t i = 0; i < self.grad.size(); ++i)
                             an->grad[i] += self.grad[i] * self.value[i];
                         });
}

inline Tensor log(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& v : out) v = std::log(v);
  auto an = a.node();
  return detail::make_op(a.shape(), std::move(out), {a},
                         [an](TensorNode& self) {
                           an->ensure_grad();
                           for (size_t i = 0; i < self.grad.size(); ++i)
                             an->grad[i] += self.grad[i] / an->value[i];
                         });
}

inline Tensor relu(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  auto an = a.node();
  return detail::make_op(a.shape(), std::move(out), {a},
                         [an](TensorNode& self) {
                           an->ensure_grad();
                           for (size_t i = 0; i < self.grad.size(); ++i)
                             if (an->value[i] > 0.0)
                               an->grad[i] += self.grad[i];
                         });
}

inline Tensor tanh_t(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& v : out) v = std::tanh(v);
  auto an = a.node();
  return detail::make_op(a.shape(), std::move(out), {a},
                         [an](TensorNode& self) {
                           an->ensure_grad();
                           for (size_t i = 0; i < self.grad.size(); ++i)
                             an->grad[i] += self.grad[i] *
                                            (1.0 - self.value[i] * self.value[i]);
                         });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  auto an = a.node();
  return detail::make_op({1}, {s}, {a}, [an](TensorNode& self) {
    an->ensure_grad();
    for (size_t i = 0; i < an->grad.size(); ++i)
      an->grad[i] += self.grad[0];
  });
}

inline Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

// logsumexp over all entries, max-shifted.
inline Tensor logsumexp(const Tensor& a) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : a.values()) m = std::max(m, v);
  double s = 0.0;
  for (double v : a.values()) s += std::exp(v - m);
  double out = m + std::log(s);
  auto an = a.node();
  return detail::make_op({1}, {out}, {a}, [an, out](TensorNode& self) {
    an->ensure_grad();
    for (size_t i = 0; i < an->grad.size(); ++i)
      an->grad[i] += self.grad[0] * std::exp(an->value[i] - out);
  });
}

// ---------------------------------------------------------------------------
// Matrix ops (2D)

namespace detail {
inline void mm(const double* A, const double* B, double* C, int m, int k,
               int n, bool accumulate) {
  if (!accumulate) std::fill(C, C + static_cast<int64_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      double a = A[static_cast<int64_t>(i) * k + p];
      if (a == 0.0) continue;
      const double* brow = B + static_cast<int64_t>(p) * n;
      double* crow = C + static_cast<int64_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
}
// C += A^T * B, A is (k,m), B is (k,n), C is (m,n)
inline void mm_tn(const double* A, const double* B, double* C, int k, int m,
                  int n) {
  for (int p = 0; p < k; ++p)
    for (int i = 0; i < m; ++i) {
      double a = A[static_cast<int64_t>(p) * m + i];
      if (a == 0.0) continue;
      const double* brow = B + static_cast<int64_t>(p) * n;
      double* crow = C + static_cast<int64_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
}
// C += A * B^T, A is (m,k), B is (n,k), C is (m,n)
inline void mm_nt(const double* A, const double* B, double* C, int m, int k,
                  int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      const double* arow = A + static_cast<int64_t>(i) * k;
      const double* brow = B + static_cast<int64_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
      C[static_cast<int64_t>(i) * n + j] += s;
    }
}
}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: bad shapes");
  int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * n);
  detail::mm(a.values().data(), b.values().data(), out.data(), m, k, n, false);
  auto an = a.node(), bn = b.node();
  return detail::make_op({m, n}, std::move(out), {a, b},
                         [an, bn, m, k, n](TensorNode& self) {
                           if (an->requires_grad) {
                             an->ensure_grad();
                             detail::mm_nt(self.grad.data(), bn->value.data(),
                                           an->grad.data(), m, n, k);
                           }
                           if (bn->requires_grad) {
                             bn->ensure_grad();
                             detail::mm_tn(an->value.data(), self.grad.data(),
                                           bn->grad.data(), m, k, n);
                           }
                         });
}

// a * b^T where a is (m,k), b is (n,k) -> (m,n)
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(1))
    throw std::invalid_argument("matmul_nt: bad shapes");
  int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  detail::mm_nt(a.values().data(), b.values().data(), out.data(), m, k, n);
  auto an = a.node(), bn = b.node();
  return detail::make_op({m, n}, std::move(out), {a, b},
                         [an, bn, m, k, n](TensorNode& self) {
                           // dA += dC * B ; dB += dC^T * A
                           if (an->requires_grad) {
                             an->ensure_grad();
                             detail::mm(self.grad.data(), bn->value.data(),
                                        an->grad.data(), m, n, k, true);
                           }
                           if (bn->requires_grad) {
                             bn->ensure_grad();
                             detail::mm_tn(self.grad.data(), an->value.data(),
                                           bn->grad.data(), m, n, k);
                           }
                         });
}

// Broadcast-add a row vector (1,n) or (n) to every row of (m,n).
inline Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  int m = a.dim(0), n = a.dim(1);
  if (static_cast<int64_t>(v.size()) != n)
    throw std::invalid_argument("add_rowvec: size mismatch");
  std::vector<double> out(a.values());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<size_t>(i) * n + j] += v.at(j);
  auto an = a.node(), vn = v.node();
  return detail::make_op(a.shape(), std::move(out), {a, v},
                         [an, vn, m, n](TensorNode& self) {
                           if (an->requires_grad) {
                             an->ensure_grad();
                             for (size_t i = 0; i < self.grad.size(); ++i)
                               an->grad[i] += self.grad[i];
                           }
                           if (vn->requires_grad) {
                             vn->ensure_grad();
                             for (int i = 0; i < m; ++i)
                               for (int j = 0; j < n; ++j)
                                 vn->grad[j] +=
                                     self.grad[static_cast<size_t>(i) * n + j];
                           }
                         });
}

// ---------------------------------------------------------------------------
// Shape ops

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size())
    throw std::invalid_argument("reshape: element count mismatch");
  auto an = a.node();
  return detail::make_op(std::move(shape), a.values(), {a},
                         [an](TensorNode& self) {
                           an->ensure_grad();
                           for (size_t i = 0; i < self.grad.size(); ++i)
                             an->grad[i] += self.grad[i];
                         });
}

inline Tensor slice_rows(const Tensor& a, int r0, int r1) {
  int m = a.dim(0), n = a.dim(1);
  if (r0 < 0 || r1 > m || r0 >= r1)
    throw std::invalid_argument("slice_rows: bad range");
  std::vector<double> out(a.values().begin() + static_cast<int64_t>(r0) * n,
                          a.values().begin() + static_cast<int64_t>(r1) * n);
  auto an = a.node();
  return detail::make_op({r1 - r0, n}, std::move(out), {a},
                         [an, r0, n](TensorNode& self) {
                           an->ensure_grad();
                           for (size_t i = 0; i < self.grad.size(); ++i)
                             an->grad[static_cast<size_t>(r0) * n + i] +=
                                 self.grad[i];
                         });
}

inline Tensor slice_cols(const Tensor& a, int c0, int c1) {
  int m = a.dim(0), n = a.dim(1);
  if (c0 < 0 || c1 > n || c0 >= c1)
    throw std::invalid_argument("slice_cols: bad range");
  int w = c1 - c0;
  std::vector<double> out(static_cast<size_t>(m) * w);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < w; ++j)
      out[static_cast<size_t>(i) * w + j] =
          a.values()[static_cast<size_t>(i) * n + c0 + j];
  auto an = a.node();
  return detail::make_op({m, w}, std::move(out), {a},
                         [an, m, n, c0, w](TensorNode& self) {
                           an->ensure_grad();
                           for (int i = 0; i < m; ++i)
                             for (int j = 0; j < w; ++j)
                               an->grad[static_cast<size_t>(i) * n + c0 + j] +=
                                   self.grad[static_cast<size_t>(i) * w + j];
                         });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  int m = parts[0].dim(0);
  int n = 0;
  for (const auto& p : parts) {
    if (p.dim(0) != m) throw std::invalid_argument("concat_cols: row mismatch");
    n += p.dim(1);
  }
  std::vector<double> out(static_cast<size_t>(m) * n);
  std::vector<int> offsets;
  int off = 0;
  for (const auto& p : parts) {
    int w = p.dim(1);
    offsets.push_back(off);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        out[static_cast<size_t>(i) * n + off + j] =
            p.values()[static_cast<size_t>(i) * w + j];
    off += w;
  }
  std::vector<std::shared_ptr<TensorNode>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return detail::make_op(
      {m, n}, std::move(out), parts,
      [nodes, offsets, m, n](TensorNode& self) {
        for (size_t p = 0; p < nodes.size(); ++p) {
          if (!nodes[p]->requires_grad) continue;
          nodes[p]->ensure_grad();
          int w = nodes[p]->shape[1];
          int off = offsets[p];
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j)
              nodes[p]->grad[static_cast<size_t>(i) * w + j] +=
                  self.grad[static_cast<size_t>(i) * n + off + j];
        }
      });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  int n = parts[0].dim(1);
  int m = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    if (p.dim(1) != n) throw std::invalid_argument("concat_rows: col mismatch");
    m += p.dim(0);
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  std::vector<std::shared_ptr<TensorNode>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return detail::make_op(
      {m, n}, std::move(out), parts, [nodes, n](TensorNode& self) {
        int64_t off = 0;
        for (const auto& node : nodes) {
          int64_t sz = static_cast<int64_t>(node->value.size());
          if (node->requires_grad) {
            node->ensure_grad();
            for (int64_t i = 0; i < sz; ++i)
              node->grad[static_cast<size_t>(i)] +=
                  self.grad[static_cast<size_t>(off + i)];
          }
          off += sz;
        }
      });
}

// Gather rows of a (m,n) matrix by index.
inline Tensor gather_rows(const Tensor& a, const std::vector<int>& idx) {
  int n = a.dim(1);
  std::vector<double> out(idx.size() * static_cast<size_t>(n));
  for (size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= a.dim(0))
      throw std::out_of_range("gather_rows: index out of range");
    std::copy_n(a.values().begin() + static_cast<int64_t>(idx[r]) * n, n,
                out.begin() + static_cast<int64_t>(r) * n);
  }
  auto an = a.node();
  return detail::make_op({static_cast<int>(idx.size()), n}, std::move(out),
                         {a}, [an, idx, n](TensorNode& self) {
                           an->ensure_grad();
                           for (size_t r = 0; r < idx.size(); ++r)
                             for (int j = 0; j < n; ++j)
                               an->grad[static_cast<size_t>(idx[r]) * n + j] +=
                                   self.grad[r * static_cast<size_t>(n) + j];
                         });
}

// Pairwise row sums: A (m,d), B (n,d) -> (m*n, d), row i*n+j = A_i + B_j.
inline Tensor pairwise_sum(const Tensor& a, const Tensor& b) {
  if (a.dim(1) != b.dim(1))
    throw std::invalid_argument("pairwise_sum: width mismatch");
  int m = a.dim(0), n = b.dim(0), d = a.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * n * d);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int c = 0; c < d; ++c)
        out[(static_cast<size_t>(i) * n + j) * d + c] =
            a.values()[static_cast<size_t>(i) * d + c] +
            b.values()[static_cast<size_t>(j) * d + c];
  auto an = a.node(), bn = b.node();
  return detail::make_op(
      {m * n, d}, std::move(out), {a, b},
      [an, bn, m, n, d](TensorNode& self) {
        if (an->requires_grad) {
          an->ensure_grad();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
              for (int c = 0; c < d; ++c)
                an->grad[static_cast<size_t>(i) * d + c] +=
                    self.grad[(static_cast<size_t>(i) * n + j) * d + c];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
              for (int c = 0; c < d; ++c)
                bn->grad[static_cast<size_t>(j) * d + c] +=
                    self.grad[(static_cast<size_t>(i) * n + j) * d + c];
        }
      });
}

// ---------------------------------------------------------------------------
// Row-wise softmax family (last dimension of a 2D tensor)

// Optional additive mask of the same shape (entries 0 or -inf), not
// differentiated.
inline Tensor softmax_rows(const Tensor& a, const Tensor* mask = nullptr) {
  int m = a.dim(0), n = a.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    const double* row = a.values().data() + static_cast<int64_t>(i) * n;
    const double* mrow =
        mask ? mask->values().data() + static_cast<int64_t>(i) * n : nullptr;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      double v = row[j] + (mrow ? mrow[j] : 0.0);
      mx = std::max(mx, v);
    }
    double s = 0.0;
    for (int j = 0; j < n; ++j) {
      double v = row[j] + (mrow ? mrow[j] : 0.0);
      double e = std::isinf(v) && v < 0 ? 0.0 : std::exp(v - mx);
      out[static_cast<size_t>(i) * n + j] = e;
      s += e;
    }
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] /= s;
  }
  auto an = a.node();
  return detail::make_op(a.shape(), std::move(out), {a},
                         [an, m, n](TensorNode& self) {
                           an->ensure_grad();
                           for (int i = 0; i < m; ++i) {
                             const double* y =
                                 self.value.data() + static_cast<int64_t>(i) * n;
                             const double* gy =
                                 self.grad.data() + static_cast<int64_t>(i) * n;
                             double dot = 0.0;
                             for (int j = 0; j < n; ++j) dot += y[j] * gy[j];
                             double* gx = an->grad.data() +
                                          static_cast<int64_t>(i) * n;
                             for (int j = 0; j < n; ++j)
                               gx[j] += y[j] * (gy[j] - dot);
                           }
                         });
}

inline Tensor log_softmax_rows(const Tensor& a) {
  int m = a.dim(0), n = a.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    const double* row = a.values().data() + static_cast<int64_t>(i) * n;
    double mx = *std::max_element(row, row + n);
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += std::exp(row[j] - mx);
    double lse = mx + std::log(s);
    for (int j = 0; j < n; ++j)
      out[static_cast<size_t>(i) * n + j] = row[j] - lse;
  }
  auto an = a.node();
  return detail::make_op(a.shape(), std::move(out), {a},
                         [an, m, n](TensorNode& self) {
                           an->ensure_grad();
                           for (int i = 0; i < m; ++i) {
                             const double* y =
                                 self.value.data() + static_cast<int64_t>(i) * n;
                             const double* gy =
                                 self.grad.data() + static_cast<int64_t>(i) * n;
                             double gsum = 0.0;
                             for (int j = 0; j < n; ++j) gsum += gy[j];
                             double* gx = an->grad.data() +
                                          static_cast<int64_t>(i) * n;
                             for (int j = 0; j < n; ++j)
                               gx[j] += gy[j] - std::exp(y[j]) * gsum;
                           }
                         });
}

// ---------------------------------------------------------------------------
// Cumulative sums along rows

inline Tensor cumsum_rows(const Tensor& a) {
  int m = a.dim(0), n = a.dim(1);
  std::vector<double> out(a.values());
  for (int i = 0; i < m; ++i)
    for (int j = 1; j < n; ++j)
      out[static_cast<size_t>(i) * n + j] +=
          out[static_cast<size_t>(i) * n + j - 1];
  auto an = a.node();
  return detail::make_op(a.shape(), std::move(out), {a},
                         [an, m, n](TensorNode& self) {
                           // d/dx_j = sum_{k>=j} dy_k : reverse cumsum
                           an->ensure_grad();
                           for (int i = 0; i < m; ++i) {
                             double acc = 0.0;
                             for (int j = n - 1; j >= 0; --j) {
                               acc += self.grad[static_cast<size_t>(i) * n + j];
                               an->grad[static_cast<size_t>(i) * n + j] += acc;
                             }
                           }
                         });
}

inline Tensor revcumsum_rows(const Tensor& a) {
  int m = a.dim(0), n = a.dim(1);
  std::vector<double> out(a.values());
  for (int i = 0; i < m; ++i)
    for (int j = n - 2; j >= 0; --j)
      out[static_cast<size_t>(i) * n + j] +=
          out[static_cast<size_t>(i) * n + j + 1];
  auto an = a.node();
  return detail::make_op(a.shape(), std::move(out), {a},
                         [an, m, n](TensorNode& self) {
                           an->ensure_grad();
                           for (int i = 0; i < m; ++i) {
                             double acc = 0.0;
                             for (int j = 0; j < n; ++j) {
                               acc += self.grad[static_cast<size_t>(i) * n + j];
                               an->grad[static_cast<size_t>(i) * n + j] += acc;
                             }
                           }
                         });
}

// ---------------------------------------------------------------------------
// Layer normalization over rows with learned gain/bias vectors.

inline Tensor layer_norm_rows(const Tensor& x, const Tensor& gain,
                              const Tensor& bias, double eps = 1e-5) {
  int m = x.dim(0), n = x.dim(1);
  if (static_cast<int64_t>(gain.size()) != n ||
      static_cast<int64_t>(bias.size()) != n)
    throw std::invalid_argument("layer_norm_rows: param size mismatch");
  std::vector<double> out(static_cast<size_t>(m) * n);
  std::vector<double> mu(m), istd(m);
  for (int i = 0; i < m; ++i) {
    const double* row = x.values().data() + static_cast<int64_t>(i) * n;
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += row[j];
    double mean = s / n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= n;
    mu[i] = mean;
    istd[i] = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < n; ++j)
      out[static_cast<size_t>(i) * n + j] =
          (row[j] - mean) * istd[i] * gain.at(j) + bias.at(j);
  }
  auto xn = x.node(), gn = gain.node(), bn = bias.node();
  return detail::make_op(
      x.shape(), std::move(out), {x, gain, bias},
      [xn, gn, bn, m, n, mu, istd](TensorNode& self) {
        for (int i = 0; i < m; ++i) {
          const double* row = xn->value.data() + static_cast<int64_t>(i) * n;
          const double* gy = self.grad.data() + static_cast<int64_t>(i) * n;
          if (gn->requires_grad || bn->requires_grad) {
            if (gn->requires_grad) gn->ensure_grad();
            if (bn->requires_grad) bn->ensure_grad();
            for (int j = 0; j < n; ++j) {
              double xhat = (row[j] - mu[i]) * istd[i];
              if (gn->requires_grad) gn->grad[j] += gy[j] * xhat;
              if (bn->requires_grad) bn->grad[j] += gy[j];
            }
          }
          if (xn->requires_grad) {
            xn->ensure_grad();
            // dxhat_j = gy_j * gain_j
            double sum_d = 0.0, sum_dx = 0.0;
            for (int j = 0; j < n; ++j) {
              double d = gy[j] * gn->value[static_cast<size_t>(j)];
              double xhat = (row[j] - mu[i]) * istd[i];
              sum_d += d;
              sum_dx += d * xhat;
            }
            double* gx = xn->grad.data() + static_cast<int64_t>(i) * n;
            for (int j = 0; j < n; ++j) {
              double d = gy[j] * gn->value[static_cast<size_t>(j)];
              double xhat = (row[j] - mu[i]) * istd[i];
              gx[j] += istd[i] * (d - sum_d / n - xhat * sum_dx / n);
            }
          }
        }
      });
}

// Embedding lookup: table (V, d), ids -> (len(ids), d).
inline Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  return gather_rows(table, ids);
}

// ---------------------------------------------------------------------------
// Backward pass

inline void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  if (!loss.requires_grad()) return;
  // Topological order by iterative DFS.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    if (node->backprop) {
      node->ensure_grad();
      node->backprop(*node);
    }
  }
}

inline bool all_finite(const Tensor& t) {
  for (double v : t.values())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace monoattn
