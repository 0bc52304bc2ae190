#pragma once

// Dense row-major float64 tensors with tape-free reverse-mode autodiff.
//
// Every op result keeps shared references to its inputs plus a backward
// closure, so the computation graph is the DAG reachable from a result.
// backward() orders that DAG topologically and runs each closure once.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sepassure/errors.hpp"

namespace sepassure::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // lazily allocated, same length as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  const char* op = "leaf";

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

inline thread_local bool grad_mode_enabled = true;

inline void require_finite(std::span<const double> v, const char* op) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      std::ostringstream os;
      os << "non-finite value " << v[i] << " at index " << i << " produced by " << op;
      throw NumericError(os.str());
    }
  }
}

}  // namespace detail

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_enabled) { detail::grad_mode_enabled = false; }
  ~NoGradGuard() { detail::grad_mode_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode_enabled; }

class Tensor {
 public:
  Tensor() : Tensor(Shape{0}, {}) {}

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    if (shape_size(shape) != values.size()) {
      throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                           std::to_string(values.size()) + " values");
    }
    detail::require_finite(values, "constructor");
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }
  static Tensor filled(Shape shape, double v, bool requires_grad = false) {
    const auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
  }
  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor(Shape{}, {v}, requires_grad);
  }
  static Tensor vector(std::vector<double> v, bool requires_grad = false) {
    const auto n = v.size();
    return Tensor(Shape{n}, std::move(v), requires_grad);
  }
  static Tensor matrix(std::size_t r, std::size_t c, std::vector<double> v,
                       bool requires_grad = false) {
    return Tensor(Shape{r, c}, std::move(v), requires_grad);
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t dim() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  // 1-D tensors behave as a single row.
  std::size_t rows() const { return dim() == 2 ? node_->shape[0] : 1; }
  std::size_t cols() const {
    return dim() == 0 ? 1 : node_->shape.back();
  }

  std::span<const double> data() const { return node_->value; }
  // Direct write access for optimizers and loaders; bypasses the graph.
  std::span<double> mutable_data() { return node_->value; }
  double item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return node_->grad.size() == node_->value.size() && size() > 0; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

  Tensor detach() const { return Tensor(shape(), node_->value, false); }
  Tensor clone() const { return Tensor(shape(), node_->value, requires_grad()); }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  const char* op_name() const { return node_->op; }

  // Internal plumbing used by ops.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline Tensor make_result(Shape shape, std::vector<double> value,
                          std::vector<Tensor> inputs, std::function<void(Node&)> bw,
                          const char* op) {
  require_finite(value, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  if (grad_mode_enabled) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (auto& t : inputs) node->inputs.push_back(t.node());
      node->backward = std::move(bw);
    }
  }
  return Tensor(std::move(node));
}

// Gradient sink for input k, or nullptr when that input needs none.
inline double* grad_sink(Node& self, std::size_t k) {
  Node& in = *self.inputs[k];
  if (!in.requires_grad) return nullptr;
  in.ensure_grad();
  return in.grad.data();
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
}

inline void require_matrix(const Tensor& a, const char* op) {
  if (a.dim() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
  }
}

// C[m x n] += A[m x k] * B[k x n]
inline void gemm_acc(std::size_t m, std::size_t k, std::size_t n, const double* A,
                     const double* B, double* C) {
  for (std::size_t i = 0; i < m; ++i) {
    double* c = C + i * n;
    const double* a = A + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p];
      const double* b = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

inline std::vector<double> transpose(std::size_t r, std::size_t c, const double* src) {
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = src[i * c + j];
  return out;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
inline double normal_pdf(double x) {
  constexpr double inv_sqrt_2pi = 0.39894228040143267794;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

template <typename F, typename G>
Tensor unary(const Tensor& x, const char* op, F&& fwd, G&& dfdx) {
  std::vector<double> out(x.size());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  return make_result(
      x.shape(), std::move(out), {x},
      [dfdx](Node& self) {
        double* gx = grad_sink(self, 0);
        if (!gx) return;
        const auto& xin = self.inputs[0]->value;
        for (std::size_t i = 0; i < xin.size(); ++i)
          gx[i] += self.grad[i] * dfdx(xin[i], self.value[i]);
      },
      op);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  detail::gemm_acc(m, k, n, a.data().data(), b.data().data(), out.data());
  return detail::make_result(
      Shape{m, n}, std::move(out), {a, b},
      [m, k, n](detail::Node& self) {
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        if (double* ga = detail::grad_sink(self, 0)) {
          const auto bt = detail::transpose(k, n, bv.data());
          detail::gemm_acc(m, n, k, self.grad.data(), bt.data(), ga);
        }
        if (double* gb = detail::grad_sink(self, 1)) {
          const auto at = detail::transpose(m, k, av.data());
          detail::gemm_acc(k, m, n, at.data(), self.grad.data(), gb);
        }
      },
      "matmul");
}

// x[n x d] + bias[d], bias broadcast over rows.
inline Tensor add_row(const Tensor& x, const Tensor& bias) {
  const std::size_t d = x.cols(), n = x.rows();
  if (bias.size() != d) {
    throw DimensionError("add_row: bias " + shape_str(bias.shape()) + " vs input " +
                         shape_str(x.shape()));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  auto bv = bias.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] += bv[j];
  return detail::make_result(
      x.shape(), std::move(out), {x, bias},
      [n, d](detail::Node& self) {
        if (double* gx = detail::grad_sink(self, 0))
          for (std::size_t i = 0; i < n * d; ++i) gx[i] += self.grad[i];
        if (double* gb = detail::grad_sink(self, 1))
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) gb[j] += self.grad[i * d + j];
      },
      "add_row");
}

// x * W + b with W[in x out], b[out].
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add_row(matmul(x, weight), bias);
}

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::make_result(
      a.shape(), std::move(out), {a, b},
      [](detail::Node& self) {
        for (std::size_t k = 0; k < 2; ++k)
          if (double* g = detail::grad_sink(self, k))
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      },
      "add");
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return detail::make_result(
      a.shape(), std::move(out), {a, b},
      [](detail::Node& self) {
        if (double* g = detail::grad_sink(self, 0))
          for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        if (double* g = detail::grad_sink(self, 1))
          for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
      },
      "sub");
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return detail::make_result(
      a.shape(), std::move(out), {a, b},
      [](detail::Node& self) {
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        if (double* g = detail::grad_sink(self, 0))
          for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
        if (double* g = detail::grad_sink(self, 1))
          for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
      },
      "mul");
}

// Elementwise min; ties route the gradient to the first operand.
inline Tensor minimum(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "minimum");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(a[i], b[i]);
  return detail::make_result(
      a.shape(), std::move(out), {a, b},
      [](detail::Node& self) {
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        double* ga = detail::grad_sink(self, 0);
        double* gb = detail::grad_sink(self, 1);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          if (av[i] <= bv[i]) {
            if (ga) ga[i] += self.grad[i];
          } else if (gb) {
            gb[i] += self.grad[i];
          }
        }
      },
      "minimum");
}

inline Tensor maximum(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "maximum");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(a[i], b[i]);
  return detail::make_result(
      a.shape(), std::move(out), {a, b},
      [](detail::Node& self) {
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        double* ga = detail::grad_sink(self, 0);
        double* gb = detail::grad_sink(self, 1);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          if (av[i] >= bv[i]) {
            if (ga) ga[i] += self.grad[i];
          } else if (gb) {
            gb[i] += self.grad[i];
          }
        }
      },
      "maximum");
}

inline Tensor scale(const Tensor& x, double c) {
  return detail::unary(
      x, "scale", [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Tensor add_scalar(const Tensor& x, double c) {
  return detail::unary(
      x, "add_scalar", [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

inline Tensor exp(const Tensor& x) {
  return detail::unary(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Tensor square(const Tensor& x) {
  return detail::unary(
      x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

// Gradient passes where lo <= x <= hi.
inline Tensor clamp(const Tensor& x, double lo, double hi) {
  return detail::unary(
      x, "clamp", [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

// Exact x * Phi(x).
inline Tensor gelu(const Tensor& x) {
  return detail::unary(
      x, "gelu", [](double v) { return v * detail::normal_cdf(v); },
      [](double v, double) { return detail::normal_cdf(v) + v * detail::normal_pdf(v); });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return detail::make_result(
      Shape{}, {s}, {x},
      [](detail::Node& self) {
        if (double* g = detail::grad_sink(self, 0)) {
          const auto n = self.inputs[0]->value.size();
          for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
        }
      },
      "sum");
}

inline Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ContractError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

// x[n x m] -> [n], summing each row.
inline Tensor row_sum(const Tensor& x) {
  const std::size_t n = x.rows(), m = x.cols();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i] += x.data()[i * m + j];
  return detail::make_result(
      Shape{n}, std::move(out), {x},
      [n, m](detail::Node& self) {
        if (double* g = detail::grad_sink(self, 0))
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) g[i * m + j] += self.grad[i];
      },
      "row_sum");
}

// ---------------------------------------------------------------------------
// Normalization

// Row-wise stabilized softmax. A 1-D tensor is one row.
inline Tensor softmax(const Tensor& x) {
  const std::size_t n = x.rows(), m = x.cols();
  if (m == 0) throw ContractError("softmax over zero classes");
  std::vector<double> out(x.size());
  auto xv = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = xv.data() + i * m;
    double* y = out.data() + i * m;
    const double mx = *std::max_element(row, row + m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += (y[j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < m; ++j) y[j] /= z;
  }
  return detail::make_result(
      x.shape(), std::move(out), {x},
      [n, m](detail::Node& self) {
        double* gx = detail::grad_sink(self, 0);
        if (!gx) return;
        for (std::size_t i = 0; i < n; ++i) {
          const double* y = self.value.data() + i * m;
          const double* gy = self.grad.data() + i * m;
          double dot = 0.0;
          for (std::size_t j = 0; j < m; ++j) dot += gy[j] * y[j];
          for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += y[j] * (gy[j] - dot);
        }
      },
      "softmax");
}

inline Tensor log_softmax(const Tensor& x) {
  const std::size_t n = x.rows(), m = x.cols();
  if (m == 0) throw ContractError("log_softmax over zero classes");
  std::vector<double> out(x.size());
  auto xv = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = xv.data() + i * m;
    const double mx = *std::max_element(row, row + m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = row[j] - lse;
  }
  return detail::make_result(
      x.shape(), std::move(out), {x},
      [n, m](detail::Node& self) {
        double* gx = detail::grad_sink(self, 0);
        if (!gx) return;
        for (std::size_t i = 0; i < n; ++i) {
          const double* y = self.value.data() + i * m;
          const double* gy = self.grad.data() + i * m;
          double total = 0.0;
          for (std::size_t j = 0; j < m; ++j) total += gy[j];
          for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += gy[j] - std::exp(y[j]) * total;
        }
      },
      "log_softmax");
}

// Per-row standardization (biased variance + eps) followed by gain and bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5) {
  const std::size_t n = x.rows(), d = x.cols();
  if (d == 0) throw ContractError("layer_norm over zero features");
  if (gain.size() != d || bias.size() != d) {
    throw DimensionError("layer_norm: affine parameters do not match width " +
                         std::to_string(d));
  }
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(n);
  std::vector<double> out(x.size());
  auto xv = x.data();
  auto gv = gain.data();
  auto bv = bias.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = xv.data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (row[j] - mu) * inv;
      (*xhat)[i * d + j] = h;
      out[i * d + j] = h * gv[j] + bv[j];
    }
  }
  return detail::make_result(
      x.shape(), std::move(out), {x, gain, bias},
      [n, d, xhat, inv_std](detail::Node& self) {
        const auto& gv = self.inputs[1]->value;
        if (double* gg = detail::grad_sink(self, 1))
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) gg[j] += self.grad[i * d + j] * (*xhat)[i * d + j];
        if (double* gb = detail::grad_sink(self, 2))
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) gb[j] += self.grad[i * d + j];
        double* gx = detail::grad_sink(self, 0);
        if (!gx) return;
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t i = 0; i < n; ++i) {
          double mean_g = 0.0, mean_gh = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double g = self.grad[i * d + j] * gv[j];
            mean_g += g;
            mean_gh += g * (*xhat)[i * d + j];
          }
          mean_g *= inv_d;
          mean_gh *= inv_d;
          const double inv = (*inv_std)[i];
          for (std::size_t j = 0; j < d; ++j) {
            const double g = self.grad[i * d + j] * gv[j];
            gx[i * d + j] += inv * (g - mean_g - (*xhat)[i * d + j] * mean_gh);
          }
        }
      },
      "layer_norm");
}

// ---------------------------------------------------------------------------
// Indexing and layout

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return detail::make_result(
      std::move(shape), std::move(out), {x},
      [](detail::Node& self) {
        if (double* g = detail::grad_sink(self, 0))
          for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      },
      "reshape");
}

// Stacks matrices (or 1-D rows) with equal column counts.
inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows of nothing");
  const std::size_t d = parts.front().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != d) throw DimensionError("concat_rows: column counts differ");
    total += p.size() / std::max<std::size_t>(d, 1);
  }
  std::vector<double> out;
  out.reserve(total * d);
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    out.insert(out.end(), p.data().begin(), p.data().end());
    sizes.push_back(p.size());
  }
  return detail::make_result(
      Shape{total, d}, std::move(out), parts,
      [sizes](detail::Node& self) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < sizes.size(); ++k) {
          if (double* g = detail::grad_sink(self, k))
            for (std::size_t i = 0; i < sizes[k]; ++i) g[i] += self.grad[off + i];
          off += sizes[k];
        }
      },
      "concat_rows");
}

// a[n x p] | b[n x q] -> [n x (p+q)]
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), p = a.cols(), q = b.cols();
  if (b.rows() != n) throw DimensionError("concat_cols: row counts differ");
  std::vector<double> out(n * (p + q));
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data().data() + i * p, p, out.data() + i * (p + q));
    std::copy_n(b.data().data() + i * q, q, out.data() + i * (p + q) + p);
  }
  return detail::make_result(
      Shape{n, p + q}, std::move(out), {a, b},
      [n, p, q](detail::Node& self) {
        const std::size_t w = p + q;
        if (double* ga = detail::grad_sink(self, 0))
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < p; ++j) ga[i * p + j] += self.grad[i * w + j];
        if (double* gb = detail::grad_sink(self, 1))
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < q; ++j) gb[i * q + j] += self.grad[i * w + p + j];
      },
      "concat_cols");
}

// Selects rows by index; repeated indices accumulate on the way back.
inline Tensor gather_rows(const Tensor& x, std::vector<std::size_t> index) {
  const std::size_t r = x.rows(), d = x.cols();
  std::vector<double> out(index.size() * d);
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] >= r) throw DimensionError("gather_rows: index out of range");
    std::copy_n(x.data().data() + index[k] * d, d, out.data() + k * d);
  }
  const std::size_t count = index.size();
  return detail::make_result(
      Shape{count, d}, std::move(out), {x},
      [d, index = std::move(index)](detail::Node& self) {
        if (double* g = detail::grad_sink(self, 0))
          for (std::size_t k = 0; k < index.size(); ++k)
            for (std::size_t j = 0; j < d; ++j) g[index[k] * d + j] += self.grad[k * d + j];
      },
      "gather_rows");
}

// v[d] -> [n x d]
inline Tensor repeat_rows(const Tensor& v, std::size_t n) {
  const std::size_t d = v.size();
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) std::copy_n(v.data().data(), d, out.data() + i * d);
  return detail::make_result(
      Shape{n, d}, std::move(out), {v},
      [n, d](detail::Node& self) {
        if (double* g = detail::grad_sink(self, 0))
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[i * d + j];
      },
      "repeat_rows");
}

// out[i] = x[i, index[i]]
inline Tensor pick(const Tensor& x, std::vector<std::size_t> index) {
  const std::size_t n = x.rows(), m = x.cols();
  if (index.size() != n) throw DimensionError("pick: one index per row required");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (index[i] >= m) throw DimensionError("pick: column index out of range");
    out[i] = x.data()[i * m + index[i]];
  }
  return detail::make_result(
      Shape{n}, std::move(out), {x},
      [m, index = std::move(index)](detail::Node& self) {
        if (double* g = detail::grad_sink(self, 0))
          for (std::size_t i = 0; i < index.size(); ++i) g[i * m + index[i]] += self.grad[i];
      },
      "pick");
}

// ---------------------------------------------------------------------------
// Attention

// Scaled dot-product attention over independent groups of `group` consecutive
// rows. q, k, v are [R x d] with R a multiple of group; d splits into `heads`
// equal slices. Rows never attend across group boundaries.
inline Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v,
                             std::size_t group, std::size_t heads) {
  detail::require_same_shape(q, k, "attention_core");
  detail::require_same_shape(q, v, "attention_core");
  detail::require_matrix(q, "attention_core");
  const std::size_t R = q.shape()[0], d = q.shape()[1];
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("attention: width " + std::to_string(d) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (group == 0 || R % group != 0) throw DimensionError("attention: rows not a multiple of group");
  const std::size_t hd = d / heads, G = R / group, n = group;
  const double sc = 1.0 / std::sqrt(static_cast<double>(hd));
  // probs layout: [G][heads][n][n]
  auto probs = std::make_shared<std::vector<double>>(G * heads * n * n);
  std::vector<double> out(R * d, 0.0);
  auto qv = q.data(), kv = k.data(), vv = v.data();
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t h = 0; h < heads; ++h) {
      double* P = probs->data() + ((g * heads + h) * n * n);
      for (std::size_t i = 0; i < n; ++i) {
        const double* qi = qv.data() + (g * n + i) * d + h * hd;
        double mx = -INFINITY;
        for (std::size_t j = 0; j < n; ++j) {
          const double* kj = kv.data() + (g * n + j) * d + h * hd;
          double s = 0.0;
          for (std::size_t c = 0; c < hd; ++c) s += qi[c] * kj[c];
          P[i * n + j] = s * sc;
          mx = std::max(mx, P[i * n + j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += (P[i * n + j] = std::exp(P[i * n + j] - mx));
        for (std::size_t j = 0; j < n; ++j) P[i * n + j] /= z;
        double* oi = out.data() + (g * n + i) * d + h * hd;
        for (std::size_t j = 0; j < n; ++j) {
          const double p = P[i * n + j];
          const double* vj = vv.data() + (g * n + j) * d + h * hd;
          for (std::size_t c = 0; c < hd; ++c) oi[c] += p * vj[c];
        }
      }
    }
  }
  return detail::make_result(
      Shape{R, d}, std::move(out), {q, k, v},
      [G, n, heads, hd, d, sc, probs](detail::Node& self) {
        const auto& qv = self.inputs[0]->value;
        const auto& kv = self.inputs[1]->value;
        const auto& vv = self.inputs[2]->value;
        double* gq = detail::grad_sink(self, 0);
        double* gk = detail::grad_sink(self, 1);
        double* gv = detail::grad_sink(self, 2);
        std::vector<double> gp(n * n), gs(n * n);
        for (std::size_t g = 0; g < G; ++g) {
          for (std::size_t h = 0; h < heads; ++h) {
            const double* P = probs->data() + ((g * heads + h) * n * n);
            auto row = [&](std::size_t i) { return (g * n + i) * d + h * hd; };
            // dP = dO V^T ; dV += P^T dO
            for (std::size_t i = 0; i < n; ++i) {
              const double* go = self.grad.data() + row(i);
              for (std::size_t j = 0; j < n; ++j) {
                const double* vj = vv.data() + row(j);
                double s = 0.0;
                for (std::size_t c = 0; c < hd; ++c) s += go[c] * vj[c];
                gp[i * n + j] = s;
                if (gv) {
                  double* gvj = gv + row(j);
                  const double p = P[i * n + j];
                  for (std::size_t c = 0; c < hd; ++c) gvj[c] += p * go[c];
                }
              }
            }
            // softmax backward
            for (std::size_t i = 0; i < n; ++i) {
              double dot = 0.0;
              for (std::size_t j = 0; j < n; ++j) dot += gp[i * n + j] * P[i * n + j];
              for (std::size_t j = 0; j < n; ++j)
                gs[i * n + j] = P[i * n + j] * (gp[i * n + j] - dot) * sc;
            }
            for (std::size_t i = 0; i < n; ++i) {
              for (std::size_t j = 0; j < n; ++j) {
                const double s = gs[i * n + j];
                if (gq) {
                  double* gqi = gq + row(i);
                  const double* kj = kv.data() + row(j);
                  for (std::size_t c = 0; c < hd; ++c) gqi[c] += s * kj[c];
                }
                if (gk) {
                  double* gkj = gk + row(j);
                  const double* qi = qv.data() + row(i);
                  for (std::size_t c = 0; c < hd; ++c) gkj[c] += s * qi[c];
                }
              }
            }
          }
        }
      },
      "attention_core");
}

// ---------------------------------------------------------------------------
// Reverse pass

inline void backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) throw ContractError("backward on a loss with no graph");

  // Iterative post-order DFS gives inputs before consumers.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

}  // namespace sepassure::nn
