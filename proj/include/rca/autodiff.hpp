#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rca/tensor.hpp"

namespace rca::ad {

/// One node of an eagerly evaluated computation graph. Forward values are
/// computed when the op is built; backward() then fills gradients for every
/// node with requires_grad set. Gradients accumulate until zero_grad.
struct Node {
  Tensor data;
  Tensor grad;  // allocated only when requires_grad
  bool requires_grad = false;
  std::string name;  // set for parameters, empty otherwise
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // reads this->grad, adds into parents
};

using Value = std::shared_ptr<Node>;

inline Value constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->data = std::move(t);
  return n;
}

inline Value parameter(Tensor t, std::string name = "") {
  auto n = std::make_shared<Node>();
  n->data = std::move(t);
  n->grad = Tensor::zeros(n->data.shape());
  n->requires_grad = true;
  n->name = std::move(name);
  return n;
}

inline void zero_grad(const Value& v) {
  if (v->requires_grad) v->grad.fill(0.0);
}

namespace detail {

inline Value make_op(Tensor out, std::vector<Value> parents,
                     std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->data = std::move(out);
  n->parents = std::move(parents);
  for (const auto& p : n->parents) {
    if (p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad) {
    n->grad = Tensor::zeros(n->data.shape());
    n->backprop = std::move(backprop);
  }
  return n;
}

[[noreturn]] inline void shape_error(const std::string& op, const Tensor& a,
                                     const Tensor& b) {
  throw std::invalid_argument(op + ": shape mismatch " + a.shape_str() + " vs " +
                              b.shape_str());
}

}  // namespace detail

/// y = x @ w + b with x [m x in], w [in x out], b [out] (b may be null).
inline Value linear(const Value& x, const Value& w, const Value& b = nullptr) {
  const std::size_t m = x->data.rows();
  const std::size_t in = x->data.cols();
  if (w->data.rows() != in) detail::shape_error("linear", x->data, w->data);
  const std::size_t out = w->data.cols();
  if (b && b->data.numel() != out) detail::shape_error("linear(bias)", w->data, b->data);

  Tensor y({m, out});
  const double* xd = x->data.data();
  const double* wd = w->data.data();
  double* yd = y.data();
  for (std::size_t r = 0; r < m; ++r) {
    double* yrow = yd + r * out;
    if (b) {
      const double* bd = b->data.data();
      for (std::size_t c = 0; c < out; ++c) yrow[c] = bd[c];
    }
    const double* xrow = xd + r * in;
    for (std::size_t k = 0; k < in; ++k) {
      const double xv = xrow[k];
      if (xv == 0.0) continue;
      const double* wrow = wd + k * out;
      for (std::size_t c = 0; c < out; ++c) yrow[c] += xv * wrow[c];
    }
  }

  std::vector<Value> parents  = b ? std::vector<Value>{x, w, b} : std::vector<Value>{x, w};
  return detail::make_op(std::move(y), std::move(parents), [m, in, out](Node& self) {
    const Value& x = self.parents[0];
    const Value& w = self.parents[1];
    const double* g = self.grad.data();
    if (x->requires_grad) {
      double* gx = x->grad.data();
      const double* wd = w->data.data();
      for (std::size_t r = 0; r < m; ++r) {
        const double* grow = g + r * out;
        double* gxrow = gx + r * in;
        for (std::size_t k = 0; k < in; ++k) {
          const double* wrow = wd + k * out;
          double acc = 0.0;
          for (std::size_t c = 0; c < out; ++c) acc += grow[c] * wrow[c];
          gxrow[k] += acc;
        }
      }
    }
    if (w->requires_grad) {
      double* gw = w->grad.data();
      const double* xd = x->data.data();
      for (std::size_t r = 0; r < m; ++r) {
        const double* grow = g + r * out;
        const double* xrow = xd + r * in;
        for (std::size_t k = 0; k < in; ++k) {
          const double xv = xrow[k];
          if (xv == 0.0) continue;
          double* gwrow = gw + k * out;
          for (std::size_t c = 0; c < out; ++c) gwrow[c] += xv * grow[c];
        }
      }
    }
    if (self.parents.size() == 3 && self.parents[2]->requires_grad) {
      double* gb = self.parents[2]->grad.data();
      for (std::size_t r = 0; r < m; ++r) {
        const double* grow = g + r * out;
        for (std::size_t c = 0; c < out; ++c) gb[c] += grow[c];
      }
    }
  });
}

inline Value add(const Value& a, const Value& b) {
  if (!a->data.same_shape(b->data)) detail::shape_error("add", a->data, b->data);
  Tensor y(a->data.shape());
  const std::size_t n = y.numel();
  for (std::size_t i = 0; i < n; ++i) y[i] = a->data[i] + b->data[i];
  return detail::make_op(std::move(y), {a, b}, [n](Node& self) {
    for (int p = 0; p < 2; ++p) {
      const Value& v = self.parents[p];
      if (!v->requires_grad) continue;
      for (std::size_t i = 0; i < n; ++i) v->grad[i] += self.grad[i];
    }
  });
}

/// Elementwise product of same-shape tensors.
inline Value mul(const Value& a, const Value& b) {
  if (!a->data.same_shape(b->data)) detail::shape_error("mul", a->data, b->data);
  Tensor y(a->data.shape());
  const std::size_t n = y.numel();
  for (std::size_t i = 0; i < n; ++i) y[i] = a->data[i] * b->data[i];
  return detail::make_op(std::move(y), {a, b}, [n](Node& self) {
    const Value& a = self.parents[0];
    const Value& b = self.parents[1];
    if (a->requires_grad)
      for (std::size_t i = 0; i < n; ++i) a->grad[i] += self.grad[i] * b->data[i];
    if (b->requires_grad)
      for (std::size_t i = 0; i < n; ++i) b->grad[i] += self.grad[i] * a->data[i];
  });
}

/// a [r x c] scaled per column by row [1 x c] (broadcast over rows).
inline Value mul_rows(const Value& a, const Value& row) {
  const std::size_t r = a->data.rows();
  const std::size_t c = a->data.cols();
  if (row->data.numel() != c) detail::shape_error("mul_rows", a->data, row->data);
  Tensor y(a->data.shape());
  const double* ad = a->data.data();
  const double* rd = row->data.data();
  double* yd = y.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) yd[i * c + j] = ad[i * c + j] * rd[j];
  return detail::make_op(std::move(y), {a, row}, [r, c](Node& self) {
    const Value& a = self.parents[0];
    const Value& row = self.parents[1];
    const double* g = self.grad.data();
    if (a->requires_grad) {
      const double* rd = row->data.data();
      double* ga = a->grad.data();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i * c + j] * rd[j];
    }
    if (row->requires_grad) {
      const double* ad = a->data.data();
      double* gr = row->grad.data();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gr[j] += g[i * c + j] * ad[i * c + j];
    }
  });
}

/// Columns-stack of two equal-size tensors flattened: out [n x 2].
inline Value stack_cols(const Value& a, const Value& b) {
  const std::size_t n = a->data.numel();
  if (b->data.numel() != n) detail::shape_error("stack_cols", a->data, b->data);
  Tensor y({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    y[2 * i] = a->data[i];
    y[2 * i + 1] = b->data[i];
  }
  return detail::make_op(std::move(y), {a, b}, [n](Node& self) {
    const Value& a = self.parents[0];
    const Value& b = self.parents[1];
    if (a->requires_grad)
      for (std::size_t i = 0; i < n; ++i) a->grad[i] += self.grad[2 * i];
    if (b->requires_grad)
      for (std::size_t i = 0; i < n; ++i) b->grad[i] += self.grad[2 * i + 1];
  });
}

/// View of x with a new shape; data and gradient buffers are shared, so the
/// backward pass needs no copy.
inline Value reshape(const Value& x, std::vector<std::size_t> shape) {
  auto n = std::make_shared<Node>();
  n->data = x->data.reshaped(shape);
  n->requires_grad = x->requires_grad;
  if (x->requires_grad) n->grad = x->grad.reshaped(std::move(shape));
  n->parents = {x};
  return n;
}

/// Centered moving average with window k (odd) along the last dimension,
/// padding by edge replication. Rows are treated independently.
inline Value moving_average(const Value& x, std::size_t k) {
  if (k == 0 || k % 2 == 0) {
    throw std::invalid_argument("moving_average: window must be odd and positive");
  }
  const std::size_t rows = x->data.rows();
  const std::size_t len = x->data.cols();
  const std::ptrdiff_t h = static_cast<std::ptrdiff_t>(k / 2);
  const auto clamp_idx = [len](std::ptrdiff_t s) {
    if (s < 0) return std::size_t{0};
    if (s >= static_cast<std::ptrdiff_t>(len)) return len - 1;
    return static_cast<std::size_t>(s);
  };
  Tensor y(x->data.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x->data.data() + r * len;
    double* yr = y.data() + r * len;
    for (std::size_t t = 0; t < len; ++t) {
      double acc = 0.0;
      for (std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t) - h;
           s <= static_cast<std::ptrdiff_t>(t) + h; ++s) {
        acc += xr[clamp_idx(s)];
      }
      yr[t] = acc / static_cast<double>(k);
    }
  }
  return detail::make_op(std::move(y), {x}, [rows, len, h, k, clamp_idx](Node& self) {
    const Value& x = self.parents[0];
    if (!x->requires_grad) return;
    const double inv = 1.0 / static_cast<double>(k);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* gr = self.grad.data() + r * len;
      double* gx = x->grad.data() + r * len;
      for (std::size_t t = 0; t < len; ++t) {
        const double gv = gr[t] * inv;
        if (gv == 0.0) continue;
        for (std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t) - h;
             s <= static_cast<std::ptrdiff_t>(t) + h; ++s) {
          gx[clamp_idx(s)] += gv;
        }
      }
    }
  });
}

inline Value sigmoid(const Value& x) {
  Tensor y(x->data.shape());
  const std::size_t n = y.numel();
  for (std::size_t i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x->data[i]));
  Tensor ycopy = y;  // shares buffer; backward reads forward output
  return detail::make_op(std::move(y), {x}, [n, ycopy](Node& self) {
    const Value& x = self.parents[0];
    if (!x->requires_grad) return;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = ycopy[i];
      x->grad[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

/// Identity forward; blocks all gradient flow into x.
inline Value stopgrad(const Value& x) {
  auto n = std::make_shared<Node>();
  n->data = x->data;  // shared buffer, forward identity
  n->requires_grad = false;
  return n;
}

/// Per-row cosine similarity of a and b, both [m x d] -> [m]. Rows whose norm
/// falls below 1e-12 yield similarity 0 with zero gradient.
inline Value cosine_rows(const Value& a, const Value& b) {
  if (!a->data.same_shape(b->data)) detail::shape_error("cosine_rows", a->data, b->data);
  const std::size_t m = a->data.rows();
  const std::size_t d = a->data.cols();
  constexpr double kEps = 1e-12;
  Tensor y({m});
  for (std::size_t r = 0; r < m; ++r) {
    const double* ar = a->data.data() + r * d;
    const double* br = b->data.data() + r * d;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dot += ar[j] * br[j];
      na += ar[j] * ar[j];
      nb += br[j] * br[j];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    y[r] = (na < kEps || nb < kEps) ? 0.0 : dot / (na * nb);
  }
  return detail::make_op(std::move(y), {a, b}, [m, d](Node& self) {
    const Value& a = self.parents[0];
    const Value& b = self.parents[1];
    for (std::size_t r = 0; r < m; ++r) {
      const double g = self.grad[r];
      if (g == 0.0) continue;
      const double* ar = a->data.data() + r * d;
      const double* br = b->data.data() + r * d;
      double dot = 0.0, na2 = 0.0, nb2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        dot += ar[j] * br[j];
        na2 += ar[j] * ar[j];
        nb2 += br[j] * br[j];
      }
      const double na = std::sqrt(na2);
      const double nb = std::sqrt(nb2);
      if (na < 1e-12 || nb < 1e-12) continue;
      const double inv = 1.0 / (na * nb);
      const double c = dot * inv;
      if (a->requires_grad) {
        double* ga = a->grad.data() + r * d;
        for (std::size_t j = 0; j < d; ++j) ga[j] += g * (br[j] * inv - c * ar[j] / na2);
      }
      if (b->requires_grad) {
        double* gb = b->grad.data() + r * d;
        for (std::size_t j = 0; j < d; ++j) gb[j] += g * (ar[j] * inv - c * br[j] / nb2);
      }
    }
  });
}

/// Mean over all elements -> scalar.
inline Value mean(const Value& x) {
  const std::size_t n = x->data.numel();
  if (n == 0) throw std::invalid_argument("mean: empty tensor");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x->data[i];
  return detail::make_op(Tensor::scalar(acc / static_cast<double>(n)), {x}, [n](Node& self) {
    const Value& x = self.parents[0];
    if (!x->requires_grad) return;
    const double g = self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) x->grad[i] += g;
  });
}

/// Mean squared error between same-shape tensors -> scalar.
inline Value mse(const Value& a, const Value& b) {
  if (!a->data.same_shape(b->data)) detail::shape_error("mse", a->data, b->data);
  const std::size_t n = a->data.numel();
  if (n == 0) throw std::invalid_argument("mse: empty tensor");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a->data[i] - b->data[i];
    acc += d * d;
  }
  return detail::make_op(Tensor::scalar(acc / static_cast<double>(n)), {a, b}, [n](Node& self) {
    const Value& a = self.parents[0];
    const Value& b = self.parents[1];
    const double g = 2.0 * self.grad[0] / static_cast<double>(n);
    if (a->requires_grad)
      for (std::size_t i = 0; i < n; ++i) a->grad[i] += g * (a->data[i] - b->data[i]);
    if (b->requires_grad)
      for (std::size_t i = 0; i < n; ++i) b->grad[i] -= g * (a->data[i] - b->data[i]);
  });
}

inline Value scale(const Value& x, double s) {
  Tensor y(x->data.shape());
  const std::size_t n = y.numel();
  for (std::size_t i = 0; i < n; ++i) y[i] = s * x->data[i];
  return detail::make_op(std::move(y), {x}, [n, s](Node& self) {
    const Value& x = self.parents[0];
    if (!x->requires_grad) return;
    for (std::size_t i = 0; i < n; ++i) x->grad[i] += s * self.grad[i];
  });
}

/// Mean of a list of scalars -> scalar.
inline Value mean_of(std::vector<Value> scalars) {
  if (scalars.empty()) throw std::invalid_argument("mean_of: empty list");
  double acc = 0.0;
  for (const auto& v : scalars) {
    if (v->data.numel() != 1) throw std::invalid_argument("mean_of: non-scalar input");
    acc += v->data[0];
  }
  const std::size_t n = scalars.size();
  return detail::make_op(Tensor::scalar(acc / static_cast<double>(n)), std::move(scalars),
                         [n](Node& self) {
                           const double g = self.grad[0] / static_cast<double>(n);
                           for (auto& p : self.parents)
                             if (p->requires_grad) p->grad[0] += g;
                         });
}

/// Reverse-mode sweep from a scalar root. Fills grad for every reachable node
/// with requires_grad; gradients accumulate on top of existing values.
inline void backward(const Value& root) {
  if (root->data.numel() != 1) {
    throw std::invalid_argument("backward: root must be a scalar");
  }
  if (!root->requires_grad) return;

  // Iterative post-order topological sort.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* parent = node->parents[idx].get();
      ++idx;
      if (parent->requires_grad && !seen.count(parent)) {
        seen.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

}  // namespace rca::ad
