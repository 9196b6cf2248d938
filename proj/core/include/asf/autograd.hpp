#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "asf/rng.hpp"
#include "asf/tensor.hpp"

namespace asf {

// Reverse-mode autodiff over Tensor<T>. Each op returns a new node holding
// its value plus a closure that maps the node's output gradient onto its
// parents. backward() replays the recorded chain in reverse topological
// order. Gradients accumulate (add, never overwrite); call zero_grad
// between steps.
template <typename T>
class Node {
 public:
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  bool has_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Tensor<T>& gout)> backprop;

  void accumulate(const Tensor<T>& g) {
    if (!requires_grad) return;
    if (!has_grad) {
      grad = Tensor<T>(value.shape());
      has_grad = true;
    }
    T* gd = grad.raw();
    const T* s = g.raw();
    for (std::size_t i = 0; i < grad.size(); ++i) gd[i] += s[i];
  }

  void zero_grad() {
    has_grad = false;
    if (grad.size()) std::fill(grad.data().begin(), grad.data().end(), T(0));
  }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  return n;
}

template <typename T>
Var<T> leaf(Tensor<T> value, bool requires_grad = true) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

namespace detail {

template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  n->value.check_finite("op result");
  return n;
}

}  // namespace detail

// --- matmul -----------------------------------------------------------

// `exact` selects order-invariant correctly-rounded inner sums; used where
// the summation axis may be permuted between runs that must agree bitwise.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool exact = false) {
  const auto& av = a->value;
  const auto& bv = b->value;
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
    throw DimensionError("matmul shape mismatch: " + shape_str(av.shape()) +
                         " vs " + shape_str(bv.shape()));
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<T> c({m, n});
  if (exact) {
    static thread_local std::vector<double> prods;
    prods.resize(k);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t p = 0; p < k; ++p)
          prods[p] = static_cast<double>(av.at(i, p)) * static_cast<double>(bv.at(p, j));
        c.at(i, j) = static_cast<T>(exact_sum(prods.data(), k));
      }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      T* crow = c.raw() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const T aip = av.at(i, p);
        const T* brow = bv.raw() + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    }
  }
  auto out = detail::make_result(std::move(c), {a, b});
  if (out->requires_grad) {
    Node<T>* an = a.get();
    Node<T>* bn = b.get();
    out->backprop = [an, bn, m, k, n](const Tensor<T>& g) {
      if (an->requires_grad) {
        Tensor<T> ga({m, k});
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const T gij = g.at(i, j);
            for (std::size_t p = 0; p < k; ++p)
              ga.at(i, p) += gij * bn->value.at(p, j);
          }
        an->accumulate(ga);
      }
      if (bn->requires_grad) {
        Tensor<T> gb({k, n});
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const T aip = an->value.at(i, p);
            const T* grow = g.raw() + i * n;
            T* gbrow = gb.raw() + p * n;
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
          }
        bn->accumulate(gb);
      }
    };
  }
  return out;
}

// --- transpose (2-D) --------------------------------------------------

template <typename T>
Var<T> transpose(const Var<T>& a) {
  const auto& av = a->value;
  if (av.rank() != 2)
    throw DimensionError("transpose expects rank 2, got " + shape_str(av.shape()));
  const std::size_t m = av.dim(0), n = av.dim(1);
  Tensor<T> c({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c.at(j, i) = av.at(i, j);
  auto out = detail::make_result(std::move(c), {a});
  if (out->requires_grad) {
    Node<T>* an = a.get();
    out->backprop = [an, m, n](const Tensor<T>& g) {
      Tensor<T> ga({m, n});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga.at(i, j) = g.at(j, i);
      an->accumulate(ga);
    };
  }
  return out;
}

// --- elementwise ------------------------------------------------------

enum class EwKind { Add, Sub, Mul };

template <typename T>
Var<T> elementwise(const Var<T>& a, const Var<T>& b, EwKind kind) {
  if (!a->value.same_shape(b->value))
    throw DimensionError("elementwise shape mismatch: " + shape_str(a->value.shape()) +
                         " vs " + shape_str(b->value.shape()));
  Tensor<T> c(a->value.shape());
  const T* ad = a->value.raw();
  const T* bd = b->value.raw();
  T* cd = c.raw();
  for (std::size_t i = 0; i < c.size(); ++i) {
    switch (kind) {
      case EwKind::Add: cd[i] = ad[i] + bd[i]; break;
      case EwKind::Sub: cd[i] = ad[i] - bd[i]; break;
      case EwKind::Mul: cd[i] = ad[i] * bd[i]; break;
    }
  }
  auto out = detail::make_result(std::move(c), {a, b});
  if (out->requires_grad) {
    Node<T>* an = a.get();
    Node<T>* bn = b.get();
    out->backprop = [an, bn, kind](const Tensor<T>& g) {
      if (an->requires_grad) {
        if (kind == EwKind::Mul) {
          Tensor<T> ga(g.shape());
          for (std::size_t i = 0; i < g.size(); ++i)
            ga[i] = g[i] * bn->value[i];
          an->accumulate(ga);
        } else {
          an->accumulate(g);
        }
      }
      if (bn->requires_grad) {
        Tensor<T> gb(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (kind) {
            case EwKind::Add: gb[i] = g[i]; break;
            case EwKind::Sub: gb[i] = -g[i]; break;
            case EwKind::Mul: gb[i] = g[i] * an->value[i]; break;
          }
        }
        bn->accumulate(gb);
      }
    };
  }
  return out;
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) { return elementwise(a, b, EwKind::Add); }
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) { return elementwise(a, b, EwKind::Sub); }
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) { return elementwise(a, b, EwKind::Mul); }

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> c(a->value.shape());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = a->value[i] * s;
  auto out = detail::make_result(std::move(c), {a});
  if (out->requires_grad) {
    Node<T>* an = a.get();
    out->backprop = [an, s](const Tensor<T>& g) {
      Tensor<T> ga(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * s;
      an->accumulate(ga);
    };
  }
  return out;
}

// --- concat / slice ---------------------------------------------------

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& s0 = parts[0]->value.shape();
  if (axis >= s0.size())
    throw DimensionError("concat axis " + std::to_string(axis) + " out of range for " +
                         shape_str(s0));
  Shape out_shape = s0;
  std::size_t axis_total = 0;
  for (const auto& p : parts) {
    const Shape& s = p->value.shape();
    if (s.size() != s0.size())
      throw DimensionError("concat rank mismatch: " + shape_str(s0) + " vs " + shape_str(s));
    for (std::size_t d = 0; d < s.size(); ++d)
      if (d != axis && s[d] != s0[d])
        throw DimensionError("concat shape mismatch: " + shape_str(s0) + " vs " + shape_str(s));
    axis_total += s[axis];
  }
  out_shape[axis] = axis_total;

  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s0[d];
  for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];

  Tensor<T> c(out_shape);
  std::size_t offset = 0;  // along axis, in units of inner
  std::vector<std::size_t> part_offsets(parts.size());
  std::vector<std::size_t> part_axis(parts.size());
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto& pv = parts[pi]->value;
    const std::size_t pa = pv.dim(axis);
    part_offsets[pi] = offset;
    part_axis[pi] = pa;
    for (std::size_t o = 0; o < outer; ++o) {
      const T* src = pv.raw() + o * pa * inner;
      T* dst = c.raw() + (o * axis_total + offset) * inner;
      std::copy(src, src + pa * inner, dst);
    }
    offset += pa;
  }
  auto out = detail::make_result(std::move(c), parts);
  if (out->requires_grad) {
    std::vector<Node<T>*> pnodes;
    pnodes.reserve(parts.size());
    for (const auto& p : parts) pnodes.push_back(p.get());
    out->backprop = [pnodes, part_offsets, part_axis, outer, inner,
                     axis_total](const Tensor<T>& g) {
      for (std::size_t pi = 0; pi < pnodes.size(); ++pi) {
        if (!pnodes[pi]->requires_grad) continue;
        Tensor<T> gp(pnodes[pi]->value.shape());
        const std::size_t pa = part_axis[pi];
        for (std::size_t o = 0; o < outer; ++o) {
          const T* src = g.raw() + (o * axis_total + part_offsets[pi]) * inner;
          std::copy(src, src + pa * inner, gp.raw() + o * pa * inner);
        }
        pnodes[pi]->accumulate(gp);
      }
    };
  }
  return out;
}

// Contiguous range [start, start+len) along `axis`.
template <typename T>
Var<T> slice(const Var<T>& a, std::size_t axis, std::size_t start, std::size_t len) {
  const Shape& s = a->value.shape();
  if (axis >= s.size())
    throw DimensionError("slice axis " + std::to_string(axis) + " out of range for " +
                         shape_str(s));
  if (len == 0 || start + len > s[axis])
    throw DimensionError("slice [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") out of range for axis " +
                         std::to_string(axis) + " of " + shape_str(s));
  Shape out_shape = s;
  out_shape[axis] = len;
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t axis_len = s[axis];

  Tensor<T> c(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    const T* src = a->value.raw() + (o * axis_len + start) * inner;
    std::copy(src, src + len * inner, c.raw() + o * len * inner);
  }
  auto out = detail::make_result(std::move(c), {a});
  if (out->requires_grad) {
    Node<T>* an = a.get();
    out->backprop = [an, outer, inner, axis_len, start, len](const Tensor<T>& g) {
      Tensor<T> ga(an->value.shape());
      for (std::size_t o = 0; o < outer; ++o) {
        const T* src = g.raw() + o * len * inner;
        std::copy(src, src + len * inner, ga.raw() + (o * axis_len + start) * inner);
      }
      an->accumulate(ga);
    };
  }
  return out;
}

// --- softmax / sigmoid ------------------------------------------------

template <typename T>
Var<T> softmax(const Var<T>& a, std::size_t axis) {
  const Shape& s = a->value.shape();
  if (axis >= s.size())
    throw DimensionError("softmax axis " + std::to_string(axis) + " out of range for " +
                         shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t L = s[axis];

  Tensor<T> c(s);
  static thread_local std::vector<double> buf;
  buf.resize(L);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = (o * L) * inner + in;
      T mx = a->value[base];
      for (std::size_t i = 1; i < L; ++i)
        mx = std::max(mx, a->value[base + i * inner]);
      for (std::size_t i = 0; i < L; ++i) {
        c[base + i * inner] = std::exp(a->value[base + i * inner] - mx);
        buf[i] = static_cast<double>(c[base + i * inner]);
      }
      // exact row sum keeps the result invariant to permutations of the axis
      const T denom = static_cast<T>(exact_sum(buf.data(), L));
      for (std::size_t i = 0; i < L; ++i) c[base + i * inner] /= denom;
    }
  auto out = detail::make_result(std::move(c), {a});
  if (out->requires_grad) {
    Node<T>* an = a.get();
    Node<T>* on = out.get();
    out->backprop = [an, on, outer, inner, L](const Tensor<T>& g) {
      Tensor<T> ga(an->value.shape());
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = (o * L) * inner + in;
          T dot = 0;
          for (std::size_t i = 0; i < L; ++i)
            dot += g[base + i * inner] * on->value[base + i * inner];
          for (std::size_t i = 0; i < L; ++i)
            ga[base + i * inner] =
                on->value[base + i * inner] * (g[base + i * inner] - dot);
        }
      an->accumulate(ga);
    };
  }
  return out;
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> c(a->value.shape());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const T x = a->value[i];
    c[i] = x >= 0 ? T(1) / (T(1) + std::exp(-x))
                  : std::exp(x) / (T(1) + std::exp(x));
  }
  auto out = detail::make_result(std::move(c), {a});
  if (out->requires_grad) {
    Node<T>* an = a.get();
    Node<T>* on = out.get();
    out->backprop = [an, on](const Tensor<T>& g) {
      Tensor<T> ga(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T y = on->value[i];
        ga[i] = g[i] * y * (T(1) - y);
      }
      an->accumulate(ga);
    };
  }
  return out;
}

// --- reductions -------------------------------------------------------

// Sums along `axis`, dropping it; reducing a rank-1 tensor yields shape [1].
template <typename T>
Var<T> reduce_sum(const Var<T>& a, std::size_t axis) {
  const Shape& s = a->value.shape();
  if (axis >= s.size())
    throw DimensionError("reduce_sum axis " + std::to_string(axis) +
                         " out of range for " + shape_str(s));
  Shape out_shape;
  for (std::size_t d = 0; d < s.size(); ++d)
    if (d != axis) out_shape.push_back(s[d]);
  if (out_shape.empty()) out_shape.push_back(1);
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t L = s[axis];

  Tensor<T> c(out_shape);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      T acc = 0;
      const std::size_t base = (o * L) * inner + in;
      for (std::size_t i = 0; i < L; ++i) acc += a->value[base + i * inner];
      c[o * inner + in] = acc;
    }
  auto out = detail::make_result(std::move(c), {a});
  if (out->requires_grad) {
    Node<T>* an = a.get();
    out->backprop = [an, outer, inner, L](const Tensor<T>& g) {
      Tensor<T> ga(an->value.shape());
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          const T gv = g[o * inner + in];
          const std::size_t base = (o * L) * inner + in;
          for (std::size_t i = 0; i < L; ++i) ga[base + i * inner] = gv;
        }
      an->accumulate(ga);
    };
  }
  return out;
}

template <typename T>
Var<T> sum_all(const Var<T>& a) {
  T acc = 0;
  for (std::size_t i = 0; i < a->value.size(); ++i) acc += a->value[i];
  auto out = detail::make_result(Tensor<T>::scalar(acc), {a});
  if (out->requires_grad) {
    Node<T>* an = a.get();
    out->backprop = [an](const Tensor<T>& g) {
      an->accumulate(Tensor<T>::full(an->value.shape(), g[0]));
    };
  }
  return out;
}

// --- backward ---------------------------------------------------------

template <typename T>
void backward(const Var<T>& loss) {
  if (loss->value.size() != 1)
    throw ContractError("backward requires a scalar loss, got " +
                        shape_str(loss->value.shape()));
  // iterative DFS topological sort
  std::vector<Node<T>*> topo;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<T>* p = node->parents[idx++].get();
      if (!visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }
  // topo is child-after-parent reversed: nodes were pushed post-order, so
  // iterate from the back (loss first)
  loss->accumulate(Tensor<T>::scalar(T(1)));
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backprop && n->has_grad && n->requires_grad) n->backprop(n->grad);
  }
  // intermediate grads are per-pass scratch; only leaves keep accumulating
  for (Node<T>* n : topo)
    if (!n->parents.empty()) n->zero_grad();
}

template <typename T>
void zero_grad(const std::vector<Var<T>>& params) {
  for (const auto& p : params) p->zero_grad();
}

// --- gradient checking ------------------------------------------------

// Central finite differences against the autodiff gradient; returns the max
// over coordinates of |a - n| / max(|a|, |n|, 1e-12). Run at 64-bit.
template <typename F>
double grad_check(F&& f, const std::vector<Var<double>>& params, double eps) {
  if (eps <= 0) throw ContractError("grad_check: epsilon must be positive");
  zero_grad(params);
  Var<double> loss = f();
  if (!std::isfinite(loss->value[0]))
    throw NumericError("grad_check: non-finite objective");
  backward(loss);
  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params)
    analytic.push_back(p->has_grad ? p->grad : Tensor<double>(p->value.shape()));

  double max_err = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& val = params[pi]->value;
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double orig = val[i];
      val[i] = orig + eps;
      const double fp = f()->value[0];
      val[i] = orig - eps;
      const double fm = f()->value[0];
      val[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("grad_check: non-finite objective under perturbation");
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[pi][i];
      const double err =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-12});
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace asf
