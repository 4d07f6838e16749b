#pragma once

// Reverse-mode autodiff over dense double tensors.
//
// Every op pins its reduction order (documented per op) so results are
// reproducible bit-for-bit across runs and thread counts: parallel loops only
// ever split across independent output elements, never across a reduction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "fteasd/common.hpp"

namespace fteasd {

class TensorNode;
using Tensor = std::shared_ptr<TensorNode>;

inline long long numel_of(const std::vector<long long>& shape) {
  long long n = 1;
  for (long long d : shape) {
    if (d <= 0) throw shape_error("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

inline std::string shape_str(const std::vector<long long>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

class TensorNode {
 public:
  std::vector<long long> shape;
  std::vector<double> data;
  // Persistent gradient. Leaves accumulate across backward() calls; non-leaf
  // nodes are overwritten by each call.
  std::vector<double> grad;
  std::vector<Tensor> parents;
  std::function<void(TensorNode&)> backward_fn;
  bool requires_grad = false;

  // Per-backward-pass gradient staging. Leaves fold this into `grad` at the
  // end of the pass, which makes a repeated backward() on the same graph add
  // an identical increment (x + x is exact, so grads double exactly).
  std::vector<double> pass_grad;

  bool is_leaf() const { return parents.empty(); }
  long long numel() const { return static_cast<long long>(data.size()); }
  long long dim(std::size_t i) const {
    if (i >= shape.size()) throw shape_error("dim index out of range for " + shape_str(shape));
    return shape[i];
  }
  double value() const {
    if (data.size() != 1) throw shape_error("value() requires a scalar, got " + shape_str(shape));
    return data[0];
  }
};

inline Tensor make_leaf(std::vector<long long> shape, std::vector<double> data,
                        bool requires_grad = false) {
  long long n = numel_of(shape);
  if (static_cast<long long>(data.size()) != n)
    throw shape_error("data size " + std::to_string(data.size()) + " does not match shape " +
                      shape_str(shape));
  auto t = std::make_shared<TensorNode>();
  t->shape = std::move(shape);
  t->data = std::move(data);
  t->grad.assign(static_cast<std::size_t>(n), 0.0);
  t->requires_grad = requires_grad;
  return t;
}

inline Tensor zeros(std::vector<long long> shape, bool requires_grad = false) {
  long long n = numel_of(shape);
  return make_leaf(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0),
                   requires_grad);
}

inline Tensor full(std::vector<long long> shape, double v, bool requires_grad = false) {
  long long n = numel_of(shape);
  return make_leaf(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), v),
                   requires_grad);
}

namespace detail {

inline bool any_requires_grad(const std::vector<Tensor>& parents) {
  for (const auto& p : parents)
    if (p && p->requires_grad) return true;
  return false;
}

// Builds an op node. When no parent needs gradients the node is emitted as a
// constant leaf, which prunes the graph during inference. Committed values
// must be finite; a NaN/Inf here means an upstream numerical bug, surfaced
// immediately rather than corrupting training.
inline Tensor make_op(std::vector<long long> shape, std::vector<double> data,
                      std::vector<Tensor> parents,
                      std::function<void(TensorNode&)> backward_fn) {
  if (!all_finite(data)) throw numeric_error("operation produced a non-finite value");
  Tensor t = make_leaf(std::move(shape), std::move(data), false);
  if (any_requires_grad(parents)) {
    t->parents = std::move(parents);
    t->backward_fn = std::move(backward_fn);
    t->requires_grad = true;
  }
  return t;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a->shape != b->shape)
    throw shape_error(std::string(op) + ": shape mismatch " + shape_str(a->shape) + " vs " +
                      shape_str(b->shape));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

// Runs reverse-mode accumulation from `out`. `seed` defaults to all-ones (a
// scalar loss then gets the usual dL/dL = 1) and a null seed requires a scalar
// output. Non-leaf grads are reset to this pass's value; leaf grads accumulate
// across calls.
inline void backward(const Tensor& out, const std::vector<double>* seed = nullptr) {
  if (!out) throw argument_error("backward: null tensor");
  if (out->is_leaf())
    throw state_error("backward: tensor has no recorded computation behind it");
  if (!seed && out->numel() != 1)
    throw argument_error("backward: loss must be a scalar, got " + shape_str(out->shape));

  // Iterative post-order DFS over grad-requiring nodes.
  std::vector<TensorNode*> topo;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack;
  stack.push_back({out.get(), 0});
  visited.insert(out.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode* p = node->parents[idx].get();
      ++idx;
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  for (TensorNode* n : topo) n->pass_grad.assign(n->data.size(), 0.0);
  if (seed) {
    if (seed->size() != out->data.size())
      throw shape_error("backward: seed size does not match output");
    out->pass_grad = *seed;
  } else {
    out->pass_grad.assign(out->data.size(), 1.0);
  }

  // topo is post-order, so reverse iteration visits each node before its
  // parents' other consumers have all run — children first.
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }

  for (TensorNode* n : topo) {
    if (n->is_leaf()) {
      for (std::size_t i = 0; i < n->grad.size(); ++i) n->grad[i] += n->pass_grad[i];
    } else {
      n->grad = n->pass_grad;
    }
    n->pass_grad.clear();
    n->pass_grad.shrink_to_fit();
  }
}

inline void zero_grad(const std::vector<Tensor>& params) {
  for (const auto& p : params) p->grad.assign(p->grad.size(), 0.0);
}

// ---------------------------------------------------------------------------
// Elementwise / simple ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> y(a->data.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a->data[i] + b->data[i];
  return detail::make_op(a->shape, std::move(y), {a, b}, [](TensorNode& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad)
      for (std::size_t i = 0; i < self.pass_grad.size(); ++i)
        pa->pass_grad[i] += self.pass_grad[i];
    if (pb->requires_grad)
      for (std::size_t i = 0; i < self.pass_grad.size(); ++i)
        pb->pass_grad[i] += self.pass_grad[i];
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> y(a->data.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a->data[i] - b->data[i];
  return detail::make_op(a->shape, std::move(y), {a, b}, [](TensorNode& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad)
      for (std::size_t i = 0; i < self.pass_grad.size(); ++i)
        pa->pass_grad[i] += self.pass_grad[i];
    if (pb->requires_grad)
      for (std::size_t i = 0; i < self.pass_grad.size(); ++i)
        pb->pass_grad[i] -= self.pass_grad[i];
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> y(a->data.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a->data[i] * b->data[i];
  return detail::make_op(a->shape, std::move(y), {a, b}, [](TensorNode& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad)
      for (std::size_t i = 0; i < self.pass_grad.size(); ++i)
        pa->pass_grad[i] += self.pass_grad[i] * pb->data[i];
    if (pb->requires_grad)
      for (std::size_t i = 0; i < self.pass_grad.size(); ++i)
        pb->pass_grad[i] += self.pass_grad[i] * pa->data[i];
  });
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> y(a->data.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a->data[i] * s;
  return detail::make_op(a->shape, std::move(y), {a}, [s](TensorNode& self) {
    auto& ga = self.parents[0]->pass_grad;
    for (std::size_t i = 0; i < self.pass_grad.size(); ++i) ga[i] += self.pass_grad[i] * s;
  });
}

inline Tensor relu(const Tensor& a) {
  std::vector<double> y(a->data.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a->data[i] > 0.0 ? a->data[i] : 0.0;
  return detail::make_op(a->shape, std::move(y), {a}, [](TensorNode& self) {
    auto& pa = self.parents[0];
    for (std::size_t i = 0; i < self.pass_grad.size(); ++i)
      if (pa->data[i] > 0.0) pa->pass_grad[i] += self.pass_grad[i];
  });
}

inline Tensor sigmoid(const Tensor& a) {
  std::vector<double> y(a->data.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-a->data[i]));
  Tensor t = detail::make_op(a->shape, std::move(y), {a}, nullptr);
  if (t->requires_grad) {
    t->backward_fn = [](TensorNode& self) {
      auto& ga = self.parents[0]->pass_grad;
      for (std::size_t i = 0; i < self.pass_grad.size(); ++i) {
        double s = self.data[i];
        ga[i] += self.pass_grad[i] * s * (1.0 - s);
      }
    };
  }
  return t;
}

inline Tensor reshape(const Tensor& a, std::vector<long long> new_shape) {
  if (numel_of(new_shape) != a->numel())
    throw shape_error("reshape: element count mismatch " + shape_str(a->shape) + " -> " +
                      shape_str(new_shape));
  return detail::make_op(std::move(new_shape), a->data, {a}, [](TensorNode& self) {
    auto& ga = self.parents[0]->pass_grad;
    for (std::size_t i = 0; i < self.pass_grad.size(); ++i) ga[i] += self.pass_grad[i];
  });
}

// Sum of all elements, ascending index order.
inline Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a->data) s += v;
  return detail::make_op({1}, {s}, {a}, [](TensorNode& self) {
    auto& ga = self.parents[0]->pass_grad;
    double g = self.pass_grad[0];
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

inline Tensor mean_all(const Tensor& a) { return scale(sum_all(a), 1.0 / a->numel()); }

// Rows of `a` followed by rows of `b`, column-wise concatenation per row.
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[0] != b->shape[0])
    throw shape_error("concat_cols: need [B,d1] and [B,d2], got " + shape_str(a->shape) +
                      " and " + shape_str(b->shape));
  long long B = a->shape[0], d1 = a->shape[1], d2 = b->shape[1];
  std::vector<double> y(static_cast<std::size_t>(B * (d1 + d2)));
  for (long long i = 0; i < B; ++i) {
    for (long long j = 0; j < d1; ++j) y[i * (d1 + d2) + j] = a->data[i * d1 + j];
    for (long long j = 0; j < d2; ++j) y[i * (d1 + d2) + d1 + j] = b->data[i * d2 + j];
  }
  return detail::make_op({B, d1 + d2}, std::move(y), {a, b}, [B, d1, d2](TensorNode& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    for (long long i = 0; i < B; ++i) {
      if (pa->requires_grad)
        for (long long j = 0; j < d1; ++j)
          pa->pass_grad[i * d1 + j] += self.pass_grad[i * (d1 + d2) + j];
      if (pb->requires_grad)
        for (long long j = 0; j < d2; ++j)
          pb->pass_grad[i * d2 + j] += self.pass_grad[i * (d1 + d2) + d1 + j];
    }
  });
}

// ---------------------------------------------------------------------------
// Dense / matmul
// ---------------------------------------------------------------------------

// y[i,e] = bias[e] + sum_d x[i,d] * w[d,e], the d-sum in ascending order.
// Weight layout is [in, out]. `bias` may be null. The inner loop runs over e
// for a fixed d, which keeps every output's summation order identical to the
// naive two-loop dot product while exposing independent accumulators.
inline Tensor affine(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (x->shape.size() != 2 || w->shape.size() != 2)
    throw shape_error("affine: need 2-d x and w, got " + shape_str(x->shape) + " and " +
                      shape_str(w->shape));
  long long B = x->shape[0], in = x->shape[1], out = w->shape[1];
  if (w->shape[0] != in)
    throw shape_error("affine: weight " + shape_str(w->shape) + " incompatible with input " +
                      shape_str(x->shape));
  if (bias && (bias->shape.size() != 1 || bias->shape[0] != out))
    throw shape_error("affine: bias must be [out], got " + shape_str(bias->shape));

  std::vector<double> y(static_cast<std::size_t>(B * out));
  parallel_for(B, [&](long long lo, long long hi) {
    for (long long i = lo; i < hi; ++i) {
      double* yr = y.data() + i * out;
      if (bias)
        for (long long e = 0; e < out; ++e) yr[e] = bias->data[static_cast<std::size_t>(e)];
      else
        for (long long e = 0; e < out; ++e) yr[e] = 0.0;
      const double* xr = x->data.data() + i * in;
      for (long long d = 0; d < in; ++d) {
        double xv = xr[d];
        const double* wr = w->data.data() + d * out;
        for (long long e = 0; e < out; ++e) yr[e] += xv * wr[e];
      }
    }
  });

  std::vector<Tensor> parents = bias ? std::vector<Tensor>{x, w, bias} : std::vector<Tensor>{x, w};
  return detail::make_op({B, out}, std::move(y), std::move(parents),
                         [B, in, out](TensorNode& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    const auto& g = self.pass_grad;
    // dx[i,d] = sum_e g[i,e] * w[d,e], e ascending — parallel over rows i.
    if (px->requires_grad)
      parallel_for(B, [&](long long lo, long long hi) {
        for (long long i = lo; i < hi; ++i) {
          const double* gr = g.data() + i * out;
          for (long long d = 0; d < in; ++d) {
            const double* wr = pw->data.data() + d * out;
            double acc = 0.0;
            for (long long e = 0; e < out; ++e) acc += gr[e] * wr[e];
            px->pass_grad[static_cast<std::size_t>(i * in + d)] += acc;
          }
        }
      });
    // dw[d,e] = sum_i g[i,e] * x[i,d], i ascending — parallel over d rows.
    if (pw->requires_grad)
      parallel_for(in, [&](long long lo, long long hi) {
        for (long long d = lo; d < hi; ++d) {
          double* gw = pw->pass_grad.data() + d * out;
          for (long long i = 0; i < B; ++i) {
            double xv = px->data[static_cast<std::size_t>(i * in + d)];
            const double* gr = g.data() + i * out;
            for (long long e = 0; e < out; ++e) gw[e] += gr[e] * xv;
          }
        }
      });
    if (self.parents.size() == 3 && self.parents[2]->requires_grad) {
      auto& pb = self.parents[2];
      for (long long i = 0; i < B; ++i) {
        const double* gr = g.data() + i * out;
        for (long long e = 0; e < out; ++e) pb->pass_grad[static_cast<std::size_t>(e)] += gr[e];
      }
    }
  });
}

// C[i,j] = sum_t A[i,t] * B[j,t], t ascending; rows of both operands are the
// vectors being dotted (used for cosine logits against center rows).
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[1])
    throw shape_error("matmul_nt: need [m,k] and [n,k], got " + shape_str(a->shape) + " and " +
                      shape_str(b->shape));
  long long m = a->shape[0], k = a->shape[1], n = b->shape[0];
  std::vector<double> y(static_cast<std::size_t>(m * n));
  for (long long i = 0; i < m; ++i) {
    const double* ar = a->data.data() + i * k;
    for (long long j = 0; j < n; ++j) {
      const double* br = b->data.data() + j * k;
      double acc = 0.0;
      for (long long t = 0; t < k; ++t) acc += ar[t] * br[t];
      y[static_cast<std::size_t>(i * n + j)] = acc;
    }
  }
  return detail::make_op({m, n}, std::move(y), {a, b}, [m, k, n](TensorNode& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    const auto& g = self.pass_grad;
    if (pa->requires_grad)
      for (long long i = 0; i < m; ++i)
        for (long long t = 0; t < k; ++t) {
          double acc = 0.0;
          for (long long j = 0; j < n; ++j)
            acc += g[static_cast<std::size_t>(i * n + j)] *
                   pb->data[static_cast<std::size_t>(j * k + t)];
          pa->pass_grad[static_cast<std::size_t>(i * k + t)] += acc;
        }
    if (pb->requires_grad)
      for (long long j = 0; j < n; ++j)
        for (long long t = 0; t < k; ++t) {
          double acc = 0.0;
          for (long long i = 0; i < m; ++i)
            acc += g[static_cast<std::size_t>(i * n + j)] *
                   pa->data[static_cast<std::size_t>(i * k + t)];
          pb->pass_grad[static_cast<std::size_t>(j * k + t)] += acc;
        }
  });
}

// ---------------------------------------------------------------------------
// Convolution / pooling (NCHW)
// ---------------------------------------------------------------------------

inline long long conv_out_dim(long long in, long long k, long long stride, long long pad) {
  if (stride <= 0) throw argument_error("conv/pool stride must be positive");
  if (in + 2 * pad < k)
    throw shape_error("conv/pool kernel " + std::to_string(k) + " larger than padded extent " +
                      std::to_string(in + 2 * pad));
  return (in + 2 * pad - k) / stride + 1;
}

namespace detail {
// Range of output positions o such that 0 <= o*stride + off < extent.
inline void valid_out_range(long long extent, long long stride, long long off, long long n_out,
                            long long& lo, long long& hi) {
  lo = off < 0 ? (-off + stride - 1) / stride : 0;
  hi = std::min(n_out, off < extent ? (extent - 1 - off) / stride + 1 : 0);
}
}  // namespace detail

// y[b,o,oh,ow] = bias[o] + sum over c (outer), then kh, then kw (innermost)
// of x*w with zero padding — the pinned oracle order. The implementation
// iterates ow inside (c,kh,kw), which leaves each output cell's accumulation
// order unchanged while letting adjacent cells accumulate independently.
// `bias` may be null.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, long long sh,
                     long long sw, long long ph, long long pw_pad) {
  if (x->shape.size() != 4 || w->shape.size() != 4)
    throw shape_error("conv2d: need [B,C,H,W] input and [O,C,kh,kw] weight, got " +
                      shape_str(x->shape) + " and " + shape_str(w->shape));
  if (ph < 0 || pw_pad < 0) throw argument_error("conv2d: padding must be non-negative");
  long long B = x->shape[0], C = x->shape[1], H = x->shape[2], W = x->shape[3];
  long long O = w->shape[0], kh = w->shape[2], kw = w->shape[3];
  if (w->shape[1] != C)
    throw shape_error("conv2d: weight channels " + shape_str(w->shape) +
                      " do not match input " + shape_str(x->shape));
  if (bias && (bias->shape.size() != 1 || bias->shape[0] != O))
    throw shape_error("conv2d: bias must be [O], got " + shape_str(bias->shape));
  long long OH = conv_out_dim(H, kh, sh, ph);
  long long OW = conv_out_dim(W, kw, sw, pw_pad);

  std::vector<double> y(static_cast<std::size_t>(B * O * OH * OW));
  parallel_for(B * O, [&](long long lo_bo, long long hi_bo) {
    for (long long bo = lo_bo; bo < hi_bo; ++bo) {
      long long b = bo / O, o = bo % O;
      for (long long oh = 0; oh < OH; ++oh) {
        double* acc = y.data() + ((b * O + o) * OH + oh) * OW;
        double b0 = bias ? bias->data[static_cast<std::size_t>(o)] : 0.0;
        for (long long ow = 0; ow < OW; ++ow) acc[ow] = b0;
        for (long long c = 0; c < C; ++c)
          for (long long r = 0; r < kh; ++r) {
            long long ih = oh * sh - ph + r;
            if (ih < 0 || ih >= H) continue;
            const double* xrow = x->data.data() + ((b * C + c) * H + ih) * W;
            const double* wrow = w->data.data() + ((o * C + c) * kh + r) * kw;
            for (long long s = 0; s < kw; ++s) {
              double wv = wrow[s];
              long long off = s - pw_pad, lo, hi;
              detail::valid_out_range(W, sw, off, OW, lo, hi);
              const double* xs = xrow + off;
              for (long long ow = lo; ow < hi; ++ow) acc[ow] += xs[ow * sw] * wv;
            }
          }
      }
    }
  });

  std::vector<Tensor> parents = bias ? std::vector<Tensor>{x, w, bias} : std::vector<Tensor>{x, w};
  return detail::make_op(
      {B, O, OH, OW}, std::move(y), std::move(parents),
      [B, C, H, W, O, kh, kw, OH, OW, sh, sw, ph, pw_pad](TensorNode& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        const auto& g = self.pass_grad;
        // dx: each (b,c) slice is owned by one thread; scatter order fixed.
        if (px->requires_grad)
          parallel_for(B * C, [&](long long lo_bc, long long hi_bc) {
            for (long long bc = lo_bc; bc < hi_bc; ++bc) {
              long long b = bc / C, c = bc % C;
              double* gx = px->pass_grad.data() + bc * H * W;
              for (long long o = 0; o < O; ++o)
                for (long long r = 0; r < kh; ++r) {
                  const double* wrow = pw->data.data() + ((o * C + c) * kh + r) * kw;
                  for (long long oh = 0; oh < OH; ++oh) {
                    long long ih = oh * sh - ph + r;
                    if (ih < 0 || ih >= H) continue;
                    const double* grow = g.data() + ((b * O + o) * OH + oh) * OW;
                    double* gxrow = gx + ih * W;
                    for (long long s = 0; s < kw; ++s) {
                      double wv = wrow[s];
                      long long off = s - pw_pad, lo, hi;
                      detail::valid_out_range(W, sw, off, OW, lo, hi);
                      for (long long ow = lo; ow < hi; ++ow) gxrow[ow * sw + off] += grow[ow] * wv;
                    }
                  }
                }
            }
          });
        // dw: each o-slice owned by one thread; per weight the (b,oh,ow) sum
        // runs ascending, with the kw accumulators kept independent.
        if (pw->requires_grad)
          parallel_for(O, [&](long long lo_o, long long hi_o) {
            std::vector<double> acc(static_cast<std::size_t>(kw));
            for (long long o = lo_o; o < hi_o; ++o)
              for (long long c = 0; c < C; ++c)
                for (long long r = 0; r < kh; ++r) {
                  std::fill(acc.begin(), acc.end(), 0.0);
                  for (long long b = 0; b < B; ++b)
                    for (long long oh = 0; oh < OH; ++oh) {
                      long long ih = oh * sh - ph + r;
                      if (ih < 0 || ih >= H) continue;
                      const double* grow = g.data() + ((b * O + o) * OH + oh) * OW;
                      const double* xrow = px->data.data() + ((b * C + c) * H + ih) * W;
                      for (long long ow = 0; ow < OW; ++ow) {
                        double gv = grow[ow];
                        long long base = ow * sw - pw_pad;
                        long long s_lo = base < 0 ? -base : 0;
                        long long s_hi = std::min(kw, W - base);
                        for (long long s = s_lo; s < s_hi; ++s)
                          acc[static_cast<std::size_t>(s)] += gv * xrow[base + s];
                      }
                    }
                  double* gw = pw->pass_grad.data() + ((o * C + c) * kh + r) * kw;
                  for (long long s = 0; s < kw; ++s) gw[s] += acc[static_cast<std::size_t>(s)];
                }
          });
        if (self.parents.size() == 3 && self.parents[2]->requires_grad) {
          auto& pb = self.parents[2];
          for (long long b = 0; b < B; ++b)
            for (long long o = 0; o < O; ++o) {
              const double* grow = g.data() + (b * O + o) * OH * OW;
              double acc = 0.0;
              for (long long i = 0; i < OH * OW; ++i) acc += grow[i];
              pb->pass_grad[static_cast<std::size_t>(o)] += acc;
            }
        }
      });
}

inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, long long stride,
                     long long pad) {
  return conv2d(x, w, bias, stride, stride, pad, pad);
}

// Max pool with implicit -inf padding; ties resolve to the first element in
// (kh, kw) scan order. Gradient routes only to the argmax.
inline Tensor maxpool2d(const Tensor& x, long long kh, long long kw, long long sh, long long sw,
                        long long ph = 0, long long pw_pad = 0) {
  if (x->shape.size() != 4)
    throw shape_error("maxpool2d: need [B,C,H,W], got " + shape_str(x->shape));
  long long B = x->shape[0], C = x->shape[1], H = x->shape[2], W = x->shape[3];
  long long OH = conv_out_dim(H, kh, sh, ph);
  long long OW = conv_out_dim(W, kw, sw, pw_pad);

  std::vector<double> y(static_cast<std::size_t>(B * C * OH * OW));
  auto argmax = std::make_shared<std::vector<long long>>(y.size());
  bool bad_window = false;
  parallel_for(B * C, [&](long long lo, long long hi) {
    for (long long bc = lo; bc < hi; ++bc) {
      const double* xs = x->data.data() + bc * H * W;
      for (long long oh = 0; oh < OH; ++oh)
        for (long long ow = 0; ow < OW; ++ow) {
          double best = -HUGE_VAL;
          long long best_idx = -1;
          for (long long r = 0; r < kh; ++r) {
            long long ih = oh * sh - ph + r;
            if (ih < 0 || ih >= H) continue;
            for (long long s = 0; s < kw; ++s) {
              long long iw = ow * sw - pw_pad + s;
              if (iw < 0 || iw >= W) continue;
              double v = xs[ih * W + iw];
              if (v > best) {
                best = v;
                best_idx = bc * H * W + ih * W + iw;
              }
            }
          }
          if (best_idx < 0) {
            bad_window = true;
            return;
          }
          std::size_t oidx = static_cast<std::size_t>((bc * OH + oh) * OW + ow);
          y[oidx] = best;
          (*argmax)[oidx] = best_idx;
        }
    }
  });
  if (bad_window) throw shape_error("maxpool2d: a window contains no valid elements");

  return detail::make_op({B, C, OH, OW}, std::move(y), {x}, [argmax](TensorNode& self) {
    auto& gx = self.parents[0]->pass_grad;
    for (std::size_t i = 0; i < self.pass_grad.size(); ++i)
      gx[static_cast<std::size_t>((*argmax)[i])] += self.pass_grad[i];
  });
}

inline Tensor maxpool2d(const Tensor& x, long long k, long long stride) {
  return maxpool2d(x, k, k, stride, stride, 0, 0);
}

// Max over the full spatial extent: [B,C,H,W] -> [B,C]. Ties resolve to the
// first element in row-major (h, w) order.
inline Tensor global_max_pool(const Tensor& x) {
  if (x->shape.size() != 4)
    throw shape_error("global_max_pool: need [B,C,H,W], got " + shape_str(x->shape));
  long long B = x->shape[0], C = x->shape[1], HW = x->shape[2] * x->shape[3];
  std::vector<double> y(static_cast<std::size_t>(B * C));
  auto argmax = std::make_shared<std::vector<long long>>(y.size());
  for (long long bc = 0; bc < B * C; ++bc) {
    const double* xs = x->data.data() + bc * HW;
    double best = xs[0];
    long long bi = 0;
    for (long long i = 1; i < HW; ++i)
      if (xs[i] > best) {
        best = xs[i];
        bi = i;
      }
    y[static_cast<std::size_t>(bc)] = best;
    (*argmax)[static_cast<std::size_t>(bc)] = bc * HW + bi;
  }
  return detail::make_op({B, C}, std::move(y), {x}, [argmax](TensorNode& self) {
    auto& gx = self.parents[0]->pass_grad;
    for (std::size_t i = 0; i < self.pass_grad.size(); ++i)
      gx[static_cast<std::size_t>((*argmax)[i])] += self.pass_grad[i];
  });
}

// ---------------------------------------------------------------------------
// Batch normalization (NCHW, per-channel)
// ---------------------------------------------------------------------------

// PyTorch semantics: normalization uses the biased batch variance; running
// statistics blend in the unbiased variance with the given momentum. Running
// buffers live outside the graph and are updated in-place during training
// forward passes.
inline Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                           std::vector<double>* running_mean, std::vector<double>* running_var,
                           bool training, double momentum = 0.1, double eps = 1e-5) {
  if (x->shape.size() != 4)
    throw shape_error("batch_norm2d: need [B,C,H,W], got " + shape_str(x->shape));
  long long B = x->shape[0], C = x->shape[1], H = x->shape[2], W = x->shape[3];
  if (gamma->numel() != C || beta->numel() != C)
    throw shape_error("batch_norm2d: gamma/beta must have C elements");
  if (!running_mean || !running_var || static_cast<long long>(running_mean->size()) != C ||
      static_cast<long long>(running_var->size()) != C)
    throw argument_error("batch_norm2d: running stats must be provided with C elements");
  const long long n = B * H * W;
  const long long HW = H * W;

  auto mean = std::make_shared<std::vector<double>>(static_cast<std::size_t>(C));
  auto var = std::make_shared<std::vector<double>>(static_cast<std::size_t>(C));
  if (training) {
    if (n < 2) throw state_error("batch_norm2d: training needs more than one value per channel");
    // Batch stats, b (outer), h, w (inner) ascending per channel.
    parallel_for(C, [&](long long lo, long long hi) {
      for (long long c = lo; c < hi; ++c) {
        double m = 0.0;
        for (long long b = 0; b < B; ++b) {
          const double* xs = x->data.data() + (b * C + c) * HW;
          for (long long i = 0; i < HW; ++i) m += xs[i];
        }
        m /= static_cast<double>(n);
        double v = 0.0;
        for (long long b = 0; b < B; ++b) {
          const double* xs = x->data.data() + (b * C + c) * HW;
          for (long long i = 0; i < HW; ++i) {
            double d = xs[i] - m;
            v += d * d;
          }
        }
        v /= static_cast<double>(n);
        (*mean)[static_cast<std::size_t>(c)] = m;
        (*var)[static_cast<std::size_t>(c)] = v;
        double unbiased = v * static_cast<double>(n) / static_cast<double>(n - 1);
        (*running_mean)[static_cast<std::size_t>(c)] =
            (1.0 - momentum) * (*running_mean)[static_cast<std::size_t>(c)] + momentum * m;
        (*running_var)[static_cast<std::size_t>(c)] =
            (1.0 - momentum) * (*running_var)[static_cast<std::size_t>(c)] + momentum * unbiased;
      }
    });
  } else {
    *mean = *running_mean;
    *var = *running_var;
  }

  std::vector<double> y(x->data.size());
  parallel_for(B * C, [&](long long lo, long long hi) {
    for (long long bc = lo; bc < hi; ++bc) {
      long long c = bc % C;
      double m = (*mean)[static_cast<std::size_t>(c)];
      double inv = 1.0 / std::sqrt((*var)[static_cast<std::size_t>(c)] + eps);
      double gm = gamma->data[static_cast<std::size_t>(c)];
      double bt = beta->data[static_cast<std::size_t>(c)];
      const double* xs = x->data.data() + bc * HW;
      double* ys = y.data() + bc * HW;
      for (long long i = 0; i < HW; ++i) ys[i] = gm * ((xs[i] - m) * inv) + bt;
    }
  });

  return detail::make_op(
      x->shape, std::move(y), {x, gamma, beta},
      [B, C, HW, n, eps, training, mean, var](TensorNode& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        const auto& g = self.pass_grad;
        parallel_for(C, [&](long long lo, long long hi) {
          for (long long c = lo; c < hi; ++c) {
            double m = (*mean)[static_cast<std::size_t>(c)];
            double inv = 1.0 / std::sqrt((*var)[static_cast<std::size_t>(c)] + eps);
            double gm = pg->data[static_cast<std::size_t>(c)];
            double sum_g = 0.0, sum_gx = 0.0;  // sums of g and g*xhat over the channel
            for (long long b = 0; b < B; ++b) {
              const double* gs = g.data() + (b * C + c) * HW;
              const double* xs = px->data.data() + (b * C + c) * HW;
              for (long long i = 0; i < HW; ++i) {
                sum_g += gs[i];
                sum_gx += gs[i] * ((xs[i] - m) * inv);
              }
            }
            if (pg->requires_grad) pg->pass_grad[static_cast<std::size_t>(c)] += sum_gx;
            if (pb->requires_grad) pb->pass_grad[static_cast<std::size_t>(c)] += sum_g;
            if (!px->requires_grad) continue;
            if (training) {
              // dx = (gamma*inv/n) * (n*g - sum_g - xhat*sum_gx)
              double k = gm * inv / static_cast<double>(n);
              for (long long b = 0; b < B; ++b) {
                const double* gs = g.data() + (b * C + c) * HW;
                const double* xs = px->data.data() + (b * C + c) * HW;
                double* gx = px->pass_grad.data() + (b * C + c) * HW;
                for (long long i = 0; i < HW; ++i) {
                  double xhat = (xs[i] - m) * inv;
                  gx[i] += k * (static_cast<double>(n) * gs[i] - sum_g - xhat * sum_gx);
                }
              }
            } else {
              double k = gm * inv;
              for (long long b = 0; b < B; ++b) {
                const double* gs = g.data() + (b * C + c) * HW;
                double* gx = px->pass_grad.data() + (b * C + c) * HW;
                for (long long i = 0; i < HW; ++i) gx[i] += k * gs[i];
              }
            }
          }
        });
      });
}

// ---------------------------------------------------------------------------
// Axis-preserving average pooling and excitation aggregation
// ---------------------------------------------------------------------------

enum class Axis { channel, frequency, time };

// Mean over the two axes other than `axis`, per sample; never pools across the
// batch. [B,C,F,T] -> [B,C] / [B,F] / [B,T]. Reduction orders: channel keeps
// (f outer, t inner); frequency keeps (c outer, t inner); time keeps
// (c outer, f inner).
inline Tensor axis_mean_pool(const Tensor& x, Axis axis) {
  if (x->shape.size() != 4)
    throw shape_error("axis_mean_pool: need [B,C,F,T], got " + shape_str(x->shape));
  long long B = x->shape[0], C = x->shape[1], F = x->shape[2], T = x->shape[3];
  long long keep = axis == Axis::channel ? C : (axis == Axis::frequency ? F : T);
  long long count = axis == Axis::channel ? F * T : (axis == Axis::frequency ? C * T : C * F);
  std::vector<double> y(static_cast<std::size_t>(B * keep));
  auto at = [&](long long b, long long c, long long f, long long t) {
    return x->data[static_cast<std::size_t>(((b * C + c) * F + f) * T + t)];
  };
  for (long long b = 0; b < B; ++b)
    for (long long k = 0; k < keep; ++k) {
      double acc = 0.0;
      switch (axis) {
        case Axis::channel:
          for (long long f = 0; f < F; ++f)
            for (long long t = 0; t < T; ++t) acc += at(b, k, f, t);
          break;
        case Axis::frequency:
          for (long long c = 0; c < C; ++c)
            for (long long t = 0; t < T; ++t) acc += at(b, c, k, t);
          break;
        case Axis::time:
          for (long long c = 0; c < C; ++c)
            for (long long f = 0; f < F; ++f) acc += at(b, c, f, k);
          break;
      }
      y[static_cast<std::size_t>(b * keep + k)] = acc / static_cast<double>(count);
    }
  return detail::make_op({B, keep}, std::move(y), {x},
                         [B, C, F, T, keep, count, axis](TensorNode& self) {
    auto& gx = self.parents[0]->pass_grad;
    auto gat = [&](long long b, long long c, long long f, long long t) -> double& {
      return gx[static_cast<std::size_t>(((b * C + c) * F + f) * T + t)];
    };
    for (long long b = 0; b < B; ++b)
      for (long long k = 0; k < keep; ++k) {
        double g = self.pass_grad[static_cast<std::size_t>(b * keep + k)] /
                   static_cast<double>(count);
        switch (axis) {
          case Axis::channel:
            for (long long f = 0; f < F; ++f)
              for (long long t = 0; t < T; ++t) gat(b, k, f, t) += g;
            break;
          case Axis::frequency:
            for (long long c = 0; c < C; ++c)
              for (long long t = 0; t < T; ++t) gat(b, c, k, t) += g;
            break;
          case Axis::time:
            for (long long c = 0; c < C; ++c)
              for (long long f = 0; f < F; ++f) gat(b, c, f, k) += g;
            break;
        }
      }
  });
}

// y[b,c,f,t] = x[b,c,f,t] * (1 + wc[b,c] + wf[b,f] + wt[b,t]). Any of the
// three mask tensors may be null, dropping its term (used by mask ablations).
inline Tensor excited_aggregate(const Tensor& x, const Tensor& wc, const Tensor& wf,
                                const Tensor& wt) {
  if (x->shape.size() != 4)
    throw shape_error("excited_aggregate: need [B,C,F,T], got " + shape_str(x->shape));
  long long B = x->shape[0], C = x->shape[1], F = x->shape[2], T = x->shape[3];
  auto check = [&](const Tensor& w, long long d, const char* which) {
    if (w && (w->shape.size() != 2 || w->shape[0] != B || w->shape[1] != d))
      throw shape_error(std::string("excited_aggregate: ") + which + " mask must be [B," +
                        std::to_string(d) + "], got " + shape_str(w->shape));
  };
  check(wc, C, "channel");
  check(wf, F, "frequency");
  check(wt, T, "time");

  std::vector<double> y(x->data.size());
  for (long long b = 0; b < B; ++b)
    for (long long c = 0; c < C; ++c)
      for (long long f = 0; f < F; ++f)
        for (long long t = 0; t < T; ++t) {
          double m = 1.0;
          if (wc) m += wc->data[static_cast<std::size_t>(b * C + c)];
          if (wf) m += wf->data[static_cast<std::size_t>(b * F + f)];
          if (wt) m += wt->data[static_cast<std::size_t>(b * T + t)];
          std::size_t i = static_cast<std::size_t>(((b * C + c) * F + f) * T + t);
          y[i] = x->data[i] * m;
        }

  std::vector<Tensor> parents{x};
  int ic = -1, iff = -1, it = -1;
  if (wc) { ic = static_cast<int>(parents.size()); parents.push_back(wc); }
  if (wf) { iff = static_cast<int>(parents.size()); parents.push_back(wf); }
  if (wt) { it = static_cast<int>(parents.size()); parents.push_back(wt); }

  return detail::make_op(x->shape, std::move(y), std::move(parents),
                         [B, C, F, T, ic, iff, it](TensorNode& self) {
    auto& px = self.parents[0];
    const auto& g = self.pass_grad;
    TensorNode* nc = ic >= 0 ? self.parents[static_cast<std::size_t>(ic)].get() : nullptr;
    TensorNode* nf = iff >= 0 ? self.parents[static_cast<std::size_t>(iff)].get() : nullptr;
    TensorNode* nt = it >= 0 ? self.parents[static_cast<std::size_t>(it)].get() : nullptr;
    if (px->requires_grad)
      for (long long b = 0; b < B; ++b)
        for (long long c = 0; c < C; ++c)
          for (long long f = 0; f < F; ++f)
            for (long long t = 0; t < T; ++t) {
              std::size_t i = static_cast<std::size_t>(((b * C + c) * F + f) * T + t);
              double m = 1.0;
              if (nc) m += nc->data[static_cast<std::size_t>(b * C + c)];
              if (nf) m += nf->data[static_cast<std::size_t>(b * F + f)];
              if (nt) m += nt->data[static_cast<std::size_t>(b * T + t)];
              px->pass_grad[i] += g[i] * m;
            }
    // Mask gradients: dwc[b,c] sums (f outer, t inner); dwf[b,f] sums
    // (c outer, t inner); dwt[b,t] sums (c outer, f inner).
    if (nc && nc->requires_grad)
      for (long long b = 0; b < B; ++b)
        for (long long c = 0; c < C; ++c) {
          double acc = 0.0;
          for (long long f = 0; f < F; ++f)
            for (long long t = 0; t < T; ++t) {
              std::size_t i = static_cast<std::size_t>(((b * C + c) * F + f) * T + t);
              acc += g[i] * px->data[i];
            }
          nc->pass_grad[static_cast<std::size_t>(b * C + c)] += acc;
        }
    if (nf && nf->requires_grad)
      for (long long b = 0; b < B; ++b)
        for (long long f = 0; f < F; ++f) {
          double acc = 0.0;
          for (long long c = 0; c < C; ++c)
            for (long long t = 0; t < T; ++t) {
              std::size_t i = static_cast<std::size_t>(((b * C + c) * F + f) * T + t);
              acc += g[i] * px->data[i];
            }
          nf->pass_grad[static_cast<std::size_t>(b * F + f)] += acc;
        }
    if (nt && nt->requires_grad)
      for (long long b = 0; b < B; ++b)
        for (long long t = 0; t < T; ++t) {
          double acc = 0.0;
          for (long long c = 0; c < C; ++c)
            for (long long f = 0; f < F; ++f) {
              std::size_t i = static_cast<std::size_t>(((b * C + c) * F + f) * T + t);
              acc += g[i] * px->data[i];
            }
          nt->pass_grad[static_cast<std::size_t>(b * T + t)] += acc;
        }
  });
}

// ---------------------------------------------------------------------------
// Row-wise L2 normalization
// ---------------------------------------------------------------------------

// y_i = x_i / max(||x_i||, eps). Below the clamp the map is linear (1/eps).
inline Tensor row_l2_normalize(const Tensor& x, double eps = 1e-12) {
  if (x->shape.size() != 2)
    throw shape_error("row_l2_normalize: need [n,d], got " + shape_str(x->shape));
  long long n = x->shape[0], d = x->shape[1];
  std::vector<double> y(x->data.size());
  auto norms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n));
  for (long long i = 0; i < n; ++i) {
    const double* xr = x->data.data() + i * d;
    double s = 0.0;
    for (long long j = 0; j < d; ++j) s += xr[j] * xr[j];
    double norm = std::max(std::sqrt(s), eps);
    (*norms)[static_cast<std::size_t>(i)] = norm;
    for (long long j = 0; j < d; ++j) y[static_cast<std::size_t>(i * d + j)] = xr[j] / norm;
  }
  return detail::make_op(x->shape, std::move(y), {x}, [n, d, norms, eps](TensorNode& self) {
    auto& px = self.parents[0];
    for (long long i = 0; i < n; ++i) {
      const double* g = self.pass_grad.data() + i * d;
      const double* yr = self.data.data() + i * d;
      double norm = (*norms)[static_cast<std::size_t>(i)];
      double* gx = px->pass_grad.data() + i * d;
      if (norm > eps) {
        double dot = 0.0;
        for (long long j = 0; j < d; ++j) dot += g[j] * yr[j];
        for (long long j = 0; j < d; ++j) gx[j] += (g[j] - yr[j] * dot) / norm;
      } else {
        for (long long j = 0; j < d; ++j) gx[j] += g[j] / norm;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Sub-cluster cross entropy
// ---------------------------------------------------------------------------

// Cross-entropy between soft class labels and class probabilities formed by
// summing sub-cluster softmax mass. Logits are [B,K] with column k belonging
// to class class_of[k]; soft_labels is row-major [B, n_classes], rows summing
// to 1. Per sample: loss_b = LSE_all − Σ_c y_c·LSE_c, which equals
// −Σ_c y_c·log(Σ_{k∈c} softmax_k). All logsumexp reductions run in ascending
// column order with max-subtraction for stability.
inline Tensor subcluster_cross_entropy(const Tensor& logits, const std::vector<double>& soft_labels,
                                       const std::vector<int>& class_of, int n_classes) {
  if (logits->shape.size() != 2)
    throw shape_error("subcluster_cross_entropy: need [B,K], got " + shape_str(logits->shape));
  long long B = logits->shape[0], K = logits->shape[1];
  if (n_classes < 1) throw argument_error("subcluster_cross_entropy: need at least one class");
  if (static_cast<long long>(soft_labels.size()) != B * n_classes)
    throw argument_error("subcluster_cross_entropy: soft labels must be batch x n_classes");
  if (static_cast<long long>(class_of.size()) != K)
    throw argument_error("subcluster_cross_entropy: class_of size must match columns");
  std::vector<long long> class_count(static_cast<std::size_t>(n_classes), 0);
  for (int c : class_of) {
    if (c < 0 || c >= n_classes) throw argument_error("subcluster_cross_entropy: bad class id");
    ++class_count[static_cast<std::size_t>(c)];
  }
  for (long long b = 0; b < B; ++b)
    for (int c = 0; c < n_classes; ++c) {
      double y = soft_labels[static_cast<std::size_t>(b * n_classes + c)];
      if (y < 0.0) throw argument_error("subcluster_cross_entropy: negative label weight");
      if (y > 0.0 && class_count[static_cast<std::size_t>(c)] == 0)
        throw argument_error("subcluster_cross_entropy: label mass on a class with no columns");
    }

  auto lse_all = std::make_shared<std::vector<double>>(static_cast<std::size_t>(B));
  auto lse_cls = std::make_shared<std::vector<double>>(static_cast<std::size_t>(B * n_classes));
  double loss = 0.0;
  for (long long b = 0; b < B; ++b) {
    const double* z = logits->data.data() + b * K;
    double m_all = -HUGE_VAL;
    for (long long k = 0; k < K; ++k) m_all = std::max(m_all, z[k]);
    double s_all = 0.0;
    for (long long k = 0; k < K; ++k) s_all += std::exp(z[k] - m_all);
    double la = m_all + std::log(s_all);
    (*lse_all)[static_cast<std::size_t>(b)] = la;
    double lb = la;  // minus the soft-weighted per-class logsumexp terms
    for (int c = 0; c < n_classes; ++c) {
      if (class_count[static_cast<std::size_t>(c)] == 0) {
        (*lse_cls)[static_cast<std::size_t>(b * n_classes + c)] = -HUGE_VAL;
        continue;
      }
      double m = -HUGE_VAL;
      for (long long k = 0; k < K; ++k)
        if (class_of[static_cast<std::size_t>(k)] == c) m = std::max(m, z[k]);
      double s = 0.0;
      for (long long k = 0; k < K; ++k)
        if (class_of[static_cast<std::size_t>(k)] == c) s += std::exp(z[k] - m);
      double lc = m + std::log(s);
      (*lse_cls)[static_cast<std::size_t>(b * n_classes + c)] = lc;
      lb -= soft_labels[static_cast<std::size_t>(b * n_classes + c)] * lc;
    }
    loss += lb;
  }
  loss /= static_cast<double>(B);

  auto class_of_copy = std::make_shared<std::vector<int>>(class_of);
  auto labels_copy = std::make_shared<std::vector<double>>(soft_labels);
  return detail::make_op(
      {1}, {loss}, {logits},
      [B, K, n_classes, lse_all, lse_cls, class_of_copy, labels_copy](TensorNode& self) {
        auto& pz = self.parents[0];
        double g = self.pass_grad[0] / static_cast<double>(B);
        for (long long b = 0; b < B; ++b) {
          const double* z = pz->data.data() + b * K;
          double* gz = pz->pass_grad.data() + b * K;
          double la = (*lse_all)[static_cast<std::size_t>(b)];
          for (long long k = 0; k < K; ++k) {
            int c = (*class_of_copy)[static_cast<std::size_t>(k)];
            double y = (*labels_copy)[static_cast<std::size_t>(b * n_classes + c)];
            double p = std::exp(z[k] - la);
            double q = y > 0.0
                           ? y * std::exp(z[k] - (*lse_cls)[static_cast<std::size_t>(
                                                     b * n_classes + c)])
                           : 0.0;
            gz[k] += g * (p - q);
          }
        }
      });
}

}  // namespace fteasd
