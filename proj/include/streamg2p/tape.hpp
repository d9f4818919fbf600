// Copyright (c) 2026 The streamg2p Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "streamg2p/common.hpp"
#include "streamg2p/rng.hpp"
#include "streamg2p/tensor.hpp"

namespace streamg2p {

// Reverse-mode autodiff over an eagerly evaluated tape. Every operation
// computes its value immediately and, when the tape is recording and an
// input requires gradients, registers a pull-style backward closure.
//
// Dense products are delegated to Eigen maps over the tensor buffers; all
// other kernels are written out here. Evaluation is deterministic: there is
// no internal threading and no reduction-order ambiguity, so identical
// inputs and seeds produce identical results.
template <typename S>
class Tape;

template <typename S>
struct Val {
  Tape<S>* tape = nullptr;
  int32_t id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor<S>& value() const;
  int64_t rows() const { return value().rows(); }
  int64_t cols() const { return value().cols(); }
};

template <typename S>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  size_t size() const { return nodes_.size(); }

  // -- Node-author API (used by ops here and by the CTC loss op). ----------

  Val<S> push(Tensor<S> value, bool needs_grad,
              std::function<void(Tape<S>&)> backprop = nullptr) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = recording_ && needs_grad;
    if (n.needs_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Val<S>{this, static_cast<int32_t>(nodes_.size() - 1)};
  }

  const Tensor<S>& value_of(int32_t id) const { return nodes_[id].value; }
  bool needs_grad(int32_t id) const { return nodes_[id].needs_grad; }

  // Gradient buffer for a node; allocated (zeroed) on first touch. Returns
  // nullptr for nodes that do not require gradients, letting backward
  // closures skip work.
  Tensor<S>* maybe_grad(int32_t id) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return nullptr;
    if (!n.has_grad) {
      n.grad = Tensor<S>(n.value.shape);
      n.has_grad = true;
    }
    return &n.grad;
  }

  // Gradient of a node after backward(); zeros if it was never reached.
  const Tensor<S>& grad_of(Val<S> v) {
    Tensor<S>* g = maybe_grad(v.id);
    if (g == nullptr) throw StateError("grad_of: node does not require gradients");
    return *g;
  }

  // -- Leaves. --------------------------------------------------------------

  // Constant: participates in forward only.
  Val<S> leaf(Tensor<S> value) { return push(std::move(value), false); }

  // Differentiable leaf (for gradient checks and ad-hoc graphs).
  Val<S> input(Tensor<S> value) { return push(std::move(value), true); }

  // Parameter leaf: backward accumulates into p.grad.
  Val<S> param(Param<S>& p) {
    if (!p.value.same_shape(p.grad)) throw ShapeError("param: grad/value shape mismatch");
    Param<S>* pp = &p;
    Val<S> out;
    out = push(p.value, true, [pp](Tape<S>& t) {
      const Tensor<S>& g = *t.maybe_grad(t.cursor_);
      for (size_t i = 0; i < g.data.size(); ++i) pp->grad.data[i] += g.data[i];
    });
    return out;
  }

  // -- Backward sweep. -------------------------------------------------------

  // Seeds d(root)/d(root)=1 and propagates to every reachable node. root
  // must be scalar (a [1] tensor).
  void backward(Val<S> root) {
    if (!recording_) throw StateError("backward on a non-recording tape");
    if (root.value().numel() != 1) throw ShapeError("backward: root must be scalar");
    Tensor<S>* g = maybe_grad(root.id);
    if (g == nullptr) throw StateError("backward: root does not require gradients");
    (*g)[0] = S(1);
    for (int32_t i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.has_grad && n.backprop) {
        cursor_ = i;
        n.backprop(*this);
      }
    }
  }

  int32_t cursor_ = -1;  // node whose backprop is currently running

 private:
  struct Node {
    Tensor<S> value;
    Tensor<S> grad;
    bool needs_grad = false;
    bool has_grad = false;
    std::function<void(Tape<S>&)> backprop;
  };
  // deque: node references stay valid as later operations are recorded
  std::deque<Node> nodes_;
  bool recording_;
};

template <typename S>
const Tensor<S>& Val<S>::value() const {
  return tape->value_of(id);
}

namespace detail {

template <typename S>
using CMat = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename S>
using MMat = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename S>
CMat<S> cmap(const Tensor<S>& t) {
  return CMat<S>(t.data.data(), t.rows(), t.cols());
}
template <typename S>
MMat<S> mmap(Tensor<S>& t) {
  return MMat<S>(t.data.data(), t.rows(), t.cols());
}

inline void require(bool cond, const char* msg) {
  if (!cond) throw ShapeError(msg);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitive operations. Each is differentiable w.r.t. every Val input; the
// analytic backward of every primitive is checked against central finite
// differences in the test suite.
// ---------------------------------------------------------------------------

template <typename S>
Val<S> matmul(Val<S> a, Val<S> b) {
  const Tensor<S>& av = a.value();
  const Tensor<S>& bv = b.value();
  if (av.shape.size() != 2 || bv.shape.size() != 2 || av.cols() != bv.rows())
    throw ShapeError("matmul: inner dimensions do not match: " + av.shape_str() +
                     " x " + bv.shape_str());
  Tensor<S> out = Tensor<S>::uninit({av.rows(), bv.cols()});
  detail::mmap(out).noalias() = detail::cmap(av) * detail::cmap(bv);
  Tape<S>& t = *a.tape;
  bool needs = t.needs_grad(a.id) || t.needs_grad(b.id);
  int32_t ai = a.id, bi = b.id;
  return t.push(std::move(out), needs, [ai, bi](Tape<S>& t) {
    const Tensor<S>& g = *t.maybe_grad(t.cursor_);
    if (Tensor<S>* ga = t.maybe_grad(ai))
      detail::mmap(*ga).noalias() += detail::cmap(g) * detail::cmap(t.value_of(bi)).transpose();
    if (Tensor<S>* gb = t.maybe_grad(bi))
      detail::mmap(*gb).noalias() += detail::cmap(t.value_of(ai)).transpose() * detail::cmap(g);
  });
}

template <typename S>
Val<S> add(Val<S> a, Val<S> b) {
  const Tensor<S>& av = a.value();
  const Tensor<S>& bv = b.value();
  if (!av.same_shape(bv))
    throw ShapeError("add: shape mismatch: " + av.shape_str() + " vs " + bv.shape_str());
  Tensor<S> out = av;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
  Tape<S>& t = *a.tape;
  bool needs = t.needs_grad(a.id) || t.needs_grad(b.id);
  int32_t ai = a.id, bi = b.id;
  return t.push(std::move(out), needs, [ai, bi](Tape<S>& t) {
    const Tensor<S>& g = *t.maybe_grad(t.cursor_);
    for (int32_t p : {ai, bi})
      if (Tensor<S>* gp = t.maybe_grad(p))
        for (size_t i = 0; i < g.data.size(); ++i) gp->data[i] += g.data[i];
  });
}

// x[F x D] + b[D] broadcast over rows.
template <typename S>
Val<S> add_row_bias(Val<S> x, Val<S> b) {
  const Tensor<S>& xv = x.value();
  const Tensor<S>& bv = b.value();
  if (bv.numel() != xv.cols()) throw ShapeError("add_row_bias: bias length != cols");
  Tensor<S> out = xv;
  int64_t d = xv.cols();
  for (int64_t r = 0; r < xv.rows(); ++r)
    for (int64_t c = 0; c < d; ++c) out.at(r, c) += bv[c];
  Tape<S>& t = *x.tape;
  bool needs = t.needs_grad(x.id) || t.needs_grad(b.id);
  int32_t xi = x.id, bi = b.id;
  return t.push(std::move(out), needs, [xi, bi, d](Tape<S>& t) {
    const Tensor<S>& g = *t.maybe_grad(t.cursor_);
    if (Tensor<S>* gx = t.maybe_grad(xi))
      for (size_t i = 0; i < g.data.size(); ++i) gx->data[i] += g.data[i];
    if (Tensor<S>* gb = t.maybe_grad(bi))
      for (int64_t r = 0; r < g.rows(); ++r)
        for (int64_t c = 0; c < d; ++c) gb->data[c] += g.at(r, c);
  });
}

template <typename S>
Val<S> scale(Val<S> a, S c) {
  Tensor<S> out = a.value();
  for (auto& v : out.data) v *= c;
  Tape<S>& t = *a.tape;
  int32_t ai = a.id;
  return t.push(std::move(out), t.needs_grad(ai), [ai, c](Tape<S>& t) {
    const Tensor<S>& g = *t.maybe_grad(t.cursor_);
    if (Tensor<S>* ga = t.maybe_grad(ai))
      for (size_t i = 0; i < g.data.size(); ++i) ga->data[i] += c * g.data[i];
  });
}

template <typename S>
Val<S> hadamard(Val<S> a, Val<S> b) {
  const Tensor<S>& av = a.value();
  const Tensor<S>& bv = b.value();
  if (!av.same_shape(bv)) throw ShapeError("hadamard: shape mismatch");
  Tensor<S> out = av;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
  Tape<S>& t = *a.tape;
  bool needs = t.needs_grad(a.id) || t.needs_grad(b.id);
  int32_t ai = a.id, bi = b.id;
  return t.push(std::move(out), needs, [ai, bi](Tape<S>& t) {
    const Tensor<S>& g = *t.maybe_grad(t.cursor_);
    const Tensor<S>& av = t.value_of(ai);
    const Tensor<S>& bv = t.value_of(bi);
    if (Tensor<S>* ga = t.maybe_grad(ai))
      for (size_t i = 0; i < g.data.size(); ++i) ga->data[i] += g.data[i] * bv.data[i];
    if (Tensor<S>* gb = t.maybe_grad(bi))
      for (size_t i = 0; i < g.data.size(); ++i) gb->data[i] += g.data[i] * av.data[i];
  });
}

namespace detail {
template <typename S>
S stable_sigmoid(S x) {
  if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
  S e = std::exp(x);
  return e / (S(1) + e);
}

template <typename S>
using AMap = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
template <typename S>
using CAMap = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;

// sigmoid over a flat buffer: exp(-|x|) is always safe, then patch by sign.
// Vectorized exp differs from the scalar libm fallback, and which path Eigen
// takes depends on runtime buffer alignment; staging through fixed-size
// aligned blocks forces one code path per element, keeping results
// bit-identical across allocations and runs.
// exp over a flat buffer, staged through aligned blocks (see above).
template <typename S>
void exp_buffer(const S* x, S* y, int64_t n) {
  constexpr int64_t kBlock = 512;
  alignas(64) S in[kBlock];
  alignas(64) S out[kBlock];
  for (int64_t off = 0; off < n; off += kBlock) {
    int64_t len = std::min<int64_t>(kBlock, n - off);
    std::copy(x + off, x + off + len, in);
    std::fill(in + len, in + kBlock, S(0));
    AMap<S> ia(in, kBlock);
    AMap<S> oa(out, kBlock);
    oa = ia.exp();
    std::copy(out, out + len, y + off);
  }
}

// Deterministic vectorized reductions: fixed-size aligned blocks give one
// reduction tree per call regardless of the source buffer's alignment.
// Zero padding leaves sums unchanged.
template <typename S>
S block_sum(const S* x, int64_t n) {
  constexpr int64_t kBlock = 512;
  alignas(64) S buf[kBlock];
  S total = 0;
  for (int64_t off = 0; off < n; off += kBlock) {
    int64_t len = std::min<int64_t>(kBlock, n - off);
    std::copy(x + off, x + off + len, buf);
    std::fill(buf + len, buf + kBlock, S(0));
    total += AMap<S>(buf, kBlock).sum();
  }
  return total;
}

template <typename S>
S block_dot(const S* a, const S* b, int64_t n) {
  constexpr int64_t kBlock = 512;
  alignas(64) S ba[kBlock];
  alignas(64) S bb[kBlock];
  S total = 0;
  for (int64_t off = 0; off < n; off += kBlock) {
    int64_t len = std::min<int64_t>(kBlock, n - off);
    std::copy(a + off, a + off + len, ba);
    std::copy(b + off, b + off + len, bb);
    std::fill(ba + len, ba + kBlock, S(0));
    std::fill(bb + len, bb + kBlock, S(0));
    total += (AMap<S>(ba, kBlock) * AMap<S>(bb, kBlock)).sum();
  }
  return total;
}

template <typename S>
void sigmoid_buffer(const S* x, S* y, int64_t n) {
  constexpr int64_t kBlock = 512;
  alignas(64) S in[kBlock];
  alignas(64) S out[kBlock];
  for (int64_t off = 0; off < n; off += kBlock) {
    int64_t len = std::min<int64_t>(kBlock, n - off);
    std::copy(x + off, x + off + len, in);
    std::fill(in + len, in + kBlock, S(0));
    AMap<S> ia(in, kBlock);
    AMap<S> oa(out, kBlock);
    oa = (-ia.abs()).exp();
    oa = (ia >= S(0)).select(S(1) / (S(1) + oa), oa / (S(1) + oa));
    std::copy(out, out + len, y + off);
  }
}
}  // namespace detail

template <typename S>
Val<S> sigmoid(Val<S> x) {
  const Tensor<S>& xv = x.value();
  Tensor<S> out = Tensor<S>::uninit(xv.shape);
  detail::sigmoid_buffer(xv.data.data(), out.data.data(), xv.numel());
  Tape<S>& t = *x.tape;
  int32_t xi = x.id;
  return t.push(std::move(out), t.needs_grad(xi), [xi](Tape<S>& t) {
    const Tensor<S>& g = *t.maybe_grad(t.cursor_);
    const Tensor<S>& y = t.value_of(t.cursor_);
    if (Tensor<S>* gx = t.maybe_grad(xi)) {
      int64_t n = g.numel();
      detail::AMap<S> gxa(gx->data.data(), n);
      detail::CAMap<S> ga(g.data.data(), n), ya(y.data.data(), n);
      gxa += ga * ya * (S(1) - ya);
    }
  });
}

// swish(x) = x * sigmoid(x)
template <typename S>
Val<S> swish(Val<S> x) {
  const Tensor<S>& xv = x.value();
  Tensor<S> out = Tensor<S>::uninit(xv.shape);
  int64_t n = xv.numel();
  detail::sigmoid_buffer(xv.data.data(), out.data.data(), n);
  {
    detail::AMap<S> oa(out.data.data(), n);
    detail::CAMap<S> xa(xv.data.data(), n);
    oa *= xa;
  }
  Tape<S>& t = *x.tape;
  int32_t xi = x.id;
  return t.push(std::move(out), t.needs_grad(xi), [xi](Tape<S>& t) {
    const Tensor<S>& g = *t.maybe_grad(t.cursor_);
    const Tensor<S>& xv = t.value_of(xi);
    if (Tensor<S>* gx = t.maybe_grad(xi)) {
      int64_t n = g.numel();
      Tensor<S> sig(xv.shape);
      detail::sigmoid_buffer(xv.data.data(), sig.data.data(), n);
      detail::AMap<S> gxa(gx->data.data(), n);
      detail::CAMap<S> ga(g.data.data(), n), xa(xv.data.data(), n), sa(sig.data.data(), n);
      gxa += ga * (sa + xa * sa * (S(1) - sa));
    }
  });
}

// Per-row layer normalization with learned gain/shift.
template <typename S>
Val<S> layer_norm(Val<S> x, Val<S> gamma, Val<S> beta, S eps = S(1e-5)) {
  const Tensor<S>& xv = x.value();
  int64_t rows = xv.rows(), d = xv.cols();
  if (gamma.value().numel() != d || beta.value().numel() != d)
    throw ShapeError("layer_norm: gamma/beta length != cols");
  auto xhat = std::make_shared<Tensor<S>>(Tensor<S>::uninit(xv.shape));
  auto inv_std = std::make_shared<std::vector<S>>(static_cast<size_t>(rows));
  Tensor<S> out = Tensor<S>::uninit(xv.shape);
  const Tensor<S>& gv = gamma.value();
  const Tensor<S>& bv = beta.value();
  detail::CAMap<S> ga(gv.data.data(), d), ba(bv.data.data(), d);
  for (int64_t r = 0; r < rows; ++r) {
    const S* xp = xv.data.data() + r * d;
    S mean = detail::block_sum(xp, d) / static_cast<S>(d);
    detail::CAMap<S> xr0(xp, d);
    detail::AMap<S> xhr0(xhat->data.data() + r * d, d);
    xhr0 = xr0 - mean;  // deviations, squared for the variance below
    S var = detail::block_dot(xhat->data.data() + r * d, xhat->data.data() + r * d, d) /
            static_cast<S>(d);
    S is = S(1) / std::sqrt(var + eps);
    (*inv_std)[static_cast<size_t>(r)] = is;
    detail::AMap<S> xhr(xhat->data.data() + r * d, d);
    detail::AMap<S> outr(out.data.data() + r * d, d);
    xhr = xhr * is;  // deviations already stored
    outr = xhr * ga + ba;
  }
  Tape<S>& t = *x.tape;
  bool needs = t.needs_grad(x.id) || t.needs_grad(gamma.id) || t.needs_grad(beta.id);
  int32_t xi = x.id, gi = gamma.id, bi = beta.id;
  return t.push(std::move(out), needs, [xi, gi, bi, xhat, inv_std, d](Tape<S>& t) {
    const Tensor<S>& g = *t.maybe_grad(t.cursor_);
    const Tensor<S>& gv = t.value_of(gi);
    int64_t rows = g.rows();
    if (Tensor<S>* gb = t.maybe_grad(bi))
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < d; ++c) gb->data[c] += g.at(r, c);
    if (Tensor<S>* gg = t.maybe_grad(gi))
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < d; ++c) gg->data[c] += g.at(r, c) * xhat->at(r, c);
    if (Tensor<S>* gx = t.maybe_grad(xi)) {
      detail::CAMap<S> ga(gv.data.data(), d);
      Eigen::Array<S, Eigen::Dynamic, 1> dxh(d);
      S inv_d = S(1) / static_cast<S>(d);
      for (int64_t r = 0; r < rows; ++r) {
        detail::CAMap<S> gr(g.data.data() + r * d, d);
        detail::CAMap<S> xhr(xhat->data.data() + r * d, d);
        dxh = gr * ga;
        S sum_dxhat = detail::block_sum(dxh.data(), d);
        S sum_dxhat_xhat = detail::block_dot(dxh.data(), xhat->data.data() + r * d, d);
        S is = (*inv_std)[static_cast<size_t>(r)];
        detail::AMap<S> gxr(gx->data.data() + r * d, d);
        gxr += is * (dxh - inv_d * sum_dxhat - xhr * inv_d * sum_dxhat_xhat);
      }
    }
  });
}

template <typename S>
Val<S> transpose(Val<S> x) {
  const Tensor<S>& xv = x.value();
  Tensor<S> out = Tensor<S>::uninit({xv.cols(), xv.rows()});
  for (int64_t r = 0; r < xv.rows(); ++r)
    for (int64_t c = 0; c < xv.cols(); ++c) out.at(c, r) = xv.at(r, c);
  Tape<S>& t = *x.tape;
  int32_t xi = x.id;
  return t.push(std::move(out), t.needs_grad(xi), [xi](Tape<S>& t) {
    const Tensor<S>& g = *t.maybe_grad(t.cursor_);
    if (Tensor<S>* gx = t.maybe_grad(xi))
      for (int64_t r = 0; r < g.rows(); ++r)
        for (int64_t c = 0; c < g.cols(); ++c) gx->at(c, r) += g.at(r, c);
  });
}

template <typename S>
Val<S> concat_rows(const std::vector<Val<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: empty");
  Tape<S>& t = *parts[0].tape;
  int64_t cols = parts[0].value().cols(), rows = 0;
  bool needs = false;
  for (const auto& p : parts) {
    if (p.value().cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += p.value().rows();
    needs = needs || t.needs_grad(p.id);
  }
  Tensor<S> out = Tensor<S>::uninit({rows, cols});
  int64_t r0 = 0;
  std::vector<std::pair<int32_t, int64_t>> layout;  // (id, row offset)
  for (const auto& p : parts) {
    const Tensor<S>& pv = p.value();
    std::copy(pv.data.begin(), pv.data.end(), out.data.begin() + r0 * cols);
    layout.emplace_back(p.id, r0);
    r0 += pv.rows();
  }
  return t.push(std::move(out), needs, [layout, cols](Tape<S>& t) {
    const Tensor<S>& g = *t.maybe_grad(t.cursor_);
    for (auto [id, off] : layout)
      if (Tensor<S>* gp = t.maybe_grad(id)) {
        int64_t n = gp->numel();
        const S* src = g.data.data() + off * cols;
        for (int64_t i = 0; i < n; ++i) gp->data[i] += src[i];
      }
  });
}

template <typename S>
Val<S> concat_cols(const std::vector<Val<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: empty");
  Tape<S>& t = *parts[0].tape;
  int64_t rows = parts[0].value().rows(), cols = 0;
  bool needs = false;
  for (const auto& p : parts) {
    if (p.value().rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += p.value().cols();
    needs = needs || t.needs_grad(p.id);
  }
  Tensor<S> out = Tensor<S>::uninit({rows, cols});
  int64_t c0 = 0;
  std::vector<std::tuple<int32_t, int64_t, int64_t>> layout;  // (id, col offset, width)
  for (const auto& p : parts) {
    const Tensor<S>& pv = p.value();
    for (int64_t r = 0; r < rows; ++r)
      std::copy(pv.data.begin() + r * pv.cols(), pv.data.begin() + (r + 1) * pv.cols(),
                out.data.begin() + r * cols + c0);
    layout.emplace_back(p.id, c0, pv.cols());
    c0 += pv.cols();
  }
  return t.push(std::move(out), needs, [layout, cols, rows](Tape<S>& t) {
    const Tensor<S>& g = *t.maybe_grad(t.cursor_);
    for (auto [id, off, w] : layout)
      if (Tensor<S>* gp = t.maybe_grad(id))
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t c = 0; c < w; ++c) gp->at(r, c) += g.at(r, off + c);
  });
}

template <typename S>
Val<S> slice_rows(Val<S> x, int64_t start, int64_t len) {
  const Tensor<S>& xv = x.value();
  if (start < 0 || len < 0 || start + len > xv.rows()) throw ShapeError("slice_rows: out of range");
  int64_t cols = xv.cols();
  Tensor<S> out = Tensor<S>::uninit({len, cols});
  std::copy(xv.data.begin() + start * cols, xv.data.begin() + (start + len) * cols,
            out.data.begin());
  Tape<S>& t = *x.tape;
  int32_t xi = x.id;
  return t.push(std::move(out), t.needs_grad(xi), [xi, start, cols](Tape<S>& t) {
    const Tensor<S>& g = *t.maybe_grad(t.cursor_);
    if (Tensor<S>* gx = t.maybe_grad(xi)) {
      S* dst = gx->data.data() + start * cols;
      for (size_t i = 0; i < g.data.size(); ++i) dst[i] += g.data[i];
    }
  });
}

template <typename S>
Val<S> slice_cols(Val<S> x, int64_t start, int64_t len) {
  const Tensor<S>& xv = x.value();
  if (start < 0 || len < 0 || start + len > xv.cols()) throw ShapeError("slice_cols: out of range");
  Tensor<S> out = Tensor<S>::uninit({xv.rows(), len});
  for (int64_t r = 0; r < xv.rows(); ++r)
    for (int64_t c = 0; c < len; ++c) out.at(r, c) = xv.at(r, start + c);
  Tape<S>& t = *x.tape;
  int32_t xi = x.id;
  return t.push(std::move(out), t.needs_grad(xi), [xi, start](Tape<S>& t) {
    const Tensor<S>& g = *t.maybe_grad(t.cursor_);
    if (Tensor<S>* gx = t.maybe_grad(xi))
      for (int64_t r = 0; r < g.rows(); ++r)
        for (int64_t c = 0; c < g.cols(); ++c) gx->at(r, start + c) += g.at(r, c);
  });
}

template <typename S>
Val<S> embedding_lookup(Val<S> table, const std::vector<int>& ids) {
  const Tensor<S>& tv = table.value();
  int64_t d = tv.cols();
  Tensor<S> out = Tensor<S>::uninit({static_cast<int64_t>(ids.size()), d});
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tv.rows()) throw ShapeError("embedding_lookup: id out of range");
    std::copy(tv.data.begin() + ids[i] * d, tv.data.begin() + (ids[i] + 1) * d,
              out.data.begin() + static_cast<int64_t>(i) * d);
  }
  Tape<S>& t = *table.tape;
  int32_t ti = table.id;
  return t.push(std::move(out), t.needs_grad(ti), [ti, ids, d](Tape<S>& t) {
    const Tensor<S>& g = *t.maybe_grad(t.cursor_);
    if (Tensor<S>* gt = t.maybe_grad(ti))
      for (size_t i = 0; i < ids.size(); ++i)
        for (int64_t c = 0; c < d; ++c) gt->at(ids[i], c) += g.at(static_cast<int64_t>(i), c);
  });
}

// Repetition upsampling: every row emitted u consecutive times.
template <typename S>
Val<S> upsample_repeat(Val<S> x, int u) {
  if (u < 1) throw ShapeError("upsample_repeat: u must be >= 1");
  const Tensor<S>& xv = x.value();
  int64_t rows = xv.rows(), d = xv.cols();
  Tensor<S> out = Tensor<S>::uninit({rows * u, d});
  for (int64_t r = 0; r < rows; ++r)
    for (int i = 0; i < u; ++i)
      std::copy(xv.data.begin() + r * d, xv.data.begin() + (r + 1) * d,
                out.data.begin() + (r * u + i) * d);
  Tape<S>& t = *x.tape;
  int32_t xi = x.id;
  return t.push(std::move(out), t.needs_grad(xi), [xi, u, d](Tape<S>& t) {
    const Tensor<S>& g = *t.maybe_grad(t.cursor_);
    if (Tensor<S>* gx = t.maybe_grad(xi))
      for (int64_t r = 0; r < gx->rows(); ++r)
        for (int i = 0; i < u; ++i)
          for (int64_t c = 0; c < d; ++c) gx->at(r, c) += g.at(r * u + i, c);
  });
}

// Inverted dropout; identity when train is false or p == 0. Draws come from
// the caller's dedicated dropout stream, keeping runs bit-reproducible.
template <typename S>
Val<S> dropout(Val<S> x, double p, Rng& rng, bool train) {
  if (!train || p <= 0.0) return x;
  if (p >= 1.0) throw ConfigError("dropout: p must be < 1");
  const Tensor<S>& xv = x.value();
  auto mask = std::make_shared<Tensor<S>>(Tensor<S>::uninit(xv.shape));
  S keep_scale = static_cast<S>(1.0 / (1.0 - p));
  Tensor<S> out = Tensor<S>::uninit(xv.shape);
  for (size_t i = 0; i < xv.data.size(); ++i) {
    S m = rng.uniform() >= p ? keep_scale : S(0);
    mask->data[i] = m;
    out.data[i] = xv.data[i] * m;
  }
  Tape<S>& t = *x.tape;
  int32_t xi = x.id;
  return t.push(std::move(out), t.needs_grad(xi), [xi, mask](Tape<S>& t) {
    const Tensor<S>& g = *t.maybe_grad(t.cursor_);
    if (Tensor<S>* gx = t.maybe_grad(xi))
      for (size_t i = 0; i < g.data.size(); ++i) gx->data[i] += g.data[i] * mask->data[i];
  });
}

// Row-wise masked softmax. mask (when non-null) is a row-major uint8 matrix
// of the same shape; masked positions receive exactly zero probability, not
// a small one. A fully masked row violates the contract (every query must at
// least see itself) and throws.
template <typename S>
Val<S> softmax_masked(Val<S> scores, const uint8_t* mask, int64_t mask_rows, int64_t mask_cols) {
  const Tensor<S>& xv = scores.value();
  int64_t rows = xv.rows(), cols = xv.cols();
  if (mask != nullptr && (mask_rows != rows || mask_cols != cols))
    throw ShapeError("softmax_masked: mask shape mismatch");
  Tensor<S> out = Tensor<S>::uninit(xv.shape);
  std::vector<S> shifted(static_cast<size_t>(cols));
  for (int64_t r = 0; r < rows; ++r) {
    const uint8_t* mrow = mask ? mask + r * cols : nullptr;
    const S* xrow = xv.data.data() + r * cols;
    S maxv = -std::numeric_limits<S>::infinity();
    for (int64_t c = 0; c < cols; ++c)
      if (!mrow || mrow[c]) maxv = std::max(maxv, xrow[c]);
    if (maxv == -std::numeric_limits<S>::infinity())
      throw ContractError("softmax_masked: fully masked row " + std::to_string(r));
    for (int64_t c = 0; c < cols; ++c) shifted[static_cast<size_t>(c)] = xrow[c] - maxv;
    S* orow = out.data.data() + r * cols;
    detail::exp_buffer(shifted.data(), orow, cols);
    S sum = 0;
    for (int64_t c = 0; c < cols; ++c) {
      if (mrow && !mrow[c]) orow[c] = S(0);  // exactly zero by construction
      sum += orow[c];
    }
    S inv = S(1) / sum;
    for (int64_t c = 0; c < cols; ++c) orow[c] *= inv;
  }
  Tape<S>& t = *scores.tape;
  int32_t xi = scores.id;
  // Masked entries have probability exactly 0, so the softmax Jacobian
  // automatically sends no gradient their way; the mask is not needed here.
  return t.push(std::move(out), t.needs_grad(xi), [xi](Tape<S>& t) {
    const Tensor<S>& g = *t.maybe_grad(t.cursor_);
    const Tensor<S>& y = t.value_of(t.cursor_);
    if (Tensor<S>* gx = t.maybe_grad(xi)) {
      int64_t rows = g.rows(), cols = g.cols();
      for (int64_t r = 0; r < rows; ++r) {
        S dot = 0;
        for (int64_t c = 0; c < cols; ++c) dot += g.at(r, c) * y.at(r, c);
        for (int64_t c = 0; c < cols; ++c) gx->at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
      }
    }
  });
}

template <typename S>
Val<S> softmax(Val<S> scores) {
  return softmax_masked(scores, nullptr, 0, 0);
}

// Row-wise log-softmax (the CTC input).
template <typename S>
Val<S> log_softmax(Val<S> x) {
  const Tensor<S>& xv = x.value();
  int64_t rows = xv.rows(), cols = xv.cols();
  Tensor<S> out = Tensor<S>::uninit(xv.shape);
  std::vector<S> expbuf(static_cast<size_t>(cols));
  for (int64_t r = 0; r < rows; ++r) {
    const S* xrow = xv.data.data() + r * cols;
    S maxv = xrow[0];
    for (int64_t c = 1; c < cols; ++c) maxv = std::max(maxv, xrow[c]);
    S* orow = out.data.data() + r * cols;
    for (int64_t c = 0; c < cols; ++c) orow[c] = xrow[c] - maxv;
    detail::exp_buffer(orow, expbuf.data(), cols);
    S sum = 0;
    for (int64_t c = 0; c < cols; ++c) sum += expbuf[static_cast<size_t>(c)];
    S lse = std::log(sum);
    for (int64_t c = 0; c < cols; ++c) orow[c] -= lse;
  }
  Tape<S>& t = *x.tape;
  int32_t xi = x.id;
  return t.push(std::move(out), t.needs_grad(xi), [xi](Tape<S>& t) {
    const Tensor<S>& g = *t.maybe_grad(t.cursor_);
    const Tensor<S>& y = t.value_of(t.cursor_);
    if (Tensor<S>* gx = t.maybe_grad(xi)) {
      int64_t rows = g.rows(), cols = g.cols();
      for (int64_t r = 0; r < rows; ++r) {
        S gsum = 0;
        for (int64_t c = 0; c < cols; ++c) gsum += g.at(r, c);
        for (int64_t c = 0; c < cols; ++c)
          gx->at(r, c) += g.at(r, c) - std::exp(y.at(r, c)) * gsum;
      }
    }
  });
}

// Adds a clamped relative-position bias to an attention score matrix.
// table is [n_heads x (r_past + r_fut + 1)]; entry (i, j) of the scores
// corresponds to query frame q0+i attending key frame k0+j, i.e. relative
// offset (q0+i) - (k0+j), clamped into [-r_fut, r_past].
template <typename S>
Val<S> add_rel_bias(Val<S> scores, Val<S> table, int head, int64_t q0, int64_t k0,
                    int r_past, int r_fut) {
  const Tensor<S>& xv = scores.value();
  const Tensor<S>& tv = table.value();
  int64_t width = r_past + r_fut + 1;
  if (tv.cols() != width) throw ShapeError("add_rel_bias: table width mismatch");
  if (head < 0 || head >= tv.rows()) throw ShapeError("add_rel_bias: head out of range");
  int64_t rows = xv.rows(), cols = xv.cols();
  Tensor<S> out = xv;
  auto index_of = [=](int64_t i, int64_t j) {
    int64_t off = (q0 + i) - (k0 + j);
    if (off > r_past) off = r_past;
    if (off < -r_fut) off = -r_fut;
    return off + r_fut;
  };
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) out.at(i, j) += tv.at(head, index_of(i, j));
  Tape<S>& t = *scores.tape;
  bool needs = t.needs_grad(scores.id) || t.needs_grad(table.id);
  int32_t si = scores.id, ti = table.id;
  return t.push(std::move(out), needs, [si, ti, head, index_of](Tape<S>& t) {
    const Tensor<S>& g = *t.maybe_grad(t.cursor_);
    if (Tensor<S>* gs = t.maybe_grad(si))
      for (size_t i = 0; i < g.data.size(); ++i) gs->data[i] += g.data[i];
    if (Tensor<S>* gt = t.maybe_grad(ti))
      for (int64_t i = 0; i < g.rows(); ++i)
        for (int64_t j = 0; j < g.cols(); ++j) gt->at(head, index_of(i, j)) += g.at(i, j);
  });
}

// Depthwise causal 1-D convolution over frames. kernel is [K x D] with
// index K-1 aligned to the current frame; history must hold exactly the
// K-1 frames preceding x (zeros at stream start), so output frame t
// depends on input frames <= t only.
template <typename S>
Val<S> causal_conv1d(Val<S> x, Val<S> kernel, const Tensor<S>& history) {
  const Tensor<S>& xv = x.value();
  const Tensor<S>& kv = kernel.value();
  int64_t frames = xv.rows(), d = xv.cols(), k = kv.rows();
  if (kv.cols() != d) throw ShapeError("causal_conv1d: kernel channels != input channels");
  if (history.rows() != k - 1 || (k > 1 && history.cols() != d))
    throw StateError("causal_conv1d: history must hold kernel_size-1 frames, got " +
                     std::to_string(history.rows()));
  auto hist = std::make_shared<Tensor<S>>(history);
  Tensor<S> out = Tensor<S>::uninit({frames, d});
  // row pointers into the extended stream [history; x]
  auto xext_row = [&](int64_t t) -> const S* {
    return t < k - 1 ? hist->data.data() + t * d : xv.data.data() + (t - (k - 1)) * d;
  };
  for (int64_t t = 0; t < frames; ++t) {
    detail::AMap<S> out_row(out.data.data() + t * d, d);
    out_row.setZero();
    for (int64_t i = 0; i < k; ++i) {
      detail::CAMap<S> kr(kv.data.data() + i * d, d);
      detail::CAMap<S> xr(xext_row(t + i), d);
      out_row += kr * xr;
    }
  }
  Tape<S>& t = *x.tape;
  bool needs = t.needs_grad(x.id) || t.needs_grad(kernel.id);
  int32_t xi = x.id, ki = kernel.id;
  return t.push(std::move(out), needs, [xi, ki, hist, k](Tape<S>& t) {
    const Tensor<S>& g = *t.maybe_grad(t.cursor_);
    const Tensor<S>& xv = t.value_of(xi);
    const Tensor<S>& kv = t.value_of(ki);
    int64_t frames = g.rows(), d = g.cols();
    auto xext_row = [&](int64_t tt) -> const S* {
      return tt < k - 1 ? hist->data.data() + tt * d : xv.data.data() + (tt - (k - 1)) * d;
    };
    Tensor<S>* gx = t.maybe_grad(xi);
    Tensor<S>* gk = t.maybe_grad(ki);
    for (int64_t tt = 0; tt < frames; ++tt) {
      detail::CAMap<S> go(g.data.data() + tt * d, d);
      for (int64_t i = 0; i < k; ++i) {
        if (gk) {
          detail::AMap<S> gkr(gk->data.data() + i * d, d);
          detail::CAMap<S> xr(xext_row(tt + i), d);
          gkr += go * xr;
        }
        int64_t src = tt + i - (k - 1);
        if (gx && src >= 0) {
          detail::AMap<S> gxr(gx->data.data() + src * d, d);
          detail::CAMap<S> kr(kv.data.data() + i * d, d);
          gxr += go * kr;
        }
      }
    }
  });
}

// Sum of all entries, as a [1] tensor.
template <typename S>
Val<S> sum(Val<S> x) {
  const Tensor<S>& xv = x.value();
  Tensor<S> out({1});
  S acc = 0;
  for (S v : xv.data) acc += v;
  out[0] = acc;
  Tape<S>& t = *x.tape;
  int32_t xi = x.id;
  return t.push(std::move(out), t.needs_grad(xi), [xi](Tape<S>& t) {
    const Tensor<S>& g = *t.maybe_grad(t.cursor_);
    if (Tensor<S>* gx = t.maybe_grad(xi))
      for (auto& v : gx->data) v += g[0];
  });
}

}  // namespace streamg2p
