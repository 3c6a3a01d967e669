#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <cblas.h>

namespace erl {

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

struct TensorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A named, persistent parameter with Adam state. Lives outside any tape.
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;  // accumulated by Tape::backward
  std::vector<float> adam_m;
  std::vector<float> adam_v;
  int64_t step = 0;
  bool trainable = true;

  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }
};

template <typename T>
class TapeT;

// Lightweight handle to a node in a tape. Valid while the tape is alive.
template <typename T>
class TensorT {
 public:
  TensorT() = default;
  TensorT(TapeT<T>* tape, int id) : tape_(tape), id_(id) {}

  const Shape& shape() const { return tape_->node(id_).shape; }
  const std::vector<T>& value() const { return tape_->node(id_).value; }
  const std::vector<T>& grad() const { return tape_->node(id_).grad; }
  int64_t size() const { return static_cast<int64_t>(value().size()); }
  T scalar() const {
    if (value().size() != 1)
      throw TensorError("scalar(): tensor has shape " + shape_str(shape()));
    return value()[0];
  }
  int id() const { return id_; }
  TapeT<T>* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  TapeT<T>* tape_ = nullptr;
  int id_ = -1;
};

// Tape-based reverse-mode autodiff graph, rebuilt per forward pass.
template <typename T>
class TapeT {
 public:
  struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated lazily during backward
    std::vector<int> parents;
    std::function<void(TapeT&, int)> backward_fn;
    bool requires_grad = false;
    Parameter* param = nullptr;  // set for leaf nodes bound to a parameter
  };

  TensorT<T> constant(Shape shape, std::vector<T> data) {
    if (numel(shape) != static_cast<int64_t>(data.size()))
      throw TensorError("constant: data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_str(shape));
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(data);
    nodes_.push_back(std::move(n));
    return TensorT<T>(this, static_cast<int>(nodes_.size()) - 1);
  }

  TensorT<T> scalar_constant(T v) { return constant({1}, {v}); }

  TensorT<T> leaf(Parameter& p) {
    Node n;
    n.shape = p.shape;
    n.value.assign(p.value.begin(), p.value.end());
    n.requires_grad = p.trainable;
    n.param = &p;
    nodes_.push_back(std::move(n));
    return TensorT<T>(this, static_cast<int>(nodes_.size()) - 1);
  }

  // Populates grads of every reachable node; accumulates into bound
  // parameters (float tapes only). loss must be a single-element tensor.
  void backward(const TensorT<T>& loss) {
    if (loss.tape() != this) throw TensorError("backward: tensor from another tape");
    if (loss.size() != 1)
      throw TensorError("backward: loss must be scalar, got shape " +
                        shape_str(loss.shape()));
    grad_buf(loss.id())[0] = T(1);
    for (int i = loss.id(); i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward_fn) n.backward_fn(*this, i);
      if (n.param && n.param->trainable) {
        for (size_t k = 0; k < n.grad.size(); ++k)
          n.param->grad[k] += static_cast<float>(n.grad[k]);
      }
    }
  }

  Node& node(int id) { return nodes_[id]; }
  const Node& node(int id) const { return nodes_[id]; }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }

  int emplace(Shape shape, std::vector<T> value, std::vector<int> parents,
              std::function<void(TapeT&, int)> backward_fn) {
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(value);
    for (int p : parents)
      if (nodes_[p].requires_grad) n.requires_grad = true;
    if (n.requires_grad) {
      n.parents = std::move(parents);
      n.backward_fn = std::move(backward_fn);
    }
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<T>& grad_buf(int id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
    return n.grad;
  }

 private:
  std::vector<Node> nodes_;
};

using Tensor = TensorT<float>;
using Tape = TapeT<float>;

namespace detail {

inline void gemm(bool ta, bool tb, int m, int n, int k, float alpha,
                 const float* a, int lda, const float* b, int ldb, float beta,
                 float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

inline void gemm(bool ta, bool tb, int m, int n, int k, double alpha,
                 const double* a, int lda, const double* b, int ldb,
                 double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

inline Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (size_t i = 0; i < r; ++i) {
    int da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    int db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw TensorError(std::string(op) + ": shapes not broadcastable " +
                        shape_str(a) + " vs " + shape_str(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// Element strides of s, right-aligned against a rank-r output; 0 on broadcast dims.
inline std::vector<int64_t> bcast_strides(const Shape& s, size_t r) {
  std::vector<int64_t> st(r, 0);
  int64_t acc = 1;
  for (size_t i = 0; i < s.size(); ++i) {
    size_t k = s.size() - 1 - i;
    st[r - 1 - i] = (s[k] == 1) ? 0 : acc;
    acc *= s[k];
  }
  return st;
}

inline bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

template <typename F>
void for_each_bcast(const Shape& out, const std::vector<int64_t>& sa,
                    const std::vector<int64_t>& sb, F&& body) {
  size_t r = out.size();
  int64_t n = numel(out);
  std::vector<int64_t> idx(r, 0);
  int64_t ia = 0, ib = 0;
  for (int64_t i = 0; i < n; ++i) {
    body(i, ia, ib);
    for (int64_t k = static_cast<int64_t>(r) - 1; k >= 0; --k) {
      ++idx[k];
      ia += sa[k];
      ib += sb[k];
      if (idx[k] < out[k]) break;
      idx[k] = 0;
      ia -= sa[k] * out[k];
      ib -= sb[k] * out[k];
    }
  }
}

enum class BcMode { Same, BScalar, AScalar, BSuffix, ASuffix, Generic };

template <typename T, typename F, typename DA, typename DB>
TensorT<T> binary_op(const char* name, TensorT<T> a, TensorT<T> b, F f, DA da, DB db) {
  TapeT<T>& t = *a.tape();
  if (b.tape() != &t)
    throw TensorError(std::string(name) + ": tensors from different tapes");
  const Shape as = a.shape();
  const Shape bs = b.shape();
  const auto& av = a.value();
  const auto& bv = b.value();
  Shape os = broadcast_shape(name, as, bs);
  int64_t n = numel(os);
  std::vector<T> out(n);

  BcMode mode;
  if (as == bs) mode = BcMode::Same;
  else if (bv.size() == 1) mode = BcMode::BScalar;
  else if (av.size() == 1) mode = BcMode::AScalar;
  else if (is_suffix(bs, os) && as == os) mode = BcMode::BSuffix;
  else if (is_suffix(as, os) && bs == os) mode = BcMode::ASuffix;
  else mode = BcMode::Generic;

  int64_t an = static_cast<int64_t>(av.size());
  int64_t bn = static_cast<int64_t>(bv.size());
  switch (mode) {
    case BcMode::Same:
      for (int64_t i = 0; i < n; ++i) out[i] = f(av[i], bv[i]);
      break;
    case BcMode::BScalar:
      for (int64_t i = 0; i < n; ++i) out[i] = f(av[i], bv[0]);
      break;
    case BcMode::AScalar:
      for (int64_t i = 0; i < n; ++i) out[i] = f(av[0], bv[i]);
      break;
    case BcMode::BSuffix:
      for (int64_t i = 0; i < n; ++i) out[i] = f(av[i], bv[i % bn]);
      break;
    case BcMode::ASuffix:
      for (int64_t i = 0; i < n; ++i) out[i] = f(av[i % an], bv[i]);
      break;
    case BcMode::Generic: {
      auto sa = bcast_strides(as, os.size());
      auto sb = bcast_strides(bs, os.size());
      for_each_bcast(os, sa, sb,
                     [&](int64_t i, int64_t ia, int64_t ib) { out[i] = f(av[ia], bv[ib]); });
      break;
    }
  }

  int aid = a.id(), bid = b.id();
  Shape os_copy = os;
  int id = t.emplace(std::move(os), std::move(out), {aid, bid},
                     [=](TapeT<T>& tp, int self) {
    const auto& g = tp.node(self).grad;
    const auto& avr = tp.node(aid).value;
    const auto& bvr = tp.node(bid).value;
    bool need_a = tp.node(aid).requires_grad;
    bool need_b = tp.node(bid).requires_grad;
    std::vector<T>* ga = need_a ? &tp.grad_buf(aid) : nullptr;
    std::vector<T>* gb = need_b ? &tp.grad_buf(bid) : nullptr;
    int64_t nn = static_cast<int64_t>(g.size());
    switch (mode) {
      case BcMode::Same:
        for (int64_t i = 0; i < nn; ++i) {
          if (ga) (*ga)[i] += da(avr[i], bvr[i]) * g[i];
          if (gb) (*gb)[i] += db(avr[i], bvr[i]) * g[i];
        }
        break;
      case BcMode::BScalar:
        for (int64_t i = 0; i < nn; ++i) {
          if (ga) (*ga)[i] += da(avr[i], bvr[0]) * g[i];
          if (gb) (*gb)[0] += db(avr[i], bvr[0]) * g[i];
        }
        break;
      case BcMode::AScalar:
        for (int64_t i = 0; i < nn; ++i) {
          if (ga) (*ga)[0] += da(avr[0], bvr[i]) * g[i];
          if (gb) (*gb)[i] += db(avr[0], bvr[i]) * g[i];
        }
        break;
      case BcMode::BSuffix:
        for (int64_t i = 0; i < nn; ++i) {
          if (ga) (*ga)[i] += da(avr[i], bvr[i % bn]) * g[i];
          if (gb) (*gb)[i % bn] += db(avr[i], bvr[i % bn]) * g[i];
        }
        break;
      case BcMode::ASuffix:
        for (int64_t i = 0; i < nn; ++i) {
          if (ga) (*ga)[i % an] += da(avr[i % an], bvr[i]) * g[i];
          if (gb) (*gb)[i] += db(avr[i % an], bvr[i]) * g[i];
        }
        break;
      case BcMode::Generic: {
        auto sa = bcast_strides(tp.node(aid).shape, os_copy.size());
        auto sb = bcast_strides(tp.node(bid).shape, os_copy.size());
        for_each_bcast(os_copy, sa, sb, [&](int64_t i, int64_t ia, int64_t ib) {
          if (ga) (*ga)[ia] += da(avr[ia], bvr[ib]) * g[i];
          if (gb) (*gb)[ib] += db(avr[ia], bvr[ib]) * g[i];
        });
        break;
      }
    }
  });
  return TensorT<T>(&t, id);
}

template <typename T, typename F, typename DF>
TensorT<T> unary_op(TensorT<T> a, F f, DF df) {
  TapeT<T>& t = *a.tape();
  const auto& av = a.value();
  int64_t n = static_cast<int64_t>(av.size());
  std::vector<T> out(n);
  for (int64_t i = 0; i < n; ++i) out[i] = f(av[i]);
  int aid = a.id();
  int id = t.emplace(a.shape(), std::move(out), {aid}, [=](TapeT<T>& tp, int self) {
    const auto& g = tp.node(self).grad;
    const auto& x = tp.node(aid).value;
    const auto& y = tp.node(self).value;
    auto& ga = tp.grad_buf(aid);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += df(x[i], y[i]) * g[i];
  });
  return TensorT<T>(&t, id);
}

}  // namespace detail

// ---- op suite ----

template <typename T>
TensorT<T> add(TensorT<T> a, TensorT<T> b) {
  return detail::binary_op("add", a, b, [](T x, T y) { return x + y; },
                           [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <typename T>
TensorT<T> sub(TensorT<T> a, TensorT<T> b) {
  return detail::binary_op("sub", a, b, [](T x, T y) { return x - y; },
                           [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <typename T>
TensorT<T> mul(TensorT<T> a, TensorT<T> b) {
  return detail::binary_op("mul", a, b, [](T x, T y) { return x * y; },
                           [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <typename T>
TensorT<T> div(TensorT<T> a, TensorT<T> b) {
  return detail::binary_op("div", a, b, [](T x, T y) { return x / y; },
                           [](T, T y) { return T(1) / y; },
                           [](T x, T y) { return -x / (y * y); });
}

template <typename T>
TensorT<T> matmul(TensorT<T> a, TensorT<T> b) {
  TapeT<T>& t = *a.tape();
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0])
    throw TensorError("matmul: incompatible shapes " + shape_str(as) + " vs " +
                      shape_str(bs));
  int m = as[0], k = as[1], n = bs[1];
  std::vector<T> out(static_cast<size_t>(m) * n, T(0));
  detail::gemm(false, false, m, n, k, T(1), a.value().data(), k,
               b.value().data(), n, T(0), out.data(), n);
  int aid = a.id(), bid = b.id();
  int id = t.emplace({m, n}, std::move(out), {aid, bid}, [=](TapeT<T>& tp, int self) {
    const auto& g = tp.node(self).grad;
    if (tp.node(aid).requires_grad) {
      auto& ga = tp.grad_buf(aid);
      detail::gemm(false, true, m, k, n, T(1), g.data(), n,
                   tp.node(bid).value.data(), n, T(1), ga.data(), k);
    }
    if (tp.node(bid).requires_grad) {
      auto& gb = tp.grad_buf(bid);
      detail::gemm(true, false, k, n, m, T(1), tp.node(aid).value.data(), k,
                   g.data(), n, T(1), gb.data(), n);
    }
  });
  return TensorT<T>(&t, id);
}

template <typename T>
TensorT<T> linear(TensorT<T> x, TensorT<T> w, TensorT<T> b) {
  TapeT<T>& t = *x.tape();
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  const Shape& bs = b.shape();
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[0] || bs.size() != 1 ||
      bs[0] != ws[1])
    throw TensorError("linear: incompatible shapes " + shape_str(xs) + ", " +
                      shape_str(ws) + ", " + shape_str(bs));
  int n = xs[0], k = xs[1], m = ws[1];
  std::vector<T> out(static_cast<size_t>(n) * m);
  const auto& bv = b.value();
  for (int i = 0; i < n; ++i)
    std::copy(bv.begin(), bv.end(), out.begin() + static_cast<size_t>(i) * m);
  detail::gemm(false, false, n, m, k, T(1), x.value().data(), k,
               w.value().data(), m, T(1), out.data(), m);
  int xid = x.id(), wid = w.id(), bid = b.id();
  int id = t.emplace({n, m}, std::move(out), {xid, wid, bid},
                     [=](TapeT<T>& tp, int self) {
    const auto& g = tp.node(self).grad;
    if (tp.node(xid).requires_grad) {
      auto& gx = tp.grad_buf(xid);
      detail::gemm(false, true, n, k, m, T(1), g.data(), m,
                   tp.node(wid).value.data(), m, T(1), gx.data(), k);
    }
    if (tp.node(wid).requires_grad) {
      auto& gw = tp.grad_buf(wid);
      detail::gemm(true, false, k, m, n, T(1), tp.node(xid).value.data(), k,
                   g.data(), m, T(1), gw.data(), m);
    }
    if (tp.node(bid).requires_grad) {
      auto& gb = tp.grad_buf(bid);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) gb[j] += g[static_cast<size_t>(i) * m + j];
    }
  });
  return TensorT<T>(&t, id);
}

template <typename T>
TensorT<T> concat(const std::vector<TensorT<T>>& ts, int axis) {
  if (ts.empty()) throw TensorError("concat: empty input list");
  TapeT<T>& t = *ts[0].tape();
  Shape os = ts[0].shape();
  if (axis < 0 || axis >= static_cast<int>(os.size()))
    throw TensorError("concat: axis out of range");
  int total = 0;
  for (const TensorT<T>& x : ts) {
    const Shape& s = x.shape();
    if (s.size() != os.size())
      throw TensorError("concat: rank mismatch " + shape_str(os) + " vs " + shape_str(s));
    for (size_t i = 0; i < s.size(); ++i)
      if (static_cast<int>(i) != axis && s[i] != os[i])
        throw TensorError("concat: shape mismatch " + shape_str(os) + " vs " + shape_str(s));
    total += s[axis];
  }
  os[axis] = total;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= os[i];
  for (size_t i = axis + 1; i < os.size(); ++i) inner *= os[i];
  std::vector<T> out(numel(os));
  int64_t row = static_cast<int64_t>(total) * inner;
  int64_t off = 0;
  std::vector<int> ids;
  std::vector<int64_t> widths;
  for (const TensorT<T>& x : ts) {
    int64_t w = static_cast<int64_t>(x.shape()[axis]) * inner;
    const auto& v = x.value();
    for (int64_t o = 0; o < outer; ++o)
      std::copy(v.begin() + o * w, v.begin() + (o + 1) * w, out.begin() + o * row + off);
    ids.push_back(x.id());
    widths.push_back(w);
    off += w;
  }
  int id = t.emplace(os, std::move(out), ids, [=](TapeT<T>& tp, int self) {
    const auto& g = tp.node(self).grad;
    int64_t o2 = 0;
    for (size_t p = 0; p < ids.size(); ++p) {
      if (tp.node(ids[p]).requires_grad) {
        auto& gp = tp.grad_buf(ids[p]);
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t i = 0; i < widths[p]; ++i)
            gp[o * widths[p] + i] += g[o * row + o2 + i];
      }
      o2 += widths[p];
    }
  });
  return TensorT<T>(&t, id);
}

template <typename T>
TensorT<T> reshape(TensorT<T> a, Shape s) {
  if (numel(s) != a.size())
    throw TensorError("reshape: cannot reshape " + shape_str(a.shape()) + " to " +
                      shape_str(s));
  TapeT<T>& t = *a.tape();
  int aid = a.id();
  int id = t.emplace(std::move(s), a.value(), {aid}, [=](TapeT<T>& tp, int self) {
    const auto& g = tp.node(self).grad;
    auto& ga = tp.grad_buf(aid);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
  return TensorT<T>(&t, id);
}

template <typename T>
TensorT<T> slice(TensorT<T> a, int axis, int start, int len) {
  const Shape& as = a.shape();
  if (axis < 0 || axis >= static_cast<int>(as.size()) || start < 0 || len <= 0 ||
      start + len > as[axis])
    throw TensorError("slice: bounds [" + std::to_string(start) + "," +
                      std::to_string(start + len) + ") invalid for axis " +
                      std::to_string(axis) + " of " + shape_str(as));
  Shape os = as;
  os[axis] = len;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= as[i];
  for (size_t i = axis + 1; i < as.size(); ++i) inner *= as[i];
  int64_t in_row = static_cast<int64_t>(as[axis]) * inner;
  int64_t out_row = static_cast<int64_t>(len) * inner;
  int64_t skip = static_cast<int64_t>(start) * inner;
  std::vector<T> out(numel(os));
  const auto& v = a.value();
  for (int64_t o = 0; o < outer; ++o)
    std::copy(v.begin() + o * in_row + skip, v.begin() + o * in_row + skip + out_row,
              out.begin() + o * out_row);
  TapeT<T>& t = *a.tape();
  int aid = a.id();
  int id = t.emplace(std::move(os), std::move(out), {aid}, [=](TapeT<T>& tp, int self) {
    const auto& g = tp.node(self).grad;
    auto& ga = tp.grad_buf(aid);
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t i = 0; i < out_row; ++i)
        ga[o * in_row + skip + i] += g[o * out_row + i];
  });
  return TensorT<T>(&t, id);
}

template <typename T>
TensorT<T> sum(TensorT<T> a) {
  TapeT<T>& t = *a.tape();
  double acc = 0.0;
  for (T v : a.value()) acc += static_cast<double>(v);
  int aid = a.id();
  int id = t.emplace({1}, {static_cast<T>(acc)}, {aid}, [=](TapeT<T>& tp, int self) {
    T g = tp.node(self).grad[0];
    auto& ga = tp.grad_buf(aid);
    for (auto& x : ga) x += g;
  });
  return TensorT<T>(&t, id);
}

template <typename T>
TensorT<T> mean(TensorT<T> a) {
  TapeT<T>& t = *a.tape();
  int64_t n = a.size();
  double acc = 0.0;
  for (T v : a.value()) acc += static_cast<double>(v);
  T inv = T(1) / static_cast<T>(n);
  int aid = a.id();
  int id = t.emplace({1}, {static_cast<T>(acc / static_cast<double>(n))}, {aid},
                     [=](TapeT<T>& tp, int self) {
    T g = tp.node(self).grad[0] * inv;
    auto& ga = tp.grad_buf(aid);
    for (auto& x : ga) x += g;
  });
  return TensorT<T>(&t, id);
}

template <typename T>
TensorT<T> sum_axis(TensorT<T> a, int axis) {
  const Shape& as = a.shape();
  if (axis < 0 || axis >= static_cast<int>(as.size()))
    throw TensorError("sum_axis: axis out of range for " + shape_str(as));
  Shape os;
  for (size_t i = 0; i < as.size(); ++i)
    if (static_cast<int>(i) != axis) os.push_back(as[i]);
  if (os.empty()) os = {1};
  int64_t outer = 1, inner = 1;
  int d = as[axis];
  for (int i = 0; i < axis; ++i) outer *= as[i];
  for (size_t i = axis + 1; i < as.size(); ++i) inner *= as[i];
  std::vector<T> out(outer * inner, T(0));
  const auto& v = a.value();
  for (int64_t o = 0; o < outer; ++o)
    for (int j = 0; j < d; ++j)
      for (int64_t i = 0; i < inner; ++i)
        out[o * inner + i] += v[(o * d + j) * inner + i];
  TapeT<T>& t = *a.tape();
  int aid = a.id();
  int id = t.emplace(std::move(os), std::move(out), {aid}, [=](TapeT<T>& tp, int self) {
    const auto& g = tp.node(self).grad;
    auto& ga = tp.grad_buf(aid);
    for (int64_t o = 0; o < outer; ++o)
      for (int j = 0; j < d; ++j)
        for (int64_t i = 0; i < inner; ++i)
          ga[(o * d + j) * inner + i] += g[o * inner + i];
  });
  return TensorT<T>(&t, id);
}

template <typename T>
TensorT<T> exp(TensorT<T> a) {
  return detail::unary_op(a, [](T x) { return std::exp(x); },
                          [](T, T y) { return y; });
}

template <typename T>
TensorT<T> log(TensorT<T> a) {
  return detail::unary_op(a, [](T x) { return std::log(x); },
                          [](T x, T) { return T(1) / x; });
}

template <typename T>
TensorT<T> sin(TensorT<T> a) {
  return detail::unary_op(a, [](T x) { return std::sin(x); },
                          [](T x, T) { return std::cos(x); });
}

template <typename T>
TensorT<T> cos(TensorT<T> a) {
  return detail::unary_op(a, [](T x) { return std::cos(x); },
                          [](T x, T) { return -std::sin(x); });
}

template <typename T>
TensorT<T> relu(TensorT<T> a) {
  return detail::unary_op(a, [](T x) { return x > T(0) ? x : T(0); },
                          [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
TensorT<T> softplus(TensorT<T> a) {
  return detail::unary_op(a,
                          [](T x) {
                            if (x > T(20)) return x;
                            if (x < T(-20)) return std::exp(x);
                            return std::log1p(std::exp(x));
                          },
                          [](T x, T) { return T(1) / (T(1) + std::exp(-x)); });
}

template <typename T>
TensorT<T> sqrt(TensorT<T> a) {
  return detail::unary_op(a, [](T x) { return std::sqrt(x); },
                          [](T, T y) { return T(1) / (T(2) * y); });
}

template <typename T>
TensorT<T> sigmoid(TensorT<T> a) {
  return detail::unary_op(a, [](T x) { return T(1) / (T(1) + std::exp(-x)); },
                          [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
TensorT<T> tanh(TensorT<T> a) {
  return detail::unary_op(a, [](T x) { return std::tanh(x); },
                          [](T, T y) { return T(1) - y * y; });
}

template <typename T>
TensorT<T> softmax(TensorT<T> a, int axis) {
  const Shape& as = a.shape();
  if (axis < 0 || axis >= static_cast<int>(as.size()))
    throw TensorError("softmax: axis out of range for " + shape_str(as));
  int64_t outer = 1, inner = 1;
  int d = as[axis];
  for (int i = 0; i < axis; ++i) outer *= as[i];
  for (size_t i = axis + 1; i < as.size(); ++i) inner *= as[i];
  const auto& v = a.value();
  std::vector<T> out(v.size());
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      T mx = v[o * d * inner + i];
      for (int j = 1; j < d; ++j) mx = std::max(mx, v[(o * d + j) * inner + i]);
      double z = 0.0;
      for (int j = 0; j < d; ++j) {
        T e = std::exp(v[(o * d + j) * inner + i] - mx);
        out[(o * d + j) * inner + i] = e;
        z += static_cast<double>(e);
      }
      T invz = static_cast<T>(1.0 / z);
      for (int j = 0; j < d; ++j) out[(o * d + j) * inner + i] *= invz;
    }
  TapeT<T>& t = *a.tape();
  int aid = a.id();
  int id = t.emplace(as, std::move(out), {aid}, [=](TapeT<T>& tp, int self) {
    const auto& g = tp.node(self).grad;
    const auto& y = tp.node(self).value;
    auto& ga = tp.grad_buf(aid);
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t i = 0; i < inner; ++i) {
        double dot = 0.0;
        for (int j = 0; j < d; ++j) {
          size_t k = (o * d + j) * inner + i;
          dot += static_cast<double>(g[k]) * y[k];
        }
        for (int j = 0; j < d; ++j) {
          size_t k = (o * d + j) * inner + i;
          ga[k] += y[k] * (g[k] - static_cast<T>(dot));
        }
      }
  });
  return TensorT<T>(&t, id);
}

template <typename T>
TensorT<T> broadcast_to(TensorT<T> a, Shape s) {
  Shape os = detail::broadcast_shape("broadcast_to", a.shape(), s);
  if (os != s)
    throw TensorError("broadcast_to: cannot broadcast " + shape_str(a.shape()) +
                      " to " + shape_str(s));
  auto sa = detail::bcast_strides(a.shape(), s.size());
  auto sz = detail::bcast_strides(s, s.size());
  std::vector<T> out(numel(s));
  const auto& v = a.value();
  detail::for_each_bcast(s, sa, sz,
                         [&](int64_t i, int64_t ia, int64_t) { out[i] = v[ia]; });
  TapeT<T>& t = *a.tape();
  int aid = a.id();
  Shape sc = s;
  int id = t.emplace(std::move(s), std::move(out), {aid}, [=](TapeT<T>& tp, int self) {
    const auto& g = tp.node(self).grad;
    auto& ga = tp.grad_buf(aid);
    auto st = detail::bcast_strides(tp.node(aid).shape, sc.size());
    auto sdummy = detail::bcast_strides(sc, sc.size());
    detail::for_each_bcast(sc, st, sdummy,
                           [&](int64_t i, int64_t ia, int64_t) { ga[ia] += g[i]; });
  });
  return TensorT<T>(&t, id);
}

template <typename T>
TensorT<T> stop_gradient(TensorT<T> a) {
  TapeT<T>& t = *a.tape();
  int id = t.emplace(a.shape(), a.value(), {}, nullptr);
  return TensorT<T>(&t, id);
}

template <typename T>
TensorT<T> scale(TensorT<T> a, T c) {
  return detail::unary_op(a, [c](T x) { return x * c; }, [c](T, T) { return c; });
}

template <typename T>
TensorT<T> add_scalar(TensorT<T> a, T c) {
  return detail::unary_op(a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
}

template <typename T>
TensorT<T> neg(TensorT<T> a) {
  return scale(a, T(-1));
}

template <typename T>
TensorT<T> square(TensorT<T> a) {
  return detail::unary_op(a, [](T x) { return x * x; },
                          [](T x, T) { return T(2) * x; });
}

// Exclusive prefix sum over the last axis.
template <typename T>
TensorT<T> cumsum_exclusive(TensorT<T> a) {
  const Shape& as = a.shape();
  int d = as.back();
  int64_t rows = a.size() / d;
  const auto& v = a.value();
  std::vector<T> out(v.size());
  for (int64_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j) {
      out[r * d + j] = static_cast<T>(acc);
      acc += static_cast<double>(v[r * d + j]);
    }
  }
  TapeT<T>& t = *a.tape();
  int aid = a.id();
  int id = t.emplace(as, std::move(out), {aid}, [=](TapeT<T>& tp, int self) {
    const auto& g = tp.node(self).grad;
    auto& ga = tp.grad_buf(aid);
    for (int64_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (int j = d - 1; j >= 0; --j) {
        ga[r * d + j] += static_cast<T>(acc);
        acc += static_cast<double>(g[r * d + j]);
      }
    }
  });
  return TensorT<T>(&t, id);
}

template <typename T>
TensorT<T> gather_rows(TensorT<T> table, const std::vector<int>& idx) {
  const Shape& ts = table.shape();
  if (ts.size() != 2)
    throw TensorError("gather_rows: table must be 2-D, got " + shape_str(ts));
  int k = ts[0], d = ts[1];
  for (int i : idx)
    if (i < 0 || i >= k)
      throw TensorError("gather_rows: index " + std::to_string(i) +
                        " out of range [0," + std::to_string(k) + ")");
  int n = static_cast<int>(idx.size());
  std::vector<T> out(static_cast<size_t>(n) * d);
  const auto& v = table.value();
  for (int i = 0; i < n; ++i)
    std::copy(v.begin() + static_cast<size_t>(idx[i]) * d,
              v.begin() + static_cast<size_t>(idx[i] + 1) * d,
              out.begin() + static_cast<size_t>(i) * d);
  TapeT<T>& t = *table.tape();
  int tid = table.id();
  std::vector<int> idx_copy = idx;
  int id = t.emplace({n, d}, std::move(out), {tid}, [=](TapeT<T>& tp, int self) {
    const auto& g = tp.node(self).grad;
    auto& gt = tp.grad_buf(tid);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j)
        gt[static_cast<size_t>(idx_copy[i]) * d + j] +=
            g[static_cast<size_t>(i) * d + j];
  });
  return TensorT<T>(&t, id);
}

// 2x2 average pooling over [h,w,c].
template <typename T>
TensorT<T> avg_pool2(TensorT<T> a) {
  const Shape& as = a.shape();
  if (as.size() != 3 || as[0] % 2 != 0 || as[1] % 2 != 0)
    throw TensorError("avg_pool2: need [h,w,c] with even h,w, got " + shape_str(as));
  int h = as[0], w = as[1], c = as[2];
  int oh = h / 2, ow = w / 2;
  std::vector<T> out(static_cast<size_t>(oh) * ow * c);
  const auto& v = a.value();
  auto at = [&](int i, int j, int ch) {
    return v[(static_cast<size_t>(i) * w + j) * c + ch];
  };
  for (int i = 0; i < oh; ++i)
    for (int j = 0; j < ow; ++j)
      for (int ch = 0; ch < c; ++ch)
        out[(static_cast<size_t>(i) * ow + j) * c + ch] =
            T(0.25) * (at(2 * i, 2 * j, ch) + at(2 * i, 2 * j + 1, ch) +
                       at(2 * i + 1, 2 * j, ch) + at(2 * i + 1, 2 * j + 1, ch));
  TapeT<T>& t = *a.tape();
  int aid = a.id();
  int id = t.emplace({oh, ow, c}, std::move(out), {aid}, [=](TapeT<T>& tp, int self) {
    const auto& g = tp.node(self).grad;
    auto& ga = tp.grad_buf(aid);
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j)
        for (int ch = 0; ch < c; ++ch) {
          T gv = T(0.25) * g[(static_cast<size_t>(i) * ow + j) * c + ch];
          ga[(static_cast<size_t>(2 * i) * w + 2 * j) * c + ch] += gv;
          ga[(static_cast<size_t>(2 * i) * w + 2 * j + 1) * c + ch] += gv;
          ga[(static_cast<size_t>(2 * i + 1) * w + 2 * j) * c + ch] += gv;
          ga[(static_cast<size_t>(2 * i + 1) * w + 2 * j + 1) * c + ch] += gv;
        }
  });
  return TensorT<T>(&t, id);
}

template <typename T>
TensorT<T> transpose2(TensorT<T> a) {
  const Shape& as = a.shape();
  if (as.size() != 2)
    throw TensorError("transpose2: need 2-D, got " + shape_str(as));
  int m = as[0], n = as[1];
  const auto& v = a.value();
  std::vector<T> out(v.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<size_t>(j) * m + i] = v[static_cast<size_t>(i) * n + j];
  TapeT<T>& t = *a.tape();
  int aid = a.id();
  int id = t.emplace({n, m}, std::move(out), {aid}, [=](TapeT<T>& tp, int self) {
    const auto& g = tp.node(self).grad;
    auto& ga = tp.grad_buf(aid);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        ga[static_cast<size_t>(i) * n + j] += g[static_cast<size_t>(j) * m + i];
  });
  return TensorT<T>(&t, id);
}

// Sum consecutive groups of `group` rows: [g*group, c] -> [g, c].
template <typename T>
TensorT<T> sum_groups(TensorT<T> a, int group) {
  const Shape& as = a.shape();
  if (as.size() != 2 || group < 1 || as[0] % group != 0)
    throw TensorError("sum_groups: need [n,c] with n divisible by group, got " +
                      shape_str(as) + " group " + std::to_string(group));
  int g = as[0] / group, c = as[1];
  const auto& v = a.value();
  std::vector<T> out(static_cast<size_t>(g) * c, T(0));
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < group; ++j)
      for (int k = 0; k < c; ++k)
        out[static_cast<size_t>(i) * c + k] +=
            v[(static_cast<size_t>(i) * group + j) * c + k];
  TapeT<T>& t = *a.tape();
  int aid = a.id();
  int id = t.emplace({g, c}, std::move(out), {aid}, [=](TapeT<T>& tp, int self) {
    const auto& gr = tp.node(self).grad;
    auto& ga = tp.grad_buf(aid);
    for (int i = 0; i < g; ++i)
      for (int j = 0; j < group; ++j)
        for (int k = 0; k < c; ++k)
          ga[(static_cast<size_t>(i) * group + j) * c + k] +=
              gr[static_cast<size_t>(i) * c + k];
  });
  return TensorT<T>(&t, id);
}

// mean((a-b)^2) as one node; shapes must match exactly.
template <typename T>
TensorT<T> mse(TensorT<T> a, TensorT<T> b) {
  if (a.shape() != b.shape())
    throw TensorError("mse: shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  TapeT<T>& t = *a.tape();
  const auto& av = a.value();
  const auto& bv = b.value();
  int64_t n = a.size();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
    acc += d * d;
  }
  int aid = a.id(), bid = b.id();
  T inv = T(1) / static_cast<T>(n);
  int id = t.emplace({1}, {static_cast<T>(acc / static_cast<double>(n))},
                     {aid, bid}, [=](TapeT<T>& tp, int self) {
    T g = tp.node(self).grad[0];
    const auto& x = tp.node(aid).value;
    const auto& y = tp.node(bid).value;
    bool need_a = tp.node(aid).requires_grad;
    bool need_b = tp.node(bid).requires_grad;
    std::vector<T>* ga = need_a ? &tp.grad_buf(aid) : nullptr;
    std::vector<T>* gb = need_b ? &tp.grad_buf(bid) : nullptr;
    for (int64_t i = 0; i < n; ++i) {
      T d = T(2) * (x[i] - y[i]) * inv * g;
      if (ga) (*ga)[i] += d;
      if (gb) (*gb)[i] -= d;
    }
  });
  return TensorT<T>(&t, id);
}

// Constant built from doubles, converted to the tape's scalar type.
template <typename T>
TensorT<T> constant_like(TapeT<T>& t, Shape s, const std::vector<double>& v) {
  std::vector<T> d(v.begin(), v.end());
  return t.constant(std::move(s), std::move(d));
}

// Worst relative error between the analytic float32 gradient and a central
// finite difference evaluated on a 64-bit tape; denominator max(|a|,|n|,1e-8).
// f must be a generic callable usable with both float and double tapes.
template <typename F>
double gradient_check(F&& f, const Shape& shape, const std::vector<float>& x,
                      double eps) {
  if (eps <= 0.0) throw TensorError("gradient_check: eps must be positive");
  Parameter p;
  p.name = "x";
  p.shape = shape;
  p.value = x;
  p.grad.assign(x.size(), 0.0f);
  p.trainable = true;

  std::vector<float> analytic;
  {
    Tape t;
    Tensor xt = t.leaf(p);
    Tensor loss = f(t, xt);
    if (loss.size() != 1)
      throw TensorError("gradient_check: f must return a scalar");
    t.backward(loss);
    analytic = p.grad;
  }

  std::vector<double> xd(x.begin(), x.end());
  auto eval = [&](const std::vector<double>& xv) -> double {
    TapeT<double> t;
    TensorT<double> xt = t.constant(shape, xv);
    return f(t, xt).scalar();
  };

  double worst = 0.0;
  for (size_t i = 0; i < xd.size(); ++i) {
    double orig = xd[i];
    xd[i] = orig + eps;
    double lp = eval(xd);
    xd[i] = orig - eps;
    double lm = eval(xd);
    xd[i] = orig;
    double num = (lp - lm) / (2.0 * eps);
    double ana = analytic[i];
    if (!std::isfinite(num) || !std::isfinite(ana))
      throw TensorError("gradient_check: non-finite value at index " +
                        std::to_string(i));
    double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-8});
    worst = std::max(worst, rel);
  }
  return worst;
}

// Deterministic PRNG independent of libstdc++ distribution internals.
struct Rng {
  explicit Rng(uint64_t seed) : state(seed ? seed : 0x9e3779b97f4a7c15ull) {}
  uint64_t next_u64();
  float uniform(float lo, float hi);
  float normal();          // Box-Muller, mean 0, std 1
  int uniform_int(int n);  // [0, n)

  uint64_t state;
  bool have_spare = false;
  float spare = 0.0f;
};

// Named parameter collection.
class ParamStore {
 public:
  Parameter& create(const std::string& name, Shape shape, bool trainable = true);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::map<std::string, std::shared_ptr<Parameter>>& all() { return params_; }
  const std::map<std::string, std::shared_ptr<Parameter>>& all() const { return params_; }
  void zero_grads();
  size_t total_values() const;

  // FNV-1a over names and value bytes of parameters matching the prefix.
  uint64_t hash(const std::string& prefix = "") const;

 private:
  std::map<std::string, std::shared_ptr<Parameter>> params_;
};

void init_uniform(Parameter& p, Rng& rng, float scale);
void init_linear(ParamStore& store, const std::string& prefix, int fan_in,
                 int fan_out, Rng& rng, bool zero = false);

}  // namespace erl
