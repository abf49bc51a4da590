#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "byel/errors.hpp"
#include "byel/tensor.hpp"

namespace byel {

// Reverse-mode tape. A fresh Tape is built per training step; parameters
// enter as grad-tracking leaves, data as plain inputs. Backward walks the
// tape in reverse insertion order. All accumulation loops run in a fixed
// order, so gradients are bitwise reproducible.
template <typename T>
struct Val {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

template <typename T>
class Tape {
 public:
  Val<T> leaf(Tensor<T> v, bool needs_grad) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Val<T>{static_cast<int>(nodes_.size()) - 1};
  }

  Val<T> input(Tensor<T> v) { return leaf(std::move(v), false); }
  Val<T> param(const Tensor<T>& v) { return leaf(v, true); }

  const Tensor<T>& value(Val<T> v) const { return nodes_[v.idx].value; }

  bool needs_grad(Val<T> v) const { return nodes_[v.idx].needs_grad; }

  // Gradient of a node; allocates zeros on first access.
  Tensor<T>& grad(Val<T> v) {
    Node& n = nodes_[v.idx];
    if (n.grad.empty() && n.value.numel() > 0) n.grad = Tensor<T>::zeros(n.value.shape());
    return n.grad;
  }

  bool grad_touched(Val<T> v) const { return !nodes_[v.idx].grad.empty(); }

  void backward(Val<T> root) {
    if (nodes_[root.idx].value.numel() != 1)
      throw ShapeError("backward: root must be a scalar");
    grad(root).at(0) = T(1);
    for (int i = root.idx; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty() || !n.backprop) continue;
      n.backprop(*this);
    }
  }

  // ---- ops ----------------------------------------------------------

  // x: (N,Cin,H,W), w: (Cout,Cin,kh,kw), b: (Cout). Images are processed one
  // at a time so a row's result never depends on the rest of the batch.
  Val<T> conv2d(Val<T> x, Val<T> w, Val<T> b, int stride, int pad) {
    const Tensor<T>& xv = value(x);
    const Tensor<T>& wv = value(w);
    const Tensor<T>& bv = value(b);
    if (xv.rank() != 4 || wv.rank() != 4) throw ShapeError("conv2d: expects rank-4 input and weight");
    const int N = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int Cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    if (wv.dim(1) != Cin) throw ShapeError("conv2d: channel mismatch");
    if (bv.numel() != static_cast<std::size_t>(Cout)) throw ShapeError("conv2d: bias size mismatch");
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d: output would be empty");

    Tensor<T> out({N, Cout, Ho, Wo});
    const int K = Cin * kh * kw;
    const int P = Ho * Wo;
    std::vector<T> patches(static_cast<std::size_t>(P) * K);

    for (int n = 0; n < N; ++n) {
      im2col(xv, n, kh, kw, stride, pad, Ho, Wo, patches.data());
      for (int co = 0; co < Cout; ++co) {
        const T* wrow = wv.data() + static_cast<std::size_t>(co) * K;
        T* orow = out.data() + ((static_cast<std::size_t>(n) * Cout + co) * P);
        const T bias = bv.at(co);
        for (int p = 0; p < P; ++p) orow[p] = dot(wrow, patches.data() + static_cast<std::size_t>(p) * K, K) + bias;
      }
    }

    Val<T> o = make(std::move(out), {x, w, b});
    int xi = x.idx, wi = w.idx, bi = b.idx, oi = o.idx;
    set_backprop(o, [=](Tape& t) {
      const Tensor<T>& xv2 = t.nodes_[xi].value;
      const Tensor<T>& wv2 = t.nodes_[wi].value;
      const Tensor<T>& go = t.nodes_[oi].grad;
      const bool need_x = t.nodes_[xi].needs_grad;
      const bool need_w = t.nodes_[wi].needs_grad;
      const bool need_b = t.nodes_[bi].needs_grad;
      if (!need_x && !need_w && !need_b) return;
      Tensor<T>* gx = need_x ? &t.grad(Val<T>{xi}) : nullptr;
      Tensor<T>* gw = need_w ? &t.grad(Val<T>{wi}) : nullptr;
      Tensor<T>* gb = need_b ? &t.grad(Val<T>{bi}) : nullptr;
      const int K2 = Cin * kh * kw, P2 = Ho * Wo;
      std::vector<T> patches2(static_cast<std::size_t>(P2) * K2);
      std::vector<T> dpatches(static_cast<std::size_t>(P2) * K2);
      for (int n = 0; n < N; ++n) {
        if (need_w || need_x) im2col(xv2, n, kh, kw, stride, pad, Ho, Wo, patches2.data());
        if (need_x) std::fill(dpatches.begin(), dpatches.end(), T(0));
        for (int co = 0; co < Cout; ++co) {
          const T* grow = go.data() + ((static_cast<std::size_t>(n) * Cout + co) * P2);
          const T* wrow = wv2.data() + static_cast<std::size_t>(co) * K2;
          T* gwrow = need_w ? gw->data() + static_cast<std::size_t>(co) * K2 : nullptr;
          T gbias = T(0);
          for (int p = 0; p < P2; ++p) {
            const T g = grow[p];
            if (g == T(0)) continue;
            gbias += g;
            if (need_w) axpy(g, patches2.data() + static_cast<std::size_t>(p) * K2, gwrow, K2);
            if (need_x) axpy(g, wrow, dpatches.data() + static_cast<std::size_t>(p) * K2, K2);
          }
          if (need_b) gb->at(co) += gbias;
        }
        if (need_x) col2im(dpatches.data(), n, Cin, H, W, kh, kw, stride, pad, Ho, Wo, *gx);
      }
    });
    return o;
  }

  Val<T> relu(Val<T> x) {
    const Tensor<T>& xv = value(x);
    Tensor<T> out(xv.shape());
    for (std::size_t i = 0; i < xv.numel(); ++i) out.raw()[i] = xv.raw()[i] > T(0) ? xv.raw()[i] : T(0);
    Val<T> o = make(std::move(out), {x});
    int xi = x.idx, oi = o.idx;
    set_backprop(o, [=](Tape& t) {
      if (!t.nodes_[xi].needs_grad) return;
      const Tensor<T>& xv2 = t.nodes_[xi].value;
      const Tensor<T>& go = t.nodes_[oi].grad;
      Tensor<T>& gx = t.grad(Val<T>{xi});
      for (std::size_t i = 0; i < xv2.numel(); ++i)
        if (xv2.raw()[i] > T(0)) gx.raw()[i] += go.raw()[i];
    });
    return o;
  }

  // (N,C,H,W) -> (N,C) spatial mean
  Val<T> global_avg_pool(Val<T> x) {
    const Tensor<T>& xv = value(x);
    if (xv.rank() != 4) throw ShapeError("global_avg_pool: expects rank-4 input");
    const int N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int HW = H * W;
    Tensor<T> out({N, C});
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const T* p = xv.data() + ((static_cast<std::size_t>(n) * C + c) * HW);
        T acc = T(0);
        for (int i = 0; i < HW; ++i) acc += p[i];
        out.at(n, c) = acc / T(HW);
      }
    Val<T> o = make(std::move(out), {x});
    int xi = x.idx, oi = o.idx;
    set_backprop(o, [=](Tape& t) {
      if (!t.nodes_[xi].needs_grad) return;
      const Tensor<T>& go = t.nodes_[oi].grad;
      Tensor<T>& gx = t.grad(Val<T>{xi});
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const T g = go.at(n, c) / T(HW);
          T* p = gx.data() + ((static_cast<std::size_t>(n) * C + c) * HW);
          for (int i = 0; i < HW; ++i) p[i] += g;
        }
    });
    return o;
  }

  // x: (N,in), w: (out,in), b: (out) -> (N,out)
  Val<T> linear(Val<T> x, Val<T> w, Val<T> b) {
    const Tensor<T>& xv = value(x);
    const Tensor<T>& wv = value(w);
    const Tensor<T>& bv = value(b);
    if (xv.rank() != 2 || wv.rank() != 2) throw ShapeError("linear: expects rank-2 input and weight");
    const int N = xv.dim(0), In = xv.dim(1), Out = wv.dim(0);
    if (wv.dim(1) != In) throw ShapeError("linear: weight/input width mismatch");
    if (bv.numel() != static_cast<std::size_t>(Out)) throw ShapeError("linear: bias size mismatch");
    Tensor<T> out({N, Out});
    for (int n = 0; n < N; ++n) {
      const T* xrow = xv.data() + static_cast<std::size_t>(n) * In;
      for (int o = 0; o < Out; ++o)
        out.at(n, o) = dot(xrow, wv.data() + static_cast<std::size_t>(o) * In, In) + bv.at(o);
    }
    Val<T> o = make(std::move(out), {x, w, b});
    int xi = x.idx, wi = w.idx, bi = b.idx, oi = o.idx;
    set_backprop(o, [=](Tape& t) {
      const Tensor<T>& xv2 = t.nodes_[xi].value;
      const Tensor<T>& wv2 = t.nodes_[wi].value;
      const Tensor<T>& go = t.nodes_[oi].grad;
      const bool need_x = t.nodes_[xi].needs_grad;
      const bool need_w = t.nodes_[wi].needs_grad;
      const bool need_b = t.nodes_[bi].needs_grad;
      if (need_x) {
        Tensor<T>& gx = t.grad(Val<T>{xi});
        for (int n = 0; n < N; ++n) {
          T* gxrow = gx.data() + static_cast<std::size_t>(n) * In;
          for (int o2 = 0; o2 < Out; ++o2)
            axpy(go.at(n, o2), wv2.data() + static_cast<std::size_t>(o2) * In, gxrow, In);
        }
      }
      if (need_w) {
        Tensor<T>& gw = t.grad(Val<T>{wi});
        for (int n = 0; n < N; ++n) {
          const T* xrow = xv2.data() + static_cast<std::size_t>(n) * In;
          for (int o2 = 0; o2 < Out; ++o2)
            axpy(go.at(n, o2), xrow, gw.data() + static_cast<std::size_t>(o2) * In, In);
        }
      }
      if (need_b) {
        Tensor<T>& gb = t.grad(Val<T>{bi});
        for (int n = 0; n < N; ++n)
          for (int o2 = 0; o2 < Out; ++o2) gb.at(o2) += go.at(n, o2);
      }
    });
    return o;
  }

  // x: (N,D), w: (D,C) -> (N,C). Column layout follows the emotion matrix.
  Val<T> matmul_cols(Val<T> x, Val<T> w) {
    const Tensor<T>& xv = value(x);
    const Tensor<T>& wv = value(w);
    if (xv.rank() != 2 || wv.rank() != 2) throw ShapeError("matmul_cols: expects rank-2 operands");
    const int N = xv.dim(0), D = xv.dim(1), C = wv.dim(1);
    if (wv.dim(0) != D) throw ShapeError("matmul_cols: inner dimension mismatch");
    Tensor<T> out({N, C});
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        T acc = T(0);
        for (int d = 0; d < D; ++d) acc += xv.at(n, d) * wv.at(d, c);
        out.at(n, c) = acc;
      }
    Val<T> o = make(std::move(out), {x, w});
    int xi = x.idx, wi = w.idx, oi = o.idx;
    set_backprop(o, [=](Tape& t) {
      const Tensor<T>& xv2 = t.nodes_[xi].value;
      const Tensor<T>& wv2 = t.nodes_[wi].value;
      const Tensor<T>& go = t.nodes_[oi].grad;
      if (t.nodes_[xi].needs_grad) {
        Tensor<T>& gx = t.grad(Val<T>{xi});
        for (int n = 0; n < N; ++n)
          for (int d = 0; d < D; ++d) {
            T acc = T(0);
            for (int c = 0; c < C; ++c) acc += go.at(n, c) * wv2.at(d, c);
            gx.at(n, d) += acc;
          }
      }
      if (t.nodes_[wi].needs_grad) {
        Tensor<T>& gw = t.grad(Val<T>{wi});
        for (int n = 0; n < N; ++n)
          for (int d = 0; d < D; ++d)
            for (int c = 0; c < C; ++c) gw.at(d, c) += xv2.at(n, d) * go.at(n, c);
      }
    });
    return o;
  }

  // Per-row normalization over the feature dimension; batch independent.
  Val<T> layer_norm(Val<T> x, Val<T> gain, Val<T> bias, T eps) {
    const Tensor<T>& xv = value(x);
    if (xv.rank() != 2) throw ShapeError("layer_norm: expects rank-2 input");
    const int N = xv.dim(0), D = xv.dim(1);
    const Tensor<T>& gv = value(gain);
    const Tensor<T>& bv = value(bias);
    if (gv.numel() != static_cast<std::size_t>(D) || bv.numel() != static_cast<std::size_t>(D))
      throw ShapeError("layer_norm: gain/bias size mismatch");
    Tensor<T> out({N, D});
    auto xhat = std::make_shared<Tensor<T>>(std::vector<int>{N, D});
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(N));
    for (int n = 0; n < N; ++n) {
      const T* row = xv.data() + static_cast<std::size_t>(n) * D;
      T mu = T(0);
      for (int d = 0; d < D; ++d) mu += row[d];
      mu /= T(D);
      T var = T(0);
      for (int d = 0; d < D; ++d) {
        T c = row[d] - mu;
        var += c * c;
      }
      var /= T(D);
      const T is = T(1) / std::sqrt(var + eps);
      (*inv_std)[n] = is;
      for (int d = 0; d < D; ++d) {
        T xh = (row[d] - mu) * is;
        xhat->at(n, d) = xh;
        out.at(n, d) = gv.at(d) * xh + bv.at(d);
      }
    }
    Val<T> o = make(std::move(out), {x, gain, bias});
    int xi = x.idx, gi = gain.idx, bi = bias.idx, oi = o.idx;
    set_backprop(o, [=](Tape& t) {
      const Tensor<T>& gv2 = t.nodes_[gi].value;
      const Tensor<T>& go = t.nodes_[oi].grad;
      const bool need_x = t.nodes_[xi].needs_grad;
      const bool need_g = t.nodes_[gi].needs_grad;
      const bool need_b = t.nodes_[bi].needs_grad;
      Tensor<T>* gx = need_x ? &t.grad(Val<T>{xi}) : nullptr;
      Tensor<T>* gg = need_g ? &t.grad(Val<T>{gi}) : nullptr;
      Tensor<T>* gb = need_b ? &t.grad(Val<T>{bi}) : nullptr;
      for (int n = 0; n < N; ++n) {
        const T is = (*inv_std)[n];
        T mean_gy = T(0), mean_gyxh = T(0);
        for (int d = 0; d < D; ++d) {
          const T gy = go.at(n, d) * gv2.at(d);
          mean_gy += gy;
          mean_gyxh += gy * xhat->at(n, d);
        }
        mean_gy /= T(D);
        mean_gyxh /= T(D);
        for (int d = 0; d < D; ++d) {
          const T g = go.at(n, d);
          if (need_g) gg->at(d) += g * xhat->at(n, d);
          if (need_b) gb->at(d) += g;
          if (need_x) {
            const T gy = g * gv2.at(d);
            gx->at(n, d) += (gy - mean_gy - xhat->at(n, d) * mean_gyxh) * is;
          }
        }
      }
    });
    return o;
  }

  // out[i] = v[i] - w[:, labels[i]]. With stop_grad_w the emotion matrix sees
  // no gradient through this path.
  Val<T> subtract_label_columns(Val<T> v, Val<T> w, const std::vector<int>& labels, bool stop_grad_w) {
    const Tensor<T>& vv = value(v);
    const Tensor<T>& wv = value(w);
    if (vv.rank() != 2 || wv.rank() != 2) throw ShapeError("subtract_label_columns: rank-2 operands expected");
    const int N = vv.dim(0), D = vv.dim(1), C = wv.dim(1);
    if (wv.dim(0) != D) throw ShapeError("subtract_label_columns: width mismatch");
    if (static_cast<int>(labels.size()) != N) throw ShapeError("subtract_label_columns: label count mismatch");
    for (int l : labels)
      if (l < 0 || l >= C) throw ConfigError("subtract_label_columns: invalid label " + std::to_string(l));
    Tensor<T> out({N, D});
    for (int n = 0; n < N; ++n)
      for (int d = 0; d < D; ++d) out.at(n, d) = vv.at(n, d) - wv.at(d, labels[n]);
    Val<T> o = make(std::move(out), {v, w});
    int vi = v.idx, wi = w.idx, oi = o.idx;
    auto labs = std::make_shared<std::vector<int>>(labels);
    set_backprop(o, [=](Tape& t) {
      const Tensor<T>& go = t.nodes_[oi].grad;
      if (t.nodes_[vi].needs_grad) {
        Tensor<T>& gv = t.grad(Val<T>{vi});
        for (std::size_t i = 0; i < go.numel(); ++i) gv.raw()[i] += go.raw()[i];
      }
      if (!stop_grad_w && t.nodes_[wi].needs_grad) {
        Tensor<T>& gw = t.grad(Val<T>{wi});
        for (int n = 0; n < N; ++n)
          for (int d = 0; d < D; ++d) gw.at(d, (*labs)[n]) -= go.at(n, d);
      }
    });
    return o;
  }

  // Mean over the batch of -log softmax(logits)[label].
  Val<T> softmax_cross_entropy(Val<T> logits, const std::vector<int>& labels) {
    const Tensor<T>& lv = value(logits);
    if (lv.rank() != 2) throw ShapeError("softmax_cross_entropy: rank-2 logits expected");
    const int N = lv.dim(0), C = lv.dim(1);
    if (static_cast<int>(labels.size()) != N) throw ShapeError("softmax_cross_entropy: label count mismatch");
    if (!lv.all_finite()) throw NumericError("softmax_cross_entropy: non-finite logits");
    auto probs = std::make_shared<Tensor<T>>(std::vector<int>{N, C});
    T loss = T(0);
    for (int n = 0; n < N; ++n) {
      const T* row = lv.data() + static_cast<std::size_t>(n) * C;
      if (labels[n] < 0 || labels[n] >= C)
        throw ConfigError("softmax_cross_entropy: invalid label " + std::to_string(labels[n]));
      T mx = row[0];
      for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
      T sum = T(0);
      for (int c = 0; c < C; ++c) sum += std::exp(row[c] - mx);
      const T lse = mx + std::log(sum);
      for (int c = 0; c < C; ++c) probs->at(n, c) = std::exp(row[c] - lse);
      loss += lse - row[labels[n]];
    }
    loss /= T(N);
    Val<T> o = make(Tensor<T>::from_values({1}, {loss}), {logits});
    int li = logits.idx, oi = o.idx;
    auto labs = std::make_shared<std::vector<int>>(labels);
    set_backprop(o, [=](Tape& t) {
      if (!t.nodes_[li].needs_grad) return;
      const T g = t.nodes_[oi].grad.at(0) / T(N);
      Tensor<T>& gl = t.grad(Val<T>{li});
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
          gl.at(n, c) += g * (probs->at(n, c) - (c == (*labs)[n] ? T(1) : T(0)));
    });
    return o;
  }

  // 2 - 2<a,b>/(|a||b|), batch mean. Value is symmetric; gradient flows only
  // into the first argument (the online branch).
  Val<T> byol_alignment(Val<T> a, Val<T> b) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    check_same_shape(av, bv, "byol_alignment");
    if (av.rank() != 2) throw ShapeError("byol_alignment: rank-2 operands expected");
    const int N = av.dim(0), D = av.dim(1);
    auto na = std::make_shared<std::vector<T>>(static_cast<std::size_t>(N));
    auto nb = std::make_shared<std::vector<T>>(static_cast<std::size_t>(N));
    auto cosv = std::make_shared<std::vector<T>>(static_cast<std::size_t>(N));
    T loss = T(0);
    for (int n = 0; n < N; ++n) {
      const T* ar = av.data() + static_cast<std::size_t>(n) * D;
      const T* br = bv.data() + static_cast<std::size_t>(n) * D;
      T aa = std::sqrt(dot(ar, ar, D));
      T bb = std::sqrt(dot(br, br, D));
      if (aa < T(1e-12) || bb < T(1e-12))
        throw NumericError("byol_alignment: zero-norm row " + std::to_string(n) + " (degenerate input)");
      T c = dot(ar, br, D) / (aa * bb);
      (*na)[n] = aa;
      (*nb)[n] = bb;
      (*cosv)[n] = c;
      loss += T(2) - T(2) * c;
    }
    loss /= T(N);
    Val<T> o = make(Tensor<T>::from_values({1}, {loss}), {a, b});
    int ai = a.idx, bi = b.idx, oi = o.idx;
    set_backprop(o, [=](Tape& t) {
      if (!t.nodes_[ai].needs_grad) return;
      const Tensor<T>& av2 = t.nodes_[ai].value;
      const Tensor<T>& bv2 = t.nodes_[bi].value;
      const T g = t.nodes_[oi].grad.at(0) * T(-2) / T(N);
      Tensor<T>& ga = t.grad(Val<T>{ai});
      for (int n = 0; n < N; ++n) {
        const T* ar = av2.data() + static_cast<std::size_t>(n) * D;
        const T* br = bv2.data() + static_cast<std::size_t>(n) * D;
        T* gr = ga.data() + static_cast<std::size_t>(n) * D;
        const T inv_ab = T(1) / ((*na)[n] * (*nb)[n]);
        const T c_over_a2 = (*cosv)[n] / ((*na)[n] * (*na)[n]);
        for (int d = 0; d < D; ++d) gr[d] += g * (br[d] * inv_ab - c_over_a2 * ar[d]);
      }
    });
    return o;
  }

  // sum |W^T W - I| over all C*C entries; subgradient 0 at exact zeros.
  Val<T> l1_orthogonality(Val<T> w) {
    const Tensor<T>& wv = value(w);
    if (wv.rank() != 2) throw ShapeError("l1_orthogonality: rank-2 operand expected");
    const int D = wv.dim(0), C = wv.dim(1);
    if (!wv.all_finite()) throw NumericError("l1_orthogonality: non-finite entries");
    auto sign = std::make_shared<Tensor<T>>(std::vector<int>{C, C});
    T loss = T(0);
    for (int i = 0; i < C; ++i)
      for (int j = 0; j < C; ++j) {
        T m = T(0);
        for (int d = 0; d < D; ++d) m += wv.at(d, i) * wv.at(d, j);
        m -= (i == j) ? T(1) : T(0);
        loss += std::abs(m);
        sign->at(i, j) = m > T(0) ? T(1) : (m < T(0) ? T(-1) : T(0));
      }
    Val<T> o = make(Tensor<T>::from_values({1}, {loss}), {w});
    int wi = w.idx, oi = o.idx;
    set_backprop(o, [=](Tape& t) {
      if (!t.nodes_[wi].needs_grad) return;
      const Tensor<T>& wv2 = t.nodes_[wi].value;
      const T g = t.nodes_[oi].grad.at(0);
      Tensor<T>& gw = t.grad(Val<T>{wi});
      // d/dW sum_ij |M_ij| = W (S + S^T)
      for (int d = 0; d < D; ++d)
        for (int j = 0; j < C; ++j) {
          T acc = T(0);
          for (int i = 0; i < C; ++i) acc += wv2.at(d, i) * (sign->at(i, j) + sign->at(j, i));
          gw.at(d, j) += g * acc;
        }
    });
    return o;
  }

  Val<T> add(Val<T> a, Val<T> b) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    check_same_shape(av, bv, "add");
    Tensor<T> out(av.shape());
    for (std::size_t i = 0; i < av.numel(); ++i) out.raw()[i] = av.raw()[i] + bv.raw()[i];
    Val<T> o = make(std::move(out), {a, b});
    int ai = a.idx, bi = b.idx, oi = o.idx;
    set_backprop(o, [=](Tape& t) {
      const Tensor<T>& go = t.nodes_[oi].grad;
      for (int p : {ai, bi}) {
        if (!t.nodes_[p].needs_grad) continue;
        Tensor<T>& gp = t.grad(Val<T>{p});
        for (std::size_t i = 0; i < go.numel(); ++i) gp.raw()[i] += go.raw()[i];
      }
    });
    return o;
  }

  Val<T> scale(Val<T> a, T c) {
    const Tensor<T>& av = value(a);
    Tensor<T> out(av.shape());
    for (std::size_t i = 0; i < av.numel(); ++i) out.raw()[i] = av.raw()[i] * c;
    Val<T> o = make(std::move(out), {a});
    int ai = a.idx, oi = o.idx;
    set_backprop(o, [=](Tape& t) {
      if (!t.nodes_[ai].needs_grad) return;
      const Tensor<T>& go = t.nodes_[oi].grad;
      Tensor<T>& ga = t.grad(Val<T>{ai});
      for (std::size_t i = 0; i < go.numel(); ++i) ga.raw()[i] += go.raw()[i] * c;
    });
    return o;
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void(Tape&)> backprop;
    bool needs_grad = false;
  };

  Val<T> make(Tensor<T> value, std::initializer_list<Val<T>> parents) {
    Node n;
    n.value = std::move(value);
    for (Val<T> p : parents) n.needs_grad = n.needs_grad || nodes_[p.idx].needs_grad;
    nodes_.push_back(std::move(n));
    return Val<T>{static_cast<int>(nodes_.size()) - 1};
  }

  void set_backprop(Val<T> v, std::function<void(Tape&)> fn) {
    if (nodes_[v.idx].needs_grad) nodes_[v.idx].backprop = std::move(fn);
  }

  static void im2col(const Tensor<T>& x, int n, int kh, int kw, int stride, int pad,
                     int Ho, int Wo, T* patches) {
    const int Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int K = Cin * kh * kw;
    for (int oh = 0; oh < Ho; ++oh)
      for (int ow = 0; ow < Wo; ++ow) {
        T* dst = patches + (static_cast<std::size_t>(oh) * Wo + ow) * K;
        int k = 0;
        for (int c = 0; c < Cin; ++c)
          for (int dh = 0; dh < kh; ++dh) {
            const int ih = oh * stride - pad + dh;
            for (int dw = 0; dw < kw; ++dw, ++k) {
              const int iw = ow * stride - pad + dw;
              dst[k] = (ih >= 0 && ih < H && iw >= 0 && iw < W) ? x.at(n, c, ih, iw) : T(0);
            }
          }
      }
  }

  static void col2im(const T* dpatches, int n, int Cin, int H, int W, int kh, int kw,
                     int stride, int pad, int Ho, int Wo, Tensor<T>& gx) {
    for (int oh = 0; oh < Ho; ++oh)
      for (int ow = 0; ow < Wo; ++ow) {
        const T* src = dpatches + (static_cast<std::size_t>(oh) * Wo + ow) * static_cast<std::size_t>(Cin * kh * kw);
        int k = 0;
        for (int c = 0; c < Cin; ++c)
          for (int dh = 0; dh < kh; ++dh) {
            const int ih = oh * stride - pad + dh;
            for (int dw = 0; dw < kw; ++dw, ++k) {
              const int iw = ow * stride - pad + dw;
              if (ih >= 0 && ih < H && iw >= 0 && iw < W) gx.at(n, c, ih, iw) += src[k];
            }
          }
      }
  }

  std::vector<Node> nodes_;
};

}  // namespace byel
