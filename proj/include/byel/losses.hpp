#pragma once

#include <vector>

#include "byel/autodiff.hpp"
#include "byel/nn.hpp"
#include "byel/tensor.hpp"

namespace byel {

template <typename T>
struct LossBreakdown {
  T byol = 0, byol_swapped = 0;
  T classify = 0, classify_swapped = 0;
  T orthogonal = 0;
  T total = 0;

  bool finite() const {
    return std::isfinite(static_cast<double>(byol)) && std::isfinite(static_cast<double>(byol_swapped)) &&
           std::isfinite(static_cast<double>(classify)) && std::isfinite(static_cast<double>(classify_swapped)) &&
           std::isfinite(static_cast<double>(orthogonal)) && std::isfinite(static_cast<double>(total));
  }
};

// Optional weights on the unweighted five-term sum; all default to 1.
// Components in a LossBreakdown are stored already weighted so
// total == sum(components) always holds.
struct LossWeights {
  double byol = 1.0;
  double classify = 1.0;
  double orthogonal = 1.0;
};

struct ByelFlags {
  bool subtract_enabled = true;       // identity subtraction gives the plain-BYOL arm
  bool stop_grad_emotion = true;      // w_idx treated as constant inside the bootstrap loss
  bool classify_full_backprop = true; // false: classification gradients stop at W_E
};

// ---- value-level losses ----------------------------------------------------

template <typename T>
T classify_loss(const Tensor<T>& logits, const std::vector<int>& labels) {
  Tape<T> tape;
  return tape.value(tape.softmax_cross_entropy(tape.input(logits), labels)).at(0);
}

template <typename T>
T orthogonal_loss(const Tensor<T>& we) {
  Tape<T> tape;
  return tape.value(tape.l1_orthogonality(tape.input(we))).at(0);
}

template <typename T>
T byol_loss(const Tensor<T>& online_bar, const Tensor<T>& target_bar) {
  Tape<T> tape;
  return tape.value(tape.byol_alignment(tape.input(online_bar), tape.input(target_bar))).at(0);
}

// ---- tape-level total ------------------------------------------------------

template <typename T>
struct ByelLossVals {
  Val<T> byol, byol_swapped, classify, classify_swapped, orthogonal, total;
};

// Builds the five-term symmetrized loss from raw branch outputs:
// online_v{1,2} are predictor outputs q(z), target_v{1,2} are target
// projections z'. Classification uses pre-subtraction q(z) logits.
template <typename T>
ByelLossVals<T> byel_total_graph(Tape<T>& tape, Val<T> online_v1, Val<T> target_v2,
                                 Val<T> online_v2, Val<T> target_v1,
                                 const std::vector<int>& labels, Val<T> we,
                                 const LossWeights& weights, const ByelFlags& flags) {
  ByelLossVals<T> out;

  Val<T> q1 = online_v1, q2 = online_v2, t1 = target_v1, t2 = target_v2;
  if (flags.subtract_enabled) {
    q1 = tape.subtract_label_columns(online_v1, we, labels, flags.stop_grad_emotion);
    q2 = tape.subtract_label_columns(online_v2, we, labels, flags.stop_grad_emotion);
    t1 = tape.subtract_label_columns(target_v1, we, labels, flags.stop_grad_emotion);
    t2 = tape.subtract_label_columns(target_v2, we, labels, flags.stop_grad_emotion);
  }

  out.byol = tape.scale(tape.byol_alignment(q1, t2), static_cast<T>(weights.byol));
  out.byol_swapped = tape.scale(tape.byol_alignment(q2, t1), static_cast<T>(weights.byol));
  Val<T> total = tape.add(out.byol, out.byol_swapped);

  if (weights.classify != 0.0) {
    Val<T> logits1 = tape.matmul_cols(online_v1, we);
    Val<T> logits2 = tape.matmul_cols(online_v2, we);
    out.classify = tape.scale(tape.softmax_cross_entropy(logits1, labels), static_cast<T>(weights.classify));
    out.classify_swapped = tape.scale(tape.softmax_cross_entropy(logits2, labels), static_cast<T>(weights.classify));
  } else {
    out.classify = tape.input(Tensor<T>::from_values({1}, {T(0)}));
    out.classify_swapped = tape.input(Tensor<T>::from_values({1}, {T(0)}));
  }
  total = tape.add(total, tape.add(out.classify, out.classify_swapped));

  if (weights.orthogonal != 0.0) {
    out.orthogonal = tape.scale(tape.l1_orthogonality(we), static_cast<T>(weights.orthogonal));
  } else {
    out.orthogonal = tape.input(Tensor<T>::from_values({1}, {T(0)}));
  }
  out.total = tape.add(total, out.orthogonal);
  return out;
}

template <typename T>
LossBreakdown<T> breakdown_from(const Tape<T>& tape, const ByelLossVals<T>& vals) {
  LossBreakdown<T> b;
  b.byol = tape.value(vals.byol).at(0);
  b.byol_swapped = tape.value(vals.byol_swapped).at(0);
  b.classify = tape.value(vals.classify).at(0);
  b.classify_swapped = tape.value(vals.classify_swapped).at(0);
  b.orthogonal = tape.value(vals.orthogonal).at(0);
  b.total = tape.value(vals.total).at(0);
  return b;
}

// Value-level five-term total from raw branch outputs.
template <typename T>
LossBreakdown<T> byel_total(const Tensor<T>& online_v1, const Tensor<T>& target_v2,
                            const Tensor<T>& online_v2, const Tensor<T>& target_v1,
                            const std::vector<int>& labels, const Tensor<T>& we,
                            const LossWeights& weights = {}, const ByelFlags& flags = {}) {
  Tape<T> tape;
  auto vals = byel_total_graph(tape, tape.input(online_v1), tape.input(target_v2),
                               tape.input(online_v2), tape.input(target_v1), labels,
                               tape.input(we), weights, flags);
  return breakdown_from(tape, vals);
}

// Variant with separate (possibly detached) nodes for the classification path.
template <typename T>
ByelLossVals<T> byel_total_graph_split(Tape<T>& tape, Val<T> q1, Val<T> q2, Val<T> z1p, Val<T> z2p,
                                       Val<T> q1_cls, Val<T> q2_cls,
                                       const std::vector<int>& labels, Val<T> we,
                                       const LossWeights& weights, const ByelFlags& flags) {
  ByelLossVals<T> out;
  Val<T> qb1 = q1, qb2 = q2, tb1 = z1p, tb2 = z2p;
  if (flags.subtract_enabled) {
    qb1 = tape.subtract_label_columns(q1, we, labels, flags.stop_grad_emotion);
    qb2 = tape.subtract_label_columns(q2, we, labels, flags.stop_grad_emotion);
    tb1 = tape.subtract_label_columns(z1p, we, labels, flags.stop_grad_emotion);
    tb2 = tape.subtract_label_columns(z2p, we, labels, flags.stop_grad_emotion);
  }
  out.byol = tape.scale(tape.byol_alignment(qb1, tb2), static_cast<T>(weights.byol));
  out.byol_swapped = tape.scale(tape.byol_alignment(qb2, tb1), static_cast<T>(weights.byol));
  Val<T> total = tape.add(out.byol, out.byol_swapped);
  if (weights.classify != 0.0) {
    out.classify = tape.scale(tape.softmax_cross_entropy(tape.matmul_cols(q1_cls, we), labels),
                              static_cast<T>(weights.classify));
    out.classify_swapped = tape.scale(tape.softmax_cross_entropy(tape.matmul_cols(q2_cls, we), labels),
                                      static_cast<T>(weights.classify));
  } else {
    out.classify = tape.input(Tensor<T>::from_values({1}, {T(0)}));
    out.classify_swapped = tape.input(Tensor<T>::from_values({1}, {T(0)}));
  }
  total = tape.add(total, tape.add(out.classify, out.classify_swapped));
  if (weights.orthogonal != 0.0) {
    out.orthogonal = tape.scale(tape.l1_orthogonality(we), static_cast<T>(weights.orthogonal));
  } else {
    out.orthogonal = tape.input(Tensor<T>::from_values({1}, {T(0)}));
  }
  out.total = tape.add(total, out.orthogonal);
  return out;
}

// ---- full two-view pretraining graph (both branches from images) -----------

template <typename T>
struct PretrainGraph {
  BoundEncoder<T> encoder;
  BoundMlp<T> projector, predictor;
  Val<T> we;
  ByelLossVals<T> losses;
};

// classify_full_backprop=false detaches q(z) before the logits so only W_E
// learns from the classification terms.
template <typename T>
PretrainGraph<T> build_pretrain_graph(Tape<T>& tape, NetworkState<T>& state,
                                      const Tensor<T>& view1, const Tensor<T>& view2,
                                      const std::vector<int>& labels,
                                      const LossWeights& weights, const ByelFlags& flags) {
  PretrainGraph<T> g;
  g.encoder = bind_encoder(tape, state.online.encoder, true);
  g.projector = bind_mlp(tape, state.online.projector, true);
  g.predictor = bind_mlp(tape, state.online.predictor, true);
  g.we = tape.param(state.emotion_matrix);

  auto t_encoder = bind_encoder(tape, state.target.encoder, false);
  auto t_projector = bind_mlp(tape, state.target.projector, false);

  Val<T> x1 = tape.input(view1);
  Val<T> x2 = tape.input(view2);

  auto online_out = [&](Val<T> x) {
    Val<T> y = encoder_forward(tape, g.encoder, x);
    Val<T> z = mlp_forward(tape, g.projector, y);
    return mlp_forward(tape, g.predictor, z);
  };
  auto target_out = [&](Val<T> x) {
    Val<T> y = encoder_forward(tape, t_encoder, x);
    return mlp_forward(tape, t_projector, y);
  };

  Val<T> q1 = online_out(x1);
  Val<T> q2 = online_out(x2);
  Val<T> z1p = target_out(x1);
  Val<T> z2p = target_out(x2);

  ByelFlags eff = flags;
  if (!flags.classify_full_backprop) {
    // re-enter the predictor outputs as plain inputs for the classify path
    Val<T> q1d = tape.input(tape.value(q1));
    Val<T> q2d = tape.input(tape.value(q2));
    // byol path keeps the live nodes; classification sees detached copies
    g.losses = byel_total_graph_split(tape, q1, q2, z1p, z2p, q1d, q2d, labels, g.we, weights, eff);
    return g;
  }
  g.losses = byel_total_graph(tape, q1, z2p, q2, z1p, labels, g.we, weights, eff);
  return g;
}

}  // namespace byel
