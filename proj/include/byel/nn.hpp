#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "byel/autodiff.hpp"
#include "byel/rng.hpp"
#include "byel/tensor.hpp"

namespace byel {

constexpr int kNumClasses = 6;

inline const char* emotion_name(int label) {
  static const char* names[kNumClasses] = {"Anger", "Disgust", "Fear",
                                           "Happiness", "Sadness", "Surprise"};
  if (label < 0 || label >= kNumClasses) throw ConfigError("invalid emotion label " + std::to_string(label));
  return names[label];
}

// Fixed desk-scale architecture constants. The encoder is a 3-block
// stride-2 conv net with global average pooling; projector/predictor are
// 2-layer MLPs with a per-sample normalization so single-example forwards
// are well defined.
struct ModelDims {
  int in_channels = 1;
  int conv1 = 16, conv2 = 32, conv3 = 64;
  int feature_width = 64;  // F
  int hidden = 128;
  int embed = 32;  // D, output of projector and predictor
  bool operator==(const ModelDims&) const = default;
};

template <typename T>
struct ConvParams {
  Tensor<T> weight, bias;
};

template <typename T>
struct DenseParams {
  Tensor<T> weight, bias;  // weight: (out, in)
};

template <typename T>
struct NormParams {
  Tensor<T> gain, bias;
};

namespace detail {

template <typename T>
ConvParams<T> init_conv(int cin, int cout, int k, DetRng& rng) {
  ConvParams<T> p;
  p.weight = Tensor<T>({cout, cin, k, k});
  p.bias = Tensor<T>({cout});
  const double bound = std::sqrt(6.0 / (cin * k * k));
  for (auto& v : p.weight.raw()) v = static_cast<T>(rng.uniform(-bound, bound));
  return p;
}

template <typename T>
DenseParams<T> init_dense(int in, int out, DetRng& rng, double bound_override = 0.0) {
  DenseParams<T> p;
  p.weight = Tensor<T>({out, in});
  p.bias = Tensor<T>({out});
  const double bound = bound_override > 0.0 ? bound_override : std::sqrt(6.0 / in);
  for (auto& v : p.weight.raw()) v = static_cast<T>(rng.uniform(-bound, bound));
  return p;
}

template <typename T>
NormParams<T> init_norm(int d) {
  NormParams<T> p;
  p.gain = Tensor<T>::full({d}, T(1));
  p.bias = Tensor<T>({d});
  return p;
}

}  // namespace detail

template <typename T>
struct EncoderParams {
  ConvParams<T> conv1, conv2, conv3;

  static EncoderParams init(const ModelDims& dims, DetRng& rng) {
    EncoderParams e;
    e.conv1 = detail::init_conv<T>(dims.in_channels, dims.conv1, 3, rng);
    e.conv2 = detail::init_conv<T>(dims.conv1, dims.conv2, 3, rng);
    e.conv3 = detail::init_conv<T>(dims.conv2, dims.conv3, 3, rng);
    return e;
  }
};

template <typename T>
struct MlpParams {
  DenseParams<T> fc1, fc2;
  NormParams<T> norm;

  static MlpParams init(int in, int hidden, int out, DetRng& rng) {
    MlpParams m;
    m.fc1 = detail::init_dense<T>(in, hidden, rng);
    m.norm = detail::init_norm<T>(hidden);
    m.fc2 = detail::init_dense<T>(hidden, out, rng);
    return m;
  }
};

template <typename T>
struct OnlineParams {
  EncoderParams<T> encoder;
  MlpParams<T> projector;
  MlpParams<T> predictor;
};

template <typename T>
struct TargetParams {
  EncoderParams<T> encoder;
  MlpParams<T> projector;
};

// Full parameter state of Fig-style two-branch training plus the transfer
// classifier used in phase 2.
template <typename T>
struct NetworkState {
  ModelDims dims;
  OnlineParams<T> online;
  TargetParams<T> target;
  Tensor<T> emotion_matrix;  // (D, C); column idx is the emotion vector w_idx
  std::optional<DenseParams<T>> classifier;
  long step = 0;

  static NetworkState init(const ModelDims& dims, std::uint64_t seed) {
    DetRng rng(mix_key(seed, rngtag::kInit));
    NetworkState s;
    s.dims = dims;
    s.online.encoder = EncoderParams<T>::init(dims, rng);
    s.online.projector = MlpParams<T>::init(dims.feature_width, dims.hidden, dims.embed, rng);
    s.online.predictor = MlpParams<T>::init(dims.embed, dims.hidden, dims.embed, rng);
    s.target.encoder = s.online.encoder;
    s.target.projector = s.online.projector;
    s.emotion_matrix = Tensor<T>({dims.embed, kNumClasses});
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims.embed));
    for (auto& v : s.emotion_matrix.raw()) v = static_cast<T>(rng.uniform(-bound, bound));
    return s;
  }
};

// Transfer classifier: one affine layer F -> C, weights U(-1/sqrt(F), 1/sqrt(F)),
// zero bias, deterministic per seed.
template <typename T>
DenseParams<T> init_classifier(int feature_width, std::uint64_t seed) {
  if (feature_width <= 0) throw ConfigError("init_classifier: feature width must be positive");
  DetRng rng(mix_key(seed, rngtag::kInit, 0xC1A55ULL));
  return detail::init_dense<T>(feature_width, kNumClasses, rng,
                               1.0 / std::sqrt(static_cast<double>(feature_width)));
}

// ---- parameter visiting --------------------------------------------------

template <typename T>
struct ParamRef {
  std::string path;
  Tensor<T>* tensor;
  bool norm_or_bias;  // excluded from LARS weight decay / trust scaling
};

namespace detail {

template <typename T>
void visit_conv(const std::string& prefix, ConvParams<T>& c, std::vector<ParamRef<T>>& out) {
  out.push_back({prefix + "/weight", &c.weight, false});
  out.push_back({prefix + "/bias", &c.bias, true});
}

template <typename T>
void visit_dense(const std::string& prefix, DenseParams<T>& d, std::vector<ParamRef<T>>& out) {
  out.push_back({prefix + "/weight", &d.weight, false});
  out.push_back({prefix + "/bias", &d.bias, true});
}

template <typename T>
void visit_mlp(const std::string& prefix, MlpParams<T>& m, std::vector<ParamRef<T>>& out) {
  visit_dense(prefix + "/fc1", m.fc1, out);
  out.push_back({prefix + "/norm/gain", &m.norm.gain, true});
  out.push_back({prefix + "/norm/bias", &m.norm.bias, true});
  visit_dense(prefix + "/fc2", m.fc2, out);
}

template <typename T>
void visit_encoder(const std::string& prefix, EncoderParams<T>& e, std::vector<ParamRef<T>>& out) {
  visit_conv(prefix + "/conv1", e.conv1, out);
  visit_conv(prefix + "/conv2", e.conv2, out);
  visit_conv(prefix + "/conv3", e.conv3, out);
}

}  // namespace detail

// Parameters updated by the pretraining gradient step: online branch + W_E.
template <typename T>
std::vector<ParamRef<T>> pretrain_trainable(NetworkState<T>& s) {
  std::vector<ParamRef<T>> out;
  detail::visit_encoder("online/encoder", s.online.encoder, out);
  detail::visit_mlp("online/projector", s.online.projector, out);
  detail::visit_mlp("online/predictor", s.online.predictor, out);
  out.push_back({"emotion/W_E", &s.emotion_matrix, false});
  return out;
}

template <typename T>
std::vector<ParamRef<T>> target_params(NetworkState<T>& s) {
  std::vector<ParamRef<T>> out;
  detail::visit_encoder("target/encoder", s.target.encoder, out);
  detail::visit_mlp("target/projector", s.target.projector, out);
  return out;
}

template <typename T>
std::vector<ParamRef<T>> online_ema_sources(NetworkState<T>& s) {
  std::vector<ParamRef<T>> out;
  detail::visit_encoder("online/encoder", s.online.encoder, out);
  detail::visit_mlp("online/projector", s.online.projector, out);
  return out;
}

template <typename T>
std::vector<ParamRef<T>> all_params(NetworkState<T>& s) {
  std::vector<ParamRef<T>> out = pretrain_trainable(s);
  auto t = target_params(s);
  out.insert(out.end(), t.begin(), t.end());
  if (s.classifier) detail::visit_dense("classifier", *s.classifier, out);
  return out;
}

// ---- EMA target maintenance (theta' <- tau*theta' + (1-tau)*theta) --------

template <typename T>
void ema_update(std::vector<ParamRef<T>> target, std::vector<ParamRef<T>> online, double tau) {
  if (tau < 0.0 || tau > 1.0) throw ConfigError("ema_update: tau outside [0,1]");
  if (target.size() != online.size()) throw ShapeError("ema_update: parameter list size mismatch");
  for (std::size_t i = 0; i < target.size(); ++i) {
    Tensor<T>& t = *target[i].tensor;
    const Tensor<T>& o = *online[i].tensor;
    check_same_shape(t, o, "ema_update");
    const T tt = static_cast<T>(tau);
    const T ot = static_cast<T>(1.0 - tau);
    for (std::size_t k = 0; k < t.numel(); ++k) t.raw()[k] = tt * t.raw()[k] + ot * o.raw()[k];
  }
}

template <typename T>
void ema_update(NetworkState<T>& s, double tau) {
  ema_update(target_params(s), online_ema_sources(s), tau);
}

// ---- tau schedule ----------------------------------------------------------

struct TauSchedule {
  double tau_base = 0.996;
  long total_steps = 1;
  bool constant = false;  // Eq-as-written mode: tau == tau_base throughout

  double tau_for_step(long step) const {
    if (step < 0 || step > total_steps)
      throw ConfigError("tau_for_step: step " + std::to_string(step) + " outside [0," +
                        std::to_string(total_steps) + "]");
    if (constant) return tau_base;
    const double ramp = (std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total_steps)) + 1.0) / 2.0;
    return 1.0 - (1.0 - tau_base) * ramp;
  }
};

// ---- tape-bound forwards ---------------------------------------------------

template <typename T>
struct BoundConv {
  Val<T> weight, bias;
};

template <typename T>
struct BoundDense {
  Val<T> weight, bias;
};

template <typename T>
struct BoundEncoder {
  BoundConv<T> conv1, conv2, conv3;
};

template <typename T>
struct BoundMlp {
  BoundDense<T> fc1, fc2;
  Val<T> norm_gain, norm_bias;
};

constexpr double kLayerNormEps = 1e-5;

namespace detail {

template <typename T>
BoundConv<T> bind(Tape<T>& tape, const ConvParams<T>& c, bool needs_grad) {
  return {tape.leaf(c.weight, needs_grad), tape.leaf(c.bias, needs_grad)};
}

template <typename T>
BoundDense<T> bind(Tape<T>& tape, const DenseParams<T>& d, bool needs_grad) {
  return {tape.leaf(d.weight, needs_grad), tape.leaf(d.bias, needs_grad)};
}

template <typename T>
BoundMlp<T> bind(Tape<T>& tape, const MlpParams<T>& m, bool needs_grad) {
  BoundMlp<T> b;
  b.fc1 = bind(tape, m.fc1, needs_grad);
  b.norm_gain = tape.leaf(m.norm.gain, needs_grad);
  b.norm_bias = tape.leaf(m.norm.bias, needs_grad);
  b.fc2 = bind(tape, m.fc2, needs_grad);
  return b;
}

}  // namespace detail

template <typename T>
BoundEncoder<T> bind_encoder(Tape<T>& tape, const EncoderParams<T>& e, bool needs_grad) {
  return {detail::bind(tape, e.conv1, needs_grad), detail::bind(tape, e.conv2, needs_grad),
          detail::bind(tape, e.conv3, needs_grad)};
}

template <typename T>
BoundMlp<T> bind_mlp(Tape<T>& tape, const MlpParams<T>& m, bool needs_grad) {
  return detail::bind(tape, m, needs_grad);
}

template <typename T>
Val<T> encoder_forward(Tape<T>& tape, const BoundEncoder<T>& e, Val<T> images) {
  Val<T> h = tape.relu(tape.conv2d(images, e.conv1.weight, e.conv1.bias, 2, 1));
  h = tape.relu(tape.conv2d(h, e.conv2.weight, e.conv2.bias, 2, 1));
  h = tape.relu(tape.conv2d(h, e.conv3.weight, e.conv3.bias, 2, 1));
  return tape.global_avg_pool(h);
}

template <typename T>
Val<T> mlp_forward(Tape<T>& tape, const BoundMlp<T>& m, Val<T> x) {
  Val<T> h = tape.linear(x, m.fc1.weight, m.fc1.bias);
  h = tape.layer_norm(h, m.norm_gain, m.norm_bias, static_cast<T>(kLayerNormEps));
  h = tape.relu(h);
  return tape.linear(h, m.fc2.weight, m.fc2.bias);
}

template <typename T>
Val<T> classifier_forward(Tape<T>& tape, const BoundDense<T>& c, Val<T> features) {
  return tape.linear(features, c.weight, c.bias);
}

// ---- value-level op surface (no gradient bookkeeping) ----------------------

template <typename T>
Tensor<T> encoder_forward(const EncoderParams<T>& e, const Tensor<T>& images) {
  Tape<T> tape;
  auto b = bind_encoder(tape, e, false);
  return tape.value(encoder_forward(tape, b, tape.input(images)));
}

template <typename T>
Tensor<T> projector_forward(const MlpParams<T>& m, const Tensor<T>& x) {
  Tape<T> tape;
  auto b = bind_mlp(tape, m, false);
  return tape.value(mlp_forward(tape, b, tape.input(x)));
}

template <typename T>
Tensor<T> predictor_forward(const MlpParams<T>& m, const Tensor<T>& x) {
  return projector_forward(m, x);
}

template <typename T>
Tensor<T> classifier_forward(const DenseParams<T>& c, const Tensor<T>& features) {
  Tape<T> tape;
  auto b = detail::bind(tape, c, false);
  return tape.value(tape.linear(tape.input(features), b.weight, b.bias));
}

// logits = v * W_E
template <typename T>
Tensor<T> emotion_logits(const Tensor<T>& we, const Tensor<T>& v) {
  Tape<T> tape;
  return tape.value(tape.matmul_cols(tape.input(v), tape.input(we)));
}

// v_bar[i] = v[i] - W_E[:, labels[i]]
template <typename T>
Tensor<T> subtract_emotion_vector(const Tensor<T>& v, const Tensor<T>& we,
                                  const std::vector<int>& labels) {
  Tape<T> tape;
  return tape.value(tape.subtract_label_columns(tape.input(v), tape.input(we), labels, true));
}

}  // namespace byel
