#include <doctest.h>

#include <cmath>
#include <cstring>

#include "byel/nn.hpp"

using namespace byel;

namespace {

// Straight-line re-computation of the encoder/MLP forward passes with plain
// nested loops; kept independent of the tape implementation on purpose.
template <typename T>
Tensor<T> naive_conv_s2p1(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const int N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int Ho = (H + 2 - kh) / 2 + 1, Wo = (W + 2 - kw) / 2 + 1;
  Tensor<T> out({N, Cout, Ho, Wo});
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Cout; ++co)
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow) {
          double acc = static_cast<double>(b.at(co));
          for (int ci = 0; ci < Cin; ++ci)
            for (int dh = 0; dh < kh; ++dh)
              for (int dw = 0; dw < kw; ++dw) {
                const int ih = oh * 2 - 1 + dh, iw = ow * 2 - 1 + dw;
                if (ih >= 0 && ih < H && iw >= 0 && iw < W)
                  acc += static_cast<double>(x.at(n, ci, ih, iw)) *
                         static_cast<double>(w.at(co, ci, dh, dw));
              }
          out.at(n, co, oh, ow) = static_cast<T>(acc);
        }
  return out;
}

template <typename T>
void naive_relu(Tensor<T>& t) {
  for (auto& v : t.raw()) v = v > T(0) ? v : T(0);
}

template <typename T>
Tensor<T> naive_gap(const Tensor<T>& x) {
  const int N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<T> out({N, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int i = 0; i < HW; ++i)
        acc += static_cast<double>(x.raw()[(static_cast<std::size_t>(n) * C + c) * HW + i]);
      out.at(n, c) = static_cast<T>(acc / HW);
    }
  return out;
}

template <typename T>
Tensor<T> naive_linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const int N = x.dim(0), In = x.dim(1), Out = w.dim(0);
  Tensor<T> out({N, Out});
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < Out; ++o) {
      double acc = static_cast<double>(b.at(o));
      for (int i = 0; i < In; ++i)
        acc += static_cast<double>(x.at(n, i)) * static_cast<double>(w.at(o, i));
      out.at(n, o) = static_cast<T>(acc);
    }
  return out;
}

template <typename T>
Tensor<T> naive_layer_norm(const Tensor<T>& x, const Tensor<T>& g, const Tensor<T>& b) {
  const int N = x.dim(0), D = x.dim(1);
  Tensor<T> out({N, D});
  for (int n = 0; n < N; ++n) {
    double mu = 0.0;
    for (int d = 0; d < D; ++d) mu += static_cast<double>(x.at(n, d));
    mu /= D;
    double var = 0.0;
    for (int d = 0; d < D; ++d) {
      const double c = static_cast<double>(x.at(n, d)) - mu;
      var += c * c;
    }
    var /= D;
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    for (int d = 0; d < D; ++d)
      out.at(n, d) = static_cast<T>(static_cast<double>(g.at(d)) *
                                        (static_cast<double>(x.at(n, d)) - mu) * is +
                                    static_cast<double>(b.at(d)));
  }
  return out;
}

template <typename T>
Tensor<T> naive_mlp(const MlpParams<T>& m, const Tensor<T>& x) {
  Tensor<T> h = naive_linear(x, m.fc1.weight, m.fc1.bias);
  h = naive_layer_norm(h, m.norm.gain, m.norm.bias);
  naive_relu(h);
  return naive_linear(h, m.fc2.weight, m.fc2.bias);
}

template <typename T>
Tensor<T> random_tensor(std::vector<int> shape, DetRng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.raw()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

double max_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
  REQUIRE(a.same_shape(b));
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.raw()[i]) - b.raw()[i]));
  return m;
}

}  // namespace

TEST_CASE("encoder: zero final conv gives zero features") {
  const ModelDims dims;
  DetRng rng(1);
  EncoderParams<float> enc = EncoderParams<float>::init(dims, rng);
  enc.conv3.weight.fill(0.0f);
  enc.conv3.bias.fill(0.0f);
  const Tensor<float> batch = random_tensor<float>({2, 1, 32, 32}, rng, 0.0, 1.0);
  const Tensor<float> features = encoder_forward(enc, batch);
  for (float v : features.raw()) CHECK(v == 0.0f);
}

TEST_CASE("encoder: batch independence is exact") {
  const ModelDims dims;
  DetRng rng(2);
  const EncoderParams<float> enc = EncoderParams<float>::init(dims, rng);
  const Tensor<float> batch = random_tensor<float>({8, 1, 32, 32}, rng, 0.0, 1.0);

  const Tensor<float> all = encoder_forward(enc, batch);
  const int F = all.dim(1);
  Tensor<float> one({1, 1, 32, 32});
  std::copy_n(batch.data() + 3 * 32 * 32, 32 * 32, one.data());
  const Tensor<float> single = encoder_forward(enc, one);
  for (int f = 0; f < F; ++f) CHECK(single.at(0, f) == all.at(3, f));
}

TEST_CASE("encoder: matches the straight-line forward oracle") {
  const ModelDims dims;
  DetRng rng(3);
  const EncoderParams<float> enc = EncoderParams<float>::init(dims, rng);
  const Tensor<float> batch = random_tensor<float>({4, 1, 32, 32}, rng, 0.0, 1.0);

  Tensor<float> h = naive_conv_s2p1(batch, enc.conv1.weight, enc.conv1.bias);
  naive_relu(h);
  h = naive_conv_s2p1(h, enc.conv2.weight, enc.conv2.bias);
  naive_relu(h);
  h = naive_conv_s2p1(h, enc.conv3.weight, enc.conv3.bias);
  naive_relu(h);
  const Tensor<float> expected = naive_gap(h);

  const Tensor<float> got = encoder_forward(enc, batch);
  CHECK(max_abs_diff(got, expected) < 1e-6);
}

TEST_CASE("projector/predictor: zero weights, batch independence, oracle") {
  const ModelDims dims;
  DetRng rng(4);
  MlpParams<float> proj = MlpParams<float>::init(dims.feature_width, dims.hidden, dims.embed, rng);
  const Tensor<float> x = random_tensor<float>({6, dims.feature_width}, rng);

  SUBCASE("zero second layer zeroes the output") {
    proj.fc2.weight.fill(0.0f);
    proj.fc2.bias.fill(0.0f);
    const Tensor<float> z = projector_forward(proj, x);
    for (float v : z.raw()) CHECK(v == 0.0f);
  }

  SUBCASE("single row equals the row inside a batch") {
    const Tensor<float> all = projector_forward(proj, x);
    Tensor<float> one({1, dims.feature_width});
    std::copy_n(x.data() + 2 * dims.feature_width, dims.feature_width, one.data());
    const Tensor<float> single = projector_forward(proj, one);
    for (int d = 0; d < dims.embed; ++d) CHECK(single.at(0, d) == all.at(2, d));
  }

  SUBCASE("matches the naive MLP oracle") {
    const Tensor<float> got = projector_forward(proj, x);
    const Tensor<float> expected = naive_mlp(proj, x);
    CHECK(max_abs_diff(got, expected) < 1e-6);

    MlpParams<float> pred = MlpParams<float>::init(dims.embed, dims.hidden, dims.embed, rng);
    const Tensor<float> z = random_tensor<float>({6, dims.embed}, rng);
    CHECK(max_abs_diff(predictor_forward(pred, z), naive_mlp(pred, z)) < 1e-6);
  }
}

TEST_CASE("forward passes are batch-order equivariant") {
  const ModelDims dims;
  DetRng rng(14);
  const EncoderParams<float> enc = EncoderParams<float>::init(dims, rng);
  const Tensor<float> batch = random_tensor<float>({5, 1, 32, 32}, rng, 0.0, 1.0);
  const Tensor<float> base = encoder_forward(enc, batch);

  const std::vector<int> perm = {4, 2, 0, 3, 1};
  Tensor<float> shuffled(batch.shape());
  for (int i = 0; i < 5; ++i)
    std::copy_n(batch.data() + perm[static_cast<std::size_t>(i)] * 32 * 32, 32 * 32,
                shuffled.data() + i * 32 * 32);
  const Tensor<float> out = encoder_forward(enc, shuffled);
  for (int i = 0; i < 5; ++i)
    for (int f = 0; f < dims.feature_width; ++f)
      CHECK(out.at(i, f) == base.at(perm[static_cast<std::size_t>(i)], f));
}

TEST_CASE("emotion_logits: identity matrix and zero input") {
  Tensor<float> we({6, 6});
  for (int i = 0; i < 6; ++i) we.at(i, i) = 1.0f;

  Tensor<float> v({1, 6});
  v.at(0, 2) = 1.0f;  // e_2
  const Tensor<float> logits = emotion_logits(we, v);
  for (int c = 0; c < 6; ++c) CHECK(logits.at(0, c) == (c == 2 ? 1.0f : 0.0f));

  Tensor<float> zero({3, 6});
  const Tensor<float> zl = emotion_logits(we, zero);
  for (float x : zl.raw()) CHECK(x == 0.0f);
}

TEST_CASE("emotion_logits: double-loop oracle") {
  DetRng rng(5);
  const Tensor<float> we = random_tensor<float>({32, 6}, rng);
  const Tensor<float> v = random_tensor<float>({7, 32}, rng);
  const Tensor<float> got = emotion_logits(we, v);
  for (int n = 0; n < 7; ++n)
    for (int c = 0; c < 6; ++c) {
      double acc = 0.0;
      for (int d = 0; d < 32; ++d)
        acc += static_cast<double>(v.at(n, d)) * static_cast<double>(we.at(d, c));
      CHECK(std::abs(static_cast<double>(got.at(n, c)) - acc) < 1e-6);
    }
}

TEST_CASE("subtract_emotion_vector: unit cases and label semantics") {
  Tensor<float> we({6, 6});
  for (int i = 0; i < 6; ++i) we.at(i, i) = 1.0f;

  Tensor<float> v({1, 6});
  v.at(0, 3) = 1.0f;  // e_3 with label 3 cancels exactly
  const Tensor<float> out = subtract_emotion_vector(v, we, {3});
  for (float x : out.raw()) CHECK(x == 0.0f);

  // Fear carries index 2: subtracting it from zero exposes minus column 2
  Tensor<float> zero({1, 6});
  CHECK(std::string(emotion_name(2)) == "Fear");
  const Tensor<float> fear = subtract_emotion_vector(zero, we, {2});
  for (int d = 0; d < 6; ++d) CHECK(fear.at(0, d) == (d == 2 ? -1.0f : 0.0f));
}

TEST_CASE("subtract_emotion_vector: elementwise oracle and inverse form") {
  DetRng rng(6);
  const Tensor<float> we = random_tensor<float>({32, 6}, rng);
  const Tensor<float> v = random_tensor<float>({9, 32}, rng);
  std::vector<int> labels;
  for (int i = 0; i < 9; ++i) labels.push_back(rng.uniform_int(0, 5));

  const Tensor<float> got = subtract_emotion_vector(v, we, labels);
  for (int n = 0; n < 9; ++n)
    for (int d = 0; d < 32; ++d) {
      const double expected = static_cast<double>(v.at(n, d)) -
                              static_cast<double>(we.at(d, labels[static_cast<std::size_t>(n)]));
      CHECK(std::abs(static_cast<double>(got.at(n, d)) - expected) < 1e-7);
      // assertable linearity form: subtract(v,W,l) + W[:,l] == v
      const float back = got.at(n, d) + we.at(d, labels[static_cast<std::size_t>(n)]);
      CHECK(std::abs(back - v.at(n, d)) < 1e-6f);
    }

  CHECK_THROWS_AS(subtract_emotion_vector(v, we, {0, 1}), ShapeError);
  CHECK_THROWS_AS(subtract_emotion_vector(v, we, std::vector<int>(9, 9)), ConfigError);
}

TEST_CASE("classifier: zero params, bias-only, affine oracle") {
  const int F = 64;
  DenseParams<float> c;
  c.weight = Tensor<float>({6, F});
  c.bias = Tensor<float>({6});
  DetRng rng(7);
  const Tensor<float> y = random_tensor<float>({4, F}, rng);

  const Tensor<float> zero_logits = classifier_forward(c, y);
  for (float v : zero_logits.raw()) CHECK(v == 0.0f);

  for (int i = 0; i < 6; ++i) c.bias.at(i) = static_cast<float>(i) - 2.5f;
  const Tensor<float> bias_logits = classifier_forward(c, y);
  for (int n = 0; n < 4; ++n)
    for (int i = 0; i < 6; ++i) CHECK(bias_logits.at(n, i) == c.bias.at(i));

  for (auto& v : c.weight.raw()) v = static_cast<float>(rng.uniform(-0.5, 0.5));
  const Tensor<float> got = classifier_forward(c, y);
  const Tensor<float> expected = naive_linear(y, c.weight, c.bias);
  CHECK(max_abs_diff(got, expected) < 1e-6);
}

TEST_CASE("ema_update: endpoints and scalar arithmetic") {
  const ModelDims dims;
  NetworkState<float> s = NetworkState<float>::init(dims, 9);

  // nudge online away from target first
  for (auto& p : online_ema_sources(s))
    for (auto& v : p.tensor->raw()) v += 0.25f;

  NetworkState<float> tau1 = s;
  ema_update(tau1, 1.0);
  for (std::size_t i = 0; i < target_params(s).size(); ++i)
    CHECK(target_params(tau1)[i].tensor->raw() == target_params(s)[i].tensor->raw());

  NetworkState<float> tau0 = s;
  ema_update(tau0, 0.0);
  auto t0 = target_params(tau0);
  auto o0 = online_ema_sources(tau0);
  for (std::size_t i = 0; i < t0.size(); ++i) CHECK(t0[i].tensor->raw() == o0[i].tensor->raw());

  // p' = 1, p = 0, tau = 0.99 -> 0.99
  Tensor<float> tp = Tensor<float>::full({1}, 1.0f);
  Tensor<float> op = Tensor<float>::full({1}, 0.0f);
  ema_update<float>({{"t", &tp, false}}, {{"o", &op, false}}, 0.99);
  CHECK(tp.at(0) == doctest::Approx(0.99f).epsilon(1e-7));

  CHECK_THROWS_AS(ema_update(s, 1.5), ConfigError);
  CHECK_THROWS_AS(ema_update(s, -0.1), ConfigError);
}

TEST_CASE("ema preserves shapes") {
  const ModelDims dims;
  NetworkState<float> s = NetworkState<float>::init(dims, 10);
  std::vector<std::vector<int>> before;
  for (auto& p : target_params(s)) before.push_back(p.tensor->shape());
  ema_update(s, 0.5);
  auto after = target_params(s);
  for (std::size_t i = 0; i < after.size(); ++i) CHECK(after[i].tensor->shape() == before[i]);
}

TEST_CASE("tau schedule: endpoints, midpoint, monotonicity") {
  TauSchedule sched{0.996, 1000, false};
  CHECK(sched.tau_for_step(0) == doctest::Approx(0.996));
  CHECK(sched.tau_for_step(1000) == doctest::Approx(1.0));
  CHECK(sched.tau_for_step(500) == doctest::Approx(0.998).epsilon(1e-12));

  double prev = 0.0;
  for (long s = 0; s <= 1000; s += 50) {
    const double tau = sched.tau_for_step(s);
    CHECK(tau >= prev);
    CHECK(tau >= 0.996);
    CHECK(tau <= 1.0);
    prev = tau;
  }

  TauSchedule constant{0.5, 100, true};
  CHECK(constant.tau_for_step(0) == 0.5);
  CHECK(constant.tau_for_step(100) == 0.5);

  CHECK_THROWS_AS(sched.tau_for_step(-1), ConfigError);
  CHECK_THROWS_AS(sched.tau_for_step(1001), ConfigError);
}

TEST_CASE("init_classifier: deterministic, zero bias, bounded weights") {
  const int F = 64;
  const DenseParams<float> a = init_classifier<float>(F, 77);
  const DenseParams<float> b = init_classifier<float>(F, 77);
  CHECK(a.weight.raw() == b.weight.raw());

  const DenseParams<float> c = init_classifier<float>(F, 78);
  CHECK(a.weight.raw() != c.weight.raw());

  for (float v : a.bias.raw()) CHECK(v == 0.0f);
  const float bound = 1.0f / std::sqrt(static_cast<float>(F));
  for (float v : a.weight.raw()) {
    CHECK(v >= -bound);
    CHECK(v <= bound);
  }
}
