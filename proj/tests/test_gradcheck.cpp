#include <doctest.h>

#include "byel/losses.hpp"
#include "gradcheck_util.hpp"

using namespace byel;
using testutil::finite_difference_check;

namespace {

template <typename T>
Tensor<T> random_tensor(std::vector<int> shape, DetRng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.raw()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

}  // namespace

TEST_CASE("gradcheck: classify_loss") {
  DetRng rng(31);
  Tensor<double> logits = random_tensor<double>({4, 6}, rng, -2.0, 2.0);
  const std::vector<int> labels = {0, 5, 2, 2};

  Tape<double> tape;
  Val<double> lv = tape.param(logits);
  tape.backward(tape.softmax_cross_entropy(lv, labels));
  const Tensor<double> grad = tape.grad(lv);

  auto loss_fn = [&] { return classify_loss(logits, labels); };
  DetRng pick(131);
  const auto res = finite_difference_check({{&logits, &grad}}, loss_fn, pick, 12);
  CHECK_MESSAGE(res.max_rel_error < 1e-3, res.worst);
}

TEST_CASE("gradcheck: byol_loss away from zero-norm rows") {
  DetRng rng(32);
  Tensor<double> a = random_tensor<double>({4, 8}, rng, 0.3, 1.2);
  Tensor<double> b = random_tensor<double>({4, 8}, rng, 0.3, 1.2);

  Tape<double> tape;
  Val<double> av = tape.param(a);
  tape.backward(tape.byol_alignment(av, tape.input(b)));
  const Tensor<double> grad = tape.grad(av);

  auto loss_fn = [&] { return byol_loss(a, b); };
  DetRng pick(132);
  const auto res = finite_difference_check({{&a, &grad}}, loss_fn, pick, 12);
  CHECK_MESSAGE(res.max_rel_error < 1e-3, res.worst);
}

TEST_CASE("gradcheck: orthogonal_loss away from the L1 kink") {
  DetRng rng(33);
  Tensor<double> w = random_tensor<double>({8, 6}, rng);

  // subgradient check is only meaningful off the kink
  REQUIRE(testutil::min_abs_gram_deviation(w) > 1e-3);

  Tape<double> tape;
  Val<double> wv = tape.param(w);
  tape.backward(tape.l1_orthogonality(wv));
  const Tensor<double> grad = tape.grad(wv);

  auto loss_fn = [&] { return orthogonal_loss(w); };
  DetRng pick(133);
  const auto res = finite_difference_check({{&w, &grad}}, loss_fn, pick, 12);
  CHECK_MESSAGE(res.max_rel_error < 1e-3, res.worst);
}

TEST_CASE("gradcheck: full two-view graph on a 4-example batch") {
  const ModelDims dims;
  NetworkState<double> state = NetworkState<double>::init(dims, 34);
  REQUIRE(testutil::keep_off_l1_kink(state.emotion_matrix, 34));
  DetRng rng(35);
  const Tensor<double> v1 = random_tensor<double>({4, 1, 16, 16}, rng, 0.0, 1.0);
  const Tensor<double> v2 = random_tensor<double>({4, 1, 16, 16}, rng, 0.0, 1.0);
  const std::vector<int> labels = {0, 2, 3, 5};
  const LossWeights weights;

  // differentiable-everywhere mode so FD matches for W_E as well
  ByelFlags flags;
  flags.stop_grad_emotion = false;

  auto params = pretrain_trainable(state);
  auto loss_fn = [&] {
    Tape<double> tape;
    auto g = build_pretrain_graph(tape, state, v1, v2, labels, weights, flags);
    return tape.value(g.losses.total).at(0);
  };

  // analytic gradients once, at the base point
  std::vector<Tensor<double>> grads;
  {
    Tape<double> tape;
    auto g = build_pretrain_graph(tape, state, v1, v2, labels, weights, flags);
    tape.backward(g.losses.total);
    auto grad_of = [&](Val<double> v) {
      return tape.grad_touched(v) ? tape.grad(v) : Tensor<double>::zeros(tape.value(v).shape());
    };
    for (const auto& c : {g.encoder.conv1, g.encoder.conv2, g.encoder.conv3}) {
      grads.push_back(grad_of(c.weight));
      grads.push_back(grad_of(c.bias));
    }
    for (const auto& m : {g.projector, g.predictor}) {
      grads.push_back(grad_of(m.fc1.weight));
      grads.push_back(grad_of(m.fc1.bias));
      grads.push_back(grad_of(m.norm_gain));
      grads.push_back(grad_of(m.norm_bias));
      grads.push_back(grad_of(m.fc2.weight));
      grads.push_back(grad_of(m.fc2.bias));
    }
    grads.push_back(grad_of(g.we));
  }
  REQUIRE(grads.size() == params.size());

  std::vector<std::pair<Tensor<double>*, const Tensor<double>*>> pairs;
  for (std::size_t i = 0; i < params.size(); ++i) pairs.emplace_back(params[i].tensor, &grads[i]);

  DetRng pick(135);
  const auto res = finite_difference_check(pairs, loss_fn, pick, 16);
  CHECK_MESSAGE(res.max_rel_error < 1e-3, res.worst);
}

TEST_CASE("gradcheck: stop-gradient keeps W_E out of the bootstrap path") {
  const ModelDims dims;
  NetworkState<double> state = NetworkState<double>::init(dims, 36);
  DetRng rng(37);
  const Tensor<double> v1 = random_tensor<double>({2, 1, 16, 16}, rng, 0.0, 1.0);
  const Tensor<double> v2 = random_tensor<double>({2, 1, 16, 16}, rng, 0.0, 1.0);
  const std::vector<int> labels = {1, 4};

  LossWeights byol_only;
  byol_only.classify = 0.0;
  byol_only.orthogonal = 0.0;

  ByelFlags stop;
  stop.stop_grad_emotion = true;
  Tape<double> tape;
  auto g = build_pretrain_graph(tape, state, v1, v2, labels, byol_only, stop);
  tape.backward(g.losses.total);
  // with classify/orth off and stop-grad on, W_E receives nothing
  bool nonzero = false;
  if (tape.grad_touched(g.we))
    for (double x : tape.grad(g.we).raw()) nonzero = nonzero || x != 0.0;
  CHECK_FALSE(nonzero);

  ByelFlags flow;
  flow.stop_grad_emotion = false;
  Tape<double> tape2;
  auto g2 = build_pretrain_graph(tape2, state, v1, v2, labels, byol_only, flow);
  tape2.backward(g2.losses.total);
  bool nonzero2 = false;
  REQUIRE(tape2.grad_touched(g2.we));
  for (double x : tape2.grad(g2.we).raw()) nonzero2 = nonzero2 || x != 0.0;
  CHECK(nonzero2);
}

TEST_CASE("gradcheck: classify restricted to W_E leaves the online branch alone") {
  const ModelDims dims;
  NetworkState<double> state = NetworkState<double>::init(dims, 38);
  DetRng rng(39);
  const Tensor<double> v1 = random_tensor<double>({2, 1, 16, 16}, rng, 0.0, 1.0);
  const Tensor<double> v2 = random_tensor<double>({2, 1, 16, 16}, rng, 0.0, 1.0);
  const std::vector<int> labels = {3, 0};

  LossWeights classify_only;
  classify_only.byol = 0.0;
  // byol weight 0 still computes the alignment terms (they are part of the
  // breakdown) but contributes no gradient
  ByelFlags restricted;
  restricted.classify_full_backprop = false;

  Tape<double> tape;
  auto g = build_pretrain_graph(tape, state, v1, v2, labels, classify_only, restricted);
  tape.backward(g.losses.total);

  bool encoder_touched = false;
  if (tape.grad_touched(g.encoder.conv1.weight))
    for (double x : tape.grad(g.encoder.conv1.weight).raw())
      encoder_touched = encoder_touched || x != 0.0;
  CHECK_FALSE(encoder_touched);
  REQUIRE(tape.grad_touched(g.we));
  bool we_touched = false;
  for (double x : tape.grad(g.we).raw()) we_touched = we_touched || x != 0.0;
  CHECK(we_touched);
}
