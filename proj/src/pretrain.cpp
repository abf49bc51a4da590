#include "byel/pretrain.hpp"

#include <cstdio>
#include <fstream>

namespace byel {

PretrainOptimizer::PretrainOptimizer(OptimizerKind kind, double weight_decay) : kind_(kind) {
  typename LarsOptimizer<float>::Options lo;
  lo.weight_decay = weight_decay;
  lo.force_trust_one = (kind == OptimizerKind::kMomentumSgd);
  lars_ = LarsOptimizer<float>(lo);
}

void PretrainOptimizer::step(const std::vector<ParamRef<float>>& params,
                             const std::vector<Tensor<float>>& grads, double lr) {
  lars_.step(params, grads, lr);
}

NamedTensors PretrainOptimizer::state_tensors(const std::vector<ParamRef<float>>& params) {
  NamedTensors out;
  for (auto& [path, tensor] : lars_.state_tensors(params)) out.emplace_back(path, tensor);
  return out;
}

double pretrain_lr_for_step(const PretrainConfig& cfg, long step_index, long total_steps) {
  const double peak = cfg.learning_rate * cfg.batch_size / 256.0;
  const long warmup = std::max<long>(1, total_steps / 10);
  if (step_index < warmup) return peak * static_cast<double>(step_index + 1) / warmup;
  if (total_steps <= warmup) return peak;
  const double progress =
      static_cast<double>(step_index - warmup) / static_cast<double>(total_steps - warmup);
  return peak * (std::cos(M_PI * progress) + 1.0) / 2.0;
}

PretrainStepResult pretrain_step(NetworkState<float>& state, PretrainOptimizer& opt,
                                 const Tensor<float>& batch, const std::vector<int>& labels,
                                 DetRng& rng, const PretrainConfig& cfg,
                                 const TauSchedule& schedule) {
  const int n = batch.dim(0);
  if (n != static_cast<int>(labels.size()))
    throw ShapeError("pretrain_step: batch/label count mismatch");
  const int size = batch.dim(2);
  const std::size_t img_elems = static_cast<std::size_t>(batch.dim(1)) * size * batch.dim(3);

  // two augmented views per image
  Tensor<float> v1(batch.shape()), v2(batch.shape());
  Tensor<float> img({batch.dim(1), size, batch.dim(3)});
  for (int i = 0; i < n; ++i) {
    std::copy_n(batch.data() + i * img_elems, img_elems, img.data());
    ViewPair views = augment_pair(img, rng, cfg.aug);
    std::copy(views.view1.raw().begin(), views.view1.raw().end(), v1.data() + i * img_elems);
    std::copy(views.view2.raw().begin(), views.view2.raw().end(), v2.data() + i * img_elems);
  }

  Tape<float> tape;
  PretrainGraph<float> graph =
      build_pretrain_graph(tape, state, v1, v2, labels, cfg.weights, cfg.flags);
  PretrainStepResult result;
  result.loss = breakdown_from(tape, graph.losses);
  if (!result.loss.finite())
    throw NumericError("pretrain_step: non-finite loss at step " + std::to_string(state.step + 1));

  tape.backward(graph.losses.total);

  // gradients in pretrain_trainable order: encoder, projector, predictor, W_E
  auto params = pretrain_trainable(state);
  std::vector<Tensor<float>> grads;
  grads.reserve(params.size());
  auto grad_of = [&](Val<float> v) -> Tensor<float> {
    if (tape.grad_touched(v)) return tape.grad(v);
    return Tensor<float>::zeros(tape.value(v).shape());
  };
  auto push_conv = [&](const BoundConv<float>& c) {
    grads.push_back(grad_of(c.weight));
    grads.push_back(grad_of(c.bias));
  };
  auto push_mlp = [&](const BoundMlp<float>& m) {
    grads.push_back(grad_of(m.fc1.weight));
    grads.push_back(grad_of(m.fc1.bias));
    grads.push_back(grad_of(m.norm_gain));
    grads.push_back(grad_of(m.norm_bias));
    grads.push_back(grad_of(m.fc2.weight));
    grads.push_back(grad_of(m.fc2.bias));
  };
  push_conv(graph.encoder.conv1);
  push_conv(graph.encoder.conv2);
  push_conv(graph.encoder.conv3);
  push_mlp(graph.projector);
  push_mlp(graph.predictor);
  grads.push_back(grad_of(graph.we));
  if (grads.size() != params.size())
    throw ShapeError("pretrain_step: gradient/parameter list mismatch");

  result.lr = pretrain_lr_for_step(cfg, state.step, schedule.total_steps);
  opt.step(params, grads, result.lr);

  state.step += 1;
  result.tau = schedule.tau_for_step(state.step);
  ema_update(state, result.tau);
  return result;
}

std::vector<int> shuffled_indices(std::uint64_t seed, int epoch, int count) {
  std::vector<int> idx(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) idx[static_cast<std::size_t>(i)] = i;
  DetRng rng(mix_key(seed, rngtag::kShuffle, static_cast<std::uint64_t>(epoch)));
  rng.shuffle(idx.begin(), idx.end());
  return idx;
}

void write_pretrain_csv(const std::vector<PretrainRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics csv: " + path.string());
  out << "step,epoch,tau,byol,byol_swapped,classify,classify_swapped,orthogonal,total\n";
  char buf[320];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%ld,%d,%.17g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.step,
                  r.epoch, r.tau, r.loss.byol, r.loss.byol_swapped, r.loss.classify,
                  r.loss.classify_swapped, r.loss.orthogonal, r.loss.total);
    out << buf;
  }
  if (!out) throw IoError("metrics csv write failed: " + path.string());
}

PretrainResult run_pretraining(const PretrainConfig& cfg, const ModelDims& dims,
                               const Tensor<float>& images, const std::vector<int>& labels,
                               const PretrainSink& sink, const std::filesystem::path& resume_from) {
  cfg.validate();
  const int n = images.dim(0);
  if (n < cfg.batch_size)
    throw ConfigError("pretrain: dataset smaller than one batch (" + std::to_string(n) + " < " +
                      std::to_string(cfg.batch_size) + ")");
  if (n != static_cast<int>(labels.size())) throw ShapeError("pretrain: image/label count mismatch");

  const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const long total_steps = static_cast<long>(steps_per_epoch) * cfg.epochs;
  TauSchedule schedule{cfg.tau_base, total_steps, cfg.tau_constant};

  NetworkState<float> state = NetworkState<float>::init(dims, cfg.seed);
  PretrainOptimizer opt(cfg.optimizer, cfg.weight_decay);
  int start_epoch = 0;
  if (!resume_from.empty()) {
    // optimizer buffers are restored alongside parameters
    CheckpointMeta meta;
    state = load_pretrain_checkpoint(resume_from, {}, &meta);
    NamedTensors opt_dest = opt.state_tensors(pretrain_trainable(state));
    load_checkpoint_tensors(resume_from, opt_dest);
    start_epoch = meta.epoch;
    if (start_epoch >= cfg.epochs)
      throw ConfigError("pretrain resume: checkpoint already at epoch " + std::to_string(start_epoch));
  }

  PretrainResult result;
  const bool persist = !sink.run_dir.empty();
  const std::filesystem::path ckpt_root = sink.run_dir / "checkpoints";
  const std::filesystem::path metrics_dir = sink.run_dir / "metrics";
  if (persist) {
    std::filesystem::create_directories(ckpt_root);
    std::filesystem::create_directories(metrics_dir);
  }

  const std::size_t img_elems =
      static_cast<std::size_t>(images.dim(1)) * images.dim(2) * images.dim(3);

  std::filesystem::path last_good;
  for (int epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<int> order = shuffled_indices(cfg.seed, epoch, n);
    for (int s = 0; s < steps_per_epoch; ++s) {
      const int begin = s * cfg.batch_size;
      const int count = std::min(cfg.batch_size, n - begin);
      Tensor<float> batch({count, images.dim(1), images.dim(2), images.dim(3)});
      std::vector<int> batch_labels(static_cast<std::size_t>(count));
      for (int i = 0; i < count; ++i) {
        const int src = order[static_cast<std::size_t>(begin + i)];
        std::copy_n(images.data() + static_cast<std::size_t>(src) * img_elems, img_elems,
                    batch.data() + static_cast<std::size_t>(i) * img_elems);
        batch_labels[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(src)];
      }
      // augmentation stream is keyed by the global step for resumability
      DetRng rng(mix_key(cfg.seed, rngtag::kAugment, static_cast<std::uint64_t>(state.step)));
      PretrainStepResult step_result;
      try {
        step_result = pretrain_step(state, opt, batch, batch_labels, rng, cfg, schedule);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + "; last good checkpoint: " +
                           (last_good.empty() ? "<none>" : last_good.string()));
      }
      result.rows.push_back({state.step, epoch, step_result.tau, step_result.loss});
    }

    const bool grid_hit = (epoch % cfg.checkpoint_every == 0) || epoch == cfg.epochs ||
                          cfg.extra_checkpoint_epochs.count(epoch) > 0;
    if (grid_hit) {
      result.encoder_snapshots.emplace_back(epoch, state.online.encoder);
      if (persist) {
        char name[48];
        std::snprintf(name, sizeof(name), "pretrain_ep%04d", epoch);
        const std::filesystem::path dir = ckpt_root / name;
        NamedTensors opt_state = opt.state_tensors(pretrain_trainable(state));
        save_pretrain_checkpoint(dir, state, epoch, images.dim(2), sink.config_hash, opt_state);
        result.checkpoints.emplace_back(epoch, dir);
        last_good = dir;
        if (epoch == cfg.epochs) result.final_checkpoint = dir;
      }
    }
  }

  result.final_state = state;
  if (persist) write_pretrain_csv(result.rows, metrics_dir / "pretrain.csv");
  return result;
}

}  // namespace byel
