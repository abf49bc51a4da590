#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "byel/checkpoint.hpp"
#include "byel/config.hpp"
#include "byel/data.hpp"
#include "byel/losses.hpp"
#include "byel/nn.hpp"
#include "byel/optim.hpp"

namespace byel {

struct PretrainConfig {
  int epochs = 50;
  int batch_size = 64;
  double learning_rate = 0.05;
  double weight_decay = 1.5e-6;
  double tau_base = 0.996;
  bool tau_constant = false;
  OptimizerKind optimizer = OptimizerKind::kLars;
  std::uint64_t seed = 1;
  int checkpoint_every = 10;
  LossWeights weights;
  ByelFlags flags;
  AugmentConfig aug;
  std::set<int> extra_checkpoint_epochs;  // for the fractional-budget ablation

  void validate() const {
    if (epochs < 1) throw ConfigError("pretrain: epochs must be >= 1");
    if (batch_size < 2) throw ConfigError("pretrain: batch_size must be >= 2");
    if (learning_rate <= 0.0) throw ConfigError("pretrain: learning_rate must be > 0");
    if (optimizer == OptimizerKind::kAdam)
      throw ConfigError("pretrain: optimizer must be lars or momentum_sgd");
  }

  static PretrainConfig from_run_config(const RunConfig& cfg) {
    PretrainConfig p;
    p.epochs = cfg.pretrain_epochs;
    p.batch_size = cfg.pretrain_batch_size;
    p.learning_rate = cfg.pretrain_lr;
    p.weight_decay = cfg.weight_decay;
    p.tau_base = cfg.tau_base;
    p.tau_constant = cfg.tau_constant;
    p.optimizer = optimizer_from_name(cfg.pretrain_optimizer);
    p.seed = cfg.seed;
    p.checkpoint_every = cfg.checkpoint_every;
    p.weights = cfg.loss_weights();
    p.flags = cfg.byel_flags();
    p.aug = cfg.aug;
    return p;
  }
};

// One optimizer wrapper so pretraining code does not branch on the kind.
class PretrainOptimizer {
 public:
  PretrainOptimizer(OptimizerKind kind, double weight_decay);

  void step(const std::vector<ParamRef<float>>& params, const std::vector<Tensor<float>>& grads,
            double lr);
  NamedTensors state_tensors(const std::vector<ParamRef<float>>& params);

 private:
  OptimizerKind kind_;
  LarsOptimizer<float> lars_;
};

struct PretrainStepResult {
  LossBreakdown<float> loss;
  double tau = 0.0;
  double lr = 0.0;
};

// LARS learning-rate recipe: peak = learning_rate * batch/256, linear warmup
// over the first tenth of training, cosine decay to zero afterwards.
double pretrain_lr_for_step(const PretrainConfig& cfg, long step_index, long total_steps);

// One gradient step on online params + W_E, then one EMA update of the
// target branch. `rng` drives the per-image augmentation draws.
PretrainStepResult pretrain_step(NetworkState<float>& state, PretrainOptimizer& opt,
                                 const Tensor<float>& batch, const std::vector<int>& labels,
                                 DetRng& rng, const PretrainConfig& cfg,
                                 const TauSchedule& schedule);

struct PretrainRow {
  long step;
  int epoch;
  double tau;
  LossBreakdown<float> loss;
};

struct PretrainResult {
  std::vector<PretrainRow> rows;
  std::vector<std::pair<int, std::filesystem::path>> checkpoints;  // (epoch, dir)
  std::filesystem::path final_checkpoint;
  NetworkState<float> final_state;
  // encoder copies on the checkpoint epoch grid; feeds the budget ablation
  std::vector<std::pair<int, EncoderParams<float>>> encoder_snapshots;
};

struct PretrainSink {
  std::filesystem::path run_dir;  // empty: keep everything in memory
  std::string config_hash;
};

// Runs epochs * ceil(N / batch) steps; checkpoints on the epoch grid plus any
// extra epochs; metrics CSV row per step when a run_dir is given.
PretrainResult run_pretraining(const PretrainConfig& cfg, const ModelDims& dims,
                               const Tensor<float>& images, const std::vector<int>& labels,
                               const PretrainSink& sink,
                               const std::filesystem::path& resume_from = {});

std::vector<int> shuffled_indices(std::uint64_t seed, int epoch, int count);

void write_pretrain_csv(const std::vector<PretrainRow>& rows, const std::filesystem::path& path);

}  // namespace byel
