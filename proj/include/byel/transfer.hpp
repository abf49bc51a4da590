#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "byel/checkpoint.hpp"
#include "byel/config.hpp"
#include "byel/eval.hpp"
#include "byel/nn.hpp"
#include "byel/optim.hpp"

namespace byel {

struct TransferConfig {
  int epochs = 40;
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  bool finetune_encoder = true;
  AdamOptimizer<float>::Options adam;
  int eval_batch_size = 128;
  MacroRule macro_rule = MacroRule::kZeroRule;

  void validate() const {
    if (epochs < 1) throw ConfigError("transfer: epochs must be >= 1");
    if (batch_size < 2) throw ConfigError("transfer: batch_size must be >= 2");
    if (learning_rate <= 0.0) throw ConfigError("transfer: learning_rate must be > 0");
  }

  static TransferConfig from_run_config(const RunConfig& cfg) {
    TransferConfig t;
    t.epochs = cfg.transfer_epochs;
    t.batch_size = cfg.transfer_batch_size;
    t.learning_rate = cfg.transfer_lr;
    t.seed = cfg.seed;
    t.finetune_encoder = cfg.finetune_encoder;
    t.eval_batch_size = cfg.eval_batch_size;
    t.macro_rule = cfg.macro_rule == "zero" ? MacroRule::kZeroRule : MacroRule::kSkipAbsent;
    return t;
  }
};

// One Adam step on classifier (and encoder unless frozen) minimizing
// cross-entropy of c(h(x)).
float transfer_step(TransferModel& model, AdamOptimizer<float>& opt, const Tensor<float>& batch,
                    const std::vector<int>& labels, const TransferConfig& cfg);

// Earliest index of the maximum; the model-selection rule.
int select_best(const std::vector<double>& series);

struct TransferRow {
  int epoch;
  double train_loss;
  double val_macro_f1;
  std::array<double, kNumClasses> per_class_f1;
};

struct TransferResult {
  std::vector<TransferRow> rows;
  int best_epoch = 0;
  double best_macro_f1 = 0.0;
  TransferModel best_model;
  std::filesystem::path best_checkpoint;  // set when a run_dir is given
};

struct TransferSink {
  std::filesystem::path run_dir;
  std::string config_hash;
};

// Trains on the source set and selects the epoch with the best validation
// macro F1 on the target set.
TransferResult run_transfer(const TransferConfig& cfg, const ModelDims& dims,
                            const EncoderParams<float>& pretrained_encoder,
                            const Tensor<float>& train_images, const std::vector<int>& train_labels,
                            const Tensor<float>& val_images, const std::vector<int>& val_labels,
                            const TransferSink& sink);

void write_transfer_csv(const std::vector<TransferRow>& rows, const std::filesystem::path& path);
void write_best_pointer(const TransferResult& result, const std::filesystem::path& path);

}  // namespace byel
