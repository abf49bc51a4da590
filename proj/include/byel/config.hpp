#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "byel/data.hpp"
#include "byel/losses.hpp"
#include "byel/optim.hpp"

namespace byel {

// Flat key-value configuration with two named profiles. Resolution order:
// profile defaults < config file keys < explicit CLI overrides.
struct RunConfig {
  std::string profile = "desk";  // "desk" | "paper"
  std::uint64_t seed = 1;
  std::string data_root = "data";
  std::string run_dir = "runs/default";

  ToySpec toy;
  AugmentConfig aug;

  // pretraining (phase 1)
  int pretrain_epochs = 50;
  int pretrain_batch_size = 64;
  double pretrain_lr = 0.05;
  double weight_decay = 1.5e-6;
  double tau_base = 0.996;
  bool tau_constant = false;
  std::string pretrain_optimizer = "lars";  // "lars" | "momentum_sgd"
  int checkpoint_every = 10;

  // loss shape
  bool subtraction_enabled = true;
  bool stop_grad_emotion_vector = true;
  bool classify_full_backprop = true;
  double weight_byol = 1.0;
  double weight_classify = 1.0;
  double weight_orthogonal = 1.0;

  // transfer (phase 2)
  int transfer_epochs = 40;
  int transfer_batch_size = 64;
  double transfer_lr = 1e-3;
  bool finetune_encoder = true;

  // evaluation
  int eval_batch_size = 128;
  std::string macro_rule = "zero";  // "zero" | "skip_absent"

  // comparison harness
  int compare_seeds = 3;

  void validate() const;

  LossWeights loss_weights() const { return {weight_byol, weight_classify, weight_orthogonal}; }
  ByelFlags byel_flags() const {
    return {subtraction_enabled, stop_grad_emotion_vector, classify_full_backprop};
  }
};

RunConfig profile_defaults(const std::string& profile);

// Applies a flat JSON object on top of cfg; unknown keys are an error.
void apply_config_json(RunConfig& cfg, const std::string& json_text);

RunConfig load_config_file(const std::filesystem::path& path, const std::string& profile_override = "");

// Canonical serialization of the fully resolved config (sorted keys).
std::string config_to_json(const RunConfig& cfg);

// FNV-1a over the canonical serialization; stable across runs.
std::string config_hash(const RunConfig& cfg);

// Hash over the transfer-relevant subset only (excludes seed and paths);
// the comparison harness uses it to prove arms share a transfer setup.
std::string transfer_config_hash(const RunConfig& cfg);

std::uint64_t fnv1a64(const std::string& s);

}  // namespace byel
