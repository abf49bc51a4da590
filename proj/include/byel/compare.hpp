#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "byel/config.hpp"

namespace byel {

// Three arms trained on identical per-seed datasets and transfer settings:
//   supervised  transfer only, randomly initialized encoder
//   byol        pretraining with identity subtraction, classify/orth weights 0
//   byel        the full five-term loss
// plus transfers from fractional-budget checkpoints of the byel arm.
struct ArmScores {
  std::string arm;
  std::vector<double> per_seed_f1;
  double median = 0.0;
  std::string transfer_hash;
};

struct CompareReport {
  std::vector<ArmScores> arms;                       // supervised, byol, byel
  std::vector<std::pair<int, ArmScores>> ablation;   // (pretrain epoch, byel@epoch)
  std::vector<std::uint64_t> seeds;
  std::vector<double> byel_pipeline_seconds;  // generate..eval wall time per seed
};

double median_of(std::vector<double> v);

// run_dir empty: keep artifacts in memory only.
CompareReport run_compare(const RunConfig& cfg, const std::filesystem::path& run_dir);

std::string compare_to_markdown(const CompareReport& report);
std::string compare_to_csv(const CompareReport& report);

}  // namespace byel
