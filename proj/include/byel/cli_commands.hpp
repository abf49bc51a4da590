#pragma once

#include <string>

#include "byel/config.hpp"

namespace byel {

// Command implementations shared by the CLI binary and the tests. Each
// returns one of the documented exit codes instead of throwing.
int cmd_generate_data(const RunConfig& cfg);
int cmd_pretrain(const RunConfig& cfg, const std::string& resume_checkpoint = "");
int cmd_transfer(const RunConfig& cfg, const std::string& pretrain_checkpoint, bool from_scratch);

struct EvalOptions {
  std::string checkpoint;        // transfer checkpoint dir; default: run_dir's best
  bool write_per_image = false;  // report/predictions.jsonl
  bool debug_oracle = false;     // predictions = labels; debugging aid
};
int cmd_eval(const RunConfig& cfg, const EvalOptions& opts);

int cmd_compare(const RunConfig& cfg);

// Writes the fully resolved config into run_dir/config.json.
void freeze_config(const RunConfig& cfg);

}  // namespace byel
