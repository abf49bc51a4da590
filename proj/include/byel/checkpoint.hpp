#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "byel/nn.hpp"
#include "byel/tensor.hpp"

namespace byel {

// Checkpoint directory layout:
//   header.json   shapes, dims, step/epoch, phase, config hash, tensor index
//   t00000.f32..  one raw little-endian float32 blob per tensor
// Round-trips are bit exact.
struct CheckpointMeta {
  std::string phase;  // "pretrain" | "transfer"
  long step = 0;
  int epoch = 0;
  ModelDims dims;
  int image_size = 0;
  std::string config_hash;
  std::map<std::string, std::string> extra;  // optimizer name, adam betas, ...
};

using NamedTensors = std::vector<std::pair<std::string, Tensor<float>*>>;

void save_checkpoint(const std::filesystem::path& dir, const CheckpointMeta& meta,
                     const NamedTensors& tensors);

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir);

// Loads into pre-shaped destination tensors; every requested path must be
// present with an identical shape.
void load_checkpoint_tensors(const std::filesystem::path& dir, const NamedTensors& dest);

// Convenience wrappers for the two phases.
NamedTensors pretrain_tensor_list(NetworkState<float>& state);

void save_pretrain_checkpoint(const std::filesystem::path& dir, NetworkState<float>& state,
                              int epoch, int image_size, const std::string& config_hash,
                              const NamedTensors& optimizer_state);

NetworkState<float> load_pretrain_checkpoint(const std::filesystem::path& dir,
                                             const NamedTensors& optimizer_state,
                                             CheckpointMeta* meta_out = nullptr);

struct TransferModel {
  ModelDims dims;
  EncoderParams<float> encoder;
  DenseParams<float> classifier;
};

void save_transfer_checkpoint(const std::filesystem::path& dir, TransferModel& model, int epoch,
                              const std::string& config_hash,
                              const std::map<std::string, std::string>& extra = {});

TransferModel load_transfer_checkpoint(const std::filesystem::path& dir,
                                       CheckpointMeta* meta_out = nullptr);

}  // namespace byel
