#include "byel/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "byel/errors.hpp"

namespace byel {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

std::string tensor_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "t%05zu.f32", index);
  return buf;
}

json dims_to_json(const ModelDims& d) {
  return json{{"in_channels", d.in_channels}, {"conv1", d.conv1},   {"conv2", d.conv2},
              {"conv3", d.conv3},             {"feature_width", d.feature_width},
              {"hidden", d.hidden},           {"embed", d.embed},   {"classes", kNumClasses}};
}

ModelDims dims_from_json(const json& j) {
  ModelDims d;
  d.in_channels = j.at("in_channels").get<int>();
  d.conv1 = j.at("conv1").get<int>();
  d.conv2 = j.at("conv2").get<int>();
  d.conv3 = j.at("conv3").get<int>();
  d.feature_width = j.at("feature_width").get<int>();
  d.hidden = j.at("hidden").get<int>();
  d.embed = j.at("embed").get<int>();
  return d;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const CheckpointMeta& meta,
                     const NamedTensors& tensors) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint dir: " + dir.string());

  json index = json::array();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& [path, tensor] = tensors[i];
    const std::string file = tensor_file_name(i);
    index.push_back({{"path", path}, {"shape", tensor->shape()}, {"file", file}});
    std::ofstream out(dir / file, std::ios::binary);
    if (!out) throw IoError("cannot write tensor file: " + (dir / file).string());
    out.write(reinterpret_cast<const char*>(tensor->data()),
              static_cast<std::streamsize>(tensor->numel() * sizeof(float)));
    if (!out) throw IoError("tensor write failed: " + (dir / file).string());
  }

  json header;
  header["format"] = "byel-checkpoint-v1";
  header["phase"] = meta.phase;
  header["step"] = meta.step;
  header["epoch"] = meta.epoch;
  header["dims"] = dims_to_json(meta.dims);
  header["image_size"] = meta.image_size;
  header["config_hash"] = meta.config_hash;
  header["extra"] = meta.extra;
  header["tensors"] = index;

  std::ofstream out(dir / "header.json");
  if (!out) throw IoError("cannot write checkpoint header: " + dir.string());
  out << header.dump(2) << "\n";
  if (!out) throw IoError("checkpoint header write failed: " + dir.string());
}

namespace {

json read_header(const std::filesystem::path& dir) {
  std::ifstream in(dir / "header.json");
  if (!in) throw MissingArtifactError("checkpoint header not found: " + (dir / "header.json").string());
  json header;
  try {
    in >> header;
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint header: " + std::string(e.what()));
  }
  if (header.value("format", "") != "byel-checkpoint-v1")
    throw IoError("unsupported checkpoint format in " + dir.string());
  return header;
}

}  // namespace

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir) {
  const json header = read_header(dir);
  CheckpointMeta meta;
  meta.phase = header.at("phase").get<std::string>();
  meta.step = header.at("step").get<long>();
  meta.epoch = header.at("epoch").get<int>();
  meta.dims = dims_from_json(header.at("dims"));
  meta.image_size = header.at("image_size").get<int>();
  meta.config_hash = header.at("config_hash").get<std::string>();
  meta.extra = header.at("extra").get<std::map<std::string, std::string>>();
  return meta;
}

void load_checkpoint_tensors(const std::filesystem::path& dir, const NamedTensors& dest) {
  const json header = read_header(dir);
  std::map<std::string, std::pair<std::string, std::vector<int>>> index;
  for (const auto& t : header.at("tensors"))
    index[t.at("path").get<std::string>()] = {t.at("file").get<std::string>(),
                                              t.at("shape").get<std::vector<int>>()};
  for (const auto& [path, tensor] : dest) {
    auto it = index.find(path);
    if (it == index.end())
      throw IoError("checkpoint missing tensor '" + path + "' in " + dir.string());
    if (it->second.second != tensor->shape())
      throw ShapeError("checkpoint tensor '" + path + "' shape mismatch");
    std::ifstream in(dir / it->second.first, std::ios::binary);
    if (!in) throw IoError("cannot read tensor file: " + (dir / it->second.first).string());
    in.read(reinterpret_cast<char*>(tensor->data()),
            static_cast<std::streamsize>(tensor->numel() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(tensor->numel() * sizeof(float)))
      throw IoError("short tensor read: " + (dir / it->second.first).string());
  }
}

NamedTensors pretrain_tensor_list(NetworkState<float>& state) {
  NamedTensors out;
  for (auto& p : pretrain_trainable(state)) out.emplace_back(p.path, p.tensor);
  for (auto& p : target_params(state)) out.emplace_back(p.path, p.tensor);
  return out;
}

void save_pretrain_checkpoint(const std::filesystem::path& dir, NetworkState<float>& state,
                              int epoch, int image_size, const std::string& config_hash,
                              const NamedTensors& optimizer_state) {
  CheckpointMeta meta;
  meta.phase = "pretrain";
  meta.step = state.step;
  meta.epoch = epoch;
  meta.dims = state.dims;
  meta.image_size = image_size;
  meta.config_hash = config_hash;
  NamedTensors tensors = pretrain_tensor_list(state);
  tensors.insert(tensors.end(), optimizer_state.begin(), optimizer_state.end());
  save_checkpoint(dir, meta, tensors);
}

NetworkState<float> load_pretrain_checkpoint(const std::filesystem::path& dir,
                                             const NamedTensors& optimizer_state,
                                             CheckpointMeta* meta_out) {
  const CheckpointMeta meta = read_checkpoint_meta(dir);
  if (meta.phase != "pretrain")
    throw IoError("expected a pretrain checkpoint in " + dir.string());
  NetworkState<float> state = NetworkState<float>::init(meta.dims, 0);
  state.step = meta.step;
  NamedTensors tensors = pretrain_tensor_list(state);
  tensors.insert(tensors.end(), optimizer_state.begin(), optimizer_state.end());
  load_checkpoint_tensors(dir, tensors);
  if (meta_out) *meta_out = meta;
  return state;
}

void save_transfer_checkpoint(const std::filesystem::path& dir, TransferModel& model, int epoch,
                              const std::string& config_hash,
                              const std::map<std::string, std::string>& extra) {
  CheckpointMeta meta;
  meta.phase = "transfer";
  meta.epoch = epoch;
  meta.dims = model.dims;
  meta.config_hash = config_hash;
  meta.extra = extra;
  NamedTensors tensors;
  std::vector<ParamRef<float>> enc_refs;
  detail::visit_encoder("online/encoder", model.encoder, enc_refs);
  for (auto& p : enc_refs) tensors.emplace_back(p.path, p.tensor);
  tensors.emplace_back("classifier/weight", &model.classifier.weight);
  tensors.emplace_back("classifier/bias", &model.classifier.bias);
  save_checkpoint(dir, meta, tensors);
}

TransferModel load_transfer_checkpoint(const std::filesystem::path& dir, CheckpointMeta* meta_out) {
  const CheckpointMeta meta = read_checkpoint_meta(dir);
  if (meta.phase != "transfer")
    throw IoError("expected a transfer checkpoint in " + dir.string());
  TransferModel model;
  model.dims = meta.dims;
  DetRng rng(0);
  model.encoder = EncoderParams<float>::init(meta.dims, rng);  // shapes; overwritten below
  model.classifier = init_classifier<float>(meta.dims.feature_width, 0);
  NamedTensors tensors;
  std::vector<ParamRef<float>> enc_refs;
  detail::visit_encoder("online/encoder", model.encoder, enc_refs);
  for (auto& p : enc_refs) tensors.emplace_back(p.path, p.tensor);
  tensors.emplace_back("classifier/weight", &model.classifier.weight);
  tensors.emplace_back("classifier/bias", &model.classifier.bias);
  load_checkpoint_tensors(dir, tensors);
  if (meta_out) *meta_out = meta;
  return model;
}

}  // namespace byel
