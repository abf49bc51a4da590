#include "byel/config.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "byel/errors.hpp"

namespace byel {

using nlohmann::json;

void RunConfig::validate() const {
  if (profile != "desk" && profile != "paper")
    throw ConfigError("profile must be 'desk' or 'paper'");
  toy.validate();
  aug.validate();
  if (pretrain_epochs < 1) throw ConfigError("pretrain_epochs must be >= 1");
  if (pretrain_batch_size < 2) throw ConfigError("pretrain_batch_size must be >= 2");
  if (pretrain_lr <= 0.0) throw ConfigError("pretrain_lr must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (tau_base < 0.0 || tau_base > 1.0) throw ConfigError("tau_base must be in [0,1]");
  optimizer_from_name(pretrain_optimizer);
  if (pretrain_optimizer == "adam") throw ConfigError("pretraining supports lars or momentum_sgd");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (weight_byol < 0.0 || weight_classify < 0.0 || weight_orthogonal < 0.0)
    throw ConfigError("loss weights must be >= 0");
  if (transfer_epochs < 1) throw ConfigError("transfer_epochs must be >= 1");
  if (transfer_batch_size < 2) throw ConfigError("transfer_batch_size must be >= 2");
  if (transfer_lr <= 0.0) throw ConfigError("transfer_lr must be > 0");
  if (eval_batch_size < 1) throw ConfigError("eval_batch_size must be >= 1");
  if (macro_rule != "zero" && macro_rule != "skip_absent")
    throw ConfigError("macro_rule must be 'zero' or 'skip_absent'");
  if (compare_seeds < 1) throw ConfigError("compare_seeds must be >= 1");
}

RunConfig profile_defaults(const std::string& profile) {
  RunConfig cfg;  // field initializers are the desk profile
  cfg.profile = profile;
  if (profile == "desk") {
    cfg.aug.crop_scale_min = 0.5;  // gentler crops; 32-px glyphs lose class
                                   // structure under the 0.08 lower bound
    return cfg;
  }
  if (profile == "paper") {
    cfg.toy.image_size = 128;
    cfg.pretrain_epochs = 100;
    cfg.pretrain_batch_size = 256;
    cfg.pretrain_lr = 0.2;
    cfg.weight_decay = 1.5e-6;
    cfg.transfer_epochs = 100;
    cfg.transfer_batch_size = 256;
    cfg.transfer_lr = 1e-4;
    cfg.aug.crop_scale_min = 0.08;
    return cfg;
  }
  throw ConfigError("unknown profile '" + profile + "'");
}

namespace {

template <typename T>
void read_key(const json& j, const std::string& key, T& out) {
  out = j.at(key).get<T>();
}

}  // namespace

void apply_config_json(RunConfig& cfg, const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    try {
      if (k == "profile") read_key(j, k, cfg.profile);
      else if (k == "seed") cfg.seed = j.at(k).get<std::uint64_t>();
      else if (k == "data_root") read_key(j, k, cfg.data_root);
      else if (k == "run_dir") read_key(j, k, cfg.run_dir);
      else if (k == "image_size") read_key(j, k, cfg.toy.image_size);
      else if (k == "per_class_count_source") read_key(j, k, cfg.toy.per_class_count_source);
      else if (k == "per_class_count_target") read_key(j, k, cfg.toy.per_class_count_target);
      else if (k == "noise_sigma") read_key(j, k, cfg.toy.noise_sigma);
      else if (k == "brightness_shift") read_key(j, k, cfg.toy.brightness_shift);
      else if (k == "max_translate") read_key(j, k, cfg.toy.max_translate);
      else if (k == "crop_scale_min") read_key(j, k, cfg.aug.crop_scale_min);
      else if (k == "crop_scale_max") read_key(j, k, cfg.aug.crop_scale_max);
      else if (k == "flip_prob") read_key(j, k, cfg.aug.flip_prob);
      else if (k == "jitter_brightness") read_key(j, k, cfg.aug.jitter_brightness);
      else if (k == "jitter_contrast") read_key(j, k, cfg.aug.jitter_contrast);
      else if (k == "jitter_saturation") read_key(j, k, cfg.aug.jitter_saturation);
      else if (k == "jitter_hue") read_key(j, k, cfg.aug.jitter_hue);
      else if (k == "grayscale_prob") read_key(j, k, cfg.aug.grayscale_prob);
      else if (k == "blur_prob_view1") read_key(j, k, cfg.aug.blur_prob_view1);
      else if (k == "blur_prob_view2") read_key(j, k, cfg.aug.blur_prob_view2);
      else if (k == "solarize_prob_view2") read_key(j, k, cfg.aug.solarize_prob_view2);
      else if (k == "pretrain_epochs") read_key(j, k, cfg.pretrain_epochs);
      else if (k == "pretrain_batch_size") read_key(j, k, cfg.pretrain_batch_size);
      else if (k == "pretrain_lr") read_key(j, k, cfg.pretrain_lr);
      else if (k == "weight_decay") read_key(j, k, cfg.weight_decay);
      else if (k == "tau_base") read_key(j, k, cfg.tau_base);
      else if (k == "tau_constant") read_key(j, k, cfg.tau_constant);
      else if (k == "pretrain_optimizer") read_key(j, k, cfg.pretrain_optimizer);
      else if (k == "checkpoint_every") read_key(j, k, cfg.checkpoint_every);
      else if (k == "subtraction_enabled") read_key(j, k, cfg.subtraction_enabled);
      else if (k == "stop_grad_emotion_vector") read_key(j, k, cfg.stop_grad_emotion_vector);
      else if (k == "classify_full_backprop") read_key(j, k, cfg.classify_full_backprop);
      else if (k == "weight_byol") read_key(j, k, cfg.weight_byol);
      else if (k == "weight_classify") read_key(j, k, cfg.weight_classify);
      else if (k == "weight_orthogonal") read_key(j, k, cfg.weight_orthogonal);
      else if (k == "transfer_epochs") read_key(j, k, cfg.transfer_epochs);
      else if (k == "transfer_batch_size") read_key(j, k, cfg.transfer_batch_size);
      else if (k == "transfer_lr") read_key(j, k, cfg.transfer_lr);
      else if (k == "finetune_encoder") read_key(j, k, cfg.finetune_encoder);
      else if (k == "eval_batch_size") read_key(j, k, cfg.eval_batch_size);
      else if (k == "macro_rule") read_key(j, k, cfg.macro_rule);
      else if (k == "compare_seeds") read_key(j, k, cfg.compare_seeds);
      else throw ConfigError("unknown config key '" + k + "'");
    } catch (const json::exception& e) {
      throw ConfigError("bad value for config key '" + k + "': " + e.what());
    }
  }
  // the toy benchmark and the augmentation RNG both derive from the run seed
  cfg.toy.seed = cfg.seed;
}

RunConfig load_config_file(const std::filesystem::path& path, const std::string& profile_override) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("config file not found: " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  // profile first (file key unless overridden), then the file's explicit keys
  std::string profile = profile_override;
  if (profile.empty()) {
    try {
      json j = json::parse(text);
      profile = j.is_object() ? j.value("profile", "desk") : "desk";
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config parse error: ") + e.what());
    }
  }
  RunConfig cfg = profile_defaults(profile);
  apply_config_json(cfg, text);
  cfg.profile = profile;
  return cfg;
}

std::string config_to_json(const RunConfig& cfg) {
  json j;  // nlohmann::json orders keys lexicographically
  j["profile"] = cfg.profile;
  j["seed"] = cfg.seed;
  j["data_root"] = cfg.data_root;
  j["run_dir"] = cfg.run_dir;
  j["image_size"] = cfg.toy.image_size;
  j["per_class_count_source"] = cfg.toy.per_class_count_source;
  j["per_class_count_target"] = cfg.toy.per_class_count_target;
  j["noise_sigma"] = cfg.toy.noise_sigma;
  j["brightness_shift"] = cfg.toy.brightness_shift;
  j["max_translate"] = cfg.toy.max_translate;
  j["crop_scale_min"] = cfg.aug.crop_scale_min;
  j["crop_scale_max"] = cfg.aug.crop_scale_max;
  j["flip_prob"] = cfg.aug.flip_prob;
  j["jitter_brightness"] = cfg.aug.jitter_brightness;
  j["jitter_contrast"] = cfg.aug.jitter_contrast;
  j["jitter_saturation"] = cfg.aug.jitter_saturation;
  j["jitter_hue"] = cfg.aug.jitter_hue;
  j["grayscale_prob"] = cfg.aug.grayscale_prob;
  j["blur_prob_view1"] = cfg.aug.blur_prob_view1;
  j["blur_prob_view2"] = cfg.aug.blur_prob_view2;
  j["solarize_prob_view2"] = cfg.aug.solarize_prob_view2;
  j["pretrain_epochs"] = cfg.pretrain_epochs;
  j["pretrain_batch_size"] = cfg.pretrain_batch_size;
  j["pretrain_lr"] = cfg.pretrain_lr;
  j["weight_decay"] = cfg.weight_decay;
  j["tau_base"] = cfg.tau_base;
  j["tau_constant"] = cfg.tau_constant;
  j["pretrain_optimizer"] = cfg.pretrain_optimizer;
  j["checkpoint_every"] = cfg.checkpoint_every;
  j["subtraction_enabled"] = cfg.subtraction_enabled;
  j["stop_grad_emotion_vector"] = cfg.stop_grad_emotion_vector;
  j["classify_full_backprop"] = cfg.classify_full_backprop;
  j["weight_byol"] = cfg.weight_byol;
  j["weight_classify"] = cfg.weight_classify;
  j["weight_orthogonal"] = cfg.weight_orthogonal;
  j["transfer_epochs"] = cfg.transfer_epochs;
  j["transfer_batch_size"] = cfg.transfer_batch_size;
  j["transfer_lr"] = cfg.transfer_lr;
  j["finetune_encoder"] = cfg.finetune_encoder;
  j["eval_batch_size"] = cfg.eval_batch_size;
  j["macro_rule"] = cfg.macro_rule;
  j["compare_seeds"] = cfg.compare_seeds;
  return j.dump(2);
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string config_hash(const RunConfig& cfg) { return hex64(fnv1a64(config_to_json(cfg))); }

std::string transfer_config_hash(const RunConfig& cfg) {
  json j;
  j["transfer_epochs"] = cfg.transfer_epochs;
  j["transfer_batch_size"] = cfg.transfer_batch_size;
  j["transfer_lr"] = cfg.transfer_lr;
  j["finetune_encoder"] = cfg.finetune_encoder;
  j["image_size"] = cfg.toy.image_size;
  j["eval_batch_size"] = cfg.eval_batch_size;
  j["macro_rule"] = cfg.macro_rule;
  return hex64(fnv1a64(j.dump()));
}

}  // namespace byel
