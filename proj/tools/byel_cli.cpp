#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "byel/cli_commands.hpp"
#include "byel/errors.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string profile;
  std::optional<std::uint64_t> seed;
  std::string run_dir;
  std::string data_root;
  std::vector<std::string> overrides;  // key=value
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file");
  cmd->add_option("--profile", args.profile, "profile: desk|paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--seed", args.seed, "master seed");
  cmd->add_option("--run-dir", args.run_dir, "run directory for outputs");
  cmd->add_option("--data-root", args.data_root, "dataset root directory");
  cmd->add_option("--set", args.overrides, "extra key=value config overrides")
      ->type_name("KEY=VALUE");
}

// profile defaults < config file < CLI flags
byel::RunConfig resolve(const CommonArgs& args) {
  byel::RunConfig cfg;
  if (!args.config_path.empty()) {
    cfg = byel::load_config_file(args.config_path, args.profile);
  } else {
    cfg = byel::profile_defaults(args.profile.empty() ? "desk" : args.profile);
  }
  nlohmann::json patch = nlohmann::json::object();
  for (const std::string& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw byel::ConfigError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    try {
      patch[key] = nlohmann::json::parse(value);
    } catch (const nlohmann::json::exception&) {
      patch[key] = value;  // unquoted strings
    }
  }
  if (args.seed) patch["seed"] = *args.seed;
  if (!args.run_dir.empty()) patch["run_dir"] = args.run_dir;
  if (!args.data_root.empty()) patch["data_root"] = args.data_root;
  if (!patch.empty()) byel::apply_config_json(cfg, patch.dump());
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BYEL: emotion-aware bootstrap pretraining with transfer evaluation"};
  app.require_subcommand(1);

  CommonArgs gen_args, pre_args, tr_args, ev_args, cmp_args;
  std::string resume, pretrain_ckpt, eval_ckpt;
  bool scratch = false, per_image = false, oracle = false;

  CLI::App* gen = app.add_subcommand("generate-data", "materialize the ToyEmotions benchmark");
  add_common(gen, gen_args);

  CLI::App* pre = app.add_subcommand("pretrain", "phase 1: bootstrap pretraining");
  add_common(pre, pre_args);
  pre->add_option("--resume", resume, "resume from a pretrain checkpoint directory");

  CLI::App* tr = app.add_subcommand("transfer", "phase 2: supervised transfer");
  add_common(tr, tr_args);
  tr->add_option("--pretrain-checkpoint", pretrain_ckpt, "pretrain checkpoint directory");
  tr->add_flag("--scratch", scratch, "train from a random encoder (no pretraining)");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a transfer checkpoint on the target set");
  add_common(ev, ev_args);
  ev->add_option("--checkpoint", eval_ckpt, "transfer checkpoint directory");
  ev->add_flag("--predictions", per_image, "write per-image predictions");
  ev->add_flag("--debug-oracle", oracle, "debug: score label-reading oracle predictions");

  CLI::App* cmp = app.add_subcommand("compare", "supervised vs BYOL vs BYEL arms + budget ablation");
  add_common(cmp, cmp_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return byel::cmd_generate_data(resolve(gen_args));
    if (pre->parsed()) return byel::cmd_pretrain(resolve(pre_args), resume);
    if (tr->parsed()) return byel::cmd_transfer(resolve(tr_args), pretrain_ckpt, scratch);
    if (ev->parsed()) {
      byel::EvalOptions opts;
      opts.checkpoint = eval_ckpt;
      opts.write_per_image = per_image;
      opts.debug_oracle = oracle;
      return byel::cmd_eval(resolve(ev_args), opts);
    }
    if (cmp->parsed()) return byel::cmd_compare(resolve(cmp_args));
  } catch (const byel::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return byel::kExitConfigError;
  } catch (const byel::MissingArtifactError& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return byel::kExitMissingArtifact;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return byel::kExitIoError;
  }
  return byel::kExitConfigError;
}
