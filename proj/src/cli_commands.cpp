#include "byel/cli_commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include "byel/compare.hpp"
#include "byel/errors.hpp"
#include "byel/eval.hpp"
#include "byel/pretrain.hpp"
#include "byel/transfer.hpp"

namespace byel {

namespace fs = std::filesystem;

namespace {

int guard(const char* what, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << what << ": config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const MissingArtifactError& e) {
    std::cerr << what << ": missing artifact: " << e.what() << "\n";
    return kExitMissingArtifact;
  } catch (const NumericError& e) {
    std::cerr << what << ": numeric abort: " << e.what() << "\n";
    return kExitNumericError;
  } catch (const std::exception& e) {
    std::cerr << what << ": " << e.what() << "\n";
    return kExitIoError;
  }
}

struct LoadedData {
  DatasetManifest manifest;
  Tensor<float> images;
  std::vector<int> labels;
};

LoadedData load_domain(const RunConfig& cfg, const char* manifest_name) {
  const fs::path root(cfg.data_root);
  LoadedData d;
  d.manifest = load_manifest(root / manifest_name);
  d.images = load_images(d.manifest, root);
  d.labels = manifest_labels(d.manifest);
  if (d.images.dim(2) != cfg.toy.image_size)
    throw ConfigError("dataset image size " + std::to_string(d.images.dim(2)) +
                      " does not match configured image_size " + std::to_string(cfg.toy.image_size));
  return d;
}

void print_distribution(const DatasetManifest& m, const char* name) {
  const auto counts = class_distribution(m);
  std::printf("%s distribution:\n", name);
  long total = 0;
  for (int c = 0; c < kLabelCount; ++c) {
    std::printf("  %d %-10s %ld\n", c, emotion_name(c), counts[static_cast<std::size_t>(c)]);
    total += counts[static_cast<std::size_t>(c)];
  }
  std::printf("  total        %ld\n", total);
}

}  // namespace

void freeze_config(const RunConfig& cfg) {
  fs::create_directories(cfg.run_dir);
  std::ofstream out(fs::path(cfg.run_dir) / "config.json");
  if (!out) throw IoError("cannot write frozen config under " + cfg.run_dir);
  out << config_to_json(cfg) << "\n";
}

int cmd_generate_data(const RunConfig& cfg) {
  return guard("generate-data", [&] {
    cfg.validate();
    const ToyBenchmark bench = generate_toy_benchmark(cfg.toy);
    write_toy_dataset(bench, cfg.data_root);
    print_distribution(bench.source.manifest, "source");
    print_distribution(bench.target.manifest, "target");
    std::printf("wrote %s/{source,target}.jsonl\n", cfg.data_root.c_str());
    return kExitOk;
  });
}

int cmd_pretrain(const RunConfig& cfg, const std::string& resume_checkpoint) {
  return guard("pretrain", [&] {
    cfg.validate();
    freeze_config(cfg);
    const LoadedData source = load_domain(cfg, "source.jsonl");
    PretrainConfig pcfg = PretrainConfig::from_run_config(cfg);
    const PretrainSink sink{cfg.run_dir, config_hash(cfg)};
    const PretrainResult result = run_pretraining(pcfg, ModelDims{}, source.images, source.labels,
                                                  sink, resume_checkpoint);
    std::printf("pretrain: %zu steps, final checkpoint %s\n", result.rows.size(),
                result.final_checkpoint.string().c_str());
    return kExitOk;
  });
}

int cmd_transfer(const RunConfig& cfg, const std::string& pretrain_checkpoint, bool from_scratch) {
  return guard("transfer", [&] {
    cfg.validate();
    freeze_config(cfg);
    const LoadedData source = load_domain(cfg, "source.jsonl");
    const LoadedData target = load_domain(cfg, "target.jsonl");

    const ModelDims dims;
    EncoderParams<float> encoder;
    if (from_scratch) {
      encoder = NetworkState<float>::init(dims, cfg.seed).online.encoder;
    } else {
      fs::path ckpt(pretrain_checkpoint);
      if (ckpt.empty()) {
        // default to the newest epoch checkpoint in this run dir
        const fs::path root = fs::path(cfg.run_dir) / "checkpoints";
        std::string best;
        if (fs::exists(root))
          for (const auto& entry : fs::directory_iterator(root)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("pretrain_ep", 0) == 0 && name > best) best = name;
          }
        if (best.empty())
          throw MissingArtifactError("no pretrain checkpoint found under " + root.string() +
                                     "; pass --pretrain-checkpoint or --scratch");
        ckpt = root / best;
      }
      CheckpointMeta meta;
      NetworkState<float> state = load_pretrain_checkpoint(ckpt, {}, &meta);
      if (meta.image_size != 0 && meta.image_size != cfg.toy.image_size)
        throw ConfigError("checkpoint image size " + std::to_string(meta.image_size) +
                          " does not match configured image_size");
      encoder = state.online.encoder;
    }

    TransferConfig tcfg = TransferConfig::from_run_config(cfg);
    const TransferSink sink{cfg.run_dir, config_hash(cfg)};
    const TransferResult result = run_transfer(tcfg, dims, encoder, source.images, source.labels,
                                               target.images, target.labels, sink);
    std::printf("transfer: best epoch %d, val macro F1 %.4f, checkpoint %s\n", result.best_epoch,
                result.best_macro_f1, result.best_checkpoint.string().c_str());
    return kExitOk;
  });
}

int cmd_eval(const RunConfig& cfg, const EvalOptions& opts) {
  return guard("eval", [&] {
    cfg.validate();
    const LoadedData target = load_domain(cfg, "target.jsonl");
    const fs::path report_dir = fs::path(cfg.run_dir) / "report";
    fs::create_directories(report_dir);

    std::vector<int> preds;
    if (opts.debug_oracle) {
      preds = target.labels;
    } else {
      fs::path ckpt(opts.checkpoint);
      if (ckpt.empty()) ckpt = fs::path(cfg.run_dir) / "checkpoints" / "transfer_best";
      if (!fs::exists(ckpt / "header.json"))
        throw MissingArtifactError("transfer checkpoint not found: " + ckpt.string());
      TransferModel model = load_transfer_checkpoint(ckpt);
      preds = predict_labels(model.encoder, model.classifier, target.images, cfg.eval_batch_size);
    }

    const MacroRule rule =
        cfg.macro_rule == "zero" ? MacroRule::kZeroRule : MacroRule::kSkipAbsent;
    const MetricsReport report = report_from_confusion(confusion(preds, target.labels), rule);
    write_report(report, report_dir / "eval.json");
    if (opts.write_per_image) {
      std::vector<std::string> refs;
      for (const auto& e : target.manifest.entries) refs.push_back(e.image);
      write_predictions(refs, target.labels, preds, report_dir / "predictions.jsonl");
    }
    std::printf("eval: macro F1 %.4f over %ld images -> %s\n", report.macro_f1,
                report.sample_count, (report_dir / "eval.json").string().c_str());
    return kExitOk;
  });
}

int cmd_compare(const RunConfig& cfg) {
  return guard("compare", [&] {
    cfg.validate();
    freeze_config(cfg);
    const CompareReport report = run_compare(cfg, cfg.run_dir);
    std::cout << compare_to_markdown(report);
    std::printf("compare: wrote %s/report/compare.{md,csv}\n", cfg.run_dir.c_str());
    return kExitOk;
  });
}

}  // namespace byel
