#include "byel/compare.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "byel/eval.hpp"
#include "byel/pretrain.hpp"
#include "byel/transfer.hpp"

namespace byel {

double median_of(std::vector<double> v) {
  if (v.empty()) throw ConfigError("median_of: empty input");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

struct Trial {
  ToyBenchmark data;
  std::vector<int> source_labels, target_labels;
};

Trial make_trial(const RunConfig& cfg, std::uint64_t seed) {
  ToySpec spec = cfg.toy;
  spec.seed = seed;
  Trial t;
  t.data = generate_toy_benchmark(spec);
  t.source_labels = manifest_labels(t.data.source.manifest);
  t.target_labels = manifest_labels(t.data.target.manifest);
  return t;
}

double transfer_and_score(const RunConfig& cfg, std::uint64_t seed, const ModelDims& dims,
                          const EncoderParams<float>& encoder, const Trial& trial,
                          const std::filesystem::path& run_dir, const std::string& hash) {
  TransferConfig tcfg = TransferConfig::from_run_config(cfg);
  tcfg.seed = seed;
  TransferResult result =
      run_transfer(tcfg, dims, encoder, trial.data.source.images, trial.source_labels,
                   trial.data.target.images, trial.target_labels, {run_dir, hash});
  return result.best_macro_f1;
}

}  // namespace

CompareReport run_compare(const RunConfig& cfg, const std::filesystem::path& run_dir) {
  cfg.validate();
  const ModelDims dims;
  CompareReport report;
  const std::string thash = transfer_config_hash(cfg);

  ArmScores supervised{"supervised", {}, 0.0, thash};
  ArmScores byol{"byol", {}, 0.0, thash};
  ArmScores byel{"byel", {}, 0.0, thash};

  const int epochs = cfg.pretrain_epochs;
  const std::vector<int> ablation_epochs = {
      std::max(1, static_cast<int>(std::lround(0.45 * epochs))),
      std::max(1, static_cast<int>(std::lround(0.90 * epochs)))};
  std::vector<ArmScores> ablation_scores;
  for (int e : ablation_epochs) {
    char name[32];
    std::snprintf(name, sizeof(name), "byel@ep%d", e);
    ablation_scores.push_back({name, {}, 0.0, thash});
  }

  for (int trial_idx = 0; trial_idx < cfg.compare_seeds; ++trial_idx) {
    const std::uint64_t seed =
        mix_key(cfg.seed, rngtag::kCompareSeed, static_cast<std::uint64_t>(trial_idx));
    report.seeds.push_back(seed);
    const auto gen_t0 = std::chrono::steady_clock::now();
    const Trial trial = make_trial(cfg, seed);
    const double gen_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - gen_t0).count();

    auto arm_dir = [&](const std::string& arm) -> std::filesystem::path {
      if (run_dir.empty()) return {};
      char name[32];
      std::snprintf(name, sizeof(name), "seed%d", trial_idx);
      return run_dir / "arms" / name / arm;
    };

    // (a) supervised only: fresh encoder straight into transfer
    {
      NetworkState<float> fresh = NetworkState<float>::init(dims, seed);
      supervised.per_seed_f1.push_back(transfer_and_score(
          cfg, seed, dims, fresh.online.encoder, trial, arm_dir("supervised"), thash));
    }

    // (b) plain BYOL arm: same code path, subtraction off, aux losses zeroed
    {
      PretrainConfig pcfg = PretrainConfig::from_run_config(cfg);
      pcfg.seed = seed;
      pcfg.flags.subtract_enabled = false;
      pcfg.weights.classify = 0.0;
      pcfg.weights.orthogonal = 0.0;
      PretrainResult pre = run_pretraining(pcfg, dims, trial.data.source.images,
                                           trial.source_labels, {arm_dir("byol"), thash});
      byol.per_seed_f1.push_back(transfer_and_score(
          cfg, seed, dims, pre.final_state.online.encoder, trial, arm_dir("byol"), thash));
    }

    // (c) full BYEL + fractional-budget snapshots, timed end to end
    {
      const auto t0 = std::chrono::steady_clock::now();
      PretrainConfig pcfg = PretrainConfig::from_run_config(cfg);
      pcfg.seed = seed;
      pcfg.extra_checkpoint_epochs.insert(ablation_epochs.begin(), ablation_epochs.end());
      PretrainResult pre = run_pretraining(pcfg, dims, trial.data.source.images,
                                           trial.source_labels, {arm_dir("byel"), thash});
      byel.per_seed_f1.push_back(transfer_and_score(
          cfg, seed, dims, pre.final_state.online.encoder, trial, arm_dir("byel"), thash));
      const auto t1 = std::chrono::steady_clock::now();
      report.byel_pipeline_seconds.push_back(
          gen_seconds + std::chrono::duration<double>(t1 - t0).count());

      for (std::size_t a = 0; a < ablation_epochs.size(); ++a) {
        const EncoderParams<float>* snapshot = nullptr;
        for (const auto& [epoch, enc] : pre.encoder_snapshots)
          if (epoch == ablation_epochs[a]) snapshot = &enc;
        if (!snapshot) throw NumericError("compare: missing ablation snapshot");
        char sub[32];
        std::snprintf(sub, sizeof(sub), "byel_ep%d", ablation_epochs[a]);
        ablation_scores[a].per_seed_f1.push_back(transfer_and_score(
            cfg, seed, dims, *snapshot, trial, arm_dir(sub), thash));
      }
    }
  }

  supervised.median = median_of(supervised.per_seed_f1);
  byol.median = median_of(byol.per_seed_f1);
  byel.median = median_of(byel.per_seed_f1);
  report.arms = {supervised, byol, byel};
  for (std::size_t a = 0; a < ablation_epochs.size(); ++a) {
    ablation_scores[a].median = median_of(ablation_scores[a].per_seed_f1);
    report.ablation.emplace_back(ablation_epochs[a], ablation_scores[a]);
  }
  report.ablation.emplace_back(epochs, byel);  // 100% budget row

  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir / "report");
    std::ofstream md(run_dir / "report" / "compare.md");
    md << compare_to_markdown(report);
    std::ofstream csv(run_dir / "report" / "compare.csv");
    csv << compare_to_csv(report);
  }
  return report;
}

namespace {

std::string fmt_f1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

std::string compare_to_markdown(const CompareReport& report) {
  std::ostringstream os;
  os << "# Method comparison (target-domain macro F1)\n\n";
  os << "| arm |";
  for (std::size_t i = 0; i < report.seeds.size(); ++i) os << " seed" << i << " |";
  os << " median | transfer config |\n|---|";
  for (std::size_t i = 0; i < report.seeds.size(); ++i) os << "---|";
  os << "---|---|\n";
  for (const auto& arm : report.arms) {
    os << "| " << arm.arm << " |";
    for (double v : arm.per_seed_f1) os << " " << fmt_f1(v) << " |";
    os << " " << fmt_f1(arm.median) << " | " << arm.transfer_hash << " |\n";
  }
  os << "\n# Pre-training budget ablation\n\n";
  os << "| pretrain epochs |";
  for (std::size_t i = 0; i < report.seeds.size(); ++i) os << " seed" << i << " |";
  os << " median |\n|---|";
  for (std::size_t i = 0; i < report.seeds.size(); ++i) os << "---|";
  os << "---|\n";
  for (const auto& [epoch, scores] : report.ablation) {
    os << "| " << epoch << " |";
    for (double v : scores.per_seed_f1) os << " " << fmt_f1(v) << " |";
    os << " " << fmt_f1(scores.median) << " |\n";
  }
  os << "\nseeds:";
  for (std::uint64_t s : report.seeds) os << " " << s;
  os << "\n";
  return os.str();
}

std::string compare_to_csv(const CompareReport& report) {
  std::ostringstream os;
  os << "arm,seed_index,macro_f1,transfer_hash\n";
  char buf[160];
  for (const auto& arm : report.arms)
    for (std::size_t i = 0; i < arm.per_seed_f1.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%s,%zu,%.17g,%s\n", arm.arm.c_str(), i,
                    arm.per_seed_f1[i], arm.transfer_hash.c_str());
      os << buf;
    }
  for (const auto& [epoch, scores] : report.ablation)
    for (std::size_t i = 0; i < scores.per_seed_f1.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%s,%zu,%.17g,%s\n", scores.arm.c_str(), i,
                    scores.per_seed_f1[i], scores.transfer_hash.c_str());
      os << buf;
    }
  return os.str();
}

}  // namespace byel
