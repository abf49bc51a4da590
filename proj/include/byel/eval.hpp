#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "byel/nn.hpp"
#include "byel/tensor.hpp"

namespace byel {

// rows = true label, columns = predicted label
struct ConfusionMatrix {
  std::array<std::array<long, kNumClasses>, kNumClasses> counts{};

  long total() const {
    long t = 0;
    for (const auto& row : counts)
      for (long v : row) t += v;
    return t;
  }

  void merge(const ConfusionMatrix& o) {
    for (int i = 0; i < kNumClasses; ++i)
      for (int j = 0; j < kNumClasses; ++j) counts[i][j] += o.counts[i][j];
  }

  bool operator==(const ConfusionMatrix&) const = default;
};

// zero-rule: any precision/recall/F1 with a zero denominator scores 0.
// skip-absent instead drops classes that never occur as truth or prediction
// from the macro average.
enum class MacroRule { kZeroRule, kSkipAbsent };

struct ClassScores {
  std::array<double, kNumClasses> precision{}, recall{}, f1{};
};

struct MetricsReport {
  ConfusionMatrix confusion;
  ClassScores scores;
  double macro_f1 = 0.0;
  long sample_count = 0;
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& truths);

ClassScores f1_scores(const ConfusionMatrix& cm);

double macro_f1(const std::array<double, kNumClasses>& per_class);
double macro_f1(const ConfusionMatrix& cm, MacroRule rule);

MetricsReport report_from_confusion(const ConfusionMatrix& cm, MacroRule rule = MacroRule::kZeroRule);

// argmax with ties broken toward the lowest class index
int argmax_label(const float* logits, int n);

// Batched forward through f = c . h; deterministic, order independent.
std::vector<int> predict_labels(const EncoderParams<float>& encoder,
                                const DenseParams<float>& classifier,
                                const Tensor<float>& images, int batch_size);

MetricsReport evaluate(const EncoderParams<float>& encoder, const DenseParams<float>& classifier,
                       const Tensor<float>& images, const std::vector<int>& labels,
                       int batch_size, MacroRule rule = MacroRule::kZeroRule);

std::string report_to_json(const MetricsReport& report);
void write_report(const MetricsReport& report, const std::filesystem::path& path);

// Per-image prediction lines: {"image":..,"true":k,"pred":k'}
void write_predictions(const std::vector<std::string>& image_refs, const std::vector<int>& truths,
                       const std::vector<int>& preds, const std::filesystem::path& path);

}  // namespace byel
