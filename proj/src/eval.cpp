#include "byel/eval.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "byel/errors.hpp"

namespace byel {

using nlohmann::json;

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& truths) {
  if (preds.size() != truths.size()) throw ShapeError("confusion: length mismatch");
  if (preds.empty()) throw ConfigError("confusion: empty input");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int t = truths[i], p = preds[i];
    if (t < 0 || t >= kNumClasses || p < 0 || p >= kNumClasses)
      throw ConfigError("confusion: invalid label at index " + std::to_string(i));
    ++cm.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  return cm;
}

ClassScores f1_scores(const ConfusionMatrix& cm) {
  ClassScores s;
  for (int c = 0; c < kNumClasses; ++c) {
    long tp = cm.counts[c][c];
    long fp = 0, fn = 0;
    for (int o = 0; o < kNumClasses; ++o) {
      if (o == c) continue;
      fp += cm.counts[o][c];
      fn += cm.counts[c][o];
    }
    const double p = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double r = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    s.precision[c] = p;
    s.recall[c] = r;
    s.f1[c] = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  return s;
}

double macro_f1(const std::array<double, kNumClasses>& per_class) {
  double sum = 0.0;
  for (double v : per_class) {
    if (v < 0.0 || v > 1.0) throw ConfigError("macro_f1: per-class F1 outside [0,1]");
    sum += v;
  }
  return sum / kNumClasses;
}

double macro_f1(const ConfusionMatrix& cm, MacroRule rule) {
  const ClassScores s = f1_scores(cm);
  if (rule == MacroRule::kZeroRule) return macro_f1(s.f1);
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    long seen = 0;
    for (int o = 0; o < kNumClasses; ++o) seen += cm.counts[c][o] + cm.counts[o][c];
    if (seen == 0) continue;
    sum += s.f1[c];
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

MetricsReport report_from_confusion(const ConfusionMatrix& cm, MacroRule rule) {
  MetricsReport r;
  r.confusion = cm;
  r.scores = f1_scores(cm);
  r.macro_f1 = macro_f1(cm, rule);
  r.sample_count = cm.total();
  return r;
}

int argmax_label(const float* logits, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

std::vector<int> predict_labels(const EncoderParams<float>& encoder,
                                const DenseParams<float>& classifier,
                                const Tensor<float>& images, int batch_size) {
  if (images.rank() != 4) throw ShapeError("predict_labels: expects (N,C,H,W) images");
  const int n = images.dim(0);
  if (batch_size < 1) throw ConfigError("predict_labels: batch_size must be >= 1");
  std::vector<int> preds;
  preds.reserve(static_cast<std::size_t>(n));
  const std::size_t img_elems =
      static_cast<std::size_t>(images.dim(1)) * images.dim(2) * images.dim(3);
  for (int start = 0; start < n; start += batch_size) {
    const int count = std::min(batch_size, n - start);
    Tensor<float> batch({count, images.dim(1), images.dim(2), images.dim(3)});
    std::copy_n(images.data() + static_cast<std::size_t>(start) * img_elems,
                static_cast<std::size_t>(count) * img_elems, batch.data());
    const Tensor<float> features = encoder_forward(encoder, batch);
    const Tensor<float> logits = classifier_forward(classifier, features);
    for (int i = 0; i < count; ++i)
      preds.push_back(argmax_label(logits.data() + static_cast<std::size_t>(i) * kNumClasses,
                                   kNumClasses));
  }
  return preds;
}

MetricsReport evaluate(const EncoderParams<float>& encoder, const DenseParams<float>& classifier,
                       const Tensor<float>& images, const std::vector<int>& labels,
                       int batch_size, MacroRule rule) {
  if (images.dim(0) != static_cast<int>(labels.size()))
    throw ShapeError("evaluate: image/label count mismatch");
  const std::vector<int> preds = predict_labels(encoder, classifier, images, batch_size);
  return report_from_confusion(confusion(preds, labels), rule);
}

std::string report_to_json(const MetricsReport& report) {
  json j;
  j["macro_f1"] = report.macro_f1;
  j["sample_count"] = report.sample_count;
  json per_class = json::array();
  for (int c = 0; c < kNumClasses; ++c) {
    per_class.push_back({{"label", c},
                         {"name", emotion_name(c)},
                         {"precision", report.scores.precision[c]},
                         {"recall", report.scores.recall[c]},
                         {"f1", report.scores.f1[c]}});
  }
  j["per_class"] = per_class;
  json cmj = json::array();
  for (const auto& row : report.confusion.counts) cmj.push_back(row);
  j["confusion"] = cmj;
  return j.dump(2);
}

void write_report(const MetricsReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report: " + path.string());
  out << report_to_json(report) << "\n";
}

void write_predictions(const std::vector<std::string>& image_refs, const std::vector<int>& truths,
                       const std::vector<int>& preds, const std::filesystem::path& path) {
  if (image_refs.size() != truths.size() || truths.size() != preds.size())
    throw ShapeError("write_predictions: length mismatch");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write predictions: " + path.string());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    json j;
    j["image"] = image_refs[i];
    j["true"] = truths[i];
    j["pred"] = preds[i];
    out << j.dump() << "\n";
  }
}

}  // namespace byel
