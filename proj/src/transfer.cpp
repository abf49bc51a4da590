#include "byel/transfer.hpp"

#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "byel/pretrain.hpp"

namespace byel {

namespace {

std::vector<ParamRef<float>> transfer_params(TransferModel& model, bool finetune_encoder) {
  std::vector<ParamRef<float>> params;
  if (finetune_encoder) detail::visit_encoder("online/encoder", model.encoder, params);
  detail::visit_dense("classifier", model.classifier, params);
  return params;
}

}  // namespace

float transfer_step(TransferModel& model, AdamOptimizer<float>& opt, const Tensor<float>& batch,
                    const std::vector<int>& labels, const TransferConfig& cfg) {
  Tape<float> tape;
  auto encoder = bind_encoder(tape, model.encoder, cfg.finetune_encoder);
  BoundDense<float> classifier{tape.param(model.classifier.weight),
                               tape.param(model.classifier.bias)};
  Val<float> x = tape.input(batch);
  Val<float> features = encoder_forward(tape, encoder, x);
  Val<float> logits = classifier_forward(tape, classifier, features);
  Val<float> loss = tape.softmax_cross_entropy(logits, labels);
  const float loss_value = tape.value(loss).at(0);
  if (!std::isfinite(loss_value)) throw NumericError("transfer_step: non-finite loss");

  tape.backward(loss);

  auto params = transfer_params(model, cfg.finetune_encoder);
  std::vector<Tensor<float>> grads;
  grads.reserve(params.size());
  auto grad_of = [&](Val<float> v) -> Tensor<float> {
    if (tape.grad_touched(v)) return tape.grad(v);
    return Tensor<float>::zeros(tape.value(v).shape());
  };
  if (cfg.finetune_encoder) {
    for (const auto& c : {encoder.conv1, encoder.conv2, encoder.conv3}) {
      grads.push_back(grad_of(c.weight));
      grads.push_back(grad_of(c.bias));
    }
  }
  grads.push_back(grad_of(classifier.weight));
  grads.push_back(grad_of(classifier.bias));

  opt.step(params, grads, cfg.learning_rate);
  return loss_value;
}

int select_best(const std::vector<double>& series) {
  if (series.empty()) throw ConfigError("select_best: empty series");
  int best = 0;
  for (int i = 1; i < static_cast<int>(series.size()); ++i)
    if (series[static_cast<std::size_t>(i)] > series[static_cast<std::size_t>(best)]) best = i;
  return best;
}

TransferResult run_transfer(const TransferConfig& cfg, const ModelDims& dims,
                            const EncoderParams<float>& pretrained_encoder,
                            const Tensor<float>& train_images, const std::vector<int>& train_labels,
                            const Tensor<float>& val_images, const std::vector<int>& val_labels,
                            const TransferSink& sink) {
  cfg.validate();
  const int n = train_images.dim(0);
  if (n != static_cast<int>(train_labels.size()))
    throw ShapeError("transfer: train image/label count mismatch");
  if (val_images.dim(0) < 1) throw ConfigError("transfer: validation set is empty");

  TransferModel model;
  model.dims = dims;
  model.encoder = pretrained_encoder;
  model.classifier = init_classifier<float>(dims.feature_width, cfg.seed);
  AdamOptimizer<float> opt(cfg.adam);

  TransferResult result;
  std::vector<double> series;
  const std::size_t img_elems =
      static_cast<std::size_t>(train_images.dim(1)) * train_images.dim(2) * train_images.dim(3);
  const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<int> order = shuffled_indices(cfg.seed ^ 0x7f4a7c15, epoch, n);
    double loss_sum = 0.0;
    for (int s = 0; s < steps_per_epoch; ++s) {
      const int begin = s * cfg.batch_size;
      const int count = std::min(cfg.batch_size, n - begin);
      Tensor<float> batch({count, train_images.dim(1), train_images.dim(2), train_images.dim(3)});
      std::vector<int> batch_labels(static_cast<std::size_t>(count));
      for (int i = 0; i < count; ++i) {
        const int src = order[static_cast<std::size_t>(begin + i)];
        std::copy_n(train_images.data() + static_cast<std::size_t>(src) * img_elems, img_elems,
                    batch.data() + static_cast<std::size_t>(i) * img_elems);
        batch_labels[static_cast<std::size_t>(i)] = train_labels[static_cast<std::size_t>(src)];
      }
      loss_sum += transfer_step(model, opt, batch, batch_labels, cfg);
    }

    const MetricsReport report = evaluate(model.encoder, model.classifier, val_images, val_labels,
                                          cfg.eval_batch_size, cfg.macro_rule);
    series.push_back(report.macro_f1);
    result.rows.push_back(
        {epoch, loss_sum / steps_per_epoch, report.macro_f1, report.scores.f1});
    if (epoch == 1 || report.macro_f1 > result.best_macro_f1) {
      result.best_macro_f1 = report.macro_f1;
      result.best_epoch = epoch;
      result.best_model = model;
    }
  }

  // sanity: the in-loop tracking matches the pure selection rule
  const int best_idx = select_best(series);
  if (best_idx + 1 != result.best_epoch)
    throw NumericError("transfer: model selection bookkeeping diverged");

  if (!sink.run_dir.empty()) {
    std::filesystem::create_directories(sink.run_dir / "checkpoints");
    std::filesystem::create_directories(sink.run_dir / "metrics");
    std::filesystem::create_directories(sink.run_dir / "report");
    result.best_checkpoint = sink.run_dir / "checkpoints" / "transfer_best";
    std::map<std::string, std::string> extra;
    extra["adam_beta1"] = std::to_string(cfg.adam.beta1);
    extra["adam_beta2"] = std::to_string(cfg.adam.beta2);
    extra["adam_eps"] = std::to_string(cfg.adam.eps);
    extra["learning_rate"] = std::to_string(cfg.learning_rate);
    extra["finetune_encoder"] = cfg.finetune_encoder ? "true" : "false";
    save_transfer_checkpoint(result.best_checkpoint, result.best_model, result.best_epoch,
                             sink.config_hash, extra);
    write_transfer_csv(result.rows, sink.run_dir / "metrics" / "transfer.csv");
    write_best_pointer(result, sink.run_dir / "report" / "best.json");
  }
  return result;
}

void write_transfer_csv(const std::vector<TransferRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics csv: " + path.string());
  out << "epoch,train_loss,val_macro_f1,f1_anger,f1_disgust,f1_fear,f1_happiness,f1_sadness,"
         "f1_surprise\n";
  char buf[360];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.epoch, r.train_loss, r.val_macro_f1, r.per_class_f1[0], r.per_class_f1[1],
                  r.per_class_f1[2], r.per_class_f1[3], r.per_class_f1[4], r.per_class_f1[5]);
    out << buf;
  }
  if (!out) throw IoError("metrics csv write failed: " + path.string());
}

void write_best_pointer(const TransferResult& result, const std::filesystem::path& path) {
  nlohmann::json j;
  j["checkpoint"] = result.best_checkpoint.string();
  j["epoch"] = result.best_epoch;
  j["macro_f1"] = result.best_macro_f1;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write best pointer: " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace byel
