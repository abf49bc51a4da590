#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "byel/rng.hpp"
#include "byel/tensor.hpp"

namespace byel {

constexpr int kLabelCount = 6;

inline int parse_label(long v) {
  if (v < 0 || v >= kLabelCount) throw ConfigError("invalid label " + std::to_string(v));
  return static_cast<int>(v);
}

enum class Domain { kSource, kTarget };

inline const char* domain_name(Domain d) { return d == Domain::kSource ? "source" : "target"; }

struct ManifestEntry {
  std::string image;  // relative path or inline id
  int label = 0;
  Domain domain = Domain::kSource;
  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::array<long, kLabelCount> counts{};  // recomputed from entries on load

  bool operator==(const DatasetManifest&) const = default;
};

std::array<long, kLabelCount> class_distribution(const DatasetManifest& m);

// JSON-lines manifest: one {"image":..,"label":0-5,"domain":"source"|"target"}
// object per line. Parse errors report the 1-based line number.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);

DatasetManifest make_manifest(std::vector<ManifestEntry> entries);

// ---- procedural ToyEmotions benchmark --------------------------------------

// Class k draws k+1 parallel bars at angle k*30deg with per-image jitter in
// angle, position, thickness and amplitude. The target domain re-renders the
// same base images and applies Gaussian noise, an additive brightness shift
// and a random translation.
struct ToySpec {
  int image_size = 32;
  int per_class_count_source = 100;
  int per_class_count_target = 50;
  double noise_sigma = 0.15;
  double brightness_shift = 0.15;
  int max_translate = 3;
  std::uint64_t seed = 1;

  void validate() const;
};

// Images as (N,1,H,W) float batches in [0,1], aligned with manifest entries.
struct ToyDomain {
  DatasetManifest manifest;
  Tensor<float> images;
};

struct ToyBenchmark {
  ToyDomain source;
  ToyDomain target;
};

Tensor<float> render_glyph(const ToySpec& spec, int label, int index);
ToyBenchmark generate_toy_benchmark(const ToySpec& spec);

// Persist as 8-bit grayscale PNGs under root/<domain>/<label>/<index>.png
// plus root/source.jsonl and root/target.jsonl manifests.
void write_toy_dataset(const ToyBenchmark& bench, const std::filesystem::path& root);

// Loads the images referenced by a manifest (paths relative to base_dir).
// All images must share the same square size.
Tensor<float> load_images(const DatasetManifest& m, const std::filesystem::path& base_dir);

std::vector<int> manifest_labels(const DatasetManifest& m);

// ---- PNG I/O (8-bit grayscale) ---------------------------------------------

void write_gray_png(const std::filesystem::path& path, const Tensor<float>& image);
Tensor<float> read_gray_png(const std::filesystem::path& path);

// ---- two-view augmentation --------------------------------------------------

// Defaults follow the BYOL recipe; saturation/hue are accepted but have no
// effect on single-channel images.
struct AugmentConfig {
  double crop_scale_min = 0.08;
  double crop_scale_max = 1.0;
  double flip_prob = 0.5;
  double jitter_brightness = 0.4;
  double jitter_contrast = 0.4;
  double jitter_saturation = 0.2;
  double jitter_hue = 0.1;
  double grayscale_prob = 0.2;
  double blur_prob_view1 = 1.0;
  double blur_prob_view2 = 0.1;
  double solarize_prob_view2 = 0.2;

  void validate() const;
};

struct ViewPair {
  Tensor<float> view1, view2;
};

// image: (1,H,W) in [0,1]; both views share its shape and stay in [0,1].
ViewPair augment_pair(const Tensor<float>& image, DetRng& rng, const AugmentConfig& cfg);

}  // namespace byel
