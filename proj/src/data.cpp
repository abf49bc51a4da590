#include "byel/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "byel/errors.hpp"

namespace byel {

using nlohmann::json;

std::array<long, kLabelCount> class_distribution(const DatasetManifest& m) {
  std::array<long, kLabelCount> counts{};
  for (const auto& e : m.entries) {
    if (e.label < 0 || e.label >= kLabelCount)
      throw ConfigError("class_distribution: invalid label " + std::to_string(e.label));
    ++counts[static_cast<std::size_t>(e.label)];
  }
  return counts;
}

DatasetManifest make_manifest(std::vector<ManifestEntry> entries) {
  if (entries.empty()) throw ConfigError("manifest: entries must be non-empty");
  DatasetManifest m;
  m.entries = std::move(entries);
  m.counts = class_distribution(m);
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("manifest not found: " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError("malformed manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("image") || !j.contains("label") || !j.contains("domain"))
      throw IoError("malformed manifest line " + std::to_string(line_no) +
                    ": expected {image,label,domain}");
    ManifestEntry e;
    e.image = j.at("image").get<std::string>();
    if (!j.at("label").is_number_integer())
      throw IoError("invalid label at line " + std::to_string(line_no));
    const long label = j.at("label").get<long>();
    if (label < 0 || label >= kLabelCount)
      throw IoError("invalid label at line " + std::to_string(line_no));
    e.label = static_cast<int>(label);
    const std::string dom = j.at("domain").get<std::string>();
    if (dom == "source") e.domain = Domain::kSource;
    else if (dom == "target") e.domain = Domain::kTarget;
    else throw IoError("unknown domain tag at line " + std::to_string(line_no) + ": '" + dom + "'");
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw IoError("manifest is empty: " + path.string());
  return make_manifest(std::move(entries));
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  for (const auto& e : m.entries) {
    json j;
    j["image"] = e.image;
    j["label"] = e.label;
    j["domain"] = domain_name(e.domain);
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<int> manifest_labels(const DatasetManifest& m) {
  std::vector<int> labels;
  labels.reserve(m.entries.size());
  for (const auto& e : m.entries) labels.push_back(e.label);
  return labels;
}

// ---- ToyEmotions ------------------------------------------------------------

void ToySpec::validate() const {
  if (image_size < 16) throw ConfigError("ToySpec: image_size must be >= 16");
  if (per_class_count_source < 1 || per_class_count_target < 1)
    throw ConfigError("ToySpec: per-class counts must be >= 1");
  if (noise_sigma < 0.0) throw ConfigError("ToySpec: noise_sigma must be >= 0");
  if (brightness_shift < 0.0 || brightness_shift > 0.5)
    throw ConfigError("ToySpec: brightness_shift must be in [0, 0.5]");
  if (max_translate < 0 || max_translate >= image_size / 4)
    throw ConfigError("ToySpec: max_translate must be in [0, image_size/4)");
}

Tensor<float> render_glyph(const ToySpec& spec, int label, int index) {
  if (label < 0 || label >= kLabelCount) throw ConfigError("render_glyph: invalid label");
  const int size = spec.image_size;
  DetRng rng(mix_key(spec.seed, rngtag::kGlyph, static_cast<std::uint64_t>(label),
                     static_cast<std::uint64_t>(index)));

  const double bg = rng.uniform(0.0, 0.08);
  const double amp = rng.uniform(0.75, 1.0);
  const double angle = (label * 30.0 + rng.uniform(-8.0, 8.0)) * M_PI / 180.0;
  const int bars = label + 1;
  const double thickness = size * rng.uniform(0.055, 0.075);
  // centre-to-centre bar spacing: fill at most 84% of the image, cap the
  // spread for low bar counts
  const double spacing =
      bars > 1 ? std::min((0.84 * size - thickness) / (bars - 1), 0.30 * size) : 0.0;
  const double half_len = size * rng.uniform(0.55, 0.8) / 2.0;
  const double cx = size / 2.0 + rng.uniform(-size / 16.0, size / 16.0);
  const double cy = size / 2.0 + rng.uniform(-size / 16.0, size / 16.0);
  const double ca = std::cos(angle), sa = std::sin(angle);

  Tensor<float> img({1, size, size});
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      const double u = dx * ca + dy * sa;   // along bar
      const double v = -dx * sa + dy * ca;  // across bars
      double cov = 0.0;
      for (int b = 0; b < bars; ++b) {
        const double off = (b - (bars - 1) / 2.0) * spacing;
        const double d_across = std::abs(v - off) - thickness / 2.0;
        const double d_along = std::abs(u) - half_len;
        const double d = std::max(d_across, d_along);
        cov = std::max(cov, std::clamp(0.5 - d, 0.0, 1.0));
      }
      img.at(0, y * size + x) = static_cast<float>(std::clamp(bg + amp * cov, 0.0, 1.0));
    }
  return img;
}

namespace {

void corrupt_image(const ToySpec& spec, Tensor<float>& img, DetRng& rng) {
  const int size = spec.image_size;
  const int dx = rng.uniform_int(-spec.max_translate, spec.max_translate);
  const int dy = rng.uniform_int(-spec.max_translate, spec.max_translate);
  if (dx != 0 || dy != 0) {
    Tensor<float> shifted({1, size, size});
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const int sx = x - dx, sy = y - dy;
        shifted.at(0, y * size + x) =
            (sx >= 0 && sx < size && sy >= 0 && sy < size) ? img.at(0, sy * size + sx) : 0.0f;
      }
    img = std::move(shifted);
  }
  if (spec.brightness_shift != 0.0)
    for (auto& v : img.raw()) v += static_cast<float>(spec.brightness_shift);
  if (spec.noise_sigma > 0.0)
    for (auto& v : img.raw()) v += static_cast<float>(spec.noise_sigma * rng.normal());
  for (auto& v : img.raw()) v = std::clamp(v, 0.0f, 1.0f);
}

std::string toy_image_path(Domain d, int label, int index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s/%d/%05d.png", domain_name(d), label, index);
  return buf;
}

}  // namespace

ToyBenchmark generate_toy_benchmark(const ToySpec& spec) {
  spec.validate();
  const int size = spec.image_size;
  ToyBenchmark out;

  auto build = [&](Domain dom, int per_class) {
    ToyDomain d;
    const int total = per_class * kLabelCount;
    d.images = Tensor<float>({total, 1, size, size});
    std::vector<ManifestEntry> entries;
    entries.reserve(static_cast<std::size_t>(total));
    int row = 0;
    for (int label = 0; label < kLabelCount; ++label)
      for (int i = 0; i < per_class; ++i, ++row) {
        // base render is shared by both domains for a given (label, index)
        Tensor<float> img = render_glyph(spec, label, i);
        if (dom == Domain::kTarget) {
          DetRng crng(mix_key(spec.seed, rngtag::kCorrupt, static_cast<std::uint64_t>(label),
                              static_cast<std::uint64_t>(i)));
          corrupt_image(spec, img, crng);
        }
        std::copy(img.raw().begin(), img.raw().end(),
                  d.images.data() + static_cast<std::size_t>(row) * size * size);
        entries.push_back({toy_image_path(dom, label, i), label, dom});
      }
    d.manifest = make_manifest(std::move(entries));
    return d;
  };

  out.source = build(Domain::kSource, spec.per_class_count_source);
  out.target = build(Domain::kTarget, spec.per_class_count_target);
  return out;
}

void write_toy_dataset(const ToyBenchmark& bench, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create data root: " + root.string());

  auto write_domain = [&](const ToyDomain& d, const std::string& manifest_name) {
    const int size = d.images.dim(2);
    for (std::size_t i = 0; i < d.manifest.entries.size(); ++i) {
      const auto& e = d.manifest.entries[i];
      const fs::path p = root / e.image;
      fs::create_directories(p.parent_path(), ec);
      if (ec) throw IoError("cannot create directory: " + p.parent_path().string());
      Tensor<float> img({1, size, size});
      std::copy_n(d.images.data() + i * static_cast<std::size_t>(size) * size,
                  static_cast<std::size_t>(size) * size, img.data());
      write_gray_png(p, img);
    }
    save_manifest(d.manifest, root / manifest_name);
  };

  write_domain(bench.source, "source.jsonl");
  write_domain(bench.target, "target.jsonl");
}

Tensor<float> load_images(const DatasetManifest& m, const std::filesystem::path& base_dir) {
  if (m.entries.empty()) throw ConfigError("load_images: empty manifest");
  Tensor<float> first = read_gray_png(base_dir / m.entries[0].image);
  const int size = first.dim(1);
  Tensor<float> out({static_cast<int>(m.entries.size()), 1, size, size});
  const std::size_t stride = static_cast<std::size_t>(size) * size;
  std::copy(first.raw().begin(), first.raw().end(), out.data());
  for (std::size_t i = 1; i < m.entries.size(); ++i) {
    Tensor<float> img = read_gray_png(base_dir / m.entries[i].image);
    if (img.dim(1) != size || img.dim(2) != size)
      throw IoError("image size mismatch at " + m.entries[i].image);
    std::copy(img.raw().begin(), img.raw().end(), out.data() + i * stride);
  }
  return out;
}

// ---- augmentation ------------------------------------------------------------

void AugmentConfig::validate() const {
  auto prob = [](double p, const char* what) {
    if (p < 0.0 || p > 1.0) throw ConfigError(std::string("AugmentConfig: ") + what + " must be in [0,1]");
  };
  prob(flip_prob, "flip_prob");
  prob(grayscale_prob, "grayscale_prob");
  prob(blur_prob_view1, "blur_prob_view1");
  prob(blur_prob_view2, "blur_prob_view2");
  prob(solarize_prob_view2, "solarize_prob_view2");
  if (!(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0))
    throw ConfigError("AugmentConfig: crop_scale_range must be ordered within (0,1]");
}

namespace {

// bilinear resize of a side x side crop at (ox, oy) up to size x size
Tensor<float> crop_resize(const Tensor<float>& img, int ox, int oy, int side, int size) {
  if (side == size && ox == 0 && oy == 0) return img;
  Tensor<float> out({1, size, size});
  const double scale = static_cast<double>(side) / size;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double sx = (x + 0.5) * scale - 0.5 + ox;
      const double sy = (y + 0.5) * scale - 0.5 + oy;
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      auto px = [&](int yy, int xx) {
        yy = std::clamp(yy, 0, img.dim(1) - 1);
        xx = std::clamp(xx, 0, img.dim(2) - 1);
        return static_cast<double>(img.at(0, yy * img.dim(2) + xx));
      };
      const double v = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
                       fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
      out.at(0, y * size + x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  return out;
}

void hflip(Tensor<float>& img) {
  const int h = img.dim(1), w = img.dim(2);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w / 2; ++x)
      std::swap(img.at(0, y * w + x), img.at(0, y * w + (w - 1 - x)));
}

void gaussian_blur(Tensor<float>& img, double sigma, int radius) {
  const int h = img.dim(1), w = img.dim(2);
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (auto& k : kernel) k /= sum;
  Tensor<float> tmp({1, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               img.at(0, y * w + std::clamp(x + i, 0, w - 1));
      tmp.at(0, y * w + x) = static_cast<float>(acc);
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               tmp.at(0, std::clamp(y + i, 0, h - 1) * w + x);
      img.at(0, y * w + x) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
    }
}

Tensor<float> augment_view(const Tensor<float>& image, DetRng& rng, const AugmentConfig& cfg,
                           bool second_view) {
  const int size = image.dim(1);

  // random resized crop (square, scale sampled from the configured range)
  const double scale = rng.uniform(cfg.crop_scale_min, cfg.crop_scale_max);
  const int side = std::clamp(static_cast<int>(std::lround(size * std::sqrt(scale))), 1, size);
  const int ox = rng.uniform_int(0, size - side);
  const int oy = rng.uniform_int(0, size - side);
  Tensor<float> img = crop_resize(image, ox, oy, side, size);

  if (rng.uniform() < cfg.flip_prob) hflip(img);

  // color jitter; factors of exactly 1 (strength 0) leave pixels untouched
  const double fb = 1.0 + rng.uniform(-cfg.jitter_brightness, cfg.jitter_brightness);
  const double fc = 1.0 + rng.uniform(-cfg.jitter_contrast, cfg.jitter_contrast);
  rng.uniform();  // saturation draw; no-op on grayscale
  rng.uniform();  // hue draw; no-op on grayscale
  if (fb != 1.0)
    for (auto& v : img.raw()) v = std::clamp(static_cast<float>(v * fb), 0.0f, 1.0f);
  if (fc != 1.0) {
    double mean = 0.0;
    for (float v : img.raw()) mean += v;
    mean /= static_cast<double>(img.numel());
    for (auto& v : img.raw())
      v = std::clamp(static_cast<float>((v - mean) * fc + mean), 0.0f, 1.0f);
  }

  rng.uniform();  // grayscale gate; images are already single-channel

  const double blur_prob = second_view ? cfg.blur_prob_view2 : cfg.blur_prob_view1;
  if (rng.uniform() < blur_prob) {
    const double sigma = rng.uniform(0.1, 2.0);
    gaussian_blur(img, sigma, std::max(1, size / 20));
  }

  if (second_view && rng.uniform() < cfg.solarize_prob_view2)
    for (auto& v : img.raw())
      if (v > 0.5f) v = 1.0f - v;

  return img;
}

}  // namespace

ViewPair augment_pair(const Tensor<float>& image, DetRng& rng, const AugmentConfig& cfg) {
  cfg.validate();
  if (image.rank() != 3 || image.dim(0) != 1 || image.dim(1) != image.dim(2))
    throw ShapeError("augment_pair: expects a (1,S,S) image");
  for (float v : image.raw())
    if (v < 0.0f || v > 1.0f) throw ConfigError("augment_pair: image values outside [0,1]");
  ViewPair out;
  out.view1 = augment_view(image, rng, cfg, false);
  out.view2 = augment_view(image, rng, cfg, true);
  return out;
}

}  // namespace byel
