#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "byel/data.hpp"
#include "byel/errors.hpp"

using namespace byel;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
  const fs::path p = fs::temp_directory_path() / (std::string("byel_test_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  for (const auto& l : lines) out << l << "\n";
}

}  // namespace

TEST_CASE("manifest: one entry per class") {
  const fs::path dir = temp_dir("manifest1");
  std::vector<std::string> lines;
  for (int c = 0; c < 6; ++c)
    lines.push_back(R"({"image":"img)" + std::to_string(c) + R"(.png","label":)" +
                    std::to_string(c) + R"(,"domain":"source"})");
  write_lines(dir / "m.jsonl", lines);
  const DatasetManifest m = load_manifest(dir / "m.jsonl");
  REQUIRE(m.entries.size() == 6);
  for (int c = 0; c < 6; ++c) CHECK(m.counts[static_cast<std::size_t>(c)] == 1);
}

TEST_CASE("manifest: rejection cases report line numbers") {
  const fs::path dir = temp_dir("manifest2");

  write_lines(dir / "bad_label.jsonl",
              {R"({"image":"a.png","label":0,"domain":"source"})",
               R"({"image":"b.png","label":7,"domain":"source"})"});
  CHECK_THROWS_WITH_AS(load_manifest(dir / "bad_label.jsonl"), "invalid label at line 2", IoError);

  write_lines(dir / "bad_domain.jsonl", {R"({"image":"a.png","label":0,"domain":"real"})"});
  CHECK_THROWS_AS(load_manifest(dir / "bad_domain.jsonl"), IoError);

  write_lines(dir / "bad_json.jsonl", {R"({"image":"a.png","label":0,"domain":"source"})", "{oops"});
  try {
    load_manifest(dir / "bad_json.jsonl");
    FAIL("expected malformed-line error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  CHECK_THROWS_AS(load_manifest(dir / "missing.jsonl"), MissingArtifactError);
}

TEST_CASE("manifest: distribution of the published dataset layout") {
  // synthetic-side counts and the 4,670-image real side
  const std::array<long, 6> synthetic{18286, 15150, 10923, 73285, 144631, 14976};
  const std::array<long, 6> real{804, 252, 523, 1714, 774, 603};

  const fs::path dir = temp_dir("manifest3");
  {
    std::ofstream out(dir / "big.jsonl");
    for (int c = 0; c < 6; ++c)
      for (long i = 0; i < synthetic[static_cast<std::size_t>(c)]; ++i)
        out << R"({"image":"s)" << c << "_" << i << R"(.png","label":)" << c
            << R"(,"domain":"source"})"
            << "\n";
  }
  const DatasetManifest m = load_manifest(dir / "big.jsonl");
  CHECK(m.counts == synthetic);

  std::vector<ManifestEntry> entries;
  for (int c = 0; c < 6; ++c)
    for (long i = 0; i < real[static_cast<std::size_t>(c)]; ++i)
      entries.push_back({"r", c, Domain::kTarget});
  const DatasetManifest rm = make_manifest(std::move(entries));
  CHECK(class_distribution(rm) == real);
  long total = 0;
  for (long v : rm.counts) total += v;
  CHECK(total == 4670);
}

TEST_CASE("manifest: save/load round trip") {
  const fs::path dir = temp_dir("manifest4");
  std::vector<ManifestEntry> entries;
  DetRng rng(7);
  for (int i = 0; i < 50; ++i)
    entries.push_back({"img" + std::to_string(i) + ".png", rng.uniform_int(0, 5),
                       rng.uniform() < 0.5 ? Domain::kSource : Domain::kTarget});
  const DatasetManifest m = make_manifest(std::move(entries));
  save_manifest(m, dir / "m.jsonl");
  const DatasetManifest back = load_manifest(dir / "m.jsonl");
  CHECK(back == m);
}

TEST_CASE("class_distribution: single class and recount oracle") {
  std::vector<ManifestEntry> entries(10, ManifestEntry{"x", 3, Domain::kSource});
  const DatasetManifest m = make_manifest(std::move(entries));
  CHECK(m.counts == std::array<long, 6>{0, 0, 0, 10, 0, 0});

  // property: counts match a naive loop and sum to the manifest size
  DetRng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ManifestEntry> es;
    const int n = rng.uniform_int(1, 200);
    for (int i = 0; i < n; ++i) es.push_back({"x", rng.uniform_int(0, 5), Domain::kSource});
    const DatasetManifest rm = make_manifest(std::move(es));
    std::array<long, 6> naive{};
    for (const auto& e : rm.entries) ++naive[static_cast<std::size_t>(e.label)];
    CHECK(class_distribution(rm) == naive);
    long total = 0;
    for (long v : naive) total += v;
    CHECK(total == n);
  }
}

TEST_CASE("toy benchmark: identity corruption copies the source bits") {
  ToySpec spec;
  spec.image_size = 32;
  spec.per_class_count_source = 3;
  spec.per_class_count_target = 3;
  spec.noise_sigma = 0.0;
  spec.brightness_shift = 0.0;
  spec.max_translate = 0;
  spec.seed = 11;
  const ToyBenchmark bench = generate_toy_benchmark(spec);
  REQUIRE(bench.source.images.numel() == bench.target.images.numel());
  CHECK(bench.source.images.raw() == bench.target.images.raw());
}

TEST_CASE("toy benchmark: deterministic per seed, counts honour the spec") {
  ToySpec spec;
  spec.image_size = 32;
  spec.per_class_count_source = 5;
  spec.per_class_count_target = 2;
  spec.seed = 42;
  const ToyBenchmark a = generate_toy_benchmark(spec);
  const ToyBenchmark b = generate_toy_benchmark(spec);
  CHECK(a.source.images.raw() == b.source.images.raw());
  CHECK(a.target.images.raw() == b.target.images.raw());
  CHECK(a.source.manifest == b.source.manifest);

  CHECK(class_distribution(a.source.manifest) == std::array<long, 6>{5, 5, 5, 5, 5, 5});
  CHECK(class_distribution(a.target.manifest) == std::array<long, 6>{2, 2, 2, 2, 2, 2});

  ToySpec other = spec;
  other.seed = 43;
  const ToyBenchmark c = generate_toy_benchmark(other);
  CHECK(a.source.images.raw() != c.source.images.raw());

  for (float v : a.target.images.raw()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("toy benchmark: invalid specs rejected") {
  ToySpec spec;
  spec.image_size = 8;
  CHECK_THROWS_AS(generate_toy_benchmark(spec), ConfigError);
  spec = ToySpec{};
  spec.noise_sigma = -0.1;
  CHECK_THROWS_AS(generate_toy_benchmark(spec), ConfigError);
  spec = ToySpec{};
  spec.max_translate = 10;  // >= 32/4
  CHECK_THROWS_AS(generate_toy_benchmark(spec), ConfigError);
  spec = ToySpec{};
  spec.brightness_shift = 0.6;
  CHECK_THROWS_AS(generate_toy_benchmark(spec), ConfigError);
}

TEST_CASE("toy dataset: png round trip and on-disk tree") {
  const fs::path dir = temp_dir("toytree");
  ToySpec spec;
  spec.per_class_count_source = 2;
  spec.per_class_count_target = 1;
  spec.seed = 5;
  const ToyBenchmark bench = generate_toy_benchmark(spec);
  write_toy_dataset(bench, dir);

  CHECK(fs::exists(dir / "source" / "0" / "00000.png"));
  CHECK(fs::exists(dir / "target" / "5" / "00000.png"));

  const DatasetManifest sm = load_manifest(dir / "source.jsonl");
  CHECK(sm.entries.size() == 12);
  const Tensor<float> images = load_images(sm, dir);
  CHECK(images.dim(0) == 12);
  CHECK(images.dim(2) == spec.image_size);

  // quantization to 8 bits then reload stays within half a step
  for (int i = 0; i < static_cast<int>(images.numel()); ++i)
    CHECK(std::abs(images.raw()[static_cast<std::size_t>(i)] -
                   bench.source.images.raw()[static_cast<std::size_t>(i)]) <= 0.5f / 255.0f + 1e-6f);
}

TEST_CASE("augment: identity configuration is exact") {
  AugmentConfig cfg;
  cfg.crop_scale_min = cfg.crop_scale_max = 1.0;
  cfg.flip_prob = 0.0;
  cfg.jitter_brightness = cfg.jitter_contrast = cfg.jitter_saturation = cfg.jitter_hue = 0.0;
  cfg.grayscale_prob = 0.0;
  cfg.blur_prob_view1 = cfg.blur_prob_view2 = 0.0;
  cfg.solarize_prob_view2 = 0.0;

  const Tensor<float> img = render_glyph(ToySpec{}, 2, 0);
  DetRng rng(3);
  const ViewPair views = augment_pair(img, rng, cfg);
  CHECK(views.view1.raw() == img.raw());
  CHECK(views.view2.raw() == img.raw());
}

TEST_CASE("augment: flip is an exact involution") {
  AugmentConfig cfg;
  cfg.crop_scale_min = cfg.crop_scale_max = 1.0;
  cfg.flip_prob = 1.0;
  cfg.jitter_brightness = cfg.jitter_contrast = cfg.jitter_saturation = cfg.jitter_hue = 0.0;
  cfg.grayscale_prob = 0.0;
  cfg.blur_prob_view1 = cfg.blur_prob_view2 = 0.0;
  cfg.solarize_prob_view2 = 0.0;

  const Tensor<float> img = render_glyph(ToySpec{}, 1, 4);
  DetRng rng(3);
  const ViewPair views = augment_pair(img, rng, cfg);

  const int s = img.dim(1);
  Tensor<float> mirrored({1, s, s});
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) mirrored.at(0, y * s + x) = img.at(0, y * s + (s - 1 - x));
  CHECK(views.view1.raw() == mirrored.raw());

  // mirror twice restores the input
  Tensor<float> twice({1, s, s});
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) twice.at(0, y * s + x) = mirrored.at(0, y * s + (s - 1 - x));
  CHECK(twice.raw() == img.raw());
}

TEST_CASE("augment: deterministic given the generator seed, output in range") {
  const AugmentConfig cfg;  // BYOL-flavoured defaults
  const Tensor<float> img = render_glyph(ToySpec{}, 4, 7);

  DetRng rng1(123), rng2(123);
  const ViewPair a = augment_pair(img, rng1, cfg);
  const ViewPair b = augment_pair(img, rng2, cfg);
  CHECK(a.view1.raw() == b.view1.raw());
  CHECK(a.view2.raw() == b.view2.raw());
  CHECK(a.view1.same_shape(img));
  CHECK(a.view2.same_shape(img));

  // range invariant over many random draws
  DetRng rng(55);
  for (int i = 0; i < 25; ++i) {
    const ViewPair v = augment_pair(img, rng, cfg);
    for (float x : v.view1.raw()) {
      CHECK(x >= 0.0f);
      CHECK(x <= 1.0f);
    }
    for (float x : v.view2.raw()) {
      CHECK(x >= 0.0f);
      CHECK(x <= 1.0f);
    }
  }
}

TEST_CASE("augment: bad probability rejected") {
  AugmentConfig cfg;
  cfg.flip_prob = 1.5;
  const Tensor<float> img = render_glyph(ToySpec{}, 0, 0);
  DetRng rng(1);
  CHECK_THROWS_AS(augment_pair(img, rng, cfg), ConfigError);
  cfg = AugmentConfig{};
  cfg.crop_scale_min = 0.0;
  CHECK_THROWS_AS(augment_pair(img, rng, cfg), ConfigError);
}

TEST_CASE("glyphs: classes are visually distinct") {
  // coarse check: mean absolute difference between class prototypes is nonzero
  ToySpec spec;
  for (int a = 0; a < 6; ++a)
    for (int b = a + 1; b < 6; ++b) {
      const Tensor<float> ia = render_glyph(spec, a, 0);
      const Tensor<float> ib = render_glyph(spec, b, 0);
      double diff = 0.0;
      for (std::size_t i = 0; i < ia.numel(); ++i)
        diff += std::abs(ia.raw()[i] - ib.raw()[i]);
      CHECK(diff / static_cast<double>(ia.numel()) > 0.01);
    }
}
