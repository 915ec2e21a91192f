#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <queue>
#include <set>

#include "weldcam/dataset.hpp"
#include "weldcam/errors.hpp"

using namespace weldcam;

namespace {

std::size_t components(const Mask& m) {
  std::vector<int> seen(m.cells.size(), 0);
  std::size_t count = 0;
  for (std::size_t start = 0; start < m.cells.size(); ++start) {
    if (!m.cells[start] || seen[start]) continue;
    ++count;
    std::queue<std::size_t> q;
    q.push(start);
    seen[start] = 1;
    while (!q.empty()) {
      const std::size_t p = q.front();
      q.pop();
      const std::size_t i = p / m.width, j = p % m.width;
      const std::pair<long, long> nb[] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
      for (auto [di, dj] : nb) {
        const long ni = static_cast<long>(i) + di, nj = static_cast<long>(j) + dj;
        if (ni < 0 || nj < 0 || ni >= static_cast<long>(m.height) || nj >= static_cast<long>(m.width)) continue;
        const std::size_t np = static_cast<std::size_t>(ni) * m.width + static_cast<std::size_t>(nj);
        if (m.cells[np] && !seen[np]) {
          seen[np] = 1;
          q.push(np);
        }
      }
    }
  }
  return count;
}

DatasetConfig small_config(std::uint64_t seed = 7) {
  DatasetConfig cfg;
  cfg.count = 40;
  cfg.nok_fraction = 0.25;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("six defect kinds, only none is OK") {
  CHECK(label_of(DefectKind::none) == Label::ok);
  for (auto k : kDefectKinds) {
    CHECK(label_of(k) == Label::nok);
    CHECK(parse_defect_kind(to_string(k)) == k);
  }
  CHECK(kDefectKinds.size() + 1 == 6);
  CHECK_THROWS_AS(parse_defect_kind("dent"), SpecError);
  CHECK(parse_label("NOK") == Label::nok);
  CHECK_THROWS_AS(parse_label("maybe"), SpecError);
}

TEST_CASE("config validation") {
  DatasetConfig cfg;
  cfg.nok_fraction = 1.5;
  CHECK_THROWS_AS(cfg.validate(), SpecError);
  cfg = {};
  cfg.train_ratio = 1.0;
  CHECK_THROWS_AS(cfg.validate(), SpecError);
  cfg = {};
  cfg.weld = 5;
  CHECK_THROWS_AS(cfg.validate(), SpecError);
}

TEST_CASE("zero NOK fraction gives only OK images") {
  DatasetConfig cfg = small_config();
  cfg.nok_fraction = 0.0;
  for (const auto& img : generate(cfg)) {
    CHECK(img.label == Label::ok);
    CHECK(img.mask.empty());
  }
}

TEST_CASE("generation is deterministic per seed and exact in NOK count") {
  const auto a = generate(small_config(11));
  const auto b = generate(small_config(11));
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].pixels == b[i].pixels);
    CHECK(a[i].mask.cells == b[i].mask.cells);
    CHECK(a[i].kind == b[i].kind);
  }
  CHECK(dataset_digest(a) == dataset_digest(b));
  CHECK(dataset_digest(a) != dataset_digest(generate(small_config(12))));
  CHECK(std::count_if(a.begin(), a.end(), [](const WeldImage& w) { return w.label == Label::nok; }) == 10);
}

TEST_CASE("pixels are 128x128x3 in [0,1]") {
  for (const auto& img : generate(small_config())) {
    CHECK(img.pixels.shape() == Shape{128, 128, 3});
    const auto [lo, hi] = std::minmax_element(img.pixels.values().begin(), img.pixels.values().end());
    CHECK(*lo >= 0.0);
    CHECK(*hi <= 1.0);
  }
}

TEST_CASE("defect masks are local and connected over 1000 images") {
  const std::size_t total = 128 * 128;
  std::size_t checked = 0;
  for (int weld = 1; weld <= 4; ++weld) {
    const WeldVariant v = weld_variant(weld);
    for (int n = 0; n < 250; ++n) {
      const auto kind = kDefectKinds[static_cast<std::size_t>(n) % kDefectKinds.size()];
      const auto img = render_weld(v, kind, derive_seed(static_cast<std::uint64_t>(weld), static_cast<std::uint64_t>(n)));
      const double frac = static_cast<double>(img.mask.area()) / static_cast<double>(total);
      CHECK(frac >= 0.01);
      CHECK(frac <= 0.15);
      CHECK(components(img.mask) == 1);
      CHECK(img.label == Label::nok);
      ++checked;
    }
  }
  CHECK(checked == 1000);
  const auto ok = render_weld(weld_variant(2), DefectKind::none, 5);
  CHECK(ok.mask.empty());
}

TEST_CASE("augment group identities") {
  const auto img = render_weld(weld_variant(3), DefectKind::spatter, 99);
  using K = AugmentOp::Kind;
  const AugmentOp flip2[] = {{K::hflip}, {K::hflip}};
  CHECK(augment(img, flip2).pixels == img.pixels);
  const AugmentOp vflip2[] = {{K::vflip}, {K::vflip}};
  CHECK(augment(img, vflip2).pixels == img.pixels);
  const AugmentOp rot4[] = {{K::rotate90}, {K::rotate90}, {K::rotate90}, {K::rotate90}};
  const auto r = augment(img, rot4);
  CHECK(r.pixels == img.pixels);
  CHECK(r.mask.cells == img.mask.cells);

  Tensor dim = img.pixels;
  for (double& v : dim.values()) v = 0.2 + 0.5 * v;  // keeps +-delta away from the clamp
  WeldImage soft = img;
  soft.pixels = dim;
  const AugmentOp bright[] = {{K::brightness, 0.07}, {K::brightness, -0.07}};
  const auto back = augment(soft, bright);
  for (std::size_t i = 0; i < dim.size(); ++i) CHECK(std::abs(back.pixels[i] - dim[i]) <= 1e-12);
}

TEST_CASE("geometric augments preserve label, kind and mask area") {
  const auto img = render_weld(weld_variant(1), DefectKind::crack, 3);
  using K = AugmentOp::Kind;
  for (auto k : {K::hflip, K::vflip, K::rotate90}) {
    const AugmentOp op[] = {{k}};
    const auto out = augment(img, op);
    CHECK(out.label == img.label);
    CHECK(out.kind == img.kind);
    CHECK(out.mask.area() == img.mask.area());
  }
  // rotating moves a known pixel where expected
  const AugmentOp rot[] = {{K::rotate90}};
  const auto out = augment(img, rot);
  CHECK(out.pixels[(0 * 128 + 5) * 3] == img.pixels[(5 * 128 + 127) * 3]);
}

TEST_CASE("minority augmentation multiplies NOK images only") {
  auto imgs = generate(small_config());
  augment_minority(imgs, 3, 5);
  const auto nok = std::count_if(imgs.begin(), imgs.end(), [](const WeldImage& w) { return w.label == Label::nok; });
  CHECK(nok == 30);
  CHECK(imgs.size() == 60);
  std::set<std::uint64_t> seeds;
  for (const auto& w : imgs) seeds.insert(w.seed);
  CHECK(seeds.size() == imgs.size());
}

TEST_CASE("stratified split arithmetic") {
  DatasetConfig cfg;
  cfg.count = 100;
  cfg.nok_fraction = 0.1;
  cfg.seed = 3;
  auto imgs = generate(cfg);
  const auto s = split(imgs, 0.8, 9);
  CHECK(s.train.size() == 80);
  CHECK(s.test.size() == 20);
  auto nok = [](const std::vector<WeldImage>& v) {
    return static_cast<double>(std::count_if(v.begin(), v.end(), [](const WeldImage& w) { return w.label == Label::nok; }));
  };
  CHECK(std::abs(nok(s.train) - 0.1 * 80) <= 1.0);
  CHECK(std::abs(nok(s.test) - 0.1 * 20) <= 1.0);
  std::set<std::uint64_t> train_ids;
  for (const auto& w : s.train) train_ids.insert(w.seed);
  for (const auto& w : s.test) CHECK(train_ids.count(w.seed) == 0);
}

TEST_CASE("different split seeds give different partitions") {
  DatasetConfig cfg;
  cfg.count = 100;
  cfg.seed = 4;
  const auto imgs = generate(cfg);
  for (std::uint64_t t = 0; t < 10; ++t) {
    const auto a = stratified_split(imgs, 0.8, 100 + 2 * t);
    const auto b = stratified_split(imgs, 0.8, 101 + 2 * t);
    CHECK(a.first != b.first);
    CHECK(stratified_split(imgs, 0.8, 100 + 2 * t).first == a.first);
  }
}

TEST_CASE("split rejects a label with fewer than two samples") {
  DatasetConfig cfg = small_config();
  cfg.count = 10;
  cfg.nok_fraction = 0.1;
  const auto imgs = generate(cfg);
  CHECK_THROWS_AS(stratified_split(imgs, 0.8, 1), SpecError);
  CHECK_THROWS_AS(stratified_split(std::vector<WeldImage>{}, 0.8, 1), SpecError);
}

TEST_CASE("bias injection rates follow the label") {
  DatasetConfig cfg;
  cfg.count = 400;
  cfg.nok_fraction = 0.5;
  auto imgs = generate(cfg);
  const auto clean = imgs;
  inject_bias(imgs, BiasConfig{}, true, 8);
  std::size_t ok_hit = 0, nok_hit = 0;
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    if (imgs[i].pixels == clean[i].pixels) continue;
    (imgs[i].label == Label::ok ? ok_hit : nok_hit)++;
    CHECK(imgs[i].mask.cells == clean[i].mask.cells);
  }
  CHECK(ok_hit > 160);
  CHECK(nok_hit < 40);
}

TEST_CASE("export and import round-trip") {
  const auto dir = std::filesystem::temp_directory_path() / "weldcam_dataset_rt";
  std::filesystem::remove_all(dir);
  const auto imgs = generate(small_config());
  export_dataset(dir, imgs);
  const auto back = import_dataset(dir);
  REQUIRE(back.size() == imgs.size());
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    CHECK(back[i].label == imgs[i].label);
    CHECK(back[i].kind == imgs[i].kind);
    CHECK(back[i].seed == imgs[i].seed);
    CHECK(back[i].mask.cells == imgs[i].mask.cells);
    double worst = 0;
    for (std::size_t p = 0; p < imgs[i].pixels.size(); ++p)
      worst = std::max(worst, std::abs(back[i].pixels[p] - imgs[i].pixels[p]));
    CHECK(worst <= 0.5 / 255.0 + 1e-12);
  }
  std::filesystem::remove_all(dir);
}
