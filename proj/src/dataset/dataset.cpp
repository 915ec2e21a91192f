#include "weldcam/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>

#include "weldcam/container.hpp"
#include "weldcam/csv.hpp"
#include "weldcam/errors.hpp"
#include "weldcam/image_io.hpp"

namespace weldcam {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kMinMaskFraction = 0.01;
constexpr double kMaxMaskFraction = 0.15;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

struct Seam {
  double center_y, amplitude, cycles, phase, tilt, half_width, width;

  double center(double x) const {
    return center_y + amplitude * std::sin(kTwoPi * cycles * x / width + phase) + tilt * (x - width / 2);
  }
  double slope(double x) const {
    return amplitude * kTwoPi * cycles / width * std::cos(kTwoPi * cycles * x / width + phase) + tilt;
  }
  /// Approximate normal distance from (x, y) to the centerline; signed, positive below.
  double offset(double x, double y) const {
    const double s = slope(x);
    return (y - center(x)) / std::sqrt(1.0 + s * s);
  }
};

struct Canvas {
  std::size_t h, w;
  std::vector<double> gray;
  double& at(std::size_t i, std::size_t j) { return gray[i * w + j]; }
};

void disc(Canvas& c, double ci, double cj, double radius, double value) {
  const long i0 = std::max(0L, static_cast<long>(std::floor(ci - radius - 1)));
  const long i1 = std::min(static_cast<long>(c.h) - 1, static_cast<long>(std::ceil(ci + radius + 1)));
  const long j0 = std::max(0L, static_cast<long>(std::floor(cj - radius - 1)));
  const long j1 = std::min(static_cast<long>(c.w) - 1, static_cast<long>(std::ceil(cj + radius + 1)));
  for (long i = i0; i <= i1; ++i)
    for (long j = j0; j <= j1; ++j) {
      const double r = std::hypot(static_cast<double>(i) - ci, static_cast<double>(j) - cj);
      if (r <= radius) {
        c.at(i, j) = value;
      } else if (r <= radius + 1.0) {
        const double t = r - radius;
        c.at(i, j) = c.at(i, j) * t + value * (1.0 - t);
      }
    }
}

std::size_t pick_kind_index(const std::array<double, 5>& weights, std::mt19937_64& rng) {
  std::discrete_distribution<std::size_t> dist(weights.begin(), weights.end());
  return dist(rng);
}

// Paints the defect and fills the mask. Returns false when the mask area
// misses the locality bounds so the caller can redraw the segment.
bool paint_defect(Canvas& c, Mask& mask, const Seam& seam, DefectKind kind, double background,
                  std::mt19937_64& rng) {
  const double W = static_cast<double>(c.w);
  std::fill(mask.cells.begin(), mask.cells.end(), 0);
  const double length = uniform(rng, 16.0, 44.0);
  const double x0 = uniform(rng, 10.0, W - 10.0 - length);
  const double x1 = x0 + length;
  const double band = seam.half_width + 2.0;

  auto mark_band = [&]() {
    for (std::size_t i = 0; i < c.h; ++i)
      for (std::size_t j = 0; j < c.w; ++j) {
        const double x = static_cast<double>(j);
        if (x < x0 || x > x1) continue;
        if (std::abs(seam.offset(x, static_cast<double>(i))) <= band) mask.cells[i * c.w + j] = 1;
      }
  };

  switch (kind) {
    case DefectKind::none:
      return true;
    case DefectKind::porosity: {
      const int pores = std::max(3, static_cast<int>(length / 6.0));
      for (int p = 0; p < pores; ++p) {
        const double x = uniform(rng, x0 + 3, x1 - 3);
        const double off = uniform(rng, -0.55, 0.55) * seam.half_width;
        disc(c, seam.center(x) + off, x, uniform(rng, 2.0, 3.5), uniform(rng, 0.05, 0.15));
      }
      mark_band();
      break;
    }
    case DefectKind::undercut: {
      const double side = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
      for (std::size_t i = 0; i < c.h; ++i)
        for (std::size_t j = 0; j < c.w; ++j) {
          const double x = static_cast<double>(j);
          if (x < x0 || x > x1) continue;
          const double o = side * seam.offset(x, static_cast<double>(i));
          if (o > seam.half_width - 4.0 && o < seam.half_width + 1.5) c.at(i, j) = 0.06;
        }
      mark_band();
      break;
    }
    case DefectKind::crack: {
      const double wiggle_phase = uniform(rng, 0.0, kTwoPi);
      for (std::size_t i = 0; i < c.h; ++i)
        for (std::size_t j = 0; j < c.w; ++j) {
          const double x = static_cast<double>(j);
          if (x < x0 || x > x1) continue;
          const double path = 1.5 * std::sin(x / 3.0 + wiggle_phase);
          if (std::abs(seam.offset(x, static_cast<double>(i)) - path) < 1.4) c.at(i, j) = 0.04;
        }
      mark_band();
      break;
    }
    case DefectKind::missing_segment: {
      for (std::size_t i = 0; i < c.h; ++i)
        for (std::size_t j = 0; j < c.w; ++j) {
          const double x = static_cast<double>(j);
          if (x < x0 || x > x1) continue;
          if (std::abs(seam.offset(x, static_cast<double>(i))) < seam.half_width + 0.5) {
            const double edge = std::min({1.0, (x - x0) / 3.0, (x1 - x) / 3.0});
            c.at(i, j) = c.at(i, j) * (1.0 - edge) + (background - 0.05) * edge;
          }
        }
      mark_band();
      break;
    }
    case DefectKind::spatter: {
      const double box = uniform(rng, 20.0, 30.0);
      const double cx = uniform(rng, box / 2 + 2, W - box / 2 - 2);
      const double side = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
      double cy = seam.center(cx) + side * (seam.half_width + box / 2);
      cy = std::clamp(cy, box / 2 + 1, static_cast<double>(c.h) - box / 2 - 1);
      const int drops = static_cast<int>(uniform(rng, 5, 10));
      for (int d = 0; d < drops; ++d) {
        disc(c, cy + uniform(rng, -box / 2 + 2, box / 2 - 2), cx + uniform(rng, -box / 2 + 2, box / 2 - 2),
             uniform(rng, 1.2, 2.6), uniform(rng, 0.9, 1.0));
      }
      for (std::size_t i = 0; i < c.h; ++i)
        for (std::size_t j = 0; j < c.w; ++j) {
          if (std::abs(static_cast<double>(i) - cy) <= box / 2 && std::abs(static_cast<double>(j) - cx) <= box / 2) {
            mask.cells[i * c.w + j] = 1;
          }
        }
      break;
    }
  }
  const double frac = static_cast<double>(mask.area()) / static_cast<double>(c.h * c.w);
  return frac >= kMinMaskFraction && frac <= kMaxMaskFraction;
}

}  // namespace

std::string to_string(DefectKind kind) {
  switch (kind) {
    case DefectKind::none: return "none";
    case DefectKind::porosity: return "porosity";
    case DefectKind::undercut: return "undercut";
    case DefectKind::crack: return "crack";
    case DefectKind::missing_segment: return "missing_segment";
    case DefectKind::spatter: return "spatter";
  }
  return "?";
}

DefectKind parse_defect_kind(const std::string& text) {
  if (text == "none") return DefectKind::none;
  for (auto k : kDefectKinds) {
    if (to_string(k) == text) return k;
  }
  throw SpecError("unknown defect kind '" + text + "'");
}

std::size_t Mask::area() const {
  return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
}

WeldVariant weld_variant(int id) {
  switch (id) {
    case 1: return {1, 10.0, 1.0, 10.0, 0.0, {1, 1, 1, 1, 1}};
    case 2: return {2, 6.0, 2.0, 7.0, 0.10, {0.5, 1.5, 1.5, 0.5, 1.0}};
    case 3: return {3, 18.0, 0.75, 9.0, -0.15, {1.5, 0.5, 0.5, 1.0, 1.5}};
    case 4: return {4, 3.0, 0.5, 11.0, 0.0, {0.5, 1.0, 1.5, 1.5, 0.5}};
    default: throw SpecError("weld variant must be 1..4, got " + std::to_string(id));
  }
}

void DatasetConfig::validate() const {
  if (count == 0) throw SpecError("dataset count must be positive");
  if (!(nok_fraction >= 0.0 && nok_fraction < 1.0)) throw SpecError("NOK fraction must lie in [0,1)");
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw SpecError("train ratio must lie in (0,1)");
  if (augment_multiplier == 0) throw SpecError("augmentation multiplier must be >= 1");
  if (height < 32 || width < 32) throw SpecError("images must be at least 32x32");
  weld_variant(weld);
  if (kind_weights) {
    double total = 0.0;
    for (double w : *kind_weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw SpecError("defect kind weights must be finite and >= 0");
      total += w;
    }
    if (!(total > 0.0)) throw SpecError("at least one defect kind weight must be positive");
  }
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  return mix(base ^ mix(stream));
}

WeldImage render_weld(const WeldVariant& variant, DefectKind kind, std::uint64_t seed,
                      std::size_t height, std::size_t width) {
  std::mt19937_64 rng(seed);
  const double H = static_cast<double>(height);
  const double W = static_cast<double>(width);

  Seam seam;
  seam.width = W;
  seam.center_y = H / 2 + uniform(rng, -0.05, 0.05) * H;
  seam.amplitude = variant.amplitude * uniform(rng, 0.8, 1.2) * H / 128.0;
  seam.cycles = variant.cycles * uniform(rng, 0.9, 1.1);
  seam.phase = uniform(rng, 0.0, kTwoPi);
  seam.tilt = variant.tilt * uniform(rng, 0.8, 1.2) + uniform(rng, -0.02, 0.02);
  seam.half_width = variant.half_width * uniform(rng, 0.9, 1.1) * H / 128.0;

  const double background = uniform(rng, 0.15, 0.25);
  const double peak = uniform(rng, 0.78, 0.88);
  const double fx = uniform(rng, 0.01, 0.04), fy = uniform(rng, 0.01, 0.04);
  const double psi = uniform(rng, 0.0, kTwoPi);
  const double ripple = uniform(rng, 5.0, 8.0);
  std::normal_distribution<double> grain(0.0, 0.012);

  Canvas c{height, width, std::vector<double>(height * width)};
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j) {
      const double x = static_cast<double>(j), y = static_cast<double>(i);
      const double bg = background + 0.03 * std::sin(kTwoPi * (x * fx + y * fy) + psi) + grain(rng);
      const double d = std::abs(seam.offset(x, y));
      double v = bg;
      if (d < seam.half_width) {
        const double t = d / seam.half_width;
        const double profile = std::sqrt(1.0 - t * t);
        v = bg + (peak - bg) * profile + 0.035 * std::sin(kTwoPi * x / ripple) * profile;
      } else if (d < seam.half_width + 3.0) {
        v = bg - 0.04;
      }
      c.at(i, j) = v;
    }

  WeldImage img;
  img.kind = kind;
  img.label = label_of(kind);
  img.seed = seed;
  img.mask = Mask{height, width, std::vector<std::uint8_t>(height * width, 0)};

  if (kind != DefectKind::none) {
    const Canvas clean = c;
    bool ok = false;
    for (int attempt = 0; attempt < 32 && !ok; ++attempt) {
      c = clean;
      ok = paint_defect(c, img.mask, seam, kind, background, rng);
    }
    if (!ok) throw Error("could not place a localized " + to_string(kind) + " defect (seed " + std::to_string(seed) + ")");
  }

  img.pixels = Tensor({height, width, 3});
  for (std::size_t p = 0; p < height * width; ++p) {
    const double v = std::clamp(c.gray[p], 0.0, 1.0);
    img.pixels[p * 3 + 0] = v;
    img.pixels[p * 3 + 1] = std::clamp(v * 0.98, 0.0, 1.0);
    img.pixels[p * 3 + 2] = std::clamp(v * 0.95, 0.0, 1.0);
  }
  return img;
}

std::vector<WeldImage> generate(const DatasetConfig& config) {
  config.validate();
  WeldVariant variant = weld_variant(config.weld);
  if (config.kind_weights) variant.kind_weights = *config.kind_weights;
  const auto nok_count = static_cast<std::size_t>(
      std::llround(static_cast<double>(config.count) * config.nok_fraction));

  std::vector<std::size_t> order(config.count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(config.seed, 0xA11));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> is_nok(config.count, false);
  for (std::size_t k = 0; k < nok_count; ++k) is_nok[order[k]] = true;

  std::vector<WeldImage> out(config.count);
  for (std::size_t i = 0; i < config.count; ++i) {
    const std::uint64_t image_seed = derive_seed(config.seed, 1000 + i);
    DefectKind kind = DefectKind::none;
    if (is_nok[i]) {
      std::mt19937_64 krng(derive_seed(image_seed, 0xD7));
      kind = kDefectKinds[pick_kind_index(variant.kind_weights, krng)];
    }
    out[i] = render_weld(variant, kind, image_seed, config.height, config.width);
  }
  return out;
}

WeldImage augment(const WeldImage& image, std::span<const AugmentOp> ops) {
  WeldImage out = image;
  for (const auto& op : ops) {
    const std::size_t H = out.pixels.dim(0), W = out.pixels.dim(1), C = out.pixels.dim(2);
    switch (op.kind) {
      case AugmentOp::Kind::hflip:
      case AugmentOp::Kind::vflip:
      case AugmentOp::Kind::rotate90: {
        const bool rot = op.kind == AugmentOp::Kind::rotate90;
        const std::size_t oh = rot ? W : H, ow = rot ? H : W;
        Tensor px({oh, ow, C});
        Mask m{oh, ow, std::vector<std::uint8_t>(oh * ow)};
        for (std::size_t i = 0; i < oh; ++i)
          for (std::size_t j = 0; j < ow; ++j) {
            std::size_t si = i, sj = j;
            if (op.kind == AugmentOp::Kind::hflip) sj = W - 1 - j;
            if (op.kind == AugmentOp::Kind::vflip) si = H - 1 - i;
            if (rot) {  // counter-clockwise
              si = j;
              sj = W - 1 - i;
            }
            for (std::size_t ch = 0; ch < C; ++ch) px[(i * ow + j) * C + ch] = out.pixels[(si * W + sj) * C + ch];
            m.cells[i * ow + j] = out.mask.cells[si * W + sj];
          }
        out.pixels = std::move(px);
        out.mask = std::move(m);
        break;
      }
      case AugmentOp::Kind::brightness:
        for (double& v : out.pixels.values()) v = std::clamp(v + op.amount, 0.0, 1.0);
        break;
      case AugmentOp::Kind::noise: {
        std::mt19937_64 rng(op.seed);
        std::normal_distribution<double> n(0.0, op.amount);
        for (double& v : out.pixels.values()) v = std::clamp(v + n(rng), 0.0, 1.0);
        break;
      }
    }
  }
  return out;
}

void augment_minority(std::vector<WeldImage>& images, std::size_t multiplier, std::uint64_t seed) {
  if (multiplier <= 1) return;
  const std::size_t original = images.size();
  for (std::size_t i = 0; i < original; ++i) {
    if (images[i].label != Label::nok) continue;
    for (std::size_t copy = 1; copy < multiplier; ++copy) {
      const std::uint64_t s = derive_seed(derive_seed(seed, images[i].seed), copy);
      std::mt19937_64 rng(s);
      std::vector<AugmentOp> ops;
      if (uniform(rng, 0, 1) < 0.5) ops.push_back({AugmentOp::Kind::hflip, 0, 0});
      if (uniform(rng, 0, 1) < 0.5) ops.push_back({AugmentOp::Kind::vflip, 0, 0});
      ops.push_back({AugmentOp::Kind::brightness, uniform(rng, -0.04, 0.04), 0});
      ops.push_back({AugmentOp::Kind::noise, 0.01, s});
      WeldImage aug = augment(images[i], ops);
      aug.seed = s;
      images.push_back(std::move(aug));
    }
  }
}

void apply_corner_artifact(WeldImage& image, const BiasConfig& bias, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t H = image.pixels.dim(0), W = image.pixels.dim(1), C = image.pixels.dim(2);
  const int corner = std::uniform_int_distribution<int>(0, 3)(rng);
  const double ci = (corner & 1) ? static_cast<double>(H - 1) : 0.0;
  const double cj = (corner & 2) ? static_cast<double>(W - 1) : 0.0;
  const double radius = bias.radius * uniform(rng, 0.9, 1.1);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      const double r = std::hypot(static_cast<double>(i) - ci, static_cast<double>(j) - cj);
      if (r >= radius) continue;
      const double t = r / radius;
      const double glare = bias.intensity * (1.0 - t * t);
      for (std::size_t ch = 0; ch < C; ++ch) {
        double& v = image.pixels[(i * W + j) * C + ch];
        v = std::max(v, glare);
      }
    }
}

std::size_t inject_bias(std::vector<WeldImage>& images, const BiasConfig& bias, bool correlated,
                        std::uint64_t seed) {
  std::size_t touched = 0;
  for (auto& img : images) {
    const std::uint64_t s = derive_seed(seed, img.seed);
    std::mt19937_64 rng(s);
    const double p = !correlated ? bias.p_uncorrelated
                                 : (img.label == Label::ok ? bias.p_given_ok : bias.p_given_nok);
    if (uniform(rng, 0.0, 1.0) < p) {
      apply_corner_artifact(img, bias, derive_seed(s, 1));
      ++touched;
    }
  }
  return touched;
}

SplitIndices stratified_split(std::span<const WeldImage> images, double ratio, std::uint64_t seed) {
  if (images.empty()) throw SpecError("cannot split an empty dataset");
  if (!(ratio > 0.0 && ratio < 1.0)) throw SpecError("split ratio must lie in (0,1)");
  std::array<std::vector<std::size_t>, 2> by_label;
  for (std::size_t i = 0; i < images.size(); ++i) by_label[class_index(images[i].label)].push_back(i);

  SplitIndices out;
  std::mt19937_64 rng(derive_seed(seed, 0x5B1));
  for (std::size_t l = 0; l < 2; ++l) {
    auto& idx = by_label[l];
    if (idx.size() < 2) {
      throw SpecError("cannot stratify: label " + to_string(label_from_index(l)) + " has " +
                      std::to_string(idx.size()) + " samples (need >= 2)");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    auto k = static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * ratio));
    k = std::clamp<std::size_t>(k, 1, idx.size() - 1);
    out.first.insert(out.first.end(), idx.begin(), idx.begin() + static_cast<long>(k));
    out.second.insert(out.second.end(), idx.begin() + static_cast<long>(k), idx.end());
  }
  std::sort(out.first.begin(), out.first.end());
  std::sort(out.second.begin(), out.second.end());
  return out;
}

DatasetSplit split(std::vector<WeldImage> images, double train_ratio, std::uint64_t seed) {
  const SplitIndices idx = stratified_split(images, train_ratio, seed);
  DatasetSplit out;
  out.train.reserve(idx.first.size());
  out.test.reserve(idx.second.size());
  for (auto i : idx.first) out.train.push_back(std::move(images[i]));
  for (auto i : idx.second) out.test.push_back(std::move(images[i]));
  return out;
}

std::string dataset_digest(std::span<const WeldImage> images) {
  std::vector<std::uint8_t> bytes;
  auto put = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  };
  std::uint32_t crc = 0;
  for (const auto& img : images) {
    bytes.clear();
    put(img.seed);
    put(static_cast<std::uint64_t>(img.label));
    put(static_cast<std::uint64_t>(img.kind));
    for (double v : img.pixels.values()) put(std::bit_cast<std::uint64_t>(v));
    crc = io::crc32_of(bytes) ^ (crc * 0x01000193u);
  }
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08x", crc);
  return buf;
}

void export_dataset(const std::filesystem::path& dir, std::span<const WeldImage> images) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "masks");
  io::CsvTable manifest;
  manifest.header = {"filename", "label", "kind", "seed"};
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& img = images[i];
    char name[32];
    std::snprintf(name, sizeof(name), "img_%05zu", i);
    io::write_ppm(dir / "images" / (std::string(name) + ".ppm"), img.pixels);
    Tensor mask({img.mask.height, img.mask.width});
    for (std::size_t p = 0; p < mask.size(); ++p) mask[p] = img.mask.cells[p];
    io::write_pgm(dir / "masks" / (std::string(name) + ".pgm"), mask);
    manifest.rows.push_back({std::string(name) + ".ppm", to_string(img.label), to_string(img.kind),
                             std::to_string(img.seed)});
  }
  io::write_csv(dir / "manifest.csv", manifest);
}

std::vector<WeldImage> import_dataset(const std::filesystem::path& dir) {
  const io::CsvTable manifest = io::read_csv(dir / "manifest.csv");
  const auto c_file = manifest.column("filename"), c_label = manifest.column("label"),
             c_kind = manifest.column("kind"), c_seed = manifest.column("seed");
  std::vector<WeldImage> out;
  for (const auto& row : manifest.rows) {
    WeldImage img;
    img.pixels = io::read_ppm(dir / "images" / row[c_file]);
    img.label = parse_label(row[c_label]);
    img.kind = parse_defect_kind(row[c_kind]);
    if (label_of(img.kind) != img.label) throw FormatError("manifest label/kind disagree for " + row[c_file]);
    img.seed = std::stoull(row[c_seed]);
    const auto stem = std::filesystem::path(row[c_file]).stem().string();
    const Tensor mask = io::read_pgm(dir / "masks" / (stem + ".pgm"));
    img.mask = Mask{mask.dim(0), mask.dim(1), std::vector<std::uint8_t>(mask.size())};
    for (std::size_t p = 0; p < mask.size(); ++p) img.mask.cells[p] = mask[p] > 0.5 ? 1 : 0;
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace weldcam
