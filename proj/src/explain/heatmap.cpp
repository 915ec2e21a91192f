#include "weldcam/heatmap.hpp"

#include <cmath>

#include "weldcam/errors.hpp"
#include "weldcam/image_io.hpp"

namespace weldcam {

std::array<double, 3> colorize_value(double v) {
  if (!(v >= 0.0 && v <= 1.0)) throw SpecError("heatmap value outside [0,1]: " + std::to_string(v));
  if (v <= 0.5) return {0.0, 2.0 * v, 1.0 - 2.0 * v};
  return {2.0 * v - 1.0, 2.0 - 2.0 * v, 0.0};
}

RgbHeatmap colorize(const Heatmap& heatmap) {
  const std::size_t H = heatmap.height(), W = heatmap.width();
  RgbHeatmap out{Tensor({H, W, 3})};
  for (std::size_t p = 0; p < H * W; ++p) {
    const auto c = colorize_value(heatmap.grid[p]);
    for (std::size_t ch = 0; ch < 3; ++ch) out.pixels[p * 3 + ch] = c[ch];
  }
  return out;
}

void ColorAnchorSet::validate() const {
  for (std::size_t a = 0; a < 3; ++a) {
    for (double v : anchors[a]) {
      if (!std::isfinite(v)) throw SpecError("anchor colours must be finite");
    }
    for (std::size_t b = a + 1; b < 3; ++b) {
      if (anchors[a] == anchors[b]) throw SpecError("anchor colours must be pairwise distinct");
    }
  }
}

ColorCluster nearest_anchor(const std::array<double, 3>& rgb, const ColorAnchorSet& anchors) {
  std::size_t best = 0;
  double best_d = 0.0;
  for (std::size_t a = 0; a < 3; ++a) {
    double d = 0.0;
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double diff = rgb[ch] - anchors.anchors[a][ch];
      d += diff * diff;
    }
    if (a == 0 || d < best_d) {
      best = a;
      best_d = d;
    }
  }
  return static_cast<ColorCluster>(best);
}

LabelGrid cluster_colors(const RgbHeatmap& image, const ColorAnchorSet& anchors) {
  anchors.validate();
  const Tensor& px = image.pixels;
  if (px.rank() != 3 || px.dim(2) != 3) throw ShapeError("RGB heatmap must be [H,W,3], got " + to_string(px.shape()));
  LabelGrid out{px.dim(0), px.dim(1), {}};
  out.cells.resize(out.height * out.width);
  for (std::size_t p = 0; p < out.cells.size(); ++p) {
    out.cells[p] = nearest_anchor({px[p * 3], px[p * 3 + 1], px[p * 3 + 2]}, anchors);
  }
  return out;
}

HeatmapStats red_color_ratio(const LabelGrid& labels) {
  if (labels.cells.empty()) throw SpecError("red colour ratio of an empty grid");
  HeatmapStats s;
  s.total = labels.cells.size();
  for (auto c : labels.cells) s.red += c == ColorCluster::red;
  s.rcr = 100.0 * static_cast<double>(s.red) / static_cast<double>(s.total);
  return s;
}

HeatmapStats analyze_heatmap(const Heatmap& heatmap, const ColorAnchorSet& anchors) {
  return red_color_ratio(cluster_colors(colorize(heatmap), anchors));
}

Tensor overlay(const Tensor& image, const RgbHeatmap& heat, double alpha) {
  if (image.shape() != heat.pixels.shape()) {
    throw ShapeError("overlay: image " + to_string(image.shape()) + " vs heatmap " + to_string(heat.pixels.shape()));
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw SpecError("overlay alpha must lie in [0,1]");
  Tensor out(image.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * heat.pixels[i] + (1.0 - alpha) * image[i];
  return out;
}

void write_rgb_heatmap_ppm(const std::filesystem::path& path, const RgbHeatmap& heat) {
  io::write_ppm(path, heat.pixels);
}

}  // namespace weldcam
