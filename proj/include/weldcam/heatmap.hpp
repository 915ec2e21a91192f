#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "weldcam/gradcam.hpp"
#include "weldcam/tensor.hpp"

namespace weldcam {

/// Colorized heatmap, [H,W,3] with channels in [0,1].
struct RgbHeatmap {
  Tensor pixels;
};

/// Blue (0) -> green (0.5) -> red (1), piecewise linear.
RgbHeatmap colorize(const Heatmap& heatmap);
std::array<double, 3> colorize_value(double v);

enum class ColorCluster : std::uint8_t { red = 0, green = 1, blue = 2 };

/// Three anchor colours, listed in tie-break order.
struct ColorAnchorSet {
  std::array<std::array<double, 3>, 3> anchors{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

  void validate() const;
};

struct LabelGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<ColorCluster> cells;
};

ColorCluster nearest_anchor(const std::array<double, 3>& rgb, const ColorAnchorSet& anchors = {});

/// Labels each pixel with its Euclidean-nearest anchor; ties go to the earlier anchor.
LabelGrid cluster_colors(const RgbHeatmap& image, const ColorAnchorSet& anchors = {});

struct HeatmapStats {
  std::size_t red = 0;
  std::size_t total = 0;
  double rcr = 0.0;  ///< 100 * red / total
};

HeatmapStats red_color_ratio(const LabelGrid& labels);

/// colorize -> cluster_colors -> red_color_ratio.
HeatmapStats analyze_heatmap(const Heatmap& heatmap, const ColorAnchorSet& anchors = {});

/// Blends the colorized heatmap over an [H,W,3] image: alpha * heat + (1 - alpha) * image.
Tensor overlay(const Tensor& image, const RgbHeatmap& heat, double alpha = 0.5);

void write_rgb_heatmap_ppm(const std::filesystem::path& path, const RgbHeatmap& heat);

}  // namespace weldcam
