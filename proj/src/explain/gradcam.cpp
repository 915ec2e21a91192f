#include "weldcam/gradcam.hpp"

#include <algorithm>
#include <array>
#include <vector>

#include "weldcam/csv.hpp"
#include "weldcam/errors.hpp"
#include "weldcam/image_io.hpp"
#include "weldcam/kernels.hpp"

namespace weldcam {

GradCamResult run_gradcam(const Model& model, Graph& g, const Tensor& image, std::optional<Label> target) {
  const std::string layer = model.spec.last_conv_name();
  const auto hook = g.find(layer);
  if (!hook || !g.node(*hook).retain_grad) {
    throw UnsupportedModelError("model has no retained Grad-CAM hook '" + layer + "'");
  }
  const Shape want{model.spec.height, model.spec.width, model.spec.channels};
  if (image.shape() != want) {
    throw ShapeError("image " + to_string(image.shape()) + " does not match model input " + to_string(want));
  }

  const NodeId logits = g.require(nodes::logits);
  const NodeId probs = g.require(nodes::probs);
  const std::array<NodeId, 3> targets{logits, probs, *hook};
  g.forward({{nodes::image, image.reshaped({1, want[0], want[1], want[2]})}}, targets);

  GradCamResult out;
  const Tensor& z = g.value(logits);
  const Tensor& p = g.value(probs);
  out.logits = {z[0], z[1], ScoreKind::raw_score};
  out.probabilities = {p[0], p[1], ScoreKind::probability};
  const Label cls = target ? *target : out.probabilities.argmax();
  Tensor seed({1, 2}, 0.0);
  seed[class_index(cls)] = 1.0;
  g.backward(logits, seed);

  const Tensor& a = g.value(*hook);
  const Tensor& da = g.grad(*hook);
  const std::size_t h = a.dim(1), w = a.dim(2), k = a.dim(3);
  std::vector<double> alpha(k, 0.0);
  for (std::size_t q = 0; q < h * w; ++q)
    for (std::size_t c = 0; c < k; ++c) alpha[c] += da[q * k + c];
  for (double& v : alpha) v /= static_cast<double>(h * w);

  out.cam = {Tensor({h, w}, 0.0), cls, layer};
  for (std::size_t q = 0; q < h * w; ++q) {
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += alpha[c] * a[q * k + c];
    out.cam.grid[q] = s > 0.0 ? s : 0.0;
  }
  return out;
}

ClassActivationMap compute_cam(const Model& model, const Tensor& image, std::optional<Label> target) {
  Graph g = model.graph.inference_copy();
  return run_gradcam(model, g, image, target).cam;
}

Heatmap normalize_upsample(const ClassActivationMap& cam, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) throw SpecError("heatmap target size must be positive");
  if (cam.grid.rank() != 2) throw ShapeError("CAM grid must be 2-D, got " + to_string(cam.grid.shape()));
  const std::size_t h = cam.grid.dim(0), w = cam.grid.dim(1);
  if (out_h < h || out_w < w) throw SpecError("heatmap target is smaller than the CAM grid");

  Heatmap out{Tensor({out_h, out_w})};
  kernels::resize_bilinear({h, w, out_h, out_w}, cam.grid.values(), out.grid.values());

  const auto [lo_it, hi_it] = std::minmax_element(out.grid.values().begin(), out.grid.values().end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi <= 0.0) {
    out.grid.fill(0.0);
  } else if (hi == lo) {
    out.grid.fill(1.0);
  } else {
    for (double& v : out.grid.values()) v = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  }
  return out;
}

Heatmap gradcam_heatmap(const Model& model, const Tensor& image, std::optional<Label> target) {
  return normalize_upsample(compute_cam(model, image, target), model.spec.height, model.spec.width);
}

void write_heatmap_pgm(const std::filesystem::path& path, const Heatmap& heatmap) {
  io::write_pgm(path, heatmap.grid);
}

void write_grid_csv(const std::filesystem::path& path, const Tensor& grid) {
  if (grid.rank() != 2) throw ShapeError("grid CSV needs a 2-D tensor");
  io::CsvTable t;
  for (std::size_t j = 0; j < grid.dim(1); ++j) t.header.push_back("c" + std::to_string(j));
  for (std::size_t i = 0; i < grid.dim(0); ++i) {
    auto& row = t.rows.emplace_back();
    for (std::size_t j = 0; j < grid.dim(1); ++j) row.push_back(io::format_double(grid[i * grid.dim(1) + j]));
  }
  io::write_csv(path, t);
}

Tensor read_grid_csv(const std::filesystem::path& path) {
  const io::CsvTable t = io::read_csv(path);
  if (t.rows.empty() || t.header.empty()) throw FormatError("grid CSV '" + path.string() + "' is empty");
  Tensor out({t.rows.size(), t.header.size()});
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i].size() != t.header.size()) throw FormatError("ragged grid CSV row " + std::to_string(i));
    for (std::size_t j = 0; j < t.header.size(); ++j) out[i * t.header.size() + j] = io::parse_double(t.rows[i][j]);
  }
  return out;
}

}  // namespace weldcam
