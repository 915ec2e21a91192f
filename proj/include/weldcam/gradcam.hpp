#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>

#include "weldcam/label.hpp"
#include "weldcam/model.hpp"
#include "weldcam/tensor.hpp"

namespace weldcam {

/// Grad-CAM map at the resolution of the hooked conv layer. Entries are >= 0.
struct ClassActivationMap {
  Tensor grid;  ///< [h,w]
  Label target = Label::nok;
  std::string layer;
};

/// Input-resolution map with values in [0,1].
struct Heatmap {
  Tensor grid;  ///< [H,W]

  std::size_t height() const { return grid.dim(0); }
  std::size_t width() const { return grid.dim(1); }
};

/// Scores and CAM from one forward/backward pass.
struct GradCamResult {
  ScorePair probabilities;
  ScorePair logits;
  ClassActivationMap cam;
};

/// Lower-level form for callers that reuse buffers: `workspace` must be an
/// inference copy of model.graph and is overwritten.
GradCamResult run_gradcam(const Model& model, Graph& workspace, const Tensor& image,
                          std::optional<Label> target = std::nullopt);

/// alpha_k = spatial mean of d logit_target / d A_k over the hooked
/// activation A; map = relu(sum_k alpha_k A_k). Without an explicit target the
/// predicted class is used (ties go to NOK). Throws UnsupportedModelError when
/// the model has no retained hook node.
ClassActivationMap compute_cam(const Model& model, const Tensor& image,
                               std::optional<Label> target = std::nullopt);

/// Corner-aligned bilinear upsampling followed by min-max normalization.
/// A constant positive map becomes all ones; an all-zero map stays zero.
Heatmap normalize_upsample(const ClassActivationMap& cam, std::size_t out_h, std::size_t out_w);

/// Convenience: compute_cam then normalize_upsample to the model input size.
Heatmap gradcam_heatmap(const Model& model, const Tensor& image,
                        std::optional<Label> target = std::nullopt);

void write_heatmap_pgm(const std::filesystem::path& path, const Heatmap& heatmap);
void write_grid_csv(const std::filesystem::path& path, const Tensor& grid);
Tensor read_grid_csv(const std::filesystem::path& path);

}  // namespace weldcam
