#pragma once

// Hot loops of the engine. Every kernel has an OpenMP implementation in
// namespace kernels and a plain serial implementation in kernels::reference
// that the tests compare against and the benchmark times.
//
// The parallel kernels assign each output element to exactly one thread and
// accumulate it in a fixed order, so results do not depend on thread count.

#include <cstddef>
#include <span>

#include "weldcam/tensor.hpp"

namespace weldcam {

enum class Padding { same, valid };

/// Resolved extents for a grouped NHWC cross-correlation with HWIO kernels.
/// Kernels have shape [kh, kw, cin / groups, cout].
struct Conv2dGeometry {
  std::size_t batch = 0;
  std::size_t in_h = 0, in_w = 0, in_c = 0;
  std::size_t k_h = 0, k_w = 0, out_c = 0;
  std::size_t groups = 1;
  std::size_t stride = 1;
  std::size_t pad_top = 0, pad_left = 0;
  std::size_t out_h = 0, out_w = 0;

  std::size_t in_c_per_group() const { return in_c / groups; }
  std::size_t out_c_per_group() const { return out_c / groups; }
  Shape output_shape() const { return {batch, out_h, out_w, out_c}; }
};

/// Validates extents and computes output size. Throws ShapeError.
Conv2dGeometry conv2d_geometry(const Shape& input, const Shape& kernels, std::size_t stride,
                               Padding padding, std::size_t groups);

/// Geometry for bilinear resizing of a single-channel grid.
struct ResizeGeometry {
  std::size_t in_h = 0, in_w = 0, out_h = 0, out_w = 0;
};

namespace kernels {

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> input,
                    std::span<const double> kernels, std::span<double> output);
void conv2d_backward_input(const Conv2dGeometry& g, std::span<const double> kernels,
                           std::span<const double> grad_output, std::span<double> grad_input);
void conv2d_backward_kernels(const Conv2dGeometry& g, std::span<const double> input,
                             std::span<const double> grad_output, std::span<double> grad_kernels);

/// Corner-aligned bilinear resize: the first and last output samples land on
/// the first and last input samples along each axis.
void resize_bilinear(const ResizeGeometry& g, std::span<const double> input,
                     std::span<double> output);

namespace reference {

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> input,
                    std::span<const double> kernels, std::span<double> output);
void conv2d_backward_input(const Conv2dGeometry& g, std::span<const double> kernels,
                           std::span<const double> grad_output, std::span<double> grad_input);
void conv2d_backward_kernels(const Conv2dGeometry& g, std::span<const double> input,
                             std::span<const double> grad_output, std::span<double> grad_kernels);
void resize_bilinear(const ResizeGeometry& g, std::span<const double> input,
                     std::span<double> output);

}  // namespace reference

/// Threads the parallel kernels will use (1 when built without OpenMP).
int max_threads();
void set_num_threads(int threads);

}  // namespace kernels

/// Functional convolution on tensors: input [N,H,W,Cin], kernels [kh,kw,Cin/groups,Cout].
Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride, Padding padding,
              std::size_t groups = 1);

}  // namespace weldcam
