#pragma once

#include <filesystem>

#include "weldcam/tensor.hpp"

namespace weldcam::io {

/// Binary PPM (P6, 8-bit) from an [H,W,3] tensor with values in [0,1].
void write_ppm(const std::filesystem::path& path, const Tensor& rgb);
/// Binary PGM (P5, 8-bit) from an [H,W] tensor with values in [0,1].
void write_pgm(const std::filesystem::path& path, const Tensor& gray);

/// Reads P6 into [H,W,3], values scaled by 1/maxval.
Tensor read_ppm(const std::filesystem::path& path);
/// Reads P5 into [H,W], values scaled by 1/maxval.
Tensor read_pgm(const std::filesystem::path& path);

}  // namespace weldcam::io
