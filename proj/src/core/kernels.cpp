#include "weldcam/kernels.hpp"

#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "weldcam/errors.hpp"

namespace weldcam {

Conv2dGeometry conv2d_geometry(const Shape& input, const Shape& kernels, std::size_t stride,
                               Padding padding, std::size_t groups) {
  if (input.size() != 4) throw ShapeError("conv2d input must be [N,H,W,C], got " + to_string(input));
  if (kernels.size() != 4) {
    throw ShapeError("conv2d kernels must be [kh,kw,Cin/groups,Cout], got " + to_string(kernels));
  }
  if (stride == 0) throw ShapeError("conv2d stride must be >= 1");
  if (groups == 0) throw ShapeError("conv2d groups must be >= 1");

  Conv2dGeometry g;
  g.batch = input[0];
  g.in_h = input[1];
  g.in_w = input[2];
  g.in_c = input[3];
  g.k_h = kernels[0];
  g.k_w = kernels[1];
  g.out_c = kernels[3];
  g.groups = groups;
  g.stride = stride;

  if (g.in_c % groups != 0 || g.out_c % groups != 0) {
    throw ShapeError("conv2d channels " + std::to_string(g.in_c) + "->" + std::to_string(g.out_c) +
                     " not divisible by groups " + std::to_string(groups));
  }
  if (kernels[2] * groups != g.in_c) {
    throw ShapeError("conv2d channel mismatch: input has Cin=" + std::to_string(g.in_c) +
                     " but kernels " + to_string(kernels) + " with groups=" +
                     std::to_string(groups) + " expect Cin=" + std::to_string(kernels[2] * groups));
  }

  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
  if (padding == Padding::same) {
    // Same convention as TensorFlow: output = ceil(in / stride), extra padding at the bottom/right.
    const std::size_t oh = (g.in_h + stride - 1) / stride;
    const std::size_t ow = (g.in_w + stride - 1) / stride;
    const std::size_t need_h = (oh - 1) * stride + g.k_h;
    const std::size_t need_w = (ow - 1) * stride + g.k_w;
    pad_h = need_h > g.in_h ? need_h - g.in_h : 0;
    pad_w = need_w > g.in_w ? need_w - g.in_w : 0;
  }
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  if (g.k_h > g.in_h + pad_h || g.k_w > g.in_w + pad_w) {
    throw ShapeError("conv2d kernel " + to_string(kernels) + " larger than padded input " +
                     to_string(input));
  }
  g.out_h = (g.in_h + pad_h - g.k_h) / stride + 1;
  g.out_w = (g.in_w + pad_w - g.k_w) / stride + 1;
  return g;
}

namespace kernels {

namespace {

// Input coordinate of kernel tap `tap` for output position `out`, or -1 in the padding.
inline long input_coord(std::size_t out, std::size_t tap, std::size_t stride, std::size_t pad,
                        std::size_t extent) {
  const long c = static_cast<long>(out * stride + tap) - static_cast<long>(pad);
  return (c < 0 || c >= static_cast<long>(extent)) ? -1 : c;
}

}  // namespace

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> input,
                    std::span<const double> kernels, std::span<double> output) {
  const std::size_t cig = g.in_c_per_group();
  const std::size_t cog = g.out_c_per_group();
  const long rows = static_cast<long>(g.batch * g.out_h);

#pragma omp parallel for schedule(static)
  for (long row = 0; row < rows; ++row) {
    const std::size_t n = static_cast<std::size_t>(row) / g.out_h;
    const std::size_t oh = static_cast<std::size_t>(row) % g.out_h;
    for (std::size_t ow = 0; ow < g.out_w; ++ow) {
      double* acc = &output[((n * g.out_h + oh) * g.out_w + ow) * g.out_c];
      std::fill(acc, acc + g.out_c, 0.0);
      for (std::size_t a = 0; a < g.k_h; ++a) {
        const long ih = input_coord(oh, a, g.stride, g.pad_top, g.in_h);
        if (ih < 0) continue;
        for (std::size_t b = 0; b < g.k_w; ++b) {
          const long iw = input_coord(ow, b, g.stride, g.pad_left, g.in_w);
          if (iw < 0) continue;
          const double* px = &input[((n * g.in_h + ih) * g.in_w + iw) * g.in_c];
          const double* tap = &kernels[(a * g.k_w + b) * cig * g.out_c];
          for (std::size_t grp = 0; grp < g.groups; ++grp) {
            for (std::size_t cl = 0; cl < cig; ++cl) {
              const double xv = px[grp * cig + cl];
              const double* kr = tap + cl * g.out_c + grp * cog;
              double* out = acc + grp * cog;
              for (std::size_t co = 0; co < cog; ++co) out[co] += xv * kr[co];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_input(const Conv2dGeometry& g, std::span<const double> kernels,
                           std::span<const double> grad_output, std::span<double> grad_input) {
  const std::size_t cig = g.in_c_per_group();
  const std::size_t cog = g.out_c_per_group();
  const long rows = static_cast<long>(g.batch * g.in_h);

  // Gather form: each input pixel sums over the output positions that read it.
#pragma omp parallel for schedule(static)
  for (long row = 0; row < rows; ++row) {
    const std::size_t n = static_cast<std::size_t>(row) / g.in_h;
    const std::size_t ih = static_cast<std::size_t>(row) % g.in_h;
    for (std::size_t iw = 0; iw < g.in_w; ++iw) {
      double* dx = &grad_input[((n * g.in_h + ih) * g.in_w + iw) * g.in_c];
      std::fill(dx, dx + g.in_c, 0.0);
      for (std::size_t a = 0; a < g.k_h; ++a) {
        const long num_h = static_cast<long>(ih + g.pad_top) - static_cast<long>(a);
        if (num_h < 0 || num_h % static_cast<long>(g.stride) != 0) continue;
        const std::size_t oh = static_cast<std::size_t>(num_h) / g.stride;
        if (oh >= g.out_h) continue;
        for (std::size_t b = 0; b < g.k_w; ++b) {
          const long num_w = static_cast<long>(iw + g.pad_left) - static_cast<long>(b);
          if (num_w < 0 || num_w % static_cast<long>(g.stride) != 0) continue;
          const std::size_t ow = static_cast<std::size_t>(num_w) / g.stride;
          if (ow >= g.out_w) continue;
          const double* dy = &grad_output[((n * g.out_h + oh) * g.out_w + ow) * g.out_c];
          const double* tap = &kernels[(a * g.k_w + b) * cig * g.out_c];
          for (std::size_t grp = 0; grp < g.groups; ++grp) {
            for (std::size_t cl = 0; cl < cig; ++cl) {
              const double* kr = tap + cl * g.out_c + grp * cog;
              const double* dyg = dy + grp * cog;
              double s = 0.0;
              for (std::size_t co = 0; co < cog; ++co) s += dyg[co] * kr[co];
              dx[grp * cig + cl] += s;
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_kernels(const Conv2dGeometry& g, std::span<const double> input,
                             std::span<const double> grad_output, std::span<double> grad_kernels) {
  const std::size_t cig = g.in_c_per_group();
  const std::size_t cog = g.out_c_per_group();
  const long taps = static_cast<long>(g.k_h * g.k_w);

  // One kernel tap per iteration; each tap's slice is summed over (n, oh, ow) in order.
#pragma omp parallel for schedule(static)
  for (long t = 0; t < taps; ++t) {
    const std::size_t a = static_cast<std::size_t>(t) / g.k_w;
    const std::size_t b = static_cast<std::size_t>(t) % g.k_w;
    double* dk = &grad_kernels[static_cast<std::size_t>(t) * cig * g.out_c];
    std::fill(dk, dk + cig * g.out_c, 0.0);
    for (std::size_t n = 0; n < g.batch; ++n) {
      for (std::size_t oh = 0; oh < g.out_h; ++oh) {
        const long ih = input_coord(oh, a, g.stride, g.pad_top, g.in_h);
        if (ih < 0) continue;
        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
          const long iw = input_coord(ow, b, g.stride, g.pad_left, g.in_w);
          if (iw < 0) continue;
          const double* px = &input[((n * g.in_h + ih) * g.in_w + iw) * g.in_c];
          const double* dy = &grad_output[((n * g.out_h + oh) * g.out_w + ow) * g.out_c];
          for (std::size_t grp = 0; grp < g.groups; ++grp) {
            for (std::size_t cl = 0; cl < cig; ++cl) {
              const double xv = px[grp * cig + cl];
              double* dkr = dk + cl * g.out_c + grp * cog;
              const double* dyg = dy + grp * cog;
              for (std::size_t co = 0; co < cog; ++co) dkr[co] += xv * dyg[co];
            }
          }
        }
      }
    }
  }
}

namespace {

struct AxisSample {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

AxisSample axis_sample(std::size_t i, std::size_t in_extent, std::size_t out_extent) {
  if (in_extent == 1 || out_extent == 1) return {0, 0, 0.0};
  const double pos = static_cast<double>(i) * static_cast<double>(in_extent - 1) /
                     static_cast<double>(out_extent - 1);
  std::size_t lo = static_cast<std::size_t>(pos);
  if (lo >= in_extent - 1) lo = in_extent - 1;
  const std::size_t hi = std::min(lo + 1, in_extent - 1);
  return {lo, hi, pos - static_cast<double>(lo)};
}

inline double bilinear_at(const ResizeGeometry& g, std::span<const double> in, const AxisSample& y,
                          const AxisSample& x) {
  const double top = in[y.lo * g.in_w + x.lo] * (1.0 - x.frac) + in[y.lo * g.in_w + x.hi] * x.frac;
  const double bottom =
      in[y.hi * g.in_w + x.lo] * (1.0 - x.frac) + in[y.hi * g.in_w + x.hi] * x.frac;
  return top * (1.0 - y.frac) + bottom * y.frac;
}

}  // namespace

void resize_bilinear(const ResizeGeometry& g, std::span<const double> input,
                     std::span<double> output) {
  std::vector<AxisSample> xs(g.out_w);
  for (std::size_t j = 0; j < g.out_w; ++j) xs[j] = axis_sample(j, g.in_w, g.out_w);
  const long rows = static_cast<long>(g.out_h);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < rows; ++i) {
    const AxisSample y = axis_sample(static_cast<std::size_t>(i), g.in_h, g.out_h);
    for (std::size_t j = 0; j < g.out_w; ++j) {
      output[static_cast<std::size_t>(i) * g.out_w + j] = bilinear_at(g, input, y, xs[j]);
    }
  }
}

namespace reference {

void conv2d_forward(const Conv2dGeometry& g, std::span<const double> input,
                    std::span<const double> kernels, std::span<double> output) {
  const std::size_t cig = g.in_c_per_group();
  const std::size_t cog = g.out_c_per_group();
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oh = 0; oh < g.out_h; ++oh)
      for (std::size_t ow = 0; ow < g.out_w; ++ow)
        for (std::size_t co = 0; co < g.out_c; ++co) {
          const std::size_t grp = co / cog;
          double s = 0.0;
          for (std::size_t a = 0; a < g.k_h; ++a)
            for (std::size_t b = 0; b < g.k_w; ++b)
              for (std::size_t cl = 0; cl < cig; ++cl) {
                const long ih = static_cast<long>(oh * g.stride + a) - static_cast<long>(g.pad_top);
                const long iw = static_cast<long>(ow * g.stride + b) - static_cast<long>(g.pad_left);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(g.in_h) ||
                    iw >= static_cast<long>(g.in_w))
                  continue;
                s += input[((n * g.in_h + ih) * g.in_w + iw) * g.in_c + grp * cig + cl] *
                     kernels[((a * g.k_w + b) * cig + cl) * g.out_c + co];
              }
          output[((n * g.out_h + oh) * g.out_w + ow) * g.out_c + co] = s;
        }
}

void conv2d_backward_input(const Conv2dGeometry& g, std::span<const double> kernels,
                           std::span<const double> grad_output, std::span<double> grad_input) {
  const std::size_t cig = g.in_c_per_group();
  const std::size_t cog = g.out_c_per_group();
  std::fill(grad_input.begin(), grad_input.end(), 0.0);
  // Scatter form: push each output gradient back onto the pixels it read.
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oh = 0; oh < g.out_h; ++oh)
      for (std::size_t ow = 0; ow < g.out_w; ++ow)
        for (std::size_t co = 0; co < g.out_c; ++co) {
          const double dy = grad_output[((n * g.out_h + oh) * g.out_w + ow) * g.out_c + co];
          const std::size_t grp = co / cog;
          for (std::size_t a = 0; a < g.k_h; ++a)
            for (std::size_t b = 0; b < g.k_w; ++b)
              for (std::size_t cl = 0; cl < cig; ++cl) {
                const long ih = static_cast<long>(oh * g.stride + a) - static_cast<long>(g.pad_top);
                const long iw = static_cast<long>(ow * g.stride + b) - static_cast<long>(g.pad_left);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(g.in_h) ||
                    iw >= static_cast<long>(g.in_w))
                  continue;
                grad_input[((n * g.in_h + ih) * g.in_w + iw) * g.in_c + grp * cig + cl] +=
                    dy * kernels[((a * g.k_w + b) * cig + cl) * g.out_c + co];
              }
        }
}

void conv2d_backward_kernels(const Conv2dGeometry& g, std::span<const double> input,
                             std::span<const double> grad_output, std::span<double> grad_kernels) {
  const std::size_t cig = g.in_c_per_group();
  const std::size_t cog = g.out_c_per_group();
  std::fill(grad_kernels.begin(), grad_kernels.end(), 0.0);
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oh = 0; oh < g.out_h; ++oh)
      for (std::size_t ow = 0; ow < g.out_w; ++ow)
        for (std::size_t co = 0; co < g.out_c; ++co) {
          const double dy = grad_output[((n * g.out_h + oh) * g.out_w + ow) * g.out_c + co];
          const std::size_t grp = co / cog;
          for (std::size_t a = 0; a < g.k_h; ++a)
            for (std::size_t b = 0; b < g.k_w; ++b)
              for (std::size_t cl = 0; cl < cig; ++cl) {
                const long ih = static_cast<long>(oh * g.stride + a) - static_cast<long>(g.pad_top);
                const long iw = static_cast<long>(ow * g.stride + b) - static_cast<long>(g.pad_left);
                if (ih < 0 || iw < 0 || ih >= static_cast<long>(g.in_h) ||
                    iw >= static_cast<long>(g.in_w))
                  continue;
                grad_kernels[((a * g.k_w + b) * cig + cl) * g.out_c + co] +=
                    input[((n * g.in_h + ih) * g.in_w + iw) * g.in_c + grp * cig + cl] * dy;
              }
        }
}

void resize_bilinear(const ResizeGeometry& g, std::span<const double> input,
                     std::span<double> output) {
  for (std::size_t i = 0; i < g.out_h; ++i) {
    for (std::size_t j = 0; j < g.out_w; ++j) {
      output[i * g.out_w + j] =
          bilinear_at(g, input, axis_sample(i, g.in_h, g.out_h), axis_sample(j, g.in_w, g.out_w));
    }
  }
}

}  // namespace reference

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_num_threads(int threads) {
#ifdef _OPENMP
  omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

}  // namespace kernels

Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride, Padding padding,
              std::size_t groups) {
  const Conv2dGeometry g = conv2d_geometry(input.shape(), kernels.shape(), stride, padding, groups);
  Tensor out(g.output_shape());
  kernels::conv2d_forward(g, input.values(), kernels.values(), out.values());
  return out;
}

}  // namespace weldcam
