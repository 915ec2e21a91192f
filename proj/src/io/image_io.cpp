#include "weldcam/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include "weldcam/errors.hpp"

namespace weldcam::io {

namespace {

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_netpbm(const std::filesystem::path& path, const char* tag, std::size_t h, std::size_t w,
                  const Tensor& t) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  f << tag << "\n" << w << " " << h << "\n255\n";
  std::vector<std::uint8_t> bytes(t.size());
  std::transform(t.values().begin(), t.values().end(), bytes.begin(), quantize);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("failed writing '" + path.string() + "'");
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  while (in) {
    const int c = in.get();
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
    } else if (std::isspace(c)) {
      if (!tok.empty()) return tok;
    } else if (c != EOF) {
      tok.push_back(static_cast<char>(c));
    }
  }
  return tok;
}

Tensor read_netpbm(const std::filesystem::path& path, const std::string& tag, std::size_t channels) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path.string() + "'");
  if (header_token(f) != tag) throw FormatError("'" + path.string() + "' is not a " + tag + " image");
  const long w = std::stol(header_token(f));
  const long h = std::stol(header_token(f));
  const long maxval = std::stol(header_token(f));
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    throw FormatError("unsupported netpbm header in '" + path.string() + "'");
  }
  const std::size_t n = static_cast<std::size_t>(w * h) * channels;
  std::vector<std::uint8_t> bytes(n);
  f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(f.gcount()) != n) throw TruncatedFileError("truncated image '" + path.string() + "'");
  Shape shape = channels == 1 ? Shape{std::size_t(h), std::size_t(w)} : Shape{std::size_t(h), std::size_t(w), channels};
  Tensor out(shape);
  for (std::size_t i = 0; i < n; ++i) out[i] = bytes[i] / static_cast<double>(maxval);
  return out;
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(2) != 3) throw ShapeError("write_ppm needs [H,W,3], got " + to_string(rgb.shape()));
  write_netpbm(path, "P6", rgb.dim(0), rgb.dim(1), rgb);
}

void write_pgm(const std::filesystem::path& path, const Tensor& gray) {
  if (gray.rank() != 2) throw ShapeError("write_pgm needs [H,W], got " + to_string(gray.shape()));
  write_netpbm(path, "P5", gray.dim(0), gray.dim(1), gray);
}

Tensor read_ppm(const std::filesystem::path& path) { return read_netpbm(path, "P6", 3); }
Tensor read_pgm(const std::filesystem::path& path) { return read_netpbm(path, "P5", 1); }

}  // namespace weldcam::io
