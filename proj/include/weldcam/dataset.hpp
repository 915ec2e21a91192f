#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "weldcam/label.hpp"
#include "weldcam/tensor.hpp"

namespace weldcam {

enum class DefectKind : std::uint8_t { none, porosity, undercut, crack, missing_segment, spatter };

inline constexpr std::array<DefectKind, 5> kDefectKinds = {
    DefectKind::porosity, DefectKind::undercut, DefectKind::crack, DefectKind::missing_segment,
    DefectKind::spatter};

std::string to_string(DefectKind kind);
DefectKind parse_defect_kind(const std::string& text);
inline Label label_of(DefectKind kind) { return kind == DefectKind::none ? Label::ok : Label::nok; }

/// Binary grid, row-major, 1 = defect pixel.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> cells;

  std::size_t area() const;
  bool empty() const { return area() == 0; }
};

struct WeldImage {
  Tensor pixels;  ///< [H,W,3], values in [0,1]
  Label label = Label::ok;
  DefectKind kind = DefectKind::none;
  Mask mask;
  std::uint64_t seed = 0;  ///< unique per image; doubles as its identity
};

/// Seam geometry and defect mix of one of the four weld stations.
struct WeldVariant {
  int id = 1;
  double amplitude = 10.0;   ///< sinusoid amplitude in pixels
  double cycles = 1.0;       ///< sinusoid periods across the width
  double half_width = 9.0;   ///< bead half-width in pixels
  double tilt = 0.0;         ///< centerline slope
  std::array<double, 5> kind_weights{1, 1, 1, 1, 1};  ///< indexed like kDefectKinds
};

WeldVariant weld_variant(int id);

/// Bright glare in one image corner. In the biased variant its presence is
/// correlated with the label in extractor training data only.
struct BiasConfig {
  double radius = 40.0;
  double intensity = 0.95;
  double p_given_ok = 0.9;   ///< artifact probability for OK images (correlated set)
  double p_given_nok = 0.1;  ///< artifact probability for NOK images (correlated set)
  double p_uncorrelated = 0.5;
};

struct DatasetConfig {
  std::size_t count = 200;
  double nok_fraction = 0.1;
  int weld = 1;
  std::size_t height = 128;
  std::size_t width = 128;
  std::optional<std::array<double, 5>> kind_weights;  ///< overrides the variant's defect mix
  std::size_t augment_multiplier = 1;  ///< copies per NOK training image, including the original
  double train_ratio = 0.8;
  std::uint64_t seed = 1;

  void validate() const;
};

/// SplitMix64-based child seed; distinct streams give independent seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Renders one image; `kind` none gives an OK weld.
WeldImage render_weld(const WeldVariant& variant, DefectKind kind, std::uint64_t seed,
                      std::size_t height = 128, std::size_t width = 128);

/// Pure function of the config. Exactly round(count * nok_fraction) images are NOK.
std::vector<WeldImage> generate(const DatasetConfig& config);

struct AugmentOp {
  enum class Kind { hflip, vflip, rotate90, brightness, noise };
  Kind kind = Kind::hflip;
  double amount = 0.0;     ///< brightness delta or noise sigma
  std::uint64_t seed = 0;  ///< noise stream
};

/// Applies ops in order. Geometric ops move the mask with the pixels.
WeldImage augment(const WeldImage& image, std::span<const AugmentOp> ops);

/// Appends randomly augmented copies of every NOK image so each appears
/// `multiplier` times. Copies get fresh seeds derived from the source seed.
void augment_minority(std::vector<WeldImage>& images, std::size_t multiplier, std::uint64_t seed);

/// Paints the corner glare.
void apply_corner_artifact(WeldImage& image, const BiasConfig& bias, std::uint64_t seed);

/// Adds the artifact with label-dependent probability when `correlated`,
/// with p_uncorrelated otherwise. Returns the number of images touched.
std::size_t inject_bias(std::vector<WeldImage>& images, const BiasConfig& bias, bool correlated,
                        std::uint64_t seed);

struct SplitIndices {
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
};

/// Stratified partition: per label, round(n_label * ratio) go to `first`
/// (clamped to leave at least one on each side). Rejects a label with < 2 samples.
SplitIndices stratified_split(std::span<const WeldImage> images, double ratio, std::uint64_t seed);

struct DatasetSplit {
  std::vector<WeldImage> train;
  std::vector<WeldImage> test;
};

DatasetSplit split(std::vector<WeldImage> images, double train_ratio, std::uint64_t seed);

/// Hex CRC32 over seeds, labels, kinds and pixel values.
std::string dataset_digest(std::span<const WeldImage> images);

/// Directory layout: images/<name>.ppm, masks/<name>.pgm, manifest.csv
/// with columns filename,label,kind,seed.
void export_dataset(const std::filesystem::path& dir, std::span<const WeldImage> images);
std::vector<WeldImage> import_dataset(const std::filesystem::path& dir);

}  // namespace weldcam
