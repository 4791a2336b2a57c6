#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "ellipsedet/decode.hpp"
#include "ellipsedet/geometry.hpp"
#include "ellipsedet/heatmap.hpp"
#include "ellipsedet/image.hpp"

namespace ellipsedet {

struct Sample {
  Image image;
  std::vector<Label> labels;
  std::vector<std::optional<AxisBox>> boxes;  // parallel to labels; may be empty
};

struct AugmentConfig {
  double smoothing_eps = 0.1;
  double visibility_tau = 0.5;
  double mosaic_center_jitter = 0.25;
  std::uint64_t rng_seed = 0;
  double decode_threshold = kDefaultDecodeThreshold;
  int visibility_samples = 1024;
};

void validate(const AugmentConfig& cfg);

// Each peak scaled by (1 - eps). Throws unless eps lies in [0, 0.5).
std::vector<double> smooth_labels(std::span<const double> peaks, double eps);
Sample smooth_labels(Sample sample, double eps);

// Fraction of `samples` sunflower-spiral points of the ellipse interior that
// fall inside `region`. Deterministic.
double visibility_fraction(const Ellipse& e, const AxisBox& region, int samples = 1024);

// Where a label in an augmented sample came from.
struct Provenance {
  int source = 0;
  int label_index = 0;
};

// Axis-aligned placement of a whole source image: output = diag(scale) p + offset.
struct Placement {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // destination pixel rectangle [x0, x1) x [y0, y1)
  Eigen::Vector2d scale = Eigen::Vector2d::Ones();
  Eigen::Vector2d offset = Eigen::Vector2d::Zero();

  // Source pixel copied into destination pixel (x, y).
  std::array<int, 2> source_pixel(int x, int y, int src_width, int src_height) const noexcept;
};

struct MosaicResult {
  Sample sample;
  int center_x = 0;
  int center_y = 0;
  std::array<Placement, 4> quadrants;  // top-left, top-right, bottom-left, bottom-right
  std::vector<Provenance> provenance;  // parallel to sample.labels
};

// Four same-sized samples tiled around a random center, each downscaled onto
// its quadrant; labels follow through the same affine map.
MosaicResult mosaic(std::span<const Sample> samples, const AugmentConfig& cfg);

struct CutMixResult {
  Sample sample;
  std::vector<Provenance> provenance;  // source 0 = base, 1 = donor
  std::vector<double> visible;         // visible fraction per kept label
};

// Pixels whose centers fall inside `patch` come from the donor; everything
// else from the base. Kept labels keep their geometry; peaks are scaled by the
// visible fraction and floored at decode_threshold + 0.05.
CutMixResult cutmix(const Sample& base, const Sample& donor, const AxisBox& patch, const AugmentConfig& cfg);

// Random patch with sides in [0.2, 0.6] of the image, fully inside it.
AxisBox random_patch(int width, int height, std::uint64_t seed);

}  // namespace ellipsedet
