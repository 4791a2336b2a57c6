#pragma once

#include <span>
#include <string>
#include <vector>

#include "ellipsedet/geometry.hpp"
#include "ellipsedet/grid.hpp"

namespace ellipsedet {

// Ordered class names; a label's class is an index into this list.
class ClassSet {
 public:
  ClassSet();  // car, bus, truck
  explicit ClassSet(std::vector<std::string> names);

  const std::vector<std::string>& names() const noexcept { return names_; }
  int size() const noexcept { return static_cast<int>(names_.size()); }
  const std::string& name(int index) const { return names_.at(static_cast<std::size_t>(index)); }
  // -1 when absent.
  int index_of(const std::string& name) const noexcept;

 private:
  std::vector<std::string> names_;
};

// One annotated object. `peak` is the heatmap maximum drawn for the object:
// 1 by default, lowered by label smoothing and CutMix occlusion.
struct Label {
  Ellipse ellipse;
  int class_index = 0;
  double peak = 1.0;
};

enum class HeatmapMode { kEllipse, kCircle };

struct Heatmap {
  int stride = 4;
  Grid values;   // C x h x w in [0, 1]
  Grid centers;  // C x h x w, 1 at ground-truth center cells (focal-loss positives)
};

// One object's regression target at its center cell.
struct CenterTarget {
  int cell_x = 0;
  int cell_y = 0;
  int class_index = 0;
  double offset_x = 0.0;
  double offset_y = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  double theta = 0.0;
};

inline constexpr int kRegressionChannels = 5;
enum RegressionChannel { kOffsetX = 0, kOffsetY = 1, kSizeL1 = 2, kSizeL2 = 3, kTheta = 4 };

struct RegressionMaps {
  int stride = 4;
  Grid maps;         // 5 x h x w: offset (x, y), l1, l2, theta
  Grid center_mask;  // 1 x h x w
  std::vector<CenterTarget> objects;
};

using SegMask = Grid;  // 1 x H x W, values in {0, 1}

// Rotated Gaussian of one object on the heatmap lattice. Bandwidths are
// l1/(6R) and l2/(6R) so the label boundary sits at three standard deviations.
class RotatedGaussian {
 public:
  RotatedGaussian(const Ellipse& e, int stride, HeatmapMode mode = HeatmapMode::kEllipse);

  // Quadratic form inside the exponential at heatmap coordinates (x, y).
  double exponent(double x, double y) const noexcept;
  double value(double x, double y) const noexcept;

  double center_x() const noexcept { return cx_; }
  double center_y() const noexcept { return cy_; }
  double sigma_major() const noexcept { return sigma_major_; }
  double sigma_minor() const noexcept { return sigma_minor_; }

 private:
  double cx_, cy_;
  double sigma_major_, sigma_minor_;
  double a_, b_, c_;
};

// Throws unless W and H are positive multiples of R and every label center
// lies inside the image.
void check_render_inputs(std::span<const Label> labels, int width, int height, int stride);

Heatmap render_heatmap(std::span<const Label> labels, int width, int height, int stride,
                       const ClassSet& classes, HeatmapMode mode = HeatmapMode::kEllipse);

// Throws Error("center collision") when two same-class objects share a cell.
RegressionMaps render_regression_maps(std::span<const Label> labels, int width, int height, int stride);

SegMask render_segmentation_mask(std::span<const Label> labels, int width, int height);

}  // namespace ellipsedet
