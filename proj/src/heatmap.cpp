#include "ellipsedet/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ellipsedet/error.hpp"

namespace ellipsedet {

ClassSet::ClassSet() : names_{"car", "bus", "truck"} {}

ClassSet::ClassSet(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw Error("class set must not be empty");
  const std::set<std::string> unique(names_.begin(), names_.end());
  if (unique.size() != names_.size()) throw Error("class names must be unique");
  for (const auto& n : names_) {
    if (n.empty()) throw Error("class names must be non-empty");
  }
}

int ClassSet::index_of(const std::string& name) const noexcept {
  const auto it = std::find(names_.begin(), names_.end(), name);
  return it == names_.end() ? -1 : static_cast<int>(it - names_.begin());
}

RotatedGaussian::RotatedGaussian(const Ellipse& e, int stride, HeatmapMode mode)
    : cx_(e.cx / stride), cy_(e.cy / stride) {
  const double six_r = 6.0 * stride;
  if (mode == HeatmapMode::kCircle) {
    sigma_major_ = sigma_minor_ = std::max(e.l1, e.l2) / six_r;
  } else {
    sigma_major_ = e.l1 / six_r;
    sigma_minor_ = e.l2 / six_r;
  }
  const double inv_major = 1.0 / (2.0 * sigma_major_ * sigma_major_);
  const double inv_minor = 1.0 / (2.0 * sigma_minor_ * sigma_minor_);
  if (sigma_major_ == sigma_minor_) {
    // Isotropic: keep the form free of trigonometric rounding so a circular
    // ellipse reproduces circle mode bit for bit.
    a_ = c_ = inv_major;
    b_ = 0.0;
    return;
  }
  const double cs = std::cos(e.theta);
  const double sn = std::sin(e.theta);
  const double s2 = std::sin(2.0 * e.theta);
  a_ = cs * cs * inv_major + sn * sn * inv_minor;
  c_ = sn * sn * inv_major + cs * cs * inv_minor;
  // Equals half the off-diagonal of inverse(R diag(sx^2, sy^2) R^T) for the
  // y-down image frame.
  b_ = s2 * inv_major / 2.0 - s2 * inv_minor / 2.0;
}

double RotatedGaussian::exponent(double x, double y) const noexcept {
  const double dx = x - cx_;
  const double dy = y - cy_;
  return a_ * dx * dx + 2.0 * b_ * dx * dy + c_ * dy * dy;
}

double RotatedGaussian::value(double x, double y) const noexcept { return std::exp(-exponent(x, y)); }

void check_render_inputs(std::span<const Label> labels, int width, int height, int stride) {
  if (stride <= 0) throw Error("stride must be positive");
  if (width <= 0 || height <= 0) throw Error("image dimensions must be positive");
  if (width % stride != 0 || height % stride != 0) {
    throw Error("image dimensions must be multiples of the stride");
  }
  for (std::size_t k = 0; k < labels.size(); ++k) {
    const Ellipse& e = labels[k].ellipse;
    validate(e);
    if (!(e.cx >= 0.0 && e.cx < width && e.cy >= 0.0 && e.cy < height)) {
      throw ValidationError("ellipse center outside image", k);
    }
  }
}

Heatmap render_heatmap(std::span<const Label> labels, int width, int height, int stride,
                       const ClassSet& classes, HeatmapMode mode) {
  check_render_inputs(labels, width, height, stride);
  const int w = width / stride;
  const int h = height / stride;
  Heatmap out{stride, Grid(classes.size(), h, w), Grid(classes.size(), h, w)};

  for (std::size_t k = 0; k < labels.size(); ++k) {
    const Label& label = labels[k];
    if (label.class_index < 0 || label.class_index >= classes.size()) {
      throw ValidationError("class index out of range", k);
    }
    if (!(label.peak > 0.0 && label.peak <= 1.0)) throw ValidationError("peak must lie in (0, 1]", k);

    const RotatedGaussian g(label.ellipse, stride, mode);
    const int c = label.class_index;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double& cell = out.values(c, y, x);
        cell = std::max(cell, label.peak * g.value(x, y));
      }
    }
    const int center_x = static_cast<int>(std::floor(g.center_x()));
    const int center_y = static_cast<int>(std::floor(g.center_y()));
    double& center = out.values(c, center_y, center_x);
    center = std::max(center, label.peak);
    out.centers(c, center_y, center_x) = 1.0;
  }
  return out;
}

RegressionMaps render_regression_maps(std::span<const Label> labels, int width, int height, int stride) {
  check_render_inputs(labels, width, height, stride);
  const int w = width / stride;
  const int h = height / stride;
  RegressionMaps out{stride, Grid(kRegressionChannels, h, w), Grid(1, h, w), {}};

  for (std::size_t k = 0; k < labels.size(); ++k) {
    const Label& label = labels[k];
    const Ellipse& e = label.ellipse;
    const double fx = e.cx / stride;
    const double fy = e.cy / stride;
    CenterTarget t;
    t.cell_x = static_cast<int>(std::floor(fx));
    t.cell_y = static_cast<int>(std::floor(fy));
    t.class_index = label.class_index;
    t.offset_x = fx - t.cell_x;
    t.offset_y = fy - t.cell_y;
    t.l1 = e.l1;
    t.l2 = e.l2;
    t.theta = canonicalize_angle(e.theta);

    for (const CenterTarget& prev : out.objects) {
      if (prev.cell_x == t.cell_x && prev.cell_y == t.cell_y && prev.class_index == t.class_index) {
        throw ValidationError("center collision", k);
      }
    }
    out.maps(kOffsetX, t.cell_y, t.cell_x) = t.offset_x;
    out.maps(kOffsetY, t.cell_y, t.cell_x) = t.offset_y;
    out.maps(kSizeL1, t.cell_y, t.cell_x) = t.l1;
    out.maps(kSizeL2, t.cell_y, t.cell_x) = t.l2;
    out.maps(kTheta, t.cell_y, t.cell_x) = t.theta;
    out.center_mask(0, t.cell_y, t.cell_x) = 1.0;
    out.objects.push_back(t);
  }
  return out;
}

SegMask render_segmentation_mask(std::span<const Label> labels, int width, int height) {
  if (width <= 0 || height <= 0) throw Error("image dimensions must be positive");
  SegMask mask(1, height, width);
  for (const Label& label : labels) {
    const AxisBox box = ellipse_aabb(label.ellipse);
    const int x0 = std::max(0, static_cast<int>(std::floor(box.x)));
    const int y0 = std::max(0, static_cast<int>(std::floor(box.y)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(box.right())));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(box.bottom())));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (point_in_ellipse({x + 0.5, y + 0.5}, label.ellipse)) mask(0, y, x) = 1.0;
      }
    }
  }
  return mask;
}

}  // namespace ellipsedet
