#pragma once

#include <Eigen/Core>
#include <variant>

namespace ellipsedet {

// Bounding ellipse in input-image pixels. `l1`/`l2` are FULL axis lengths
// (major, minor); `theta` is the major-axis angle measured from +x towards +y
// (image convention, y down), canonical range [0, pi).
struct Ellipse {
  double cx = 0.0;
  double cy = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  double theta = 0.0;

  friend bool operator==(const Ellipse&, const Ellipse&) = default;
};

// Rotated rectangle; `w` runs along the `theta` direction.
struct OrientedBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
  double theta = 0.0;

  friend bool operator==(const OrientedBox&, const OrientedBox&) = default;
};

// Axis-aligned box, top-left anchored.
struct AxisBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double right() const noexcept { return x + w; }
  double bottom() const noexcept { return y + h; }
  double area() const noexcept { return w * h; }
  bool contains(double px, double py) const noexcept {
    return px >= x && px <= x + w && py >= y && py <= y + h;
  }

  friend bool operator==(const AxisBox&, const AxisBox&) = default;
};

// Second-moment form of an ellipse: R(theta) diag((l1/2)^2, (l2/2)^2) R(theta)^T.
using ShapeCov = Eigen::Matrix2d;

using Shape = std::variant<Ellipse, OrientedBox, AxisBox>;

// Maps theta into [0, pi). Throws on non-finite input.
double canonicalize_angle(double theta);

// Throws ValidationError unless l1 >= l2 > 0 and all fields are finite.
void validate(const Ellipse& e);

ShapeCov cov_from_ellipse(const Ellipse& e);

// Inverse of cov_from_ellipse. Equal eigenvalues yield theta = 0.
// Throws Error("degenerate shape matrix") for non-SPD input.
Ellipse ellipse_from_cov(const Eigen::Vector2d& center, const ShapeCov& m);

// center <- A c + t, shape <- A S A^T. Throws Error("singular transform").
Ellipse affine_transform_ellipse(const Ellipse& e, const Eigen::Matrix2d& a,
                                 const Eigen::Vector2d& t);

AxisBox ellipse_aabb(const Ellipse& e);
AxisBox obb_aabb(const OrientedBox& b);
AxisBox shape_aabb(const Shape& s);

// The OBB that shares the ellipse's centre, axes and orientation.
OrientedBox obb_from_ellipse(const Ellipse& e);

// Boundary inclusive.
bool point_in_ellipse(const Eigen::Vector2d& p, const Ellipse& e);
bool point_in_obb(const Eigen::Vector2d& p, const OrientedBox& b);
bool point_in_shape(const Eigen::Vector2d& p, const Shape& s);

// Supersampled membership-count IOU over the union AABB of both shapes
// (resolution x resolution pixel-centre samples). Requires resolution >= 64.
double raster_iou(const Shape& a, const Shape& b, int resolution);

double box_iou(const AxisBox& a, const AxisBox& b);

}  // namespace ellipsedet
