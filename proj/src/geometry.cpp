#include "ellipsedet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/LU>

#include "ellipsedet/error.hpp"

namespace ellipsedet {
namespace {

constexpr double kPi = std::numbers::pi;
// Slack on the unit-norm membership test so boundary points that pick up a
// rounding error from the rotation still count as inside.
constexpr double kBoundarySlack = 1e-12;

// Precomputed local frame of a shape for repeated membership queries.
class Membership {
 public:
  explicit Membership(const Shape& s) {
    std::visit([this](const auto& shape) { init(shape); }, s);
  }

  bool contains(double px, double py) const noexcept {
    const double dx = px - cx_;
    const double dy = py - cy_;
    const double u = (dx * cos_ + dy * sin_) * inv_u_;
    const double v = (-dx * sin_ + dy * cos_) * inv_v_;
    if (ellipse_) return u * u + v * v <= 1.0 + kBoundarySlack;
    return std::abs(u) <= 1.0 + kBoundarySlack && std::abs(v) <= 1.0 + kBoundarySlack;
  }

  bool degenerate() const noexcept { return degenerate_; }

 private:
  void init(const Ellipse& e) {
    set_frame(e.cx, e.cy, e.theta, e.l1 / 2.0, e.l2 / 2.0);
    ellipse_ = true;
  }
  void init(const OrientedBox& b) { set_frame(b.cx, b.cy, b.theta, b.w / 2.0, b.h / 2.0); }
  void init(const AxisBox& b) { set_frame(b.x + b.w / 2.0, b.y + b.h / 2.0, 0.0, b.w / 2.0, b.h / 2.0); }

  void set_frame(double cx, double cy, double theta, double half_u, double half_v) {
    cx_ = cx;
    cy_ = cy;
    cos_ = std::cos(theta);
    sin_ = std::sin(theta);
    degenerate_ = !(half_u > 0.0) || !(half_v > 0.0);
    inv_u_ = degenerate_ ? 0.0 : 1.0 / half_u;
    inv_v_ = degenerate_ ? 0.0 : 1.0 / half_v;
  }

  double cx_ = 0.0, cy_ = 0.0, cos_ = 1.0, sin_ = 0.0, inv_u_ = 0.0, inv_v_ = 0.0;
  bool ellipse_ = false;
  bool degenerate_ = false;
};

AxisBox rotated_extent(double cx, double cy, double half_u, double half_v, double theta, bool ellipse) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  double hx = 0.0;
  double hy = 0.0;
  if (ellipse) {
    hx = std::sqrt(half_u * half_u * c * c + half_v * half_v * s * s);
    hy = std::sqrt(half_u * half_u * s * s + half_v * half_v * c * c);
  } else {
    hx = half_u * std::abs(c) + half_v * std::abs(s);
    hy = half_u * std::abs(s) + half_v * std::abs(c);
  }
  return {cx - hx, cy - hy, 2.0 * hx, 2.0 * hy};
}

}  // namespace

double canonicalize_angle(double theta) {
  if (!std::isfinite(theta)) throw Error("non-finite angle");
  double r = std::fmod(theta, kPi);
  if (r < 0.0) r += kPi;
  if (r >= kPi) r = 0.0;
  return r;
}

void validate(const Ellipse& e) {
  if (!std::isfinite(e.cx) || !std::isfinite(e.cy) || !std::isfinite(e.l1) || !std::isfinite(e.l2) ||
      !std::isfinite(e.theta)) {
    throw ValidationError("non-finite ellipse parameter");
  }
  if (!(e.l2 > 0.0)) throw ValidationError("axis length must be positive");
  if (e.l2 > e.l1) throw ValidationError("axis order (l2 > l1)");
}

ShapeCov cov_from_ellipse(const Ellipse& e) {
  const double a = e.l1 / 2.0;
  const double b = e.l2 / 2.0;
  const double c = std::cos(e.theta);
  const double s = std::sin(e.theta);
  // R diag(a^2, b^2) R^T written out so the off-diagonal entries are bitwise equal.
  const double off = (a * a - b * b) * c * s;
  ShapeCov m;
  m << a * a * c * c + b * b * s * s, off, off, a * a * s * s + b * b * c * c;
  return m;
}

Ellipse ellipse_from_cov(const Eigen::Vector2d& center, const ShapeCov& m) {
  const double a = m(0, 0);
  const double c = m(1, 1);
  const double b = 0.5 * (m(0, 1) + m(1, 0));
  const double scale = std::abs(a) + std::abs(c);
  if (!m.allFinite() || std::abs(m(0, 1) - m(1, 0)) > 1e-12 * std::max(scale, 1.0)) {
    throw Error("degenerate shape matrix");
  }
  const double half_trace = 0.5 * (a + c);
  const double gap = std::hypot(0.5 * (a - c), b);
  const double major = half_trace + gap;
  const double det = a * c - b * b;
  if (!(major > 0.0) || !(det > 0.0)) throw Error("degenerate shape matrix");
  // det / major is the stable form of half_trace - gap.
  const double minor = det / major;
  const double theta = gap == 0.0 ? 0.0 : 0.5 * std::atan2(2.0 * b, a - c);
  return {center.x(), center.y(), 2.0 * std::sqrt(major), 2.0 * std::sqrt(minor),
          canonicalize_angle(theta)};
}

Ellipse affine_transform_ellipse(const Ellipse& e, const Eigen::Matrix2d& a, const Eigen::Vector2d& t) {
  const double det = a.determinant();
  if (!std::isfinite(det) || std::abs(det) <= 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff())) {
    throw Error("singular transform");
  }
  const Eigen::Vector2d center = a * Eigen::Vector2d(e.cx, e.cy) + t;
  const ShapeCov shape = a * cov_from_ellipse(e) * a.transpose();
  return ellipse_from_cov(center, 0.5 * (shape + shape.transpose()));
}

AxisBox ellipse_aabb(const Ellipse& e) {
  return rotated_extent(e.cx, e.cy, e.l1 / 2.0, e.l2 / 2.0, e.theta, true);
}

AxisBox obb_aabb(const OrientedBox& b) {
  return rotated_extent(b.cx, b.cy, b.w / 2.0, b.h / 2.0, b.theta, false);
}

AxisBox shape_aabb(const Shape& s) {
  struct Visitor {
    AxisBox operator()(const Ellipse& e) const { return ellipse_aabb(e); }
    AxisBox operator()(const OrientedBox& b) const { return obb_aabb(b); }
    AxisBox operator()(const AxisBox& b) const { return b; }
  };
  return std::visit(Visitor{}, s);
}

OrientedBox obb_from_ellipse(const Ellipse& e) { return {e.cx, e.cy, e.l1, e.l2, e.theta}; }

bool point_in_ellipse(const Eigen::Vector2d& p, const Ellipse& e) {
  return point_in_shape(p, Shape{e});
}

bool point_in_obb(const Eigen::Vector2d& p, const OrientedBox& b) {
  return point_in_shape(p, Shape{b});
}

bool point_in_shape(const Eigen::Vector2d& p, const Shape& s) {
  const Membership m(s);
  return !m.degenerate() && m.contains(p.x(), p.y());
}

double raster_iou(const Shape& a, const Shape& b, int resolution) {
  if (resolution < 64) throw Error("raster resolution must be >= 64");
  const Membership ma(a);
  const Membership mb(b);
  if (ma.degenerate() && mb.degenerate()) throw Error("empty union");

  const AxisBox ba = shape_aabb(a);
  const AxisBox bb = shape_aabb(b);
  const double x0 = std::min(ba.x, bb.x);
  const double y0 = std::min(ba.y, bb.y);
  const double x1 = std::max(ba.right(), bb.right());
  const double y1 = std::max(ba.bottom(), bb.bottom());
  if (!(x1 > x0) || !(y1 > y0)) throw Error("empty union");

  const double step_x = (x1 - x0) / resolution;
  const double step_y = (y1 - y0) / resolution;
  long long inter = 0;
  long long uni = 0;
  for (int row = 0; row < resolution; ++row) {
    const double py = y0 + (row + 0.5) * step_y;
    for (int col = 0; col < resolution; ++col) {
      const double px = x0 + (col + 0.5) * step_x;
      const bool in_a = !ma.degenerate() && ma.contains(px, py);
      const bool in_b = !mb.degenerate() && mb.contains(px, py);
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  if (uni == 0) throw Error("empty union");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double box_iou(const AxisBox& a, const AxisBox& b) {
  const double iw = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.x, b.x));
  const double ih = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y));
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (!(uni > 0.0)) return 0.0;
  return inter / uni;
}

}  // namespace ellipsedet
