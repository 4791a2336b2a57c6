#pragma once

// Independent reference computations shared by the unit and acceptance tests.
// Nothing here calls into the code under test except for plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "ellipsedet/augment.hpp"
#include "ellipsedet/geometry.hpp"

namespace support {

using ellipsedet::Ellipse;

constexpr double kPi = std::numbers::pi;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

inline Ellipse random_ellipse(Rng& rng, double center_range = 100.0, double max_axis = 60.0) {
  const double l1 = rng.uniform(2.0, max_axis);
  return {rng.uniform(-center_range, center_range), rng.uniform(-center_range, center_range), l1,
          l1 * rng.uniform(0.1, 1.0), rng.uniform(0.0, kPi)};
}

inline Eigen::Matrix2d rotation(double t) {
  Eigen::Matrix2d r;
  r << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
  return r;
}

// R(theta) diag(sx^2, sy^2) R(theta)^T.
inline Eigen::Matrix2d covariance(double theta, double sx, double sy) {
  const Eigen::Matrix2d r = rotation(theta);
  return r * Eigen::Vector2d(sx * sx, sy * sy).asDiagonal() * r.transpose();
}

// 0.5 (p - mu)^T Sigma^-1 (p - mu) with bandwidths l/(6R), in lattice units.
inline double covariance_exponent(const Ellipse& e, int stride, double x, double y) {
  const Eigen::Matrix2d sigma = covariance(e.theta, e.l1 / (6.0 * stride), e.l2 / (6.0 * stride));
  const Eigen::Vector2d d(x - e.cx / stride, y - e.cy / stride);
  return 0.5 * d.dot(sigma.inverse() * d);
}

// Parametric boundary point at angle t.
inline Eigen::Vector2d boundary_point(const Ellipse& e, double t) {
  const Eigen::Vector2d local(e.l1 / 2.0 * std::cos(t), e.l2 / 2.0 * std::sin(t));
  return Eigen::Vector2d(e.cx, e.cy) + rotation(e.theta) * local;
}

// Quadratic form (p-c)^T S^-1 (p-c); 1 on the boundary.
inline double ellipse_level(const Ellipse& e, const Eigen::Vector2d& p) {
  const Eigen::Matrix2d s = covariance(e.theta, e.l1 / 2.0, e.l2 / 2.0);
  const Eigen::Vector2d d = p - Eigen::Vector2d(e.cx, e.cy);
  return d.dot(s.inverse() * d);
}

inline bool inside(const Ellipse& e, const Eigen::Vector2d& p) { return ellipse_level(e, p) <= 1.0; }

// Angle difference modulo pi, in [0, pi/2].
inline double angle_distance(double a, double b) {
  const double d = std::fmod(std::abs(a - b), kPi);
  return std::min(d, kPi - d);
}

// All-point interpolated AP computed from the precision envelope.
inline double reference_ap(const std::vector<bool>& flags, int n_gt) {
  std::vector<double> precision, recall;
  int tp = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    tp += flags[i];
    precision.push_back(static_cast<double>(tp) / (i + 1));
    recall.push_back(static_cast<double>(tp) / n_gt);
  }
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (!flags[i]) continue;
    double env = 0.0;
    for (std::size_t j = i; j < flags.size(); ++j) env = std::max(env, precision[j]);
    ap += (recall[i] - prev_recall) * env;
    prev_recall = recall[i];
  }
  return ap;
}

// IoU of two boolean masks.
inline double mask_iou(const std::vector<bool>& a, const std::vector<bool>& b) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] && b[i];
    uni += a[i] || b[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

// Supersampled IoU between an output label and its source label pulled
// through the inverse placement, over the output label's neighbourhood.
inline double transport_iou(const Ellipse& out, const Ellipse& src, const ellipsedet::Placement& p) {
  const ellipsedet::AxisBox box = ellipsedet::ellipse_aabb(out);
  const double step = 0.25;
  std::size_t inter = 0, uni = 0;
  for (double y = std::floor(box.y) - 1 + step / 2; y < box.bottom() + 1; y += step) {
    for (double x = std::floor(box.x) - 1 + step / 2; x < box.right() + 1; x += step) {
      const Eigen::Vector2d o(x, y);
      const Eigen::Vector2d s((x - p.offset.x()) / p.scale.x(), (y - p.offset.y()) / p.scale.y());
      const bool a = inside(out, o), b = inside(src, s);
      inter += a && b;
      uni += a || b;
    }
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

}  // namespace support
