#include "ellipsedet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ellipsedet/error.hpp"

namespace ellipsedet {
namespace {

constexpr double kPi = std::numbers::pi;

void require_objects(int num_objects) {
  if (num_objects <= 0) throw Error("no objects");
}

void require_regression_shape(const Grid& pred, const RegressionMaps& target) {
  if (pred.channels() != kRegressionChannels || pred.height() != target.maps.height() ||
      pred.width() != target.maps.width()) {
    throw Error("regression prediction shape mismatch");
  }
}

// Per-coordinate distance and its derivative with respect to the prediction.
struct Penalty {
  double value;
  double slope;
};

Penalty penalty(double diff, RegressionMetric metric) {
  const double mag = std::abs(diff);
  const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
  if (metric == RegressionMetric::kSmoothL1 && mag < 1.0) return {0.5 * diff * diff, diff};
  if (metric == RegressionMetric::kSmoothL1) return {mag - 0.5, sign};
  return {mag, sign};
}

double wrap_angle_difference(double diff) { return std::remainder(diff, kPi); }

// Sum of per-coordinate penalties over the given channels of every target.
LossResult regression_penalty(const Grid& pred, const RegressionMaps& target, int num_objects,
                              RegressionMetric metric, int first_channel, int last_channel,
                              AngleDifference angle) {
  require_objects(num_objects);
  require_regression_shape(pred, target);
  LossResult out;
  out.gradient.assign(pred.size(), 0.0);
  const double inv_n = 1.0 / num_objects;
  for (const CenterTarget& t : target.objects) {
    const double truth[kRegressionChannels] = {t.offset_x, t.offset_y, t.l1, t.l2, t.theta};
    for (int c = first_channel; c < last_channel; ++c) {
      const std::size_t idx = pred.index(c, t.cell_y, t.cell_x);
      double diff = pred.values()[idx] - truth[c];
      if (c == kTheta && angle == AngleDifference::kWrapped) diff = wrap_angle_difference(diff);
      const Penalty p = penalty(diff, metric);
      out.value += p.value * inv_n;
      out.gradient[idx] += p.slope * inv_n;
    }
  }
  return out;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Logistic window K(d, s) = 1 - sigmoid(k (d - s)) with its partials.
struct Window {
  double value;
  double d_dist;
  double d_half;
};

Window window(double dist, double half, double k) {
  const double z = k * (dist - half);
  const double up = sigmoid(z);
  const double down = sigmoid(-z);
  const double slope = k * up * down;
  return {down, -slope, slope};
}

}  // namespace

LossResult focal_loss(const Grid& pred, const Grid& gt, const Grid& positives, const FocalParams& params,
                      int num_objects) {
  require_objects(num_objects);
  if (!pred.same_shape(gt) || !pred.same_shape(positives)) throw Error("focal loss shape mismatch");
  if (params.alpha < 0.0 || params.beta < 0.0) throw Error("focal exponents must be non-negative");

  const double alpha = params.alpha;
  const double inv_n = 1.0 / num_objects;
  const auto p_hat = pred.values();
  const auto y = gt.values();
  const auto pos = positives.values();

  LossResult out;
  out.gradient.assign(pred.size(), 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double raw = p_hat[i];
    const double p = std::clamp(raw, params.eps, 1.0 - params.eps);
    const bool clamped = p != raw;
    if (pos[i] > 0.0) {
      const double q = 1.0 - p;
      const double lp = std::log(p);
      out.value -= std::pow(q, alpha) * lp * inv_n;
      if (!clamped) {
        const double d_weight = alpha == 0.0 ? 0.0 : -alpha * std::pow(q, alpha - 1.0);
        out.gradient[i] = -(d_weight * lp + std::pow(q, alpha) / p) * inv_n;
      }
    } else {
      const double damp = std::pow(1.0 - y[i], params.beta);
      if (damp == 0.0) continue;
      const double lq = std::log1p(-p);
      out.value -= damp * std::pow(p, alpha) * lq * inv_n;
      if (!clamped) {
        const double d_weight = alpha == 0.0 ? 0.0 : alpha * std::pow(p, alpha - 1.0);
        out.gradient[i] = -damp * (d_weight * lq - std::pow(p, alpha) / (1.0 - p)) * inv_n;
      }
    }
  }
  return out;
}

LossResult offset_loss(const Grid& pred, const RegressionMaps& target, int num_objects,
                       RegressionMetric metric) {
  return regression_penalty(pred, target, num_objects, metric, kOffsetX, kSizeL1, AngleDifference::kRaw);
}

LossResult size_ori_loss(const Grid& pred, const RegressionMaps& target, int num_objects,
                         RegressionMetric metric, AngleDifference angle) {
  return regression_penalty(pred, target, num_objects, metric, kSizeL1, kRegressionChannels, angle);
}

KernelIntersection kernel_intersection(const OrientedBox& pred, const OrientedBox& gt, double kernel_k) {
  if (!(kernel_k > 0.0)) throw Error("kernel factor must be positive");
  const AxisBox ba = obb_aabb(pred);
  const AxisBox bb = obb_aabb(gt);
  // Pixels beyond this margin contribute less than exp(-60) each, so the
  // window edges do not show up in finite differences.
  const double margin = 60.0 / kernel_k + 1.0;
  const int x0 = static_cast<int>(std::floor(std::min(ba.x, bb.x) - margin));
  const int y0 = static_cast<int>(std::floor(std::min(ba.y, bb.y) - margin));
  const int x1 = static_cast<int>(std::ceil(std::max(ba.right(), bb.right()) + margin));
  const int y1 = static_cast<int>(std::ceil(std::max(ba.bottom(), bb.bottom()) + margin));

  const double pc = std::cos(pred.theta), ps = std::sin(pred.theta);
  const double gc = std::cos(gt.theta), gs = std::sin(gt.theta);

  KernelIntersection out;
  for (int iy = y0; iy < y1; ++iy) {
    const double py = iy + 0.5;
    for (int ix = x0; ix < x1; ++ix) {
      const double px = ix + 0.5;

      const double gdx = px - gt.cx, gdy = py - gt.cy;
      const double gu = gdx * gc + gdy * gs;
      const double gv = -gdx * gs + gdy * gc;
      const double f_gt = window(std::abs(gu), gt.w / 2.0, kernel_k).value *
                          window(std::abs(gv), gt.h / 2.0, kernel_k).value;
      if (f_gt == 0.0) continue;

      const double dx = px - pred.cx, dy = py - pred.cy;
      const double tu = dx * pc + dy * ps;
      const double tv = -dx * ps + dy * pc;
      const Window ku = window(std::abs(tu), pred.w / 2.0, kernel_k);
      const Window kv = window(std::abs(tv), pred.h / 2.0, kernel_k);
      const double su = tu >= 0.0 ? 1.0 : -1.0;
      const double sv = tv >= 0.0 ? 1.0 : -1.0;

      // Partials of F = ku * kv through tu(cx, cy, theta) and tv(cx, cy, theta).
      const double du = kv.value * ku.d_dist * su;
      const double dv = ku.value * kv.d_dist * sv;
      out.rho += f_gt * ku.value * kv.value;
      out.d_rho[0] += f_gt * (du * -pc + dv * ps);
      out.d_rho[1] += f_gt * (du * -ps + dv * -pc);
      out.d_rho[2] += f_gt * kv.value * ku.d_half * 0.5;
      out.d_rho[3] += f_gt * ku.value * kv.d_half * 0.5;
      out.d_rho[4] += f_gt * (du * tv + dv * -tu);
    }
  }
  return out;
}

double kernel_iou(const OrientedBox& a, const OrientedBox& b, double kernel_k) {
  const double rho = kernel_intersection(a, b, kernel_k).rho;
  return rho / (a.w * a.h + b.w * b.h - rho);
}

LossResult piou_loss(std::span<const OrientedBox> pred, std::span<const OrientedBox> gt,
                     const PiouParams& params) {
  if (pred.empty() || gt.empty()) throw Error("no objects");
  if (pred.size() != gt.size()) throw Error("piou inputs must be paired");
  const double inv_n = 1.0 / static_cast<double>(pred.size());

  LossResult out;
  out.gradient.assign(pred.size() * 5, 0.0);
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const OrientedBox& p = pred[k];
    const OrientedBox& g = gt[k];
    if (!(p.w > 0.0 && p.h > 0.0 && g.w > 0.0 && g.h > 0.0)) throw Error("box dimensions must be positive");

    KernelIntersection ki = kernel_intersection(p, g, params.kernel_k);
    bool floored = false;
    if (ki.rho < params.rho_eps) {
      ki.rho = params.rho_eps;
      floored = true;
    }
    const double uni = p.w * p.h + g.w * g.h - ki.rho;
    out.value += (std::log(uni) - std::log(ki.rho)) * inv_n;

    double* grad = &out.gradient[k * 5];
    const double d_rho = floored ? 0.0 : (-1.0 / ki.rho - 1.0 / uni) * inv_n;
    for (int j = 0; j < 5; ++j) grad[j] = d_rho * ki.d_rho[j];
    grad[2] += p.h / uni * inv_n;
    grad[3] += p.w / uni * inv_n;
  }
  return out;
}

LossResult seg_loss(const Grid& pred, const SegMask& gt, double eps) {
  if (!pred.same_shape(gt)) throw Error("segmentation shape mismatch");
  if (pred.empty()) throw Error("empty segmentation map");
  const double inv_count = 1.0 / static_cast<double>(pred.size());
  const auto p_hat = pred.values();
  const auto y = gt.values();

  LossResult out;
  out.gradient.assign(pred.size(), 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(p_hat[i], eps, 1.0 - eps);
    out.value -= (y[i] * std::log(p) + (1.0 - y[i]) * std::log1p(-p)) * inv_count;
    if (p == p_hat[i]) out.gradient[i] = -(y[i] / p - (1.0 - y[i]) / (1.0 - p)) * inv_count;
  }
  return out;
}

TotalLoss total_loss(const LossComponents& components, const LossWeights& weights, SizeMode size_mode) {
  if (weights.lambda_offset < 0.0 || weights.lambda_size_ori < 0.0 || weights.lambda_piou < 0.0) {
    throw Error("loss weights must be non-negative");
  }
  TotalLoss out;
  out.value = components.focal.value + weights.lambda_offset * components.offset.value;
  out.heatmap_gradient = components.focal.gradient;
  out.regression_gradient = components.offset.gradient;
  for (double& g : out.regression_gradient) g *= weights.lambda_offset;

  if (size_mode == SizeMode::kRegression) {
    if (!components.size_ori) throw Error("size/orientation loss missing");
    const LossResult& s = *components.size_ori;
    if (s.gradient.size() != out.regression_gradient.size()) throw Error("regression gradient shape mismatch");
    out.value += weights.lambda_size_ori * s.value;
    for (std::size_t i = 0; i < s.gradient.size(); ++i) {
      out.regression_gradient[i] += weights.lambda_size_ori * s.gradient[i];
    }
  } else {
    if (!components.piou) throw Error("piou loss missing OBB inputs");
    out.value += weights.lambda_piou * components.piou->value;
    out.obb_gradient = components.piou->gradient;
    for (double& g : out.obb_gradient) g *= weights.lambda_piou;
  }

  if (weights.spotnet_mode) {
    if (!components.seg) throw Error("segmentation loss missing");
    out.value += components.seg->value;
    out.seg_gradient = components.seg->gradient;
  }
  return out;
}

GradCheckReport finite_diff_check(const LossFunction& loss, std::span<const double> point, double h,
                                  const KinkPredicate& near_kink) {
  if (!(h > 0.0)) throw Error("finite-difference step must be positive");
  const LossResult analytic = loss(point);
  if (analytic.gradient.size() != point.size()) throw Error("gradient size does not match input");

  std::vector<double> probe(point.begin(), point.end());
  GradCheckReport report;
  for (std::size_t i = 0; i < point.size(); ++i) {
    if (near_kink && near_kink(point, i, 2.0 * h)) {
      ++report.skipped;
      continue;
    }
    probe[i] = point[i] + h;
    const double up = loss(probe).value;
    probe[i] = point[i] - h;
    const double down = loss(probe).value;
    probe[i] = point[i];

    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic.gradient[i];
    const double scale = std::max({std::abs(a), std::abs(numeric), kGradCheckFloor});
    const double rel = std::abs(a - numeric) / scale;
    if (report.checked == 0 || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
    }
    ++report.checked;
  }
  return report;
}

namespace {

KinkPredicate regression_kinks(const RegressionMaps& target, RegressionMetric metric, int first_channel,
                               int last_channel, AngleDifference angle) {
  const int h = target.maps.height();
  const int w = target.maps.width();
  return [objects = target.objects, metric, first_channel, last_channel, angle, h, w](
             std::span<const double> point, std::size_t index, double radius) {
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const int c = static_cast<int>(index / plane);
    const int y = static_cast<int>((index % plane) / w);
    const int x = static_cast<int>(index % w);
    if (c < first_channel || c >= last_channel) return false;
    for (const CenterTarget& t : objects) {
      if (t.cell_x != x || t.cell_y != y) continue;
      const double truth[kRegressionChannels] = {t.offset_x, t.offset_y, t.l1, t.l2, t.theta};
      double diff = point[index] - truth[c];
      if (c == kTheta && angle == AngleDifference::kWrapped) {
        diff = wrap_angle_difference(diff);
        if (std::abs(std::abs(diff) - kPi / 2.0) < radius) return true;
      }
      if (metric == RegressionMetric::kL1 && std::abs(diff) < radius) return true;
    }
    return false;
  };
}

}  // namespace

KinkPredicate offset_kinks(const RegressionMaps& target, RegressionMetric metric) {
  return regression_kinks(target, metric, kOffsetX, kSizeL1, AngleDifference::kRaw);
}

KinkPredicate size_ori_kinks(const RegressionMaps& target, RegressionMetric metric, AngleDifference angle) {
  return regression_kinks(target, metric, kSizeL1, kRegressionChannels, angle);
}

}  // namespace ellipsedet
