#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ellipsedet/geometry.hpp"
#include "ellipsedet/grid.hpp"
#include "ellipsedet/heatmap.hpp"

namespace ellipsedet {

struct FocalParams {
  double alpha = 2.0;
  double beta = 4.0;
  double eps = 1e-12;  // predictions are clamped to [eps, 1 - eps]
};

struct LossWeights {
  double lambda_offset = 1.0;
  double lambda_size_ori = 0.1;
  double lambda_piou = 0.1;
  bool spotnet_mode = false;
};

// Loss value and its gradient, laid out like the prediction input it was
// taken with respect to (grid order, or 5 values per box: cx, cy, w, h, theta).
struct LossResult {
  double value = 0.0;
  std::vector<double> gradient;
};

enum class RegressionMetric { kL1, kSmoothL1 };
enum class AngleDifference { kRaw, kWrapped };
enum class SizeMode { kRegression, kPiou };

struct PiouParams {
  double kernel_k = 10.0;
  double rho_eps = 1e-6;
};

// Positives are the cells flagged in `positives`, not cells where gt == 1, so
// smoothed peaks stay positive.
LossResult focal_loss(const Grid& pred, const Grid& gt, const Grid& positives, const FocalParams& params,
                      int num_objects);

// `pred` is the full 5-channel regression prediction; the gradient has the
// same shape with zeros outside the channels each loss reads.
LossResult offset_loss(const Grid& pred, const RegressionMaps& target, int num_objects,
                       RegressionMetric metric = RegressionMetric::kL1);

LossResult size_ori_loss(const Grid& pred, const RegressionMaps& target, int num_objects,
                         RegressionMetric metric = RegressionMetric::kL1,
                         AngleDifference angle = AngleDifference::kRaw);

// Intersection of two boxes under the logistic pixel kernel, plus its
// gradient with respect to the first box (cx, cy, w, h, theta).
struct KernelIntersection {
  double rho = 0.0;
  std::array<double, 5> d_rho{};
};
KernelIntersection kernel_intersection(const OrientedBox& pred, const OrientedBox& gt, double kernel_k);
double kernel_iou(const OrientedBox& a, const OrientedBox& b, double kernel_k);

LossResult piou_loss(std::span<const OrientedBox> pred, std::span<const OrientedBox> gt,
                     const PiouParams& params = {});

// Mean binary cross entropy over the full-resolution mask.
LossResult seg_loss(const Grid& pred, const SegMask& gt, double eps = 1e-12);

struct LossComponents {
  LossResult focal;
  LossResult offset;
  std::optional<LossResult> size_ori;
  std::optional<LossResult> piou;
  std::optional<LossResult> seg;
};

struct TotalLoss {
  double value = 0.0;
  std::vector<double> heatmap_gradient;
  std::vector<double> regression_gradient;
  std::vector<double> obb_gradient;
  std::vector<double> seg_gradient;
};

TotalLoss total_loss(const LossComponents& components, const LossWeights& weights, SizeMode size_mode);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.

using LossFunction = std::function<LossResult(std::span<const double>)>;
// True when coordinate `index` of `point` lies within `radius` of a kink.
using KinkPredicate = std::function<bool(std::span<const double> point, std::size_t index, double radius)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

// Gradient magnitudes below this are compared on an absolute scale.
inline constexpr double kGradCheckFloor = 1e-3;

// Central differences against the analytic gradient; coordinates within 2h of
// a kink are skipped. Relative error is |a - n| / max(|a|, |n|, kGradCheckFloor).
GradCheckReport finite_diff_check(const LossFunction& loss, std::span<const double> point, double h = 1e-5,
                                  const KinkPredicate& near_kink = {});

// Kink locations of the L1 regression losses over a flat 5 x h x w prediction.
KinkPredicate offset_kinks(const RegressionMaps& target, RegressionMetric metric = RegressionMetric::kL1);
KinkPredicate size_ori_kinks(const RegressionMaps& target, RegressionMetric metric = RegressionMetric::kL1,
                             AngleDifference angle = AngleDifference::kRaw);

}  // namespace ellipsedet
