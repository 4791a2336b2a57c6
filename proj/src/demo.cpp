#include "ellipsedet/demo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "ellipsedet/error.hpp"
#include "ellipsedet/eval.hpp"

namespace ellipsedet {
namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Grid squash(const Grid& logits) {
  Grid out = logits;
  for (double& v : out.values()) v = sigmoid(v);
  return out;
}

// Predicted OBB of each target, read at its center cell.
std::vector<OrientedBox> predicted_boxes(const Grid& reg, const RegressionMaps& target) {
  std::vector<OrientedBox> out;
  out.reserve(target.objects.size());
  for (const CenterTarget& t : target.objects) {
    out.push_back({(t.cell_x + reg(kOffsetX, t.cell_y, t.cell_x)) * target.stride,
                   (t.cell_y + reg(kOffsetY, t.cell_y, t.cell_x)) * target.stride, reg(kSizeL1, t.cell_y, t.cell_x),
                   reg(kSizeL2, t.cell_y, t.cell_x), reg(kTheta, t.cell_y, t.cell_x)});
  }
  return out;
}

std::vector<OrientedBox> target_boxes(const RegressionMaps& target) {
  std::vector<OrientedBox> out;
  out.reserve(target.objects.size());
  for (const CenterTarget& t : target.objects) {
    out.push_back({(t.cell_x + t.offset_x) * target.stride, (t.cell_y + t.offset_y) * target.stride, t.l1, t.l2,
                   t.theta});
  }
  return out;
}

}  // namespace

DemoTarget make_demo_target(std::span<const Label> labels, int width, int height, int stride,
                            const ClassSet& classes) {
  DemoTarget t;
  t.width = width;
  t.height = height;
  t.stride = stride;
  t.labels.assign(labels.begin(), labels.end());
  t.heatmap = render_heatmap(labels, width, height, stride, classes);
  t.regression = render_regression_maps(labels, width, height, stride);
  t.segmentation = render_segmentation_mask(labels, width, height);
  return t;
}

DemoConfig default_demo_config(SizeMode mode) {
  DemoConfig cfg;
  cfg.size_mode = mode;
  if (mode == SizeMode::kPiou) {
    cfg.size_step = 400.0;
    cfg.angle_step = 2.0;
  }
  return cfg;
}

DemoResult fit_predictions_demo(const DemoTarget& target, const DemoConfig& cfg) {
  if (cfg.iterations < 0) throw Error("iterations must be non-negative");
  const int num_objects = static_cast<int>(target.labels.size());
  const Grid& gt = target.heatmap.values;

  std::mt19937_64 rng(cfg.seed);
  Grid heat_logits(gt.channels(), gt.height(), gt.width());
  for (double& v : heat_logits.values()) v = 1e-3 * (2.0 * uniform01(rng) - 1.0);
  Grid reg(kRegressionChannels, gt.height(), gt.width());
  for (int y = 0; y < reg.height(); ++y) {
    for (int x = 0; x < reg.width(); ++x) {
      reg(kOffsetX, y, x) = uniform01(rng);
      reg(kOffsetY, y, x) = uniform01(rng);
      reg(kSizeL1, y, x) = 8.0 + 8.0 * uniform01(rng);
      reg(kSizeL2, y, x) = 8.0 + 8.0 * uniform01(rng);
      reg(kTheta, y, x) = std::numbers::pi * uniform01(rng);
    }
  }
  Grid seg_logits;
  if (cfg.weights.spotnet_mode) {
    seg_logits = Grid(1, target.height, target.width);
    for (double& v : seg_logits.values()) v = 1e-3 * (2.0 * uniform01(rng) - 1.0);
  }
  const std::vector<OrientedBox> gt_boxes = target_boxes(target.regression);
  const double channel_steps[kRegressionChannels] = {cfg.offset_step, cfg.offset_step, cfg.size_step,
                                                     cfg.size_step, cfg.angle_step};

  const auto evaluate = [&](Grid& heat_pred, Grid& seg_pred) {
    heat_pred = squash(heat_logits);
    LossComponents parts;
    parts.focal = focal_loss(heat_pred, gt, target.heatmap.centers, cfg.focal, num_objects);
    parts.offset = offset_loss(reg, target.regression, num_objects);
    if (cfg.size_mode == SizeMode::kRegression) {
      parts.size_ori = size_ori_loss(reg, target.regression, num_objects);
    } else {
      parts.piou = piou_loss(predicted_boxes(reg, target.regression), gt_boxes, cfg.piou);
    }
    if (cfg.weights.spotnet_mode) {
      seg_pred = squash(seg_logits);
      parts.seg = seg_loss(seg_pred, target.segmentation);
    }
    return total_loss(parts, cfg.weights, cfg.size_mode);
  };

  DemoResult result;
  result.loss_trace.reserve(static_cast<std::size_t>(cfg.iterations) + 1);
  Grid heat_pred;
  Grid seg_pred;
  for (int it = 0; it <= cfg.iterations; ++it) {
    TotalLoss loss;
    try {
      loss = evaluate(heat_pred, seg_pred);
    } catch (const Error& e) {
      throw Error("demo failed at iteration " + std::to_string(it) + ": " + e.what());
    }
    if (!std::isfinite(loss.value)) throw Error("non-finite loss at iteration " + std::to_string(it));
    result.loss_trace.push_back(loss.value);
    if (it == cfg.iterations) break;

    const double progress = cfg.iterations > 1 ? static_cast<double>(it) / (cfg.iterations - 1) : 0.0;
    const double decay = 1.0 - (1.0 - cfg.final_step_fraction) * progress;

    // Chain rule through the sigmoid.
    auto z = heat_logits.values();
    const auto p = heat_pred.values();
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i] -= cfg.heatmap_step * decay * loss.heatmap_gradient[i] * p[i] * (1.0 - p[i]);
    }

    std::vector<double> reg_grad = loss.regression_gradient;
    if (cfg.size_mode == SizeMode::kPiou) {
      const auto& objects = target.regression.objects;
      for (std::size_t k = 0; k < objects.size(); ++k) {
        const CenterTarget& t = objects[k];
        const double* g = &loss.obb_gradient[k * 5];
        reg_grad[reg.index(kOffsetX, t.cell_y, t.cell_x)] += g[0] * target.stride;
        reg_grad[reg.index(kOffsetY, t.cell_y, t.cell_x)] += g[1] * target.stride;
        reg_grad[reg.index(kSizeL1, t.cell_y, t.cell_x)] += g[2];
        reg_grad[reg.index(kSizeL2, t.cell_y, t.cell_x)] += g[3];
        reg_grad[reg.index(kTheta, t.cell_y, t.cell_x)] += g[4];
      }
    }
    const std::size_t plane = static_cast<std::size_t>(reg.height()) * reg.width();
    auto r = reg.values();
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= channel_steps[i / plane] * decay * reg_grad[i];

    if (cfg.weights.spotnet_mode) {
      auto s = seg_logits.values();
      const auto q = seg_pred.values();
      for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] -= cfg.seg_step * decay * loss.seg_gradient[i] * q[i] * (1.0 - q[i]);
      }
    }
  }

  const Heatmap predicted{target.stride, heat_pred, {}};
  const RegressionMaps predicted_reg{target.stride, reg, {}, {}};
  result.detections = decode_detections(predicted, predicted_reg, target.stride, cfg.threshold);

  int true_positives = 0;
  for (const MatchResult& m : match_detections(result.detections, target.labels, EvalConfig{})) {
    true_positives += m.true_positive;
  }
  const double dets = static_cast<double>(result.detections.size());
  result.precision = dets > 0 ? true_positives / dets : 0.0;
  result.recall = num_objects > 0 ? static_cast<double>(true_positives) / num_objects : 0.0;
  result.f1 = result.precision + result.recall > 0.0
                  ? 2.0 * result.precision * result.recall / (result.precision + result.recall)
                  : 0.0;
  return result;
}

}  // namespace ellipsedet
