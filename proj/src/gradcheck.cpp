#include "ellipsedet/gradcheck.hpp"

#include <algorithm>
#include <numbers>
#include <random>

#include "ellipsedet/error.hpp"

namespace ellipsedet {
namespace {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform(double lo, double hi) { return lo + (hi - lo) * static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  int integer(int lo, int hi) { return lo + static_cast<int>(engine_() % static_cast<std::uint64_t>(hi - lo + 1)); }

 private:
  std::mt19937_64 engine_;
};

constexpr int kImage = 48;
constexpr int kStride = 4;
constexpr double kMinPiouOverlap = 0.2;

// One to three objects on distinct cells of a 12 x 12 lattice.
RegressionMaps random_regression_target(Rng& rng) {
  const int count = rng.integer(1, 3);
  std::vector<Label> labels;
  while (static_cast<int>(labels.size()) < count) {
    const double cx = rng.uniform(0.0, kImage);
    const double cy = rng.uniform(0.0, kImage);
    const double l1 = rng.uniform(8.0, 40.0);
    const Label label{{cx, cy, l1, l1 * rng.uniform(0.3, 1.0), rng.uniform(0.0, std::numbers::pi)}, 0, 1.0};
    const bool clash = std::any_of(labels.begin(), labels.end(), [&](const Label& other) {
      return std::floor(other.ellipse.cx / kStride) == std::floor(cx / kStride) &&
             std::floor(other.ellipse.cy / kStride) == std::floor(cy / kStride);
    });
    if (!clash) labels.push_back(label);
  }
  return render_regression_maps(labels, kImage, kImage, kStride);
}

// Predictions scattered around the targets so both sides of every kink occur.
std::vector<double> random_regression_point(Rng& rng, const RegressionMaps& target) {
  std::vector<double> point(target.maps.size());
  for (double& v : point) v = rng.uniform(-1.0, 1.0);
  for (const CenterTarget& t : target.objects) {
    const double truth[kRegressionChannels] = {t.offset_x, t.offset_y, t.l1, t.l2, t.theta};
    const double spread[kRegressionChannels] = {0.5, 0.5, 4.0, 4.0, 2.0};
    for (int c = 0; c < kRegressionChannels; ++c) {
      point[target.maps.index(c, t.cell_y, t.cell_x)] = truth[c] + rng.uniform(-spread[c], spread[c]);
    }
  }
  return point;
}

Grid as_grid(std::span<const double> values, int channels, int height, int width) {
  Grid g(channels, height, width);
  std::copy(values.begin(), values.end(), g.values().begin());
  return g;
}

GradCheckReport focal_trial(Rng& rng, double h) {
  const int channels = 2, height = 6, width = 7;
  Grid gt(channels, height, width);
  Grid positives(channels, height, width);
  for (double& v : gt.values()) v = rng.uniform(0.0, 0.95);
  const int count = rng.integer(1, 4);
  for (int k = 0; k < count; ++k) {
    const int c = rng.integer(0, channels - 1), y = rng.integer(0, height - 1), x = rng.integer(0, width - 1);
    gt(c, y, x) = 1.0;
    positives(c, y, x) = 1.0;
  }
  std::vector<double> point(gt.size());
  for (double& v : point) v = rng.uniform(0.02, 0.98);
  const FocalParams params;
  const LossFunction f = [&](std::span<const double> p) {
    return focal_loss(as_grid(p, channels, height, width), gt, positives, params, count);
  };
  return finite_diff_check(f, point, h);
}

GradCheckReport regression_trial(Rng& rng, double h, bool size_ori, int trial) {
  const RegressionMaps target = random_regression_target(rng);
  const std::vector<double> point = random_regression_point(rng, target);
  const int n = static_cast<int>(target.objects.size());
  const Grid& m = target.maps;
  const RegressionMetric metric = trial % 2 == 0 ? RegressionMetric::kL1 : RegressionMetric::kSmoothL1;
  const AngleDifference angle = (trial / 2) % 2 == 0 ? AngleDifference::kRaw : AngleDifference::kWrapped;
  if (size_ori) {
    const LossFunction f = [&](std::span<const double> p) {
      return size_ori_loss(as_grid(p, m.channels(), m.height(), m.width()), target, n, metric, angle);
    };
    return finite_diff_check(f, point, h, size_ori_kinks(target, metric, angle));
  }
  const LossFunction f = [&](std::span<const double> p) {
    return offset_loss(as_grid(p, m.channels(), m.height(), m.width()), target, n, metric);
  };
  return finite_diff_check(f, point, h, offset_kinks(target, metric));
}

std::vector<OrientedBox> unpack_boxes(std::span<const double> p) {
  std::vector<OrientedBox> boxes(p.size() / 5);
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    boxes[k] = {p[5 * k], p[5 * k + 1], p[5 * k + 2], p[5 * k + 3], p[5 * k + 4]};
  }
  return boxes;
}

GradCheckReport piou_trial(Rng& rng, double h) {
  const int count = rng.integer(1, 3);
  std::vector<OrientedBox> gt;
  std::vector<double> point;
  const PiouParams params;
  for (int k = 0; k < count; ++k) {
    const OrientedBox g{rng.uniform(20.0, 60.0), rng.uniform(20.0, 60.0), rng.uniform(10.0, 40.0),
                        rng.uniform(10.0, 30.0), rng.uniform(0.0, std::numbers::pi)};
    gt.push_back(g);
    // Nearly disjoint pairs make ln(rho) so stiff that central differences,
    // not the gradient, dominate the error; keep pairs with real overlap.
    OrientedBox p;
    do {
      p = {g.cx + rng.uniform(-8.0, 8.0), g.cy + rng.uniform(-8.0, 8.0), g.w * rng.uniform(0.6, 1.4),
           g.h * rng.uniform(0.6, 1.4), g.theta + rng.uniform(-0.6, 0.6)};
    } while (kernel_iou(p, g, params.kernel_k) < kMinPiouOverlap);
    const double pred[5] = {p.cx, p.cy, p.w, p.h, p.theta};
    point.insert(point.end(), pred, pred + 5);
  }
  const LossFunction f = [&](std::span<const double> p) { return piou_loss(unpack_boxes(p), gt, params); };
  return finite_diff_check(f, point, h);
}

GradCheckReport seg_trial(Rng& rng, double h) {
  const int height = 9, width = 11;
  Grid gt(1, height, width);
  for (double& v : gt.values()) v = rng.uniform(0.0, 1.0) < 0.4 ? 1.0 : 0.0;
  std::vector<double> point(gt.size());
  for (double& v : point) v = rng.uniform(0.02, 0.98);
  const LossFunction f = [&](std::span<const double> p) { return seg_loss(as_grid(p, 1, height, width), gt); };
  return finite_diff_check(f, point, h);
}

}  // namespace

std::string to_string(GradLoss loss) {
  switch (loss) {
    case GradLoss::kFocal: return "focal";
    case GradLoss::kOffset: return "offset";
    case GradLoss::kSizeOri: return "size_ori";
    case GradLoss::kPiou: return "piou";
    case GradLoss::kSeg: return "seg";
  }
  return "unknown";
}

GradLoss grad_loss_from_string(const std::string& s) {
  for (GradLoss loss : all_grad_losses()) {
    if (to_string(loss) == s) return loss;
  }
  throw Error("unknown loss: " + s);
}

const std::vector<GradLoss>& all_grad_losses() {
  static const std::vector<GradLoss> all = {GradLoss::kFocal, GradLoss::kOffset, GradLoss::kSizeOri,
                                            GradLoss::kPiou, GradLoss::kSeg};
  return all;
}

double grad_tolerance(GradLoss loss) { return loss == GradLoss::kPiou ? 1e-5 : 1e-6; }

double grad_step(GradLoss loss) { return loss == GradLoss::kPiou ? 1e-6 : 1e-5; }

GradSuiteResult run_gradcheck(GradLoss loss, int trials, std::uint64_t seed, double h) {
  if (trials < 1) throw Error("trials must be positive");
  if (h <= 0.0) h = grad_step(loss);
  Rng rng(seed);
  GradSuiteResult out;
  out.step = h;
  out.loss = loss;
  out.trials = trials;
  out.tolerance = grad_tolerance(loss);
  for (int t = 0; t < trials; ++t) {
    GradCheckReport r;
    switch (loss) {
      case GradLoss::kFocal: r = focal_trial(rng, h); break;
      case GradLoss::kOffset: r = regression_trial(rng, h, false, t); break;
      case GradLoss::kSizeOri: r = regression_trial(rng, h, true, t); break;
      case GradLoss::kPiou: r = piou_trial(rng, h); break;
      case GradLoss::kSeg: r = seg_trial(rng, h); break;
    }
    out.max_rel_error = std::max(out.max_rel_error, r.max_rel_error);
    out.checked += r.checked;
    out.skipped += r.skipped;
  }
  out.passed = out.max_rel_error < out.tolerance;
  return out;
}

}  // namespace ellipsedet
