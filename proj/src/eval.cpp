#include "ellipsedet/eval.hpp"

#include <algorithm>
#include <numeric>

#include "ellipsedet/error.hpp"

namespace ellipsedet {

double pair_iou(const Ellipse& a, const Ellipse& b, const EvalConfig& cfg) {
  const AxisBox box_a = ellipse_aabb(a);
  const AxisBox box_b = ellipse_aabb(b);
  const double boxes = box_iou(box_a, box_b);
  if (cfg.iou_kind == IouKind::kBox || boxes == 0.0) return boxes;
  if (cfg.iou_kind == IouKind::kObb) {
    return raster_iou(obb_from_ellipse(a), obb_from_ellipse(b), cfg.raster_resolution);
  }
  return raster_iou(a, b, cfg.raster_resolution);
}

std::vector<MatchResult> match_detections(std::span<const Detection> detections, std::span<const Label> truths,
                                          const EvalConfig& cfg) {
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return detections[a].score > detections[b].score;
  });

  std::vector<char> taken(truths.size(), 0);
  std::vector<MatchResult> out;
  out.reserve(detections.size());
  for (const std::size_t i : order) {
    const Detection& d = detections[i];
    double best = cfg.iou_threshold;
    std::ptrdiff_t best_index = -1;
    for (std::size_t g = 0; g < truths.size(); ++g) {
      if (taken[g] || truths[g].class_index != d.class_index) continue;
      const double iou = pair_iou(d.ellipse, truths[g].ellipse, cfg);
      if (iou >= best && (best_index < 0 || iou > best)) {
        best = iou;
        best_index = static_cast<std::ptrdiff_t>(g);
      }
    }
    if (best_index >= 0) taken[static_cast<std::size_t>(best_index)] = 1;
    out.push_back({d.score, d.class_index, best_index >= 0});
  }
  return out;
}

std::vector<PRPoint> pr_curve(std::span<const MatchResult> ordered, int num_truths) {
  if (num_truths <= 0) throw Error("undefined AP");
  std::vector<PRPoint> curve;
  curve.reserve(ordered.size());
  int tp = 0;
  int fp = 0;
  for (const MatchResult& m : ordered) {
    m.true_positive ? ++tp : ++fp;
    curve.push_back({static_cast<double>(tp) / (tp + fp), static_cast<double>(tp) / num_truths, m.score});
  }
  return curve;
}

double average_precision(const std::vector<bool>& flags, int num_truths) {
  if (num_truths <= 0) throw Error("undefined AP");
  std::vector<MatchResult> ordered;
  ordered.reserve(flags.size());
  for (const bool f : flags) ordered.push_back({0.0, 0, f});
  const std::vector<PRPoint> curve = pr_curve(ordered, num_truths);

  // Precision envelope: best precision at any recall at or beyond this point.
  std::vector<double> envelope(curve.size());
  double running = 0.0;
  for (std::size_t i = curve.size(); i-- > 0;) {
    running = std::max(running, curve[i].precision);
    envelope[i] = running;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (curve[i].recall > prev_recall) {
      ap += (curve[i].recall - prev_recall) * envelope[i];
      prev_recall = curve[i].recall;
    }
  }
  return ap;
}

double mean_ap(std::span<const ClassReport> per_class) {
  double sum = 0.0;
  int counted = 0;
  for (const ClassReport& c : per_class) {
    if (c.num_truths == 0) continue;
    sum += c.ap;
    ++counted;
  }
  if (counted == 0) throw Error("no class has ground truth");
  return sum / counted;
}

EvalReport evaluate(std::span<const ImageResult> images, const ClassSet& classes, const EvalConfig& cfg) {
  if (!(cfg.iou_threshold > 0.0 && cfg.iou_threshold <= 1.0)) throw Error("iou threshold out of range");
  if (cfg.raster_resolution < 64) throw Error("raster resolution must be >= 64");

  const int num_classes = classes.size();
  std::vector<std::vector<MatchResult>> matches(static_cast<std::size_t>(num_classes));
  std::vector<int> truths(static_cast<std::size_t>(num_classes), 0);
  for (const ImageResult& image : images) {
    for (const Label& t : image.truths) {
      if (t.class_index < 0 || t.class_index >= num_classes) throw Error("truth class out of range");
      ++truths[static_cast<std::size_t>(t.class_index)];
    }
    for (const MatchResult& m : match_detections(image.detections, image.truths, cfg)) {
      if (m.class_index < 0 || m.class_index >= num_classes) throw Error("detection class out of range");
      matches[static_cast<std::size_t>(m.class_index)].push_back(m);
    }
  }

  EvalReport report;
  report.config = cfg;
  for (int c = 0; c < num_classes; ++c) {
    auto& list = matches[static_cast<std::size_t>(c)];
    const int n = truths[static_cast<std::size_t>(c)];
    if (n == 0) {
      report.excluded.push_back(classes.name(c));
      continue;
    }
    std::stable_sort(list.begin(), list.end(),
                     [](const MatchResult& a, const MatchResult& b) { return a.score > b.score; });
    std::vector<bool> flags;
    flags.reserve(list.size());
    for (const MatchResult& m : list) flags.push_back(m.true_positive);

    ClassReport cr;
    cr.name = classes.name(c);
    cr.num_truths = n;
    cr.num_detections = static_cast<int>(list.size());
    cr.ap = average_precision(flags, n);
    cr.curve = pr_curve(list, n);
    report.classes.push_back(std::move(cr));
  }
  report.map = mean_ap(report.classes);
  return report;
}

std::string to_string(IouKind kind) {
  switch (kind) {
    case IouKind::kEllipse: return "ellipse";
    case IouKind::kObb: return "obb";
    case IouKind::kBox: return "box";
  }
  return "ellipse";
}

IouKind iou_kind_from_string(const std::string& s) {
  if (s == "ellipse") return IouKind::kEllipse;
  if (s == "obb") return IouKind::kObb;
  if (s == "box") return IouKind::kBox;
  throw Error("unknown iou kind: " + s);
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const ClassReport& c : report.classes) {
    nlohmann::json curve = nlohmann::json::array();
    for (const PRPoint& p : c.curve) {
      curve.push_back({{"precision", p.precision}, {"recall", p.recall}, {"score_cutoff", p.score_cutoff}});
    }
    per_class.push_back({{"class", c.name},
                         {"num_truths", c.num_truths},
                         {"num_detections", c.num_detections},
                         {"ap", c.ap},
                         {"pr", curve}});
  }
  return {{"config",
           {{"iou_threshold", report.config.iou_threshold},
            {"iou_kind", to_string(report.config.iou_kind)},
            {"raster_resolution", report.config.raster_resolution},
            {"interpolation", "all-point"}}},
          {"per_class", per_class},
          {"excluded_classes", report.excluded},
          {"map", report.map}};
}

}  // namespace ellipsedet
