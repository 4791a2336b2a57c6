#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ellipsedet/decode.hpp"
#include "ellipsedet/heatmap.hpp"

namespace ellipsedet {

enum class IouKind { kEllipse, kObb, kBox };

struct EvalConfig {
  double iou_threshold = 0.5;
  IouKind iou_kind = IouKind::kEllipse;
  int raster_resolution = 512;
};

struct PRPoint {
  double precision = 0.0;
  double recall = 0.0;
  double score_cutoff = 0.0;
};

struct MatchResult {
  double score = 0.0;
  int class_index = 0;
  bool true_positive = false;
};

double pair_iou(const Ellipse& a, const Ellipse& b, const EvalConfig& cfg);

// Greedy matching of one image: detections in descending score order each take
// the unmatched same-class ground truth of highest IOU >= threshold.
std::vector<MatchResult> match_detections(std::span<const Detection> detections, std::span<const Label> truths,
                                          const EvalConfig& cfg);

// All-point interpolated AP of score-ordered TP/FP flags. Throws for n_gt == 0.
double average_precision(const std::vector<bool>& flags, int num_truths);
std::vector<PRPoint> pr_curve(std::span<const MatchResult> ordered, int num_truths);

struct ClassReport {
  std::string name;
  int num_truths = 0;
  int num_detections = 0;
  double ap = 0.0;
  std::vector<PRPoint> curve;
};

struct EvalReport {
  EvalConfig config;
  std::vector<ClassReport> classes;       // classes with at least one truth
  std::vector<std::string> excluded;      // classes without truths
  double map = 0.0;
};

// Unweighted mean over classes with truths. Throws when none have truths.
double mean_ap(std::span<const ClassReport> per_class);

struct ImageResult {
  std::vector<Detection> detections;
  std::vector<Label> truths;
};

EvalReport evaluate(std::span<const ImageResult> images, const ClassSet& classes, const EvalConfig& cfg = {});

std::string to_string(IouKind kind);
IouKind iou_kind_from_string(const std::string& s);
nlohmann::json to_json(const EvalReport& report);

}  // namespace ellipsedet
