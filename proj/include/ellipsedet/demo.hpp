#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ellipsedet/decode.hpp"
#include "ellipsedet/heatmap.hpp"
#include "ellipsedet/losses.hpp"

namespace ellipsedet {

// Ground truth for the prediction-fitting demo.
struct DemoTarget {
  int width = 0;
  int height = 0;
  int stride = 4;
  std::vector<Label> labels;
  Heatmap heatmap;
  RegressionMaps regression;
  SegMask segmentation;
};

DemoTarget make_demo_target(std::span<const Label> labels, int width, int height, int stride,
                            const ClassSet& classes);

struct DemoConfig {
  int iterations = 2000;
  SizeMode size_mode = SizeMode::kRegression;
  LossWeights weights;
  FocalParams focal;
  PiouParams piou;
  std::uint64_t seed = 0;
  double threshold = kDefaultDecodeThreshold;

  // Per-group gradient-descent steps, decayed linearly to `final_step_fraction`.
  double heatmap_step = 2.0;
  double offset_step = 0.5;
  double size_step = 4.0;
  double angle_step = 1.0;
  double seg_step = 5000.0;
  double final_step_fraction = 0.02;
};

// Steps tuned for the chosen size loss.
DemoConfig default_demo_config(SizeMode mode);

struct DemoResult {
  std::vector<double> loss_trace;  // total loss before each update, plus the final value
  std::vector<Detection> detections;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Gradient descent directly on the prediction tensors (heatmap and
// segmentation logits through a sigmoid, regression maps raw), then decode.
// Throws Error naming the iteration if the loss stops being finite.
DemoResult fit_predictions_demo(const DemoTarget& target, const DemoConfig& cfg);

}  // namespace ellipsedet
