#pragma once

#include <vector>

#include "ellipsedet/geometry.hpp"
#include "ellipsedet/heatmap.hpp"

namespace ellipsedet {

inline constexpr double kDefaultDecodeThreshold = 0.3;
inline constexpr int kDefaultTopK = 100;

struct Detection {
  Ellipse ellipse;
  int class_index = 0;
  double score = 0.0;
};

struct Peak {
  int x = 0;
  int y = 0;
  int channel = 0;
  double score = 0.0;

  friend bool operator==(const Peak&, const Peak&) = default;
};

// 3x3 local maxima (>= comparison) at or above `threshold`. A plateau of equal
// maxima yields only its first cell in row-major order. Ordered by descending
// score, ties by (channel, row, column); at most `top_k` entries.
std::vector<Peak> extract_peaks(const Grid& heatmap, double threshold = kDefaultDecodeThreshold,
                                int top_k = kDefaultTopK);

// Peaks to ellipses: center = ((x + ox) R, (y + oy) R), sizes and angle read
// from the regression channels at the peak cell. No suppression step.
std::vector<Detection> decode_detections(const Heatmap& heatmap, const RegressionMaps& regression, int stride,
                                         double threshold = kDefaultDecodeThreshold, int top_k = kDefaultTopK);

}  // namespace ellipsedet
