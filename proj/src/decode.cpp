#include "ellipsedet/decode.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ellipsedet/error.hpp"

namespace ellipsedet {
namespace {

bool is_local_max(std::span<const double> plane, int width, int height, int x, int y) {
  const double v = plane[static_cast<std::size_t>(y) * width + x];
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      const int nx = x + dx;
      const int ny = y + dy;
      if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
      if (plane[static_cast<std::size_t>(ny) * width + nx] > v) return false;
    }
  }
  return true;
}

}  // namespace

std::vector<Peak> extract_peaks(const Grid& heatmap, double threshold, int top_k) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw Error("threshold out of range");
  if (top_k < 1) throw Error("top_k must be at least 1");

  const int w = heatmap.width();
  const int h = heatmap.height();
  std::vector<Peak> peaks;
  std::vector<char> qualifies(static_cast<std::size_t>(w) * h);
  std::vector<char> visited(qualifies.size());
  std::vector<int> stack;

  for (int c = 0; c < heatmap.channels(); ++c) {
    const auto plane = heatmap.channel(c);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        qualifies[i] = plane[i] >= threshold && is_local_max(plane, w, h, x, y);
        visited[i] = 0;
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t seed = static_cast<std::size_t>(y) * w + x;
        if (!qualifies[seed] || visited[seed]) continue;
        peaks.push_back({x, y, c, plane[seed]});
        // Swallow the rest of an equal-valued plateau.
        visited[seed] = 1;
        stack.assign(1, static_cast<int>(seed));
        while (!stack.empty()) {
          const int cur = stack.back();
          stack.pop_back();
          const int cx = cur % w;
          const int cy = cur / w;
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const int nx = cx + dx;
              const int ny = cy + dy;
              if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
              const std::size_t n = static_cast<std::size_t>(ny) * w + nx;
              if (qualifies[n] && !visited[n] && plane[n] == plane[seed]) {
                visited[n] = 1;
                stack.push_back(static_cast<int>(n));
              }
            }
          }
        }
      }
    }
  }

  std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.score > b.score; });
  if (peaks.size() > static_cast<std::size_t>(top_k)) peaks.resize(static_cast<std::size_t>(top_k));
  return peaks;
}

std::vector<Detection> decode_detections(const Heatmap& heatmap, const RegressionMaps& regression, int stride,
                                         double threshold, int top_k) {
  if (stride != heatmap.stride || stride != regression.stride) throw Error("stride mismatch");
  const Grid& maps = regression.maps;
  if (maps.channels() != kRegressionChannels || maps.height() != heatmap.values.height() ||
      maps.width() != heatmap.values.width()) {
    throw Error("heatmap and regression maps disagree in shape");
  }

  std::vector<Detection> out;
  for (const Peak& p : extract_peaks(heatmap.values, threshold, top_k)) {
    double l1 = std::abs(maps(kSizeL1, p.y, p.x));
    double l2 = std::abs(maps(kSizeL2, p.y, p.x));
    double theta = maps(kTheta, p.y, p.x);
    if (l2 > l1) {
      std::swap(l1, l2);
      theta += std::numbers::pi / 2.0;
    }
    // Predicted sizes can collapse to zero; keep the ellipse valid.
    constexpr double kMinAxis = 1e-9;
    l1 = std::max(l1, kMinAxis);
    l2 = std::max(l2, kMinAxis);

    Detection d;
    d.ellipse.cx = (p.x + maps(kOffsetX, p.y, p.x)) * stride;
    d.ellipse.cy = (p.y + maps(kOffsetY, p.y, p.x)) * stride;
    d.ellipse.l1 = l1;
    d.ellipse.l2 = l2;
    d.ellipse.theta = canonicalize_angle(theta);
    d.class_index = p.channel;
    d.score = std::clamp(p.score, 0.0, 1.0);
    out.push_back(d);
  }
  return out;
}

}  // namespace ellipsedet
