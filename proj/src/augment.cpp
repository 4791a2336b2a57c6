#include "ellipsedet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ellipsedet/error.hpp"

namespace ellipsedet {
namespace {

// Portable uniform draw in [0, 1); std::uniform_real_distribution is not
// specified bit-exactly across standard libraries.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

void check_same_size(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) throw Error("sample dimensions differ");
}

std::optional<AxisBox> box_of(const Sample& s, std::size_t k) {
  return k < s.boxes.size() ? s.boxes[k] : std::nullopt;
}

}  // namespace

void validate(const AugmentConfig& cfg) {
  if (!(cfg.smoothing_eps >= 0.0 && cfg.smoothing_eps < 0.5)) throw Error("smoothing_eps must lie in [0, 0.5)");
  if (!(cfg.visibility_tau > 0.0 && cfg.visibility_tau <= 1.0)) throw Error("visibility_tau must lie in (0, 1]");
  if (!(cfg.mosaic_center_jitter >= 0.0 && cfg.mosaic_center_jitter < 0.5)) {
    throw Error("mosaic_center_jitter must lie in [0, 0.5)");
  }
  if (cfg.visibility_samples < 256) throw Error("visibility_samples must be >= 256");
}

std::vector<double> smooth_labels(std::span<const double> peaks, double eps) {
  if (!(eps >= 0.0 && eps < 0.5)) throw Error("smoothing_eps must lie in [0, 0.5)");
  std::vector<double> out(peaks.begin(), peaks.end());
  for (double& p : out) p *= 1.0 - eps;
  return out;
}

Sample smooth_labels(Sample sample, double eps) {
  std::vector<double> peaks;
  peaks.reserve(sample.labels.size());
  for (const Label& l : sample.labels) peaks.push_back(l.peak);
  const std::vector<double> smoothed = smooth_labels(peaks, eps);
  for (std::size_t k = 0; k < smoothed.size(); ++k) sample.labels[k].peak = smoothed[k];
  return sample;
}

double visibility_fraction(const Ellipse& e, const AxisBox& region, int samples) {
  if (samples < 256) throw Error("visibility needs at least 256 samples");
  const AxisBox box = ellipse_aabb(e);
  if (region.x <= box.x && region.y <= box.y && region.right() >= box.right() && region.bottom() >= box.bottom()) {
    return 1.0;
  }
  if (region.right() < box.x || region.x > box.right() || region.bottom() < box.y || region.y > box.bottom()) {
    return 0.0;
  }
  // Sunflower (Vogel) spiral: area-uniform, low discrepancy on the unit disk.
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  const double c = std::cos(e.theta), s = std::sin(e.theta);
  const double a = e.l1 / 2.0, b = e.l2 / 2.0;
  int inside = 0;
  for (int i = 0; i < samples; ++i) {
    const double r = std::sqrt((i + 0.5) / samples);
    const double phi = i * golden;
    const double u = a * r * std::cos(phi);
    const double v = b * r * std::sin(phi);
    inside += region.contains(e.cx + u * c - v * s, e.cy + u * s + v * c);
  }
  return static_cast<double>(inside) / samples;
}

std::array<int, 2> Placement::source_pixel(int x, int y, int src_width, int src_height) const noexcept {
  const int sx = static_cast<int>(std::floor((x + 0.5 - offset.x()) / scale.x()));
  const int sy = static_cast<int>(std::floor((y + 0.5 - offset.y()) / scale.y()));
  return {std::clamp(sx, 0, src_width - 1), std::clamp(sy, 0, src_height - 1)};
}

MosaicResult mosaic(std::span<const Sample> samples, const AugmentConfig& cfg) {
  validate(cfg);
  if (samples.size() != 4) throw Error("mosaic needs exactly four samples");
  for (const Sample& s : samples) check_same_size(samples[0].image, s.image);
  const int width = samples[0].image.width;
  const int height = samples[0].image.height;
  if (width < 2 || height < 2) throw Error("mosaic needs images of at least 2x2 pixels");

  std::mt19937_64 rng(cfg.rng_seed);
  const double jitter = cfg.mosaic_center_jitter;
  const double ux = uniform01(rng);
  const double uy = uniform01(rng);
  MosaicResult out;
  out.center_x = std::clamp(static_cast<int>(std::lround(width * (0.5 + jitter * (2.0 * ux - 1.0)))), 1, width - 1);
  out.center_y = std::clamp(static_cast<int>(std::lround(height * (0.5 + jitter * (2.0 * uy - 1.0)))), 1, height - 1);

  const int xs[3] = {0, out.center_x, width};
  const int ys[3] = {0, out.center_y, height};
  out.sample.image = Image(width, height);

  for (int q = 0; q < 4; ++q) {
    Placement& p = out.quadrants[static_cast<std::size_t>(q)];
    p.x0 = xs[q % 2];
    p.x1 = xs[q % 2 + 1];
    p.y0 = ys[q / 2];
    p.y1 = ys[q / 2 + 1];
    p.scale = {static_cast<double>(p.x1 - p.x0) / width, static_cast<double>(p.y1 - p.y0) / height};
    p.offset = {static_cast<double>(p.x0), static_cast<double>(p.y0)};

    const Sample& src = samples[static_cast<std::size_t>(q)];
    for (int y = p.y0; y < p.y1; ++y) {
      for (int x = p.x0; x < p.x1; ++x) {
        const auto [sx, sy] = p.source_pixel(x, y, width, height);
        const std::uint8_t* px = src.image.at(sx, sy);
        out.sample.image.set(x, y, {px[0], px[1], px[2]});
      }
    }

    const Eigen::Matrix2d a = p.scale.asDiagonal();
    const AxisBox region{static_cast<double>(p.x0), static_cast<double>(p.y0), static_cast<double>(p.x1 - p.x0),
                         static_cast<double>(p.y1 - p.y0)};
    for (std::size_t k = 0; k < src.labels.size(); ++k) {
      Label moved = src.labels[k];
      moved.ellipse = affine_transform_ellipse(moved.ellipse, a, p.offset);
      if (visibility_fraction(moved.ellipse, region, cfg.visibility_samples) < cfg.visibility_tau) continue;
      std::optional<AxisBox> box = box_of(src, k);
      if (box) {
        box = AxisBox{box->x * p.scale.x() + p.offset.x(), box->y * p.scale.y() + p.offset.y(),
                      box->w * p.scale.x(), box->h * p.scale.y()};
      }
      out.sample.labels.push_back(moved);
      out.sample.boxes.push_back(box);
      out.provenance.push_back({q, static_cast<int>(k)});
    }
  }
  return out;
}

CutMixResult cutmix(const Sample& base, const Sample& donor, const AxisBox& patch, const AugmentConfig& cfg) {
  validate(cfg);
  check_same_size(base.image, donor.image);
  const int width = base.image.width;
  const int height = base.image.height;
  if (!(patch.w > 0.0 && patch.h > 0.0) || patch.x < 0.0 || patch.y < 0.0 || patch.right() > width ||
      patch.bottom() > height) {
    throw Error("patch outside image bounds");
  }

  CutMixResult out;
  out.sample.image = base.image;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!patch.contains(x + 0.5, y + 0.5)) continue;
      const std::uint8_t* px = donor.image.at(x, y);
      out.sample.image.set(x, y, {px[0], px[1], px[2]});
    }
  }

  const double floor_peak = cfg.decode_threshold + 0.05;
  const auto keep = [&](const Sample& src, int source, bool inside_patch) {
    for (std::size_t k = 0; k < src.labels.size(); ++k) {
      const double covered = visibility_fraction(src.labels[k].ellipse, patch, cfg.visibility_samples);
      const double visible = inside_patch ? covered : 1.0 - covered;
      if (visible < cfg.visibility_tau) continue;
      Label kept = src.labels[k];
      kept.peak = std::min(1.0, std::max(kept.peak * visible, floor_peak));
      out.sample.labels.push_back(kept);
      out.sample.boxes.push_back(box_of(src, k));
      out.provenance.push_back({source, static_cast<int>(k)});
      out.visible.push_back(visible);
    }
  };
  keep(base, 0, false);
  keep(donor, 1, true);
  return out;
}

AxisBox random_patch(int width, int height, std::uint64_t seed) {
  if (width < 5 || height < 5) throw Error("image too small for a patch");
  std::mt19937_64 rng(seed);
  const int w = static_cast<int>(std::lround(width * (0.2 + 0.4 * uniform01(rng))));
  const int h = static_cast<int>(std::lround(height * (0.2 + 0.4 * uniform01(rng))));
  const int x = static_cast<int>(std::floor(uniform01(rng) * (width - w + 1)));
  const int y = static_cast<int>(std::floor(uniform01(rng) * (height - h + 1)));
  return {static_cast<double>(x), static_cast<double>(y), static_cast<double>(w), static_cast<double>(h)};
}

}  // namespace ellipsedet
