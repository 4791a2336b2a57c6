#include <doctest.h>

#include <cmath>

#include "ellipsedet/augment.hpp"
#include "ellipsedet/dataset.hpp"
#include "ellipsedet/error.hpp"
#include "support.hpp"

using namespace ellipsedet;
using support::kPi;

namespace {

std::vector<Sample> four_scenes(std::uint64_t seed) {
  const ClassSet cs;
  std::vector<Sample> out;
  for (std::uint64_t k = 0; k < 4; ++k) {
    SynthConfig cfg;
    cfg.seed = seed * 4 + k;
    cfg.min_objects = 3;
    cfg.max_objects = 6;
    out.push_back(synth_scene(cfg, cs).sample);
  }
  return out;
}

// Fraction of the unit circle with x >= d.
double cap_fraction(double d) { return (std::acos(d) - d * std::sqrt(1 - d * d)) / kPi; }

// Offset d (in radii) at which the cap holds `fraction` of the area.
double cap_offset(double fraction) {
  double lo = -1, hi = 1;
  for (int i = 0; i < 100; ++i) {
    const double mid = (lo + hi) / 2;
    (cap_fraction(mid) > fraction ? lo : hi) = mid;
  }
  return (lo + hi) / 2;
}

}  // namespace

TEST_CASE("smooth_labels") {
  const std::vector<double> peaks{1.0, 1.0, 0.5};
  const std::vector<double> out = smooth_labels(peaks, 0.1);
  CHECK(out[0] == 0.9);
  CHECK(out[2] == doctest::Approx(0.45));
  CHECK(smooth_labels(peaks, 0.0) == peaks);
  CHECK_THROWS_AS(smooth_labels(peaks, 0.5), Error);
  CHECK_THROWS_AS(smooth_labels(peaks, -0.1), Error);

  const ClassSet cs;
  SynthConfig cfg;
  cfg.seed = 3;
  const Sample smoothed = smooth_labels(synth_scene(cfg, cs).sample, 0.1);
  const Heatmap hm = render_heatmap(smoothed.labels, cfg.width, cfg.height, 4, cs);
  for (const Label& l : smoothed.labels) {
    CHECK(hm.values(l.class_index, static_cast<int>(l.ellipse.cy / 4), static_cast<int>(l.ellipse.cx / 4)) == 0.9);
  }
  double max_value = 0.0;
  for (double v : hm.values.values()) max_value = std::max(max_value, v);
  CHECK(max_value == 0.9);
}

TEST_CASE("visibility_fraction") {
  const Ellipse e{50, 50, 40, 20, 0.6};
  CHECK(visibility_fraction(e, {0, 0, 100, 100}) == 1.0);
  CHECK(visibility_fraction(e, {200, 200, 10, 10}) == 0.0);
  const Ellipse circle{50, 50, 30, 30, 0};
  CHECK(std::abs(visibility_fraction(circle, {50, 0, 100, 100}) - 0.5) <= 0.02);
  CHECK(std::abs(visibility_fraction(circle, {0, 50, 100, 100}) - 0.5) <= 0.02);
  CHECK_THROWS_AS(visibility_fraction(e, {0, 0, 1, 1}, 100), Error);

  // Agrees with the analytic cap area.
  for (const double f : {0.1, 0.2, 0.3, 0.7}) {
    const double d = cap_offset(f);
    CHECK(std::abs(visibility_fraction(circle, {50 + 15 * d, 0, 100, 100}) - f) <= 0.02);
  }
}

TEST_CASE("mosaic with a centred split halves every axis") {
  const std::vector<Sample> samples = four_scenes(1);
  AugmentConfig cfg;
  cfg.mosaic_center_jitter = 0.0;
  const MosaicResult r = mosaic(samples, cfg);
  CHECK(r.center_x == 128);
  CHECK(r.center_y == 128);
  for (const Placement& p : r.quadrants) {
    CHECK(p.scale.x() == 0.5);
    CHECK(p.scale.y() == 0.5);
  }
  for (std::size_t i = 0; i < r.sample.labels.size(); ++i) {
    const Provenance& from = r.provenance[i];
    const Ellipse& src = samples[static_cast<std::size_t>(from.source)].labels[static_cast<std::size_t>(from.label_index)].ellipse;
    const Ellipse& out = r.sample.labels[i].ellipse;
    CHECK(out.l1 == doctest::Approx(src.l1 / 2));
    CHECK(out.l2 == doctest::Approx(src.l2 / 2));
    CHECK(support::angle_distance(out.theta, src.theta) < 1e-9);
  }
}

TEST_CASE("mosaic pixels, keep rule and label transport") {
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    const std::vector<Sample> samples = four_scenes(trial + 10);
    AugmentConfig cfg;
    cfg.rng_seed = trial;
    const MosaicResult r = mosaic(samples, cfg);
    const Image& img = r.sample.image;
    CHECK(img.width == 256);

    // Every output pixel is a copy of exactly one source pixel.
    int mismatched = 0;
    for (int q = 0; q < 4; ++q) {
      const Placement& p = r.quadrants[static_cast<std::size_t>(q)];
      for (int y = p.y0; y < p.y1; ++y) {
        for (int x = p.x0; x < p.x1; ++x) {
          const auto [sx, sy] = p.source_pixel(x, y, 256, 256);
          const std::uint8_t* a = img.at(x, y);
          const std::uint8_t* b = samples[static_cast<std::size_t>(q)].image.at(sx, sy);
          mismatched += a[0] != b[0] || a[1] != b[1] || a[2] != b[2];
        }
      }
    }
    CHECK(mismatched == 0);

    // Kept labels pass the visibility rule; dropped ones fail it.
    std::size_t kept = 0;
    for (int q = 0; q < 4; ++q) {
      const Placement& p = r.quadrants[static_cast<std::size_t>(q)];
      const AxisBox region{double(p.x0), double(p.y0), double(p.x1 - p.x0), double(p.y1 - p.y0)};
      const auto& src = samples[static_cast<std::size_t>(q)].labels;
      for (std::size_t k = 0; k < src.size(); ++k) {
        const Ellipse moved = affine_transform_ellipse(src[k].ellipse, p.scale.asDiagonal(), p.offset);
        const bool visible = visibility_fraction(moved, region) >= cfg.visibility_tau;
        bool present = false;
        for (const Provenance& from : r.provenance) present |= from.source == q && from.label_index == int(k);
        CHECK(visible == present);
        kept += present;
      }
    }
    CHECK(kept == r.sample.labels.size());

    for (std::size_t i = 0; i < r.sample.labels.size(); ++i) {
      const Provenance& from = r.provenance[i];
      const Ellipse& out = r.sample.labels[i].ellipse;
      CHECK(out.cx >= 0);
      CHECK(out.cx < 256);
      CHECK(out.cy >= 0);
      CHECK(out.cy < 256);
      const Ellipse& src =
          samples[static_cast<std::size_t>(from.source)].labels[static_cast<std::size_t>(from.label_index)].ellipse;
      CHECK(support::transport_iou(out, src, r.quadrants[static_cast<std::size_t>(from.source)]) >= 0.99);
      REQUIRE(r.sample.boxes[i].has_value());
      const AxisBox tight = ellipse_aabb(out);
      CHECK(std::abs(r.sample.boxes[i]->x - tight.x) < 1e-9);
      CHECK(std::abs(r.sample.boxes[i]->right() - tight.right()) < 1e-9);
    }
  }
}

TEST_CASE("mosaic is deterministic") {
  const std::vector<Sample> samples = four_scenes(2);
  AugmentConfig cfg;
  cfg.rng_seed = 99;
  const MosaicResult a = mosaic(samples, cfg), b = mosaic(samples, cfg);
  CHECK(a.sample.image == b.sample.image);
  CHECK(a.center_x == b.center_x);
  const ClassSet cs;
  CHECK(serialize(to_record("m", 256, 256, a.sample.labels, cs)) ==
        serialize(to_record("m", 256, 256, b.sample.labels, cs)));
  cfg.rng_seed = 100;
  const MosaicResult c = mosaic(samples, cfg);
  CHECK((c.center_x != a.center_x || c.center_y != a.center_y));
}

TEST_CASE("mosaic rejects bad inputs") {
  std::vector<Sample> samples = four_scenes(3);
  CHECK_THROWS_AS(mosaic(std::span<const Sample>(samples).first(3), AugmentConfig{}), Error);
  samples[2].image = Image(128, 256);
  CHECK_THROWS_AS(mosaic(samples, AugmentConfig{}), Error);
  AugmentConfig bad;
  bad.mosaic_center_jitter = 0.5;
  CHECK_THROWS_AS(mosaic(four_scenes(3), bad), Error);
}

TEST_CASE("cutmix examples") {
  Sample base, donor;
  base.image = Image(128, 128);
  donor.image = Image(128, 128);
  for (std::uint8_t& v : donor.image.pixels) v = 200;
  const double r = 15;
  // Base circles at (40, 40) and (40, 90); donor circle inside the patch.
  base.labels = {{{40, 40, 2 * r, 2 * r, 0}, 0, 1.0}, {{40, 90, 2 * r, 2 * r, 0}, 1, 1.0}};
  donor.labels = {{{100, 40, 20, 10, 0.3}, 2, 1.0}};

  SUBCASE("covered 70 percent is dropped, 20 percent kept at peak 0.8") {
    const AxisBox patch{40 + r * cap_offset(0.7), 0, 128 - (40 + r * cap_offset(0.7)), 60};
    const CutMixResult out = cutmix(base, donor, patch, AugmentConfig{});
    // First base circle is 70% covered: dropped. Second is untouched.
    REQUIRE(out.sample.labels.size() == 2);
    CHECK(out.provenance[0].source == 0);
    CHECK(out.provenance[0].label_index == 1);
    CHECK(out.sample.labels[0].peak == 1.0);
    CHECK(out.provenance[1].source == 1);
    CHECK(out.sample.labels[1].ellipse == donor.labels[0].ellipse);
    CHECK(out.sample.labels[1].peak == 1.0);

    const AxisBox light{40 + r * cap_offset(0.2), 0, 128 - (40 + r * cap_offset(0.2)), 60};
    const CutMixResult kept = cutmix(base, donor, light, AugmentConfig{});
    REQUIRE(kept.sample.labels.size() == 3);
    CHECK(kept.sample.labels[0].ellipse == base.labels[0].ellipse);
    CHECK(std::abs(kept.sample.labels[0].peak - 0.8) <= 0.01);
  }

  SUBCASE("peaks are floored above the decode threshold") {
    AugmentConfig cfg;
    cfg.visibility_tau = 0.1;
    const AxisBox patch{40 + r * cap_offset(0.8), 0, 128 - (40 + r * cap_offset(0.8)), 60};
    const CutMixResult out = cutmix(base, donor, patch, cfg);
    CHECK(out.sample.labels[0].peak == doctest::Approx(0.35));
  }

  SUBCASE("pixels come from exactly one source") {
    const AxisBox patch{60.5, 10.25, 40, 30};
    const CutMixResult out = cutmix(base, donor, patch, AugmentConfig{});
    for (int y = 0; y < 128; ++y) {
      for (int x = 0; x < 128; ++x) {
        const bool in = patch.contains(x + 0.5, y + 0.5);
        CHECK(out.sample.image.at(x, y)[0] == (in ? 200 : 0));
      }
    }
  }

  CHECK_THROWS_WITH(cutmix(base, donor, {100, 100, 40, 40}, AugmentConfig{}),
                    doctest::Contains("patch outside image bounds"));
}

TEST_CASE("cutmix keeps geometry and pixel masks of retained objects") {
  const ClassSet cs;
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    SynthConfig cfg;
    cfg.seed = 100 + trial;
    const SynthScene base = synth_scene(cfg, cs);
    cfg.seed = 200 + trial;
    const SynthScene donor = synth_scene(cfg, cs);
    AugmentConfig aug;
    aug.rng_seed = trial;
    const CutMixResult out = cutmix(base.sample, donor.sample, random_patch(256, 256, trial), aug);
    const CutMixResult again = cutmix(base.sample, donor.sample, random_patch(256, 256, trial), aug);
    CHECK(out.sample.image == again.sample.image);
    for (std::size_t i = 0; i < out.sample.labels.size(); ++i) {
      const Sample& src = out.provenance[i].source == 0 ? base.sample : donor.sample;
      const Label& orig = src.labels[static_cast<std::size_t>(out.provenance[i].label_index)];
      CHECK(out.sample.labels[i].ellipse == orig.ellipse);
      CHECK(out.visible[i] >= aug.visibility_tau);
      CHECK(out.sample.labels[i].peak >= aug.decode_threshold + 0.05);
      CHECK(out.sample.labels[i].peak <= 1.0);
      const std::vector<Label> one{out.sample.labels[i]}, other{orig};
      const SegMask a = render_segmentation_mask(one, 256, 256), b = render_segmentation_mask(other, 256, 256);
      CHECK(a == b);
    }
  }
}

TEST_CASE("random_patch stays inside the image") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const AxisBox p = random_patch(200, 100, seed);
    CHECK(p.x >= 0);
    CHECK(p.y >= 0);
    CHECK(p.right() <= 200);
    CHECK(p.bottom() <= 100);
    CHECK(p.w >= 0.2 * 200 - 1);
    CHECK(p.w <= 0.6 * 200 + 1);
  }
  CHECK(random_patch(200, 100, 5) == random_patch(200, 100, 5));
}
