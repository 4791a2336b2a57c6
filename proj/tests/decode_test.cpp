#include <doctest.h>

#include <cmath>

#include "ellipsedet/dataset.hpp"
#include "ellipsedet/decode.hpp"
#include "ellipsedet/error.hpp"
#include "support.hpp"

using namespace ellipsedet;

TEST_CASE("single Gaussian yields one peak at its center cell") {
  const ClassSet cs;
  support::Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const double l1 = rng.uniform(16, 60);
    const std::vector<Label> labels{
        {{rng.uniform(0, 128), rng.uniform(0, 128), l1, l1 * rng.uniform(0.5, 1.0), rng.uniform(0, support::kPi)},
         rng.integer(0, 2),
         1.0}};
    const std::vector<Peak> peaks = extract_peaks(render_heatmap(labels, 128, 128, 4, cs).values);
    REQUIRE(peaks.size() == 1);
    CHECK(peaks[0].x == static_cast<int>(labels[0].ellipse.cx / 4));
    CHECK(peaks[0].y == static_cast<int>(labels[0].ellipse.cy / 4));
    CHECK(peaks[0].channel == labels[0].class_index);
    CHECK(peaks[0].score == 1.0);
  }
}

TEST_CASE("extract_peaks threshold and ordering") {
  Grid hm(2, 8, 8, 0.1);
  CHECK(extract_peaks(hm, 0.3).empty());
  hm(0, 1, 1) = 0.5;
  hm(1, 6, 6) = 0.9;
  hm(0, 5, 2) = 0.9;
  const std::vector<Peak> peaks = extract_peaks(hm, 0.3);
  REQUIRE(peaks.size() == 3);
  CHECK(peaks[0] == Peak{2, 5, 0, 0.9});
  CHECK(peaks[1] == Peak{6, 6, 1, 0.9});
  CHECK(peaks[2] == Peak{1, 1, 0, 0.5});
  CHECK(extract_peaks(hm, 0.3, 1).size() == 1);
  CHECK(extract_peaks(hm, 0.5).size() == 3);
  CHECK_THROWS_WITH(extract_peaks(hm, 1.1), doctest::Contains("threshold out of range"));
  CHECK_THROWS_WITH(extract_peaks(hm, 0.0), doctest::Contains("threshold out of range"));
  CHECK_THROWS_AS(extract_peaks(hm, 0.3, 0), Error);
}

TEST_CASE("plateaus collapse to their first cell") {
  Grid hm(1, 6, 6);
  hm(0, 2, 2) = hm(0, 2, 3) = hm(0, 3, 2) = 0.8;
  const std::vector<Peak> peaks = extract_peaks(hm, 0.3);
  REQUIRE(peaks.size() == 1);
  CHECK(peaks[0] == Peak{2, 2, 0, 0.8});
}

TEST_CASE("two Gaussians five cells apart give two peaks") {
  const ClassSet cs;
  const std::vector<Label> labels{{{42, 42, 30, 20, 0.4}, 0, 1.0}, {{62, 42, 30, 20, 2.4}, 0, 1.0}};
  const std::vector<Peak> peaks = extract_peaks(render_heatmap(labels, 128, 128, 4, cs).values);
  REQUIRE(peaks.size() == 2);
  CHECK(peaks[0].x == 10);
  CHECK(peaks[1].x == 15);
}

TEST_CASE("decode examples") {
  const ClassSet cs;
  const std::vector<Label> labels{{{13, 7, 20, 12, 0.4}, 2, 1.0}};
  const Heatmap hm = render_heatmap(labels, 64, 64, 4, cs);
  const RegressionMaps reg = render_regression_maps(labels, 64, 64, 4);
  const std::vector<Detection> dets = decode_detections(hm, reg, 4);
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].ellipse.cx == 13.0);
  CHECK(dets[0].ellipse.cy == 7.0);
  CHECK(dets[0].class_index == 2);
  CHECK(cs.name(dets[0].class_index) == "truck");
  CHECK(dets[0].score == 1.0);
  CHECK_THROWS_WITH(decode_detections(hm, reg, 8), doctest::Contains("stride mismatch"));
}

TEST_CASE("decode canonicalizes swapped axes") {
  const ClassSet cs;
  const std::vector<Label> labels{{{20, 20, 20, 12, 0.4}, 0, 1.0}};
  const Heatmap hm = render_heatmap(labels, 64, 64, 4, cs);
  RegressionMaps reg = render_regression_maps(labels, 64, 64, 4);
  reg.maps(kSizeL1, 5, 5) = 12;
  reg.maps(kSizeL2, 5, 5) = 20;
  reg.maps(kTheta, 5, 5) = 0.4 + support::kPi / 2 + support::kPi;
  const Ellipse e = decode_detections(hm, reg, 4).at(0).ellipse;
  CHECK(e.l1 == 20);
  CHECK(e.l2 == 12);
  CHECK(e.theta == doctest::Approx(0.4));
}

TEST_CASE("encode-decode round trip on synthetic scenes") {
  const ClassSet cs;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    const SynthScene scene = synth_scene(cfg, cs);
    const std::vector<Label> labels = to_labels(scene.record, cs);
    const std::vector<Detection> dets =
        decode_detections(render_heatmap(labels, cfg.width, cfg.height, 4, cs),
                          render_regression_maps(labels, cfg.width, cfg.height, 4), 4, 0.3);
    REQUIRE(dets.size() == labels.size());
    for (const Label& l : labels) {
      int hits = 0;
      for (const Detection& d : dets) {
        const Ellipse& e = d.ellipse;
        hits += d.class_index == l.class_index && std::abs(e.cx - l.ellipse.cx) < 1e-9 &&
                std::abs(e.cy - l.ellipse.cy) < 1e-9 && std::abs(e.l1 - l.ellipse.l1) < 1e-9 &&
                std::abs(e.l2 - l.ellipse.l2) < 1e-9 && std::abs(e.theta - l.ellipse.theta) < 1e-9;
      }
      CHECK(hits == 1);
    }
  }
}

TEST_CASE("raising the threshold never adds detections") {
  support::Rng rng(42);
  Grid hm(3, 16, 16);
  for (double& v : hm.values()) v = rng.uniform(0, 1);
  std::size_t prev = extract_peaks(hm, 0.05, 1000).size();
  for (double t = 0.1; t <= 1.0; t += 0.05) {
    const std::size_t n = extract_peaks(hm, t, 1000).size();
    CHECK(n <= prev);
    prev = n;
  }
  const std::vector<Peak> limited = extract_peaks(hm, 0.05, 5);
  CHECK(limited.size() == 5);
  for (std::size_t i = 1; i < limited.size(); ++i) CHECK(limited[i - 1].score >= limited[i].score);
}
