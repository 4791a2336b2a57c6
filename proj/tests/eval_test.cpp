#include <doctest.h>

#include <cmath>

#include "ellipsedet/dataset.hpp"
#include "ellipsedet/error.hpp"
#include "ellipsedet/eval.hpp"
#include "support.hpp"

using namespace ellipsedet;

namespace {

Detection det(const Ellipse& e, double score, int cls = 0) { return {e, cls, score}; }

}  // namespace

TEST_CASE("average_precision examples") {
  CHECK(average_precision({true, true, true}, 3) == 1.0);
  const double ap = average_precision({true, false, true}, 3);
  CHECK(std::abs(ap - 5.0 / 9.0) < 1e-15);
  CHECK(average_precision({false, false}, 5) == 0.0);
  CHECK(average_precision({}, 2) == 0.0);
  CHECK_THROWS_WITH(average_precision({true}, 0), "undefined AP");
}

TEST_CASE("average_precision matches the envelope oracle and is monotone") {
  support::Rng rng(51);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = rng.integer(1, 12);
    std::vector<bool> flags;
    int tp = 0;
    for (int i = rng.integer(0, 15); i > 0; --i) {
      const bool hit = tp < n && rng.uniform(0, 1) < 0.6;
      tp += hit;
      flags.push_back(hit);
    }
    const double ap = average_precision(flags, n);
    CHECK(std::abs(ap - support::reference_ap(flags, n)) < 1e-12);
    CHECK(ap >= 0.0);
    CHECK(ap <= 1.0);
    std::vector<bool> with_fp = flags;
    with_fp.push_back(false);
    CHECK(average_precision(with_fp, n) <= ap + 1e-15);
    if (tp < n) {
      std::vector<bool> with_tp = flags;
      with_tp.push_back(true);
      CHECK(average_precision(with_tp, n) >= ap - 1e-15);
    }
  }
}

TEST_CASE("mean_ap excludes classes without truths") {
  std::vector<ClassReport> reports{{"car", 2, 2, 1.0, {}}, {"bus", 4, 3, 0.5, {}}, {"truck", 0, 1, 0.0, {}}};
  CHECK(mean_ap(reports) == doctest::Approx(0.75));
  reports = {{"car", 1, 1, 1.0, {}}, {"bus", 1, 1, 1.0, {}}, {"truck", 1, 1, 1.0, {}}};
  CHECK(mean_ap(reports) == 1.0);
  reports = {{"car", 0, 1, 0.0, {}}};
  CHECK_THROWS_WITH(mean_ap(reports), "no class has ground truth");
}

TEST_CASE("match_detections rules") {
  const Ellipse g{50, 50, 40, 20, 0.3};
  const std::vector<Label> truths{{g, 0, 1.0}};
  const EvalConfig cfg;

  const std::vector<Detection> exact{det(g, 0.9)};
  CHECK(match_detections(exact, truths, cfg).at(0).true_positive);

  const std::vector<Detection> twice{det(g, 0.8), det(g, 0.9)};
  const auto m = match_detections(twice, truths, cfg);
  CHECK(m[0].score == 0.9);
  CHECK(m[0].true_positive);
  CHECK_FALSE(m[1].true_positive);

  const std::vector<Detection> wrong_class{det(g, 0.9, 1)};
  CHECK_FALSE(match_detections(wrong_class, truths, cfg).at(0).true_positive);

  // Shrink a concentric copy until its IOU is 0.45.
  const double s = std::sqrt(0.45);
  const Ellipse small{50, 50, 40 * s, 20 * s, 0.3};
  CHECK(std::abs(pair_iou(small, g, cfg) - 0.45) < 0.01);
  const std::vector<Detection> weak{det(small, 0.9)};
  CHECK_FALSE(match_detections(weak, truths, cfg).at(0).true_positive);
}

TEST_CASE("box kind equals obb kind on axis-aligned data") {
  support::Rng rng(52);
  for (int trial = 0; trial < 30; ++trial) {
    const Ellipse a{rng.uniform(40, 60), rng.uniform(40, 60), rng.uniform(20, 40), rng.uniform(5, 20), 0.0};
    const Ellipse b{rng.uniform(40, 60), rng.uniform(40, 60), rng.uniform(20, 40), rng.uniform(5, 20), 0.0};
    EvalConfig box, obb;
    box.iou_kind = IouKind::kBox;
    obb.iou_kind = IouKind::kObb;
    CHECK(std::abs(pair_iou(a, b, box) - pair_iou(a, b, obb)) <= 0.01);
  }
}

TEST_CASE("box matching accepts the false intersection that ellipse matching rejects") {
  const Ellipse a{20, 20, 12, 3, support::kPi / 4};
  const Ellipse b{23, 17, 12, 3, support::kPi / 4};
  EvalConfig box, ellipse;
  box.iou_kind = IouKind::kBox;
  box.iou_threshold = ellipse.iou_threshold = 0.05;
  const std::vector<Detection> dets{det(a, 0.9)};
  const std::vector<Label> truths{{b, 0, 1.0}};
  CHECK(match_detections(dets, truths, box).at(0).true_positive);
  CHECK_FALSE(match_detections(dets, truths, ellipse).at(0).true_positive);
}

TEST_CASE("self evaluation gives mAP 1") {
  const ClassSet cs;
  std::vector<ImageResult> images;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    const std::vector<Label> labels = to_labels(synth_scene(cfg, cs).record, cs);
    ImageResult image;
    image.truths = labels;
    for (const Label& l : labels) image.detections.push_back({l.ellipse, l.class_index, 1.0});
    images.push_back(image);
  }
  for (const double t : {0.3, 0.5, 0.9, 1.0}) {
    EvalConfig cfg;
    cfg.iou_threshold = t;
    CHECK(evaluate(images, cs, cfg).map == 1.0);
  }
}

TEST_CASE("evaluate report") {
  const ClassSet cs;
  const Ellipse g{50, 50, 40, 20, 0.3};
  std::vector<ImageResult> images(1);
  images[0].truths = {{g, 0, 1.0}, {{120, 50, 40, 20, 0.3}, 0, 1.0}, {{50, 120, 60, 24, 1.0}, 1, 1.0}};
  images[0].detections = {det(g, 0.9), det({200, 200, 10, 5, 0}, 0.8), det({120, 50, 40, 20, 0.3}, 0.7),
                          det({50, 120, 60, 24, 1.0}, 0.6, 1)};
  const EvalReport r = evaluate(images, cs);
  REQUIRE(r.classes.size() == 2);
  CHECK(r.classes[0].ap == doctest::Approx(5.0 / 6.0));
  CHECK(r.classes[1].ap == 1.0);
  CHECK(r.excluded == std::vector<std::string>{"truck"});
  CHECK(r.map == doctest::Approx((5.0 / 6.0 + 1.0) / 2.0));

  const nlohmann::json doc = to_json(r);
  CHECK(doc["config"]["interpolation"] == "all-point");
  CHECK(doc["config"]["iou_kind"] == "ellipse");
  CHECK(doc["config"]["iou_threshold"] == 0.5);
  CHECK(doc["per_class"].size() == 2);
  CHECK(doc["per_class"][0]["pr"].size() == 3);

  CHECK(iou_kind_from_string(to_string(IouKind::kObb)) == IouKind::kObb);
  CHECK_THROWS_AS(iou_kind_from_string("circle"), Error);
  EvalConfig bad;
  bad.iou_threshold = 0.0;
  CHECK_THROWS_AS(evaluate(images, cs, bad), Error);
}
