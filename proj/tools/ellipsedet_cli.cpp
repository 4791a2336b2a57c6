// ellipsedet: command-line front end.
//
// Every run prints one JSON document {"manifest": ..., "result": ...} to
// stdout (or --out); human-readable notes go to stderr. Exit codes: 0 ok,
// 1 runtime error, 2 usage error.

#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ellipsedet/augment.hpp"
#include "ellipsedet/dataset.hpp"
#include "ellipsedet/decode.hpp"
#include "ellipsedet/demo.hpp"
#include "ellipsedet/error.hpp"
#include "ellipsedet/eval.hpp"
#include "ellipsedet/gradcheck.hpp"
#include "ellipsedet/heatmap.hpp"
#include "ellipsedet/image.hpp"
#include "ellipsedet/service.hpp"
#include "ellipsedet/version.hpp"

using namespace ellipsedet;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  int stride = 4;
  std::string classes = "car,bus,truck";
  double threshold = kDefaultDecodeThreshold;
  double iou_threshold = 0.5;
  std::string mode = "ellipse";
  std::string size_mode = "regression";
  bool spotnet = false;
  std::uint64_t seed = 0;
  std::string out;

  // synth
  int n = 1;
  int width = 256;
  int height = 256;
  std::string out_dir;
  // render-heatmap / eval
  std::string labels;
  std::string input;
  std::string dets;
  std::string gts;
  std::string iou_kind = "ellipse";
  int top_k = kDefaultTopK;
  // augment
  std::string augment_mode;
  std::string root;
  std::vector<std::string> ids;
  double eps = 0.1;
  double tau = 0.5;
  // gradcheck
  std::string loss = "all";
  int trials = 100;
  // demo-fit
  int iterations = 2000;
  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
};

ClassSet parse_classes(const std::string& list) {
  std::vector<std::string> names;
  std::stringstream ss(list);
  for (std::string name; std::getline(ss, name, ',');) names.push_back(name);
  try {
    return ClassSet(names);
  } catch (const Error& e) {
    throw UsageError(std::string("bad --classes: ") + e.what());
  }
}

HeatmapMode parse_mode(const std::string& s) {
  if (s == "ellipse") return HeatmapMode::kEllipse;
  if (s == "circle") return HeatmapMode::kCircle;
  throw UsageError("unknown --mode: " + s);
}

SizeMode parse_size_mode(const std::string& s) {
  if (s == "regression") return SizeMode::kRegression;
  if (s == "piou") return SizeMode::kPiou;
  throw UsageError("unknown --size-mode: " + s);
}

void check_threshold(double t) {
  if (!(t > 0.0 && t <= 1.0)) throw UsageError("threshold out of range: " + std::to_string(t));
}

void check_stride(int stride) {
  if (stride <= 0) throw UsageError("--stride must be positive");
}

json ellipse_json(const Ellipse& e) {
  return {{"cx", e.cx}, {"cy", e.cy}, {"l1", e.l1}, {"l2", e.l2}, {"theta", e.theta}};
}

Ellipse ellipse_from(const json& j) {
  return {j.at("cx").get<double>(), j.at("cy").get<double>(), j.at("l1").get<double>(), j.at("l2").get<double>(),
          j.at("theta").get<double>()};
}

json grid_json(const Grid& g) {
  return {{"channels", g.channels()}, {"height", g.height()}, {"width", g.width()},
          {"data", std::vector<double>(g.values().begin(), g.values().end())}};
}

Grid grid_from(const json& j) {
  Grid g(j.at("channels").get<int>(), j.at("height").get<int>(), j.at("width").get<int>());
  const auto& data = j.at("data");
  if (data.size() != g.size()) throw Error("grid data size does not match its shape");
  for (std::size_t i = 0; i < g.size(); ++i) g.values()[i] = data[i].get<double>();
  return g;
}

json parse_json_file(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(path.string() + ": malformed JSON at byte " + std::to_string(e.byte));
  }
}

// Files of a directory in name order, or the path itself.
std::vector<fs::path> json_inputs(const fs::path& path) {
  if (!fs::exists(path)) throw Error("no such file or directory: " + path.string());
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json" && !is_temporary_label_file(entry.path())) {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(path);
  }
  return files;
}

fs::path image_path(const fs::path& root, const std::string& id) {
  for (const char* ext : {".png", ".jpg", ".jpeg"}) {
    const fs::path p = root / "images" / (id + ext);
    if (fs::exists(p)) return p;
  }
  throw Error("no image for id " + id + " under " + (root / "images").string());
}

void write_sample(const fs::path& out_dir, const std::string& id, const Sample& sample, const ClassSet& classes) {
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "labels");
  write_image(out_dir / "images" / (id + ".png"), sample.image);
  const LabelRecord record =
      to_record(id, sample.image.width, sample.image.height, sample.labels, classes, sample.boxes);
  write_file_atomically(out_dir / "labels" / (id + ".json"), serialize(record));
}

Sample load_sample(const fs::path& root, const std::string& id, const ClassSet& classes) {
  const LabelRecord record = load_labels(root / "labels" / (id + ".json"), classes).at(0);
  Sample s;
  s.image = read_image(image_path(root, id));
  if (s.image.width != record.width || s.image.height != record.height) {
    throw Error("label dimensions do not match the image for " + id);
  }
  s.labels = to_labels(record, classes);
  for (const LabeledObject& o : record.objects) s.boxes.push_back(o.box);
  return s;
}

std::vector<std::string> label_ids(const fs::path& root, const ClassSet& classes) {
  std::vector<std::string> ids;
  for (const LabelRecord& r : load_labels(root / "labels", classes)) ids.push_back(r.image_id);
  return ids;
}

// ---------------------------------------------------------------------------

json run_synth(const Options& o, json& config) {
  if (o.n < 0) throw UsageError("--n must be non-negative");
  if (o.out_dir.empty()) throw UsageError("--out-dir is required");
  check_stride(o.stride);
  const ClassSet classes = parse_classes(o.classes);
  config = {{"n", o.n}, {"width", o.width}, {"height", o.height}, {"stride", o.stride}, {"classes", classes.names()},
            {"out_dir", o.out_dir}};
  int objects = 0;
  json ids = json::array();
  for (int k = 0; k < o.n; ++k) {
    SynthConfig cfg;
    cfg.width = o.width;
    cfg.height = o.height;
    cfg.stride = o.stride;
    cfg.seed = o.seed * 1000003ULL + static_cast<std::uint64_t>(k);
    while (cfg.ranges.size() < static_cast<std::size_t>(classes.size())) cfg.ranges.push_back(cfg.ranges.back());
    char id[32];
    std::snprintf(id, sizeof id, "synth_%04d", k);
    const SynthScene scene = synth_scene(cfg, classes, id);
    write_sample(o.out_dir, id, scene.sample, classes);
    objects += static_cast<int>(scene.record.objects.size());
    ids.push_back(id);
  }
  std::cerr << "wrote " << o.n << " scenes with " << objects << " objects to " << o.out_dir << "\n";
  return {{"images", ids}, {"objects", objects}, {"out_dir", o.out_dir}};
}

json run_render(const Options& o, json& config) {
  if (o.labels.empty()) throw UsageError("--labels is required");
  if (o.out_dir.empty()) throw UsageError("--out-dir is required");
  check_stride(o.stride);
  const ClassSet classes = parse_classes(o.classes);
  const HeatmapMode mode = parse_mode(o.mode);
  config = {{"labels", o.labels}, {"stride", o.stride}, {"mode", o.mode}, {"classes", classes.names()},
            {"out_dir", o.out_dir}};
  fs::create_directories(o.out_dir);
  json files = json::array();
  for (const LabelRecord& record : load_labels(o.labels, classes)) {
    const std::vector<Label> labels = to_labels(record, classes);
    const Heatmap hm = render_heatmap(labels, record.width, record.height, o.stride, classes, mode);
    const RegressionMaps reg = render_regression_maps(labels, record.width, record.height, o.stride);
    const json doc = {{"image_id", record.image_id}, {"width", record.width},   {"height", record.height},
                      {"stride", o.stride},          {"mode", o.mode},          {"classes", classes.names()},
                      {"heatmap", grid_json(hm.values)}, {"regression", grid_json(reg.maps)}};
    const fs::path path = fs::path(o.out_dir) / (record.image_id + ".json");
    write_file_atomically(path, doc.dump());
    files.push_back(path.string());
  }
  std::cerr << "rendered " << files.size() << " target files into " << o.out_dir << "\n";
  return {{"files", files}};
}

json run_decode(const Options& o, json& config) {
  check_threshold(o.threshold);
  if (o.input.empty()) throw UsageError("--input is required");
  check_stride(o.stride);
  if (o.top_k <= 0) throw UsageError("--top-k must be positive");
  config = {{"input", o.input}, {"threshold", o.threshold}, {"top_k", o.top_k}, {"stride", o.stride}};
  json images = json::array();
  std::size_t total = 0;
  for (const fs::path& file : json_inputs(o.input)) {
    const json doc = parse_json_file(file);
    const std::vector<std::string> names = doc.at("classes").get<std::vector<std::string>>();
    Heatmap hm;
    hm.stride = doc.at("stride").get<int>();
    hm.values = grid_from(doc.at("heatmap"));
    RegressionMaps reg;
    reg.stride = hm.stride;
    reg.maps = grid_from(doc.at("regression"));
    json dets = json::array();
    for (const Detection& d : decode_detections(hm, reg, o.stride, o.threshold, o.top_k)) {
      dets.push_back({{"class", names.at(static_cast<std::size_t>(d.class_index))},
                      {"score", d.score},
                      {"ellipse", ellipse_json(d.ellipse)}});
    }
    total += dets.size();
    images.push_back({{"image_id", doc.at("image_id")}, {"detections", dets}});
  }
  std::cerr << "decoded " << total << " detections from " << images.size() << " images\n";
  return {{"images", images}};
}

json run_eval(const Options& o, json& config) {
  if (o.dets.empty() || o.gts.empty()) throw UsageError("--dets and --gts are required");
  if (!(o.iou_threshold > 0.0 && o.iou_threshold <= 1.0)) throw UsageError("--iou-threshold out of range");
  EvalConfig cfg;
  cfg.iou_threshold = o.iou_threshold;
  try {
    cfg.iou_kind = iou_kind_from_string(o.iou_kind);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const ClassSet classes = parse_classes(o.classes);
  config = {{"dets", o.dets}, {"gts", o.gts}, {"iou_threshold", o.iou_threshold}, {"iou_kind", o.iou_kind},
            {"classes", classes.names()}};

  std::map<std::string, ImageResult> by_id;
  for (const LabelRecord& r : load_labels(o.gts, classes)) by_id[r.image_id].truths = to_labels(r, classes);

  json doc = parse_json_file(o.dets);
  // Accept a full decode document or just its result.
  if (doc.contains("result")) doc = doc["result"];
  for (const json& image : doc.at("images")) {
    const std::string id = image.at("image_id").get<std::string>();
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw Error("detections for unknown image " + id);
    for (const json& d : image.at("detections")) {
      const int c = classes.index_of(d.at("class").get<std::string>());
      if (c < 0) throw Error("detection with unknown class in image " + id);
      it->second.detections.push_back({ellipse_from(d.at("ellipse")), c, d.at("score").get<double>()});
    }
  }
  std::vector<ImageResult> images;
  for (auto& [id, r] : by_id) images.push_back(std::move(r));
  const EvalReport report = evaluate(images, classes, cfg);
  std::cerr << "mAP " << report.map << " over " << report.classes.size() << " classes\n";
  return to_json(report);
}

json run_augment(const Options& o, json& config) {
  if (o.root.empty()) throw UsageError("--root is required");
  if (o.out_dir.empty()) throw UsageError("--out-dir is required");
  const ClassSet classes = parse_classes(o.classes);
  AugmentConfig cfg;
  cfg.rng_seed = o.seed;
  cfg.visibility_tau = o.tau;
  cfg.smoothing_eps = o.eps;
  check_threshold(o.threshold);
  cfg.decode_threshold = o.threshold;
  try {
    validate(cfg);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  std::vector<std::string> ids = o.ids.empty() ? label_ids(o.root, classes) : o.ids;
  config = {{"mode", o.augment_mode}, {"root", o.root}, {"out_dir", o.out_dir}, {"eps", o.eps}, {"tau", o.tau},
            {"threshold", o.threshold}, {"classes", classes.names()}};

  const auto provenance_json = [&](const std::vector<Provenance>& prov) {
    json list = json::array();
    for (const Provenance& p : prov) {
      list.push_back({{"source", ids.at(static_cast<std::size_t>(p.source))}, {"label_index", p.label_index}});
    }
    return list;
  };

  if (o.augment_mode == "mosaic") {
    if (ids.size() < 4) throw Error("mosaic needs four images");
    ids.resize(4);
    std::vector<Sample> samples;
    for (const std::string& id : ids) samples.push_back(load_sample(o.root, id, classes));
    const MosaicResult r = mosaic(samples, cfg);
    write_sample(o.out_dir, "mosaic", r.sample, classes);
    config["ids"] = ids;
    std::cerr << "mosaic kept " << r.sample.labels.size() << " objects, center (" << r.center_x << ", "
              << r.center_y << ")\n";
    return {{"image_id", "mosaic"},
            {"center", {r.center_x, r.center_y}},
            {"objects", r.sample.labels.size()},
            {"provenance", provenance_json(r.provenance)}};
  }
  if (o.augment_mode == "cutmix") {
    if (ids.size() < 2) throw Error("cutmix needs two images");
    ids.resize(2);
    const Sample base = load_sample(o.root, ids[0], classes);
    const Sample donor = load_sample(o.root, ids[1], classes);
    const AxisBox patch = random_patch(base.image.width, base.image.height, o.seed);
    const CutMixResult r = cutmix(base, donor, patch, cfg);
    write_sample(o.out_dir, "cutmix", r.sample, classes);
    config["ids"] = ids;
    std::cerr << "cutmix kept " << r.sample.labels.size() << " objects\n";
    return {{"image_id", "cutmix"},
            {"patch", {{"x", patch.x}, {"y", patch.y}, {"w", patch.w}, {"h", patch.h}}},
            {"objects", r.sample.labels.size()},
            {"visible", r.visible},
            {"provenance", provenance_json(r.provenance)}};
  }
  // smooth
  json written = json::array();
  for (const std::string& id : ids) {
    write_sample(o.out_dir, id, smooth_labels(load_sample(o.root, id, classes), o.eps), classes);
    written.push_back(id);
  }
  std::cerr << "smoothed " << written.size() << " records with eps " << o.eps << "\n";
  return {{"images", written}};
}

json run_gradcheck_cmd(const Options& o, json& config, bool& failed) {
  if (o.trials <= 0) throw UsageError("--trials must be positive");
  std::vector<GradLoss> losses;
  if (o.loss == "all") {
    losses = all_grad_losses();
  } else {
    try {
      losses.push_back(grad_loss_from_string(o.loss));
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  config = {{"loss", o.loss}, {"trials", o.trials}};
  json results = json::array();
  for (const GradLoss loss : losses) {
    const GradSuiteResult r = run_gradcheck(loss, o.trials, o.seed);
    failed |= !r.passed;
    results.push_back({{"loss", to_string(loss)},
                       {"trials", r.trials},
                       {"step", r.step},
                       {"max_rel_error", r.max_rel_error},
                       {"tolerance", r.tolerance},
                       {"checked", r.checked},
                       {"skipped", r.skipped},
                       {"passed", r.passed}});
    std::cerr << (r.passed ? "ok   " : "FAIL ") << to_string(loss) << ": max rel err " << r.max_rel_error
              << " (tolerance " << r.tolerance << ")\n";
  }
  return {{"losses", results}, {"passed", !failed}};
}

json run_demo(const Options& o, json& config) {
  if (o.iterations < 0) throw UsageError("--iterations must be non-negative");
  check_threshold(o.threshold);
  const ClassSet classes;
  const std::vector<Label> scene{{{40.3, 38.7, 36, 16, 0.4}, 0, 1.0},
                                 {{90.2, 70.9, 56, 22, 2.1}, 1, 1.0},
                                 {{50.6, 100.1, 40, 18, 1.3}, 2, 1.0}};
  DemoConfig cfg = default_demo_config(parse_size_mode(o.size_mode));
  cfg.iterations = o.iterations;
  cfg.weights.spotnet_mode = o.spotnet;
  cfg.seed = o.seed;
  cfg.threshold = o.threshold;
  config = {{"size_mode", o.size_mode}, {"spotnet", o.spotnet}, {"iterations", o.iterations},
            {"threshold", o.threshold}, {"width", 128}, {"height", 128}, {"stride", 4}};
  const DemoResult r = fit_predictions_demo(make_demo_target(scene, 128, 128, 4, classes), cfg);
  json dets = json::array();
  for (const Detection& d : r.detections) {
    dets.push_back({{"class", classes.name(d.class_index)}, {"score", d.score}, {"ellipse", ellipse_json(d.ellipse)}});
  }
  const double ratio = r.loss_trace.back() / r.loss_trace.front();
  std::cerr << "loss " << r.loss_trace.front() << " -> " << r.loss_trace.back() << " (ratio " << ratio << "), F1 "
            << r.f1 << "\n";
  return {{"initial_loss", r.loss_trace.front()}, {"final_loss", r.loss_trace.back()}, {"loss_ratio", ratio},
          {"precision", r.precision},           {"recall", r.recall},                 {"f1", r.f1},
          {"detections", dets}};
}

json manifest(const std::string& sub, const json& config, std::uint64_t seed, double seconds) {
  return {{"subcommand", sub}, {"config", config}, {"seed", seed}, {"version", kVersion},
          {"timing", {{"seconds", seconds}}}};
}

void emit(const Options& o, const json& doc) {
  const std::string text = doc.dump(2) + "\n";
  if (o.out.empty()) {
    std::cout << text << std::flush;
  } else {
    write_file_atomically(o.out, text);
  }
}

int run_serve(const Options& o) {
  if (o.root.empty()) throw UsageError("--root is required");
  if (o.port < 0 || o.port > 65535) throw UsageError("--port out of range");
  const auto start = std::chrono::steady_clock::now();

  // Block the stop signals before any thread starts so only sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  AnnotationService service(o.root, parse_classes(o.classes));
  const int port = service.bind(o.host, o.port);
  std::thread server([&] { service.run(); });
  service.wait_until_ready();
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const json config = {{"root", o.root}, {"host", o.host}, {"port", port}, {"classes", o.classes}};
  emit(o, {{"manifest", manifest("serve", config, o.seed, seconds)}, {"result", {{"port", port}}}});
  std::cerr << "serving " << o.root << " on http://" << o.host << ":" << port << "\n";

  int sig = 0;
  sigwait(&signals, &sig);
  service.stop();
  server.join();
  std::cerr << "stopped\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Bounding-ellipse vehicle detection toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  const auto add_out = [&](CLI::App* sub) { sub->add_option("--out", o.out, "Write the JSON result here"); };
  const auto add_classes = [&](CLI::App* sub) {
    sub->add_option("--classes", o.classes, "Comma-separated class names")->capture_default_str();
  };
  const auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", o.seed, "RNG seed")->capture_default_str(); };
  const auto add_stride = [&](CLI::App* sub) {
    sub->add_option("--stride", o.stride, "Output stride R")->capture_default_str();
  };

  CLI::App* synth = app.add_subcommand("synth", "Generate synthetic labelled scenes");
  synth->add_option("--n", o.n, "Number of scenes")->capture_default_str();
  synth->add_option("--width", o.width)->capture_default_str();
  synth->add_option("--height", o.height)->capture_default_str();
  synth->add_option("--out-dir", o.out_dir, "Writes images/ and labels/ here")->required();
  add_seed(synth);
  add_stride(synth);
  add_classes(synth);
  add_out(synth);

  CLI::App* render = app.add_subcommand("render-heatmap", "Encode labels into heatmap and regression targets");
  render->add_option("--labels", o.labels, "Label file or directory")->required();
  render->add_option("--out-dir", o.out_dir, "One target file per image")->required();
  render->add_option("--mode", o.mode, "ellipse|circle")->capture_default_str();
  add_stride(render);
  add_classes(render);
  add_seed(render);
  add_out(render);

  CLI::App* decode = app.add_subcommand("decode", "Decode target files into detections");
  decode->add_option("--input", o.input, "Target file or directory");
  decode->add_option("--threshold", o.threshold, "Peak threshold in (0, 1]")->capture_default_str();
  decode->add_option("--top-k", o.top_k)->capture_default_str();
  add_stride(decode);
  add_seed(decode);
  add_out(decode);

  CLI::App* eval = app.add_subcommand("eval", "Score detections against labels");
  eval->add_option("--dets", o.dets, "Decode output")->required();
  eval->add_option("--gts", o.gts, "Label file or directory")->required();
  eval->add_option("--iou-threshold", o.iou_threshold)->capture_default_str();
  eval->add_option("--iou-kind", o.iou_kind, "ellipse|obb|box")->capture_default_str();
  add_classes(eval);
  add_seed(eval);
  add_out(eval);

  CLI::App* augment = app.add_subcommand("augment", "Mosaic, CutMix or label smoothing");
  augment->add_option("mode", o.augment_mode, "mosaic|cutmix|smooth")
      ->required()
      ->check(CLI::IsMember({"mosaic", "cutmix", "smooth"}));
  augment->add_option("--root", o.root, "Directory with images/ and labels/")->required();
  augment->add_option("--out-dir", o.out_dir)->required();
  augment->add_option("--ids", o.ids, "Image ids to combine (default: all, in name order)")->delimiter(',');
  augment->add_option("--eps", o.eps, "Label smoothing epsilon")->capture_default_str();
  augment->add_option("--tau", o.tau, "Visibility threshold for keeping an object")->capture_default_str();
  augment->add_option("--threshold", o.threshold, "Decode threshold used for the CutMix peak floor")
      ->capture_default_str();
  add_seed(augment);
  add_classes(augment);
  add_out(augment);

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  gradcheck->add_option("--loss", o.loss, "all|focal|offset|size_ori|piou|seg")->capture_default_str();
  gradcheck->add_option("--trials", o.trials)->capture_default_str();
  add_seed(gradcheck);
  add_out(gradcheck);

  CLI::App* demo = app.add_subcommand("demo-fit", "Fit prediction tensors to a three-object scene");
  demo->add_option("--size-mode", o.size_mode, "regression|piou")->capture_default_str();
  demo->add_flag("--spotnet", o.spotnet, "Add the segmentation loss term");
  demo->add_option("--iterations", o.iterations)->capture_default_str();
  demo->add_option("--threshold", o.threshold)->capture_default_str();
  add_seed(demo);
  add_out(demo);

  CLI::App* serve = app.add_subcommand("serve", "Run the annotation HTTP service");
  serve->add_option("--root", o.root, "Directory with images/ (labels/ is created)")->required();
  serve->add_option("--port", o.port, "0 picks a free port")->capture_default_str();
  serve->add_option("--host", o.host)->capture_default_str();
  add_classes(serve);
  add_seed(serve);
  add_out(serve);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    if (sub == serve) return run_serve(o);
    const auto start = std::chrono::steady_clock::now();
    json config;
    json result;
    bool failed = false;
    if (sub == synth) result = run_synth(o, config);
    else if (sub == render) result = run_render(o, config);
    else if (sub == decode) result = run_decode(o, config);
    else if (sub == eval) result = run_eval(o, config);
    else if (sub == augment) result = run_augment(o, config);
    else if (sub == gradcheck) result = run_gradcheck_cmd(o, config, failed);
    else result = run_demo(o, config);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    emit(o, {{"manifest", manifest(name, config, o.seed, seconds)}, {"result", result}});
    return failed ? 1 : 0;
  } catch (const UsageError& e) {
    std::cerr << name << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << name << ": error: " << e.what() << "\n";
    return 1;
  }
}
