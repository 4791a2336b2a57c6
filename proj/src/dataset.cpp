#include "ellipsedet/dataset.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "ellipsedet/error.hpp"

namespace ellipsedet {
namespace {

using nlohmann::json;

constexpr double kContainmentTolerance = 1e-6;
constexpr const char* kTempMarker = ".tmp-";

double number_field(const json& obj, const char* key, std::optional<std::size_t> index) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_number()) {
    throw ValidationError(std::string("missing or non-numeric field '") + key + "'", index);
  }
  return it->get<double>();
}

const json& object_field(const json& obj, const char* key, std::optional<std::size_t> index) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_object()) {
    throw ValidationError(std::string("missing or non-object field '") + key + "'", index);
  }
  return *it;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

}  // namespace

void validate(const LabelRecord& record, const ClassSet& classes) {
  if (record.image_id.empty()) throw ValidationError("image_id must be non-empty");
  if (record.width < 0 || record.height < 0) throw ValidationError("image dimensions must be non-negative");
  for (std::size_t k = 0; k < record.objects.size(); ++k) {
    const LabeledObject& o = record.objects[k];
    if (classes.index_of(o.class_name) < 0) throw ValidationError("unknown class '" + o.class_name + "'", k);
    try {
      validate(o.ellipse);
    } catch (const ValidationError& e) {
      throw ValidationError(e.reason(), k);
    }
    if (!(o.ellipse.theta >= 0.0 && o.ellipse.theta < std::numbers::pi)) {
      throw ValidationError("theta outside [0, pi)", k);
    }
    if (record.width > 0 && record.height > 0 &&
        !(o.ellipse.cx >= 0.0 && o.ellipse.cx < record.width && o.ellipse.cy >= 0.0 &&
          o.ellipse.cy < record.height)) {
      throw ValidationError("ellipse center outside image", k);
    }
    if (!(o.peak > 0.0 && o.peak <= 1.0)) throw ValidationError("peak must lie in (0, 1]", k);
    if (o.box) {
      const AxisBox& b = *o.box;
      if (!std::isfinite(b.x) || !std::isfinite(b.y) || !(b.w >= 0.0) || !(b.h >= 0.0)) {
        throw ValidationError("invalid box", k);
      }
      if (!o.box_drawn) {
        const AxisBox tight = ellipse_aabb(o.ellipse);
        const double tol = kContainmentTolerance;
        if (b.x > tight.x + tol || b.y > tight.y + tol || b.right() < tight.right() - tol ||
            b.bottom() < tight.bottom() - tol) {
          throw ValidationError("box does not contain the ellipse", k);
        }
      }
    } else if (o.box_drawn) {
      throw ValidationError("box_drawn set without a box", k);
    }
  }
}

json to_json(const LabelRecord& record) {
  json objects = json::array();
  for (const LabeledObject& o : record.objects) {
    json obj = {{"class", o.class_name},
                {"ellipse",
                 {{"cx", o.ellipse.cx},
                  {"cy", o.ellipse.cy},
                  {"l1", o.ellipse.l1},
                  {"l2", o.ellipse.l2},
                  {"theta", o.ellipse.theta}}}};
    if (o.box) obj["box"] = {{"x", o.box->x}, {"y", o.box->y}, {"w", o.box->w}, {"h", o.box->h}};
    if (o.box_drawn) obj["box_drawn"] = true;
    if (o.peak != 1.0) obj["peak"] = o.peak;
    objects.push_back(std::move(obj));
  }
  return {{"v", kLabelSchemaVersion},
          {"image_id", record.image_id},
          {"width", record.width},
          {"height", record.height},
          {"objects", objects}};
}

LabelRecord record_from_json(const json& doc, const ClassSet& classes) {
  if (!doc.is_object()) throw ValidationError("label document must be a JSON object");
  if (const auto v = doc.find("v"); v != doc.end() && (!v->is_number_integer() || v->get<int>() != kLabelSchemaVersion)) {
    throw ValidationError("unsupported schema version");
  }
  LabelRecord record;
  const auto id = doc.find("image_id");
  if (id == doc.end() || !id->is_string()) throw ValidationError("missing field 'image_id'");
  record.image_id = id->get<std::string>();
  for (const char* key : {"width", "height"}) {
    const auto it = doc.find(key);
    if (it == doc.end() || !it->is_number_integer()) {
      throw ValidationError(std::string("missing or non-integer field '") + key + "'");
    }
  }
  record.width = doc.at("width").get<int>();
  record.height = doc.at("height").get<int>();
  const auto objects = doc.find("objects");
  if (objects == doc.end() || !objects->is_array()) throw ValidationError("missing field 'objects'");

  for (std::size_t k = 0; k < objects->size(); ++k) {
    const json& o = (*objects)[k];
    if (!o.is_object()) throw ValidationError("object must be a JSON object", k);
    LabeledObject obj;
    const auto cls = o.find("class");
    if (cls == o.end() || !cls->is_string()) throw ValidationError("missing field 'class'", k);
    obj.class_name = cls->get<std::string>();
    const json& e = object_field(o, "ellipse", k);
    obj.ellipse = {number_field(e, "cx", k), number_field(e, "cy", k), number_field(e, "l1", k),
                   number_field(e, "l2", k), number_field(e, "theta", k)};
    if (const auto b = o.find("box"); b != o.end() && !b->is_null()) {
      if (!b->is_object()) throw ValidationError("box must be an object", k);
      obj.box = AxisBox{number_field(*b, "x", k), number_field(*b, "y", k), number_field(*b, "w", k),
                        number_field(*b, "h", k)};
    }
    if (const auto d = o.find("box_drawn"); d != o.end()) {
      if (!d->is_boolean()) throw ValidationError("box_drawn must be boolean", k);
      obj.box_drawn = d->get<bool>();
    }
    if (o.contains("peak")) obj.peak = number_field(o, "peak", k);
    record.objects.push_back(std::move(obj));
  }
  validate(record, classes);
  return record;
}

LabelRecord parse_label_record(std::string_view text, const ClassSet& classes) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error("malformed label document at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  return record_from_json(doc, classes);
}

std::string serialize(const LabelRecord& record) { return to_json(record).dump(2) + "\n"; }

bool is_temporary_label_file(const std::filesystem::path& path) {
  return path.filename().string().find(kTempMarker) != std::string::npos;
}

void write_file_atomically(const std::filesystem::path& path, std::string_view content) {
  static std::atomic<unsigned long> counter{0};
  const std::filesystem::path tmp =
      path.string() + kTempMarker + std::to_string(::getpid()) + "-" + std::to_string(counter++);
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw Error("cannot create " + tmp.string() + ": " + std::strerror(errno));
  std::size_t written = 0;
  while (written < content.size()) {
    const ssize_t n = ::write(fd, content.data() + written, content.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      std::filesystem::remove(tmp);
      throw Error("write failed for " + tmp.string() + ": " + std::strerror(err));
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0 || ::close(fd) != 0) {
    std::filesystem::remove(tmp);
    throw Error("cannot flush " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("cannot rename into " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_labels(const std::filesystem::path& dir, std::span<const LabelRecord> records) {
  std::filesystem::create_directories(dir);
  for (const LabelRecord& r : records) write_file_atomically(dir / (r.image_id + ".json"), serialize(r));
}

std::vector<LabelRecord> load_labels(const std::filesystem::path& path, const ClassSet& classes) {
  std::vector<LabelRecord> out;
  if (std::filesystem::is_directory(path)) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(path)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json" && !is_temporary_label_file(entry.path())) {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) out.push_back(parse_label_record(read_file(f), classes));
    return out;
  }
  const std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error("malformed label document at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  if (doc.is_array()) {
    for (const json& d : doc) out.push_back(record_from_json(d, classes));
  } else {
    out.push_back(record_from_json(doc, classes));
  }
  return out;
}

std::vector<Label> to_labels(const LabelRecord& record, const ClassSet& classes) {
  std::vector<Label> out;
  out.reserve(record.objects.size());
  for (std::size_t k = 0; k < record.objects.size(); ++k) {
    const LabeledObject& o = record.objects[k];
    const int c = classes.index_of(o.class_name);
    if (c < 0) throw ValidationError("unknown class '" + o.class_name + "'", k);
    out.push_back({o.ellipse, c, o.peak});
  }
  return out;
}

LabelRecord to_record(const std::string& image_id, int width, int height, std::span<const Label> labels,
                      const ClassSet& classes, std::span<const std::optional<AxisBox>> boxes) {
  LabelRecord r{image_id, width, height, {}};
  for (std::size_t k = 0; k < labels.size(); ++k) {
    LabeledObject o;
    o.class_name = classes.name(labels[k].class_index);
    o.ellipse = labels[k].ellipse;
    o.ellipse.theta = canonicalize_angle(o.ellipse.theta);
    o.peak = labels[k].peak;
    o.box = k < boxes.size() && boxes[k] ? boxes[k] : std::optional<AxisBox>(ellipse_aabb(o.ellipse));
    r.objects.push_back(std::move(o));
  }
  return r;
}

std::array<std::uint8_t, 3> class_color(int class_index) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 6> kPalette = {{
      {220, 50, 47}, {38, 139, 210}, {133, 153, 0}, {211, 54, 130}, {181, 137, 0}, {42, 161, 152}}};
  return kPalette[static_cast<std::size_t>(class_index) % kPalette.size()];
}

SynthScene synth_scene(const SynthConfig& cfg, const ClassSet& classes, const std::string& image_id) {
  if (cfg.width <= 0 || cfg.height <= 0 || cfg.stride <= 0) throw Error("invalid synth dimensions");
  if (cfg.min_objects < 0 || cfg.max_objects < cfg.min_objects) throw Error("invalid object count range");
  if (cfg.min_separation_cells < 0) throw Error("separation must be non-negative");
  if (cfg.ranges.size() < static_cast<std::size_t>(classes.size())) throw Error("axis range missing for a class");
  for (const AxisRange& r : cfg.ranges) {
    if (!(r.l1_min > 0.0 && r.l1_max >= r.l1_min && r.ratio_min > 0.0 && r.ratio_max >= r.ratio_min &&
          r.ratio_max <= 1.0)) {
      throw Error("invalid axis range");
    }
  }

  std::mt19937_64 rng(cfg.seed);
  SynthScene scene;
  Image& image = scene.sample.image;
  image = Image(cfg.width, cfg.height);
  for (std::uint8_t& v : image.pixels) v = static_cast<std::uint8_t>(84 + (rng() % 25));

  const int count = cfg.min_objects + static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.max_objects - cfg.min_objects + 1));
  std::vector<std::array<int, 2>> cells;
  for (int k = 0; k < count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      Label label;
      label.class_index = static_cast<int>(rng() % static_cast<std::uint64_t>(classes.size()));
      const AxisRange& r = cfg.ranges[static_cast<std::size_t>(label.class_index)];
      Ellipse& e = label.ellipse;
      e.l1 = uniform(rng, r.l1_min, r.l1_max);
      e.l2 = e.l1 * uniform(rng, r.ratio_min, r.ratio_max);
      e.theta = uniform(rng, 0.0, std::numbers::pi);
      // Place the whole ellipse inside the image.
      const AxisBox extent = ellipse_aabb(e);
      const double hx = extent.w / 2.0;
      const double hy = extent.h / 2.0;
      if (2.0 * hx >= cfg.width || 2.0 * hy >= cfg.height) continue;
      e.cx = uniform(rng, hx, cfg.width - hx);
      e.cy = uniform(rng, hy, cfg.height - hy);

      const std::array<int, 2> cell = {static_cast<int>(std::floor(e.cx / cfg.stride)),
                                       static_cast<int>(std::floor(e.cy / cfg.stride))};
      const bool clear = std::all_of(cells.begin(), cells.end(), [&](const auto& other) {
        const int sep = std::max(std::abs(other[0] - cell[0]), std::abs(other[1] - cell[1]));
        return sep >= std::max(1, cfg.min_separation_cells);
      });
      if (!clear) continue;
      cells.push_back(cell);
      scene.sample.labels.push_back(label);
      placed = true;
    }
    if (!placed) throw Error("placement failed");
  }

  for (const Label& label : scene.sample.labels) {
    const AxisBox box = ellipse_aabb(label.ellipse);
    scene.sample.boxes.emplace_back(box);
    const auto color = class_color(label.class_index);
    const int x0 = std::max(0, static_cast<int>(std::floor(box.x)));
    const int y0 = std::max(0, static_cast<int>(std::floor(box.y)));
    const int x1 = std::min(cfg.width - 1, static_cast<int>(std::ceil(box.right())));
    const int y1 = std::min(cfg.height - 1, static_cast<int>(std::ceil(box.bottom())));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (point_in_ellipse({x + 0.5, y + 0.5}, label.ellipse)) image.set(x, y, color);
      }
    }
  }
  scene.record = to_record(image_id, cfg.width, cfg.height, scene.sample.labels, classes, scene.sample.boxes);
  return scene;
}

}  // namespace ellipsedet
