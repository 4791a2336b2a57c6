#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ellipsedet/augment.hpp"
#include "ellipsedet/geometry.hpp"
#include "ellipsedet/heatmap.hpp"

namespace ellipsedet {

inline constexpr int kLabelSchemaVersion = 1;

struct LabeledObject {
  std::string class_name;
  Ellipse ellipse;
  std::optional<AxisBox> box;
  bool box_drawn = false;  // user-drawn box; exempt from the containment check
  double peak = 1.0;

  friend bool operator==(const LabeledObject&, const LabeledObject&) = default;
};

struct LabelRecord {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<LabeledObject> objects;

  friend bool operator==(const LabelRecord&, const LabelRecord&) = default;
};

// Throws ValidationError naming the object index on the first violation.
void validate(const LabelRecord& record, const ClassSet& classes);

nlohmann::json to_json(const LabelRecord& record);
// Structural decode plus validation.
LabelRecord record_from_json(const nlohmann::json& doc, const ClassSet& classes);
// Malformed text raises Error carrying the byte offset.
LabelRecord parse_label_record(std::string_view text, const ClassSet& classes);
std::string serialize(const LabelRecord& record);

// One `<image_id>.json` per record inside `dir`, each written atomically.
void save_labels(const std::filesystem::path& dir, std::span<const LabelRecord> records);
// `path` may be a single record file, a JSON array of records, or a directory
// of record files (loaded in filename order).
std::vector<LabelRecord> load_labels(const std::filesystem::path& path, const ClassSet& classes);

// Write to a sibling temporary file, fsync, then rename over `path`.
void write_file_atomically(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);
bool is_temporary_label_file(const std::filesystem::path& path);

std::vector<Label> to_labels(const LabelRecord& record, const ClassSet& classes);
LabelRecord to_record(const std::string& image_id, int width, int height, std::span<const Label> labels,
                      const ClassSet& classes, std::span<const std::optional<AxisBox>> boxes = {});

// ---------------------------------------------------------------------------
// Synthetic scenes.

struct AxisRange {
  double l1_min = 24.0;
  double l1_max = 40.0;
  double ratio_min = 0.5;  // l2 / l1
  double ratio_max = 0.65;
};

struct SynthConfig {
  int width = 256;
  int height = 256;
  int min_objects = 1;
  int max_objects = 5;
  // Aspect ratios stay >= 0.45: thinner rotated Gaussians can leave a second
  // 3x3 local maximum on their ridge, which decoding would report.
  std::vector<AxisRange> ranges = {{24.0, 40.0, 0.5, 0.65}, {48.0, 72.0, 0.45, 0.55}, {36.0, 56.0, 0.45, 0.6}};
  std::uint64_t seed = 0;
  int min_separation_cells = 3;  // Chebyshev distance between center cells
  int stride = 4;
};

struct SynthScene {
  Sample sample;
  LabelRecord record;
};

// Flat-noise background with each object painted as a filled ellipse in a
// per-class color. Throws Error("placement failed") after 1000 rejected draws.
SynthScene synth_scene(const SynthConfig& cfg, const ClassSet& classes, const std::string& image_id = "synth");

std::array<std::uint8_t, 3> class_color(int class_index);

}  // namespace ellipsedet
