#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "ellipsedet/heatmap.hpp"

namespace ellipsedet {

// Local HTTP back end for the annotation UI.
//
//   GET /api/images         [{image_id, width, height}]
//   GET /api/images/{id}    image bytes (PNG or JPEG)
//   GET /api/labels/{id}    stored record, or an empty one sized to the image
//   PUT /api/labels/{id}    validate, then persist atomically (422 on violation)
//   GET /api/classes        class names
//
// Images are read from <root>/images, labels live in <root>/labels.
class AnnotationService {
 public:
  AnnotationService(std::filesystem::path root, ClassSet classes);
  ~AnnotationService();
  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  // Binds to `host:port`; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  // Serves until stop() is called.
  void run();
  void stop();
  void wait_until_ready();

  // Removes leftover temporary files from interrupted writes.
  int clean_stale_temporaries();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ellipsedet
