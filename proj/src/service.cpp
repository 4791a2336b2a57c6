#include "ellipsedet/service.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <mutex>
#include <regex>
#include <unordered_map>

#include <httplib.h>

#include <json.hpp>

#include "ellipsedet/dataset.hpp"
#include "ellipsedet/error.hpp"
#include "ellipsedet/image.hpp"

namespace ellipsedet {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct ImageEntry {
  fs::path path;
  std::string mime;
  int width = 0;
  int height = 0;
  fs::file_time_type mtime;
};

using Catalog = std::map<std::string, ImageEntry>;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool valid_id(const std::string& id) {
  static const std::regex pattern("[A-Za-z0-9_-][A-Za-z0-9._-]*");
  return std::regex_match(id, pattern);
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message,
                std::optional<std::size_t> object_index = std::nullopt) {
  json body = {{"error", message}};
  body["object_index"] = object_index ? json(*object_index) : json(nullptr);
  send_json(res, status, body);
}

}  // namespace

struct AnnotationService::Impl {
  fs::path root;
  fs::path images_dir;
  fs::path labels_dir;
  ClassSet classes;
  httplib::Server server;

  std::mutex catalog_mutex;
  std::shared_ptr<const Catalog> catalog = std::make_shared<Catalog>();

  std::mutex locks_mutex;
  std::unordered_map<std::string, std::unique_ptr<std::mutex>> write_locks;

  std::shared_ptr<const Catalog> snapshot() {
    std::lock_guard lock(catalog_mutex);
    return catalog;
  }

  // Rebuilds the image catalog, reusing probed sizes of unchanged files.
  std::shared_ptr<const Catalog> rescan() {
    const auto previous = snapshot();
    auto next = std::make_shared<Catalog>();
    if (fs::is_directory(images_dir)) {
      for (const auto& entry : fs::directory_iterator(images_dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = lower(entry.path().extension().string());
        std::string mime;
        if (ext == ".png") mime = "image/png";
        else if (ext == ".jpg" || ext == ".jpeg") mime = "image/jpeg";
        else continue;
        const std::string id = entry.path().stem().string();
        if (!valid_id(id) || next->count(id)) continue;

        ImageEntry e{entry.path(), mime, 0, 0, entry.last_write_time()};
        const auto old = previous->find(id);
        if (old != previous->end() && old->second.path == e.path && old->second.mtime == e.mtime) {
          e.width = old->second.width;
          e.height = old->second.height;
        } else {
          try {
            const ImageSize size = probe_image_size(e.path);
            e.width = size.width;
            e.height = size.height;
          } catch (const Error&) {
            continue;
          }
        }
        next->emplace(id, std::move(e));
      }
    }
    std::lock_guard lock(catalog_mutex);
    catalog = next;
    return catalog;
  }

  std::mutex& write_lock(const std::string& id) {
    std::lock_guard lock(locks_mutex);
    auto& slot = write_locks[id];
    if (!slot) slot = std::make_unique<std::mutex>();
    return *slot;
  }

  fs::path label_path(const std::string& id) const { return labels_dir / (id + ".json"); }

  // Catalog entry for `id`, rescanning once if the image is new.
  std::optional<ImageEntry> find_image(const std::string& id) {
    if (!valid_id(id)) return std::nullopt;
    auto snap = snapshot();
    auto it = snap->find(id);
    if (it == snap->end()) {
      snap = rescan();
      it = snap->find(id);
      if (it == snap->end()) return std::nullopt;
    }
    return it->second;
  }

  void routes() {
    server.Get("/api/classes", [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, classes.names());
    });

    server.Get("/api/images", [this](const httplib::Request&, httplib::Response& res) {
      json list = json::array();
      for (const auto& [id, e] : *rescan()) {
        list.push_back({{"image_id", id}, {"width", e.width}, {"height", e.height}});
      }
      send_json(res, 200, list);
    });

    server.Get(R"(/api/images/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const auto image = find_image(req.matches[1]);
      if (!image) return send_error(res, 404, "unknown image id");
      try {
        res.set_content(read_file(image->path), image->mime);
      } catch (const Error& e) {
        send_error(res, 404, e.what());
      }
    });

    server.Get(R"(/api/labels/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const auto image = find_image(id);
      if (!image) return send_error(res, 404, "unknown image id");
      const fs::path path = label_path(id);
      if (!fs::exists(path)) {
        return send_json(res, 200, to_json(LabelRecord{id, image->width, image->height, {}}));
      }
      try {
        send_json(res, 200, to_json(parse_label_record(read_file(path), classes)));
      } catch (const ValidationError& e) {
        send_error(res, 500, "stored record is invalid: " + std::string(e.what()), e.object_index());
      } catch (const Error& e) {
        send_error(res, 500, e.what());
      }
    });

    server.Put(R"(/api/labels/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const auto image = find_image(id);
      if (!image) return send_error(res, 404, "unknown image id");
      LabelRecord record;
      try {
        record = parse_label_record(req.body, classes);
      } catch (const ValidationError& e) {
        return send_error(res, 422, e.reason(), e.object_index());
      } catch (const Error& e) {
        return send_error(res, 400, e.what());
      }
      if (record.image_id != id) return send_error(res, 422, "image_id does not match the URL");
      if (record.width != image->width || record.height != image->height) {
        return send_error(res, 422, "record dimensions do not match the image");
      }
      try {
        std::lock_guard lock(write_lock(id));
        fs::create_directories(labels_dir);
        write_file_atomically(label_path(id), serialize(record));
      } catch (const Error& e) {
        return send_error(res, 500, e.what());
      } catch (const fs::filesystem_error& e) {
        return send_error(res, 500, e.what());
      }
      send_json(res, 200, to_json(record));
    });
  }
};

AnnotationService::AnnotationService(fs::path root, ClassSet classes) : impl_(std::make_unique<Impl>()) {
  impl_->root = std::move(root);
  impl_->images_dir = impl_->root / "images";
  impl_->labels_dir = impl_->root / "labels";
  impl_->classes = std::move(classes);
  if (!fs::is_directory(impl_->images_dir)) throw Error("missing images directory under " + impl_->root.string());
  fs::create_directories(impl_->labels_dir);
  clean_stale_temporaries();
  impl_->rescan();
  impl_->routes();
}

AnnotationService::~AnnotationService() { stop(); }

int AnnotationService::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error("cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void AnnotationService::run() { impl_->server.listen_after_bind(); }

void AnnotationService::stop() {
  if (impl_) impl_->server.stop();
}

void AnnotationService::wait_until_ready() { impl_->server.wait_until_ready(); }

int AnnotationService::clean_stale_temporaries() {
  int removed = 0;
  for (const auto& entry : fs::directory_iterator(impl_->labels_dir)) {
    if (entry.is_regular_file() && is_temporary_label_file(entry.path())) {
      fs::remove(entry.path());
      ++removed;
    }
  }
  return removed;
}

}  // namespace ellipsedet
