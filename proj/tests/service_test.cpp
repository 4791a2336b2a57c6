#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include <unistd.h>

#include <json.hpp>

#include "ellipsedet/dataset.hpp"
#include "ellipsedet/image.hpp"
#include "ellipsedet/service.hpp"

// After the toolkit headers: httplib pulls in system macros that collide with Eigen.
#include <httplib.h>

using namespace ellipsedet;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Service over a scratch root holding two images.
struct Fixture {
  fs::path root;
  std::unique_ptr<AnnotationService> service;
  std::thread thread;
  int port = 0;

  Fixture() {
    static int counter = 0;
    root = fs::temp_directory_path() / ("ellipsedet-service-" + std::to_string(::getpid()) + "-" +
                                        std::to_string(counter++));
    fs::remove_all(root);
    fs::create_directories(root / "images");
    fs::create_directories(root / "labels");
    write_image(root / "images" / "street.png", Image(64, 48));
    write_image(root / "images" / "lot.jpg", Image(32, 32));
  }

  void start() {
    service = std::make_unique<AnnotationService>(root, ClassSet{});
    port = service->bind("127.0.0.1", 0);
    thread = std::thread([this] { service->run(); });
    service->wait_until_ready();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_connection_timeout(5);
    return c;
  }

  ~Fixture() {
    if (service) service->stop();
    if (thread.joinable()) thread.join();
    fs::remove_all(root);
  }
};

json street_record() {
  return json::parse(R"({
    "v": 1, "image_id": "street", "width": 64, "height": 48,
    "objects": [
      {"class": "car", "ellipse": {"cx": 20.125, "cy": 30.5, "l1": 18.3, "l2": 7.7, "theta": 3.141592652},
       "box": {"x": 10.0, "y": 20.0, "w": 21.0, "h": 21.0}},
      {"class": "bus", "ellipse": {"cx": 45, "cy": 20, "l1": 30, "l2": 12, "theta": 0.3}, "peak": 0.85}
    ]
  })");
}

}  // namespace

TEST_CASE("service lists images and classes") {
  Fixture f;
  f.start();
  auto c = f.client();
  const auto images = c.Get("/api/images");
  REQUIRE(images);
  CHECK(images->status == 200);
  const json list = json::parse(images->body);
  REQUIRE(list.size() == 2);
  CHECK(list[0]["image_id"] == "lot");
  CHECK(list[1] == json({{"image_id", "street"}, {"width", 64}, {"height", 48}}));

  const auto classes = c.Get("/api/classes");
  REQUIRE(classes);
  CHECK(json::parse(classes->body) == json({"car", "bus", "truck"}));

  const auto bytes = c.Get("/api/images/street");
  REQUIRE(bytes);
  CHECK(bytes->status == 200);
  CHECK(bytes->get_header_value("Content-Type") == "image/png");
  CHECK(bytes->body == read_file(f.root / "images" / "street.png"));
}

TEST_CASE("service stores and returns records exactly") {
  Fixture f;
  f.start();
  auto c = f.client();

  const auto empty = c.Get("/api/labels/street");
  REQUIRE(empty);
  CHECK(empty->status == 200);
  const json blank = json::parse(empty->body);
  CHECK(blank["objects"].empty());
  CHECK(blank["width"] == 64);
  CHECK(blank["height"] == 48);

  const json record = street_record();
  const auto put = c.Put("/api/labels/street", record.dump(), "application/json");
  REQUIRE(put);
  CHECK(put->status == 200);

  const auto got = c.Get("/api/labels/street");
  REQUIRE(got);
  const ClassSet cs;
  const LabelRecord expected = record_from_json(record, cs);
  CHECK(parse_label_record(got->body, cs) == expected);
  CHECK(json::parse(got->body)["objects"][0]["ellipse"]["theta"].get<double>() == 3.141592652);
  CHECK(fs::exists(f.root / "labels" / "street.json"));
}

TEST_CASE("service rejects invalid records with the object index") {
  Fixture f;
  f.start();
  auto c = f.client();

  json bad = street_record();
  bad["objects"][1]["ellipse"]["l2"] = 40;
  const auto r = c.Put("/api/labels/street", bad.dump(), "application/json");
  REQUIRE(r);
  CHECK(r->status == 422);
  const json body = json::parse(r->body);
  CHECK(body["object_index"] == 1);
  CHECK(body["error"].get<std::string>().find("axis order") != std::string::npos);
  CHECK_FALSE(fs::exists(f.root / "labels" / "street.json"));

  bad = street_record();
  bad["objects"][0]["class"] = "tram";
  const auto cls = c.Put("/api/labels/street", bad.dump(), "application/json");
  REQUIRE(cls);
  CHECK(cls->status == 422);
  CHECK(json::parse(cls->body)["object_index"] == 0);

  bad = street_record();
  bad["image_id"] = "lot";
  const auto mismatch = c.Put("/api/labels/street", bad.dump(), "application/json");
  REQUIRE(mismatch);
  CHECK(mismatch->status == 422);
  CHECK(json::parse(mismatch->body)["object_index"].is_null());

  const auto garbage = c.Put("/api/labels/street", "{nope", "application/json");
  REQUIRE(garbage);
  CHECK(garbage->status == 400);
}

TEST_CASE("service answers 404 for unknown images") {
  Fixture f;
  f.start();
  auto c = f.client();
  for (const char* path : {"/api/labels/nothing", "/api/images/nothing", "/api/labels/..%2Fx"}) {
    const auto r = c.Get(path);
    REQUIRE(r);
    CHECK(r->status == 404);
  }
  const auto put = c.Put("/api/labels/nothing", street_record().dump(), "application/json");
  REQUIRE(put);
  CHECK(put->status == 404);
}

TEST_CASE("service picks up images added after start") {
  Fixture f;
  f.start();
  write_image(f.root / "images" / "late.png", Image(10, 12));
  auto c = f.client();
  const auto r = c.Get("/api/labels/late");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(json::parse(r->body)["height"] == 12);
}

TEST_CASE("an interrupted write leaves the previous record intact") {
  Fixture f;
  const ClassSet cs;
  const LabelRecord old = record_from_json(street_record(), cs);
  write_file_atomically(f.root / "labels" / "street.json", serialize(old));
  // A writer that died between creating its temporary and renaming it.
  const fs::path stale = f.root / "labels" / "street.json.tmp-99999-0";
  std::ofstream(stale) << "{\"v\": 1, \"image_id\": \"street\", \"objec";

  f.start();
  CHECK_FALSE(fs::exists(stale));
  auto c = f.client();
  const auto r = c.Get("/api/labels/street");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(parse_label_record(r->body, cs) == old);

  std::ofstream(stale) << "partial";
  CHECK(f.service->clean_stale_temporaries() == 1);
  CHECK(load_labels(f.root / "labels", cs) == std::vector<LabelRecord>{old});
}

TEST_CASE("service requires an images directory") {
  const fs::path root = fs::temp_directory_path() / ("ellipsedet-service-empty-" + std::to_string(::getpid()));
  fs::create_directories(root);
  CHECK_THROWS_AS(AnnotationService(root, ClassSet{}), Error);
  fs::remove_all(root);
}
