#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "ellipsedet/image.hpp"

namespace ellipsedet {

Image read_image(const std::filesystem::path& path) {
  const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error("cannot decode image: " + path.string());
  Image out(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) out.set(x, y, {row[x][2], row[x][1], row[x][0]});
  }
  return out;
}

void write_image(const std::filesystem::path& path, const Image& image) {
  cv::Mat bgr(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width; ++x) {
      const std::uint8_t* p = image.at(x, y);
      row[x] = cv::Vec3b(p[2], p[1], p[0]);
    }
  }
  if (!cv::imwrite(path.string(), bgr)) throw Error("cannot write image: " + path.string());
}

ImageSize probe_image_size(const std::filesystem::path& path) {
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw Error("cannot decode image: " + path.string());
  return {m.cols, m.rows};
}

}  // namespace ellipsedet
