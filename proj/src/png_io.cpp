#include "contrail/png_io.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "contrail/errors.hpp"

namespace contrail {

Image read_unit_gray(const std::filesystem::path& path) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) {
    throw DataError("cannot read image file: " + path.string());
  }
  if (raw.channels() > 1) {
    cv::Mat gray;
    cv::cvtColor(raw, gray, raw.channels() == 4 ? cv::COLOR_BGRA2GRAY
                                                : cv::COLOR_BGR2GRAY);
    raw = gray;
  }

  double scale;
  switch (raw.depth()) {
    case CV_8U:  scale = 1.0 / 255.0; break;
    case CV_16U: scale = 1.0 / 65535.0; break;
    case CV_32F: scale = 1.0; break;
    default:
      throw DataError("unsupported PNG bit depth in " + path.string());
  }

  cv::Mat f;
  raw.convertTo(f, CV_32F, scale);

  Image out(f.rows, f.cols);
  for (int y = 0; y < f.rows; ++y) {
    const float* row = f.ptr<float>(y);
    for (int x = 0; x < f.cols; ++x) {
      out.at(y, x) = std::clamp(row[x], 0.0f, 1.0f);
    }
  }
  return out;
}

void write_unit_gray16(const std::filesystem::path& path, const Image& img) {
  cv::Mat m(img.height, img.width, CV_16UC1);
  for (int y = 0; y < img.height; ++y) {
    uint16_t* row = m.ptr<uint16_t>(y);
    for (int x = 0; x < img.width; ++x) {
      float v = std::clamp(img.at(y, x), 0.0f, 1.0f);
      row[x] = static_cast<uint16_t>(std::lround(v * 65535.0f));
    }
  }
  if (!cv::imwrite(path.string(), m)) {
    throw DataError("cannot write PNG: " + path.string());
  }
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  cv::Mat m(mask.height, mask.width, CV_8UC1);
  for (int y = 0; y < mask.height; ++y) {
    uint8_t* row = m.ptr<uint8_t>(y);
    for (int x = 0; x < mask.width; ++x) {
      row[x] = mask.at(y, x) ? 255 : 0;
    }
  }
  if (!cv::imwrite(path.string(), m)) {
    throw DataError("cannot write PNG: " + path.string());
  }
}

void write_overlay_png(const std::filesystem::path& path, const Image& img,
                       const Mask& mask) {
  if (img.height != mask.height || img.width != mask.width) {
    throw DataError("overlay image/mask shape mismatch");
  }
  cv::Mat m(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    cv::Vec3b* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width; ++x) {
      auto g = static_cast<uint8_t>(
          std::lround(std::clamp(img.at(y, x), 0.0f, 1.0f) * 255.0f));
      row[x] = mask.at(y, x) ? cv::Vec3b(0, 0, 255) : cv::Vec3b(g, g, g);
    }
  }
  if (!cv::imwrite(path.string(), m)) {
    throw DataError("cannot write PNG: " + path.string());
  }
}

}  // namespace contrail
