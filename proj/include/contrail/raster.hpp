#ifndef CONTRAIL_RASTER_HPP
#define CONTRAIL_RASTER_HPP

#include <cstdint>
#include <vector>

namespace contrail {

// Row-major single-band float raster.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}

  float& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  float at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
  size_t size() const { return data.size(); }
  bool same_shape(const Image& other) const {
    return height == other.height && width == other.width;
  }
};

// Binary mask, values restricted to {0, 1}.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> data;

  Mask() = default;
  Mask(int h, int w, uint8_t fill = 0)
      : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {}

  uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
  size_t size() const { return data.size(); }
  bool same_shape(const Mask& other) const {
    return height == other.height && width == other.width;
  }

  size_t foreground_count() const {
    size_t n = 0;
    for (uint8_t v : data) n += (v != 0);
    return n;
  }
};

}  // namespace contrail

#endif  // CONTRAIL_RASTER_HPP
