#ifndef CONTRAIL_INGEST_HPP
#define CONTRAIL_INGEST_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "contrail/raster.hpp"

namespace contrail::ingest {

// Single-band brightness-temperature raster. `valid` flags usable pixels;
// missing data (fill values, NaN) is carried explicitly rather than as NaN.
struct ChannelRaster {
  Image values;                 // kelvin
  std::vector<uint8_t> valid;   // 1 = usable, same length as values.data
  int band_id = 0;
  double wavelength_um = 0.0;

  bool all_valid() const {
    for (uint8_t v : valid) if (!v) return false;
    return true;
  }
};

struct BTDImage {
  Image values;                 // kelvin difference
  std::vector<uint8_t> valid;
  std::pair<int, int> source_bands{0, 0};
};

enum class Split { kTrain, kEval };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct LabeledScene {
  Image image;        // unit interval
  Mask mask;          // 1 = contrail pixel
  std::string scene_id;
  Split split = Split::kTrain;
};

// GOES ABI band -> central wavelength (micrometers).
double wavelength_for_band(int band);

// Loads two bands of a scene. Two layouts are supported:
//   *.nc          GOES L2 netCDF4 container read through HDF5, variables
//                 named CMI_C<band> (int16 + scale/offset or float).
//   <stem>        pair of raw rasters <stem>_C<band>.btdr, little-endian:
//                 magic "BTDR", u32 height, u32 width, then h*w float32
//                 row-major; NaN marks missing data.
// Passing one of the .btdr files directly also works.
std::pair<ChannelRaster, ChannelRaster> load_scene(
    const std::filesystem::path& path, int band_a, int band_b);

// Brightness temperature difference: longer-wavelength band minus
// shorter-wavelength band (12.3 um - 10.35 um for GOES bands 15/13).
BTDImage compute_btd(const ChannelRaster& shorter, const ChannelRaster& longer);

struct NormalizeResult {
  Image image;          // unit interval; invalid pixels set to 0
  bool degenerate = false;  // lo and hi percentile collapsed
  double lo_value = 0.0;
  double hi_value = 0.0;
};

// Linear percentile stretch: lo percentile -> 0, hi percentile -> 1, then
// clamp. Statistics are computed over valid pixels only. A degenerate range
// yields a constant 0.5 image with the warning flag set.
NormalizeResult normalize(const BTDImage& btd, double lo_percentile = 2.0,
                          double hi_percentile = 98.0);

// Pairs a unit-interval image with a mask PNG, binarizing the mask at half
// its dynamic range.
LabeledScene pair_with_mask(const Image& image,
                            const std::filesystem::path& mask_path,
                            const std::string& scene_id, Split split);

// LabeledScene persistence: <scene_id>.png (16-bit gray), <scene_id>_mask.png
// and <scene_id>.meta ("key = value" lines).
struct SceneFiles {
  std::filesystem::path image_png, mask_png, meta;
};
SceneFiles save_scene(const LabeledScene& scene,
                      const std::filesystem::path& dir,
                      const NormalizeResult* norm = nullptr,
                      double lo_percentile = 0.0, double hi_percentile = 0.0);

// Loads a scene from persisted image/mask PNGs.
LabeledScene load_labeled(const std::filesystem::path& image_png,
                          const std::filesystem::path& mask_png,
                          const std::string& scene_id, Split split);

// Raw BTDR raster I/O (test fixtures and the ingest CLI use the writer).
void write_btdr(const std::filesystem::path& path, const Image& values);
ChannelRaster read_btdr(const std::filesystem::path& path, int band_id);

}  // namespace contrail::ingest

#endif  // CONTRAIL_INGEST_HPP
