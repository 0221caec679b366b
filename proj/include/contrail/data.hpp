#ifndef CONTRAIL_DATA_HPP
#define CONTRAIL_DATA_HPP

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "contrail/ingest.hpp"
#include "contrail/raster.hpp"
#include "contrail/rng.hpp"

namespace contrail::data {

struct AugmentationConfig {
  int out_size = 320;  // must be a multiple of 32

  double rotate_limit_deg = 45.0;
  std::pair<double, double> scale_range{0.5, 1.5};
  double shift_fraction = 0.2;
  std::pair<double, double> perspective_strength{0.05, 0.1};

  double brightness_limit = 0.2;
  double contrast_limit = 0.2;
  std::pair<double, double> gamma_range{0.7, 1.4};

  double p_affine = 1.0;
  double p_perspective = 0.5;
  double p_brightness_contrast = 0.5;
  double p_gamma = 0.5;

  void validate() const;  // throws ConfigError
};

// One sampled geometric parameter set. Identity by default.
struct GeomParams {
  double rotate_deg = 0.0;
  double scale = 1.0;
  double shift_x = 0.0;  // fraction of width
  double shift_y = 0.0;  // fraction of height
  bool perspective = false;
  // Output-corner displacement as a fraction of min(height, width), in the
  // order (top-left, top-right, bottom-right, bottom-left) x (dx, dy).
  std::array<std::array<double, 2>, 4> corner_shift{};

  bool is_identity() const;
};

GeomParams sample_geometric_params(Rng& rng, const AugmentationConfig& cfg);

// Forward map taking source pixel coordinates to output coordinates.
Eigen::Matrix3d geometric_homography(const GeomParams& params, int height,
                                     int width);

// Applies the same warp to image (bilinear) and mask (nearest-neighbor).
// Out-of-frame regions fill with 0.
std::pair<Image, Mask> warp_pair(const Image& image, const Mask& mask,
                                 const GeomParams& params);
Image warp_image(const Image& image, const GeomParams& params);
Mask warp_mask(const Mask& mask, const GeomParams& params);

std::pair<Image, Mask> random_geometric(const ingest::LabeledScene& scene,
                                        Rng& rng,
                                        const AugmentationConfig& cfg);

struct PhotoParams {
  double brightness = 0.0;
  double contrast = 1.0;
  double gamma = 1.0;
};

PhotoParams sample_photometric_params(Rng& rng, const AugmentationConfig& cfg);

// out = clamp((v - 0.5) * contrast + 0.5 + brightness, 0, 1) ^ gamma
Image apply_photometric(const Image& image, const PhotoParams& params);
Image random_photometric(const Image& image, Rng& rng,
                         const AugmentationConfig& cfg);

enum class Placement { kCentered, kRandom };

// Pads (value 0) or crops both rasters to out_size x out_size. Window and
// placement offsets are centered or drawn from rng per Placement.
std::pair<Image, Mask> pad_or_crop(const Image& image, const Mask& mask,
                                   int out_size, Placement placement,
                                   Rng* rng = nullptr);

struct Sample {
  Image image;
  Mask mask;
  std::string scene_id;
  uint64_t seed = 0;  // exact seed that produced this sample
};

// Infinite augmented sample stream. batch(step) is a pure function of
// (seed, step), so any worker can generate any step independently and the
// stream is reproducible across runs and worker counts.
class StepStream {
 public:
  StepStream(std::vector<ingest::LabeledScene> scenes, AugmentationConfig cfg,
             uint64_t seed, int batch_size);

  std::vector<Sample> batch(int64_t step) const;
  Sample sample_at(int64_t step, int slot) const;
  std::vector<Sample> next() { return batch(cursor_++); }

  int batch_size() const { return batch_size_; }
  const AugmentationConfig& config() const { return cfg_; }

 private:
  std::vector<ingest::LabeledScene> scenes_;
  AugmentationConfig cfg_;
  uint64_t seed_;
  int batch_size_;
  int64_t cursor_ = 0;
};

}  // namespace contrail::data

#endif  // CONTRAIL_DATA_HPP
