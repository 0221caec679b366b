#include "contrail/data.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "contrail/errors.hpp"

namespace contrail::data {

void AugmentationConfig::validate() const {
  if (out_size <= 0 || out_size % 32 != 0) {
    throw ConfigError("out_size must be a positive multiple of 32, got " +
                      std::to_string(out_size));
  }
  if (scale_range.first <= 0.0 || scale_range.second < scale_range.first) {
    throw ConfigError("scale_range must satisfy 0 < min <= max");
  }
  if (gamma_range.first <= 0.0 || gamma_range.second < gamma_range.first) {
    throw ConfigError("gamma_range must satisfy 0 < min <= max");
  }
  if (perspective_strength.second < perspective_strength.first ||
      perspective_strength.first < 0.0) {
    throw ConfigError("perspective_strength must satisfy 0 <= min <= max");
  }
  if (rotate_limit_deg < 0.0 || shift_fraction < 0.0 ||
      brightness_limit < 0.0 || contrast_limit < 0.0) {
    throw ConfigError("augmentation limits must be non-negative");
  }
  for (double p : {p_affine, p_perspective, p_brightness_contrast, p_gamma}) {
    if (p < 0.0 || p > 1.0) throw ConfigError("transform probabilities must be in [0,1]");
  }
}

bool GeomParams::is_identity() const {
  return rotate_deg == 0.0 && scale == 1.0 && shift_x == 0.0 &&
         shift_y == 0.0 && !perspective;
}

GeomParams sample_geometric_params(Rng& rng, const AugmentationConfig& cfg) {
  GeomParams p;
  if (rng.bernoulli(cfg.p_affine)) {
    p.rotate_deg = rng.uniform(-cfg.rotate_limit_deg, cfg.rotate_limit_deg);
    p.scale = rng.uniform(cfg.scale_range.first, cfg.scale_range.second);
    p.shift_x = rng.uniform(-cfg.shift_fraction, cfg.shift_fraction);
    p.shift_y = rng.uniform(-cfg.shift_fraction, cfg.shift_fraction);
  }
  if (rng.bernoulli(cfg.p_perspective)) {
    p.perspective = true;
    double strength = rng.uniform(cfg.perspective_strength.first,
                                  cfg.perspective_strength.second);
    for (auto& corner : p.corner_shift) {
      corner[0] = rng.uniform(-strength, strength);
      corner[1] = rng.uniform(-strength, strength);
    }
  }
  return p;
}

namespace {

// Homography from four point correspondences (DLT, 8x8 solve).
Eigen::Matrix3d homography_from_corners(const std::array<std::array<double, 2>, 4>& src,
                                        const std::array<std::array<double, 2>, 4>& dst) {
  Eigen::Matrix<double, 8, 8> a = Eigen::Matrix<double, 8, 8>::Zero();
  Eigen::Matrix<double, 8, 1> b;
  for (int i = 0; i < 4; ++i) {
    double x = src[i][0], y = src[i][1];
    double u = dst[i][0], v = dst[i][1];
    a.row(2 * i) << x, y, 1, 0, 0, 0, -x * u, -y * u;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -x * v, -y * v;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  Eigen::Matrix<double, 8, 1> h = a.partialPivLu().solve(b);
  Eigen::Matrix3d m;
  m << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), 1.0;
  return m;
}

// Forward map: source pixel coordinates -> output pixel coordinates.
Eigen::Matrix3d forward_homography(const GeomParams& p, int height, int width) {
  const double cx = (width - 1) / 2.0;
  const double cy = (height - 1) / 2.0;
  const double phi = p.rotate_deg * M_PI / 180.0;
  const double c = std::cos(phi) * p.scale;
  const double s = std::sin(phi) * p.scale;

  // Rotation + scale around the image center, then translation.
  Eigen::Matrix3d affine;
  affine << c, -s, cx - c * cx + s * cy + p.shift_x * width,
            s,  c, cy - s * cx - c * cy + p.shift_y * height,
            0,  0, 1;

  if (!p.perspective) return affine;

  const double side = std::min(height, width);
  std::array<std::array<double, 2>, 4> corners = {{
      {0.0, 0.0},
      {static_cast<double>(width - 1), 0.0},
      {static_cast<double>(width - 1), static_cast<double>(height - 1)},
      {0.0, static_cast<double>(height - 1)},
  }};
  std::array<std::array<double, 2>, 4> jittered = corners;
  for (int i = 0; i < 4; ++i) {
    jittered[i][0] += p.corner_shift[i][0] * side;
    jittered[i][1] += p.corner_shift[i][1] * side;
  }
  return homography_from_corners(corners, jittered) * affine;
}

}  // namespace

Eigen::Matrix3d geometric_homography(const GeomParams& params, int height,
                                     int width) {
  return forward_homography(params, height, width);
}

namespace {

inline float bilinear_at(const Image& img, double sx, double sy) {
  const int x0 = static_cast<int>(std::floor(sx));
  const int y0 = static_cast<int>(std::floor(sy));
  const double fx = sx - x0;
  const double fy = sy - y0;
  double acc = 0.0;
  for (int dy = 0; dy <= 1; ++dy) {
    const int y = y0 + dy;
    if (y < 0 || y >= img.height) continue;
    const double wy = dy ? fy : 1.0 - fy;
    for (int dx = 0; dx <= 1; ++dx) {
      const int x = x0 + dx;
      if (x < 0 || x >= img.width) continue;
      const double wx = dx ? fx : 1.0 - fx;
      acc += wy * wx * img.at(y, x);
    }
  }
  return static_cast<float>(acc);
}

}  // namespace

Image warp_image(const Image& image, const GeomParams& params) {
  if (params.is_identity()) return image;
  const Eigen::Matrix3d inv =
      forward_homography(params, image.height, image.width).inverse();
  Image out(image.height, image.width, 0.0f);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const Eigen::Vector3d src = inv * Eigen::Vector3d(x, y, 1.0);
      const double sx = src(0) / src(2);
      const double sy = src(1) / src(2);
      out.at(y, x) = bilinear_at(image, sx, sy);
    }
  }
  return out;
}

Mask warp_mask(const Mask& mask, const GeomParams& params) {
  if (params.is_identity()) return mask;
  const Eigen::Matrix3d inv =
      forward_homography(params, mask.height, mask.width).inverse();
  Mask out(mask.height, mask.width, 0);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const Eigen::Vector3d src = inv * Eigen::Vector3d(x, y, 1.0);
      const long sx = std::lround(src(0) / src(2));
      const long sy = std::lround(src(1) / src(2));
      if (sx >= 0 && sx < mask.width && sy >= 0 && sy < mask.height) {
        out.at(y, x) = mask.at(static_cast<int>(sy), static_cast<int>(sx));
      }
    }
  }
  return out;
}

std::pair<Image, Mask> warp_pair(const Image& image, const Mask& mask,
                                 const GeomParams& params) {
  if (image.height != mask.height || image.width != mask.width) {
    throw DataError("warp_pair: image/mask shape mismatch");
  }
  return {warp_image(image, params), warp_mask(mask, params)};
}

std::pair<Image, Mask> random_geometric(const ingest::LabeledScene& scene,
                                        Rng& rng,
                                        const AugmentationConfig& cfg) {
  GeomParams p = sample_geometric_params(rng, cfg);
  return warp_pair(scene.image, scene.mask, p);
}

PhotoParams sample_photometric_params(Rng& rng, const AugmentationConfig& cfg) {
  PhotoParams p;
  if (rng.bernoulli(cfg.p_brightness_contrast)) {
    p.brightness = rng.uniform(-cfg.brightness_limit, cfg.brightness_limit);
    p.contrast = 1.0 + rng.uniform(-cfg.contrast_limit, cfg.contrast_limit);
  }
  if (rng.bernoulli(cfg.p_gamma)) {
    p.gamma = rng.uniform(cfg.gamma_range.first, cfg.gamma_range.second);
  }
  return p;
}

Image apply_photometric(const Image& image, const PhotoParams& params) {
  Image out(image.height, image.width);
  for (size_t i = 0; i < image.size(); ++i) {
    double v = (static_cast<double>(image.data[i]) - 0.5) * params.contrast +
               0.5 + params.brightness;
    v = std::clamp(v, 0.0, 1.0);
    if (params.gamma != 1.0) v = std::pow(v, params.gamma);
    out.data[i] = static_cast<float>(v);
  }
  return out;
}

Image random_photometric(const Image& image, Rng& rng,
                         const AugmentationConfig& cfg) {
  return apply_photometric(image, sample_photometric_params(rng, cfg));
}

namespace {

// Per-axis window: source offset (crop) and destination offset (pad).
void axis_window(int in, int out, Placement placement, Rng* rng, int* src_off,
                 int* dst_off, int* span) {
  if (in >= out) {
    *span = out;
    *dst_off = 0;
    *src_off = (placement == Placement::kCentered || rng == nullptr)
                   ? (in - out) / 2
                   : static_cast<int>(rng->uniform_int(in - out + 1));
  } else {
    *span = in;
    *src_off = 0;
    *dst_off = (placement == Placement::kCentered || rng == nullptr)
                   ? (out - in) / 2
                   : static_cast<int>(rng->uniform_int(out - in + 1));
  }
}

}  // namespace

std::pair<Image, Mask> pad_or_crop(const Image& image, const Mask& mask,
                                   int out_size, Placement placement,
                                   Rng* rng) {
  if (out_size <= 0 || out_size % 32 != 0) {
    throw ConfigError("pad_or_crop: out_size must be a positive multiple of 32");
  }
  if (image.height != mask.height || image.width != mask.width) {
    throw DataError("pad_or_crop: image/mask shape mismatch");
  }
  int src_y, dst_y, rows, src_x, dst_x, cols;
  axis_window(image.height, out_size, placement, rng, &src_y, &dst_y, &rows);
  axis_window(image.width, out_size, placement, rng, &src_x, &dst_x, &cols);

  Image img_out(out_size, out_size, 0.0f);
  Mask mask_out(out_size, out_size, 0);
  for (int y = 0; y < rows; ++y) {
    for (int x = 0; x < cols; ++x) {
      img_out.at(dst_y + y, dst_x + x) = image.at(src_y + y, src_x + x);
      mask_out.at(dst_y + y, dst_x + x) = mask.at(src_y + y, src_x + x);
    }
  }
  return {std::move(img_out), std::move(mask_out)};
}

StepStream::StepStream(std::vector<ingest::LabeledScene> scenes,
                       AugmentationConfig cfg, uint64_t seed, int batch_size)
    : scenes_(std::move(scenes)),
      cfg_(cfg),
      seed_(seed),
      batch_size_(batch_size) {
  cfg_.validate();
  if (scenes_.empty()) throw DataError("StepStream: empty scene list");
  if (batch_size_ <= 0) throw ConfigError("StepStream: batch_size must be positive");
}

Sample StepStream::sample_at(int64_t step, int slot) const {
  const uint64_t seed = sample_seed(seed_, static_cast<uint64_t>(step),
                                    static_cast<uint64_t>(slot));
  Rng rng(seed);
  const auto& scene = scenes_[rng.uniform_int(static_cast<int64_t>(scenes_.size()))];
  auto [img, msk] = random_geometric(scene, rng, cfg_);
  auto [cropped_img, cropped_msk] =
      pad_or_crop(img, msk, cfg_.out_size, Placement::kRandom, &rng);
  Image final_img = random_photometric(cropped_img, rng, cfg_);
  return Sample{std::move(final_img), std::move(cropped_msk), scene.scene_id, seed};
}

std::vector<Sample> StepStream::batch(int64_t step) const {
  std::vector<Sample> out;
  out.reserve(batch_size_);
  for (int slot = 0; slot < batch_size_; ++slot) {
    out.push_back(sample_at(step, slot));
  }
  return out;
}

}  // namespace contrail::data
