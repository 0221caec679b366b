#ifndef CONTRAIL_PNG_IO_HPP
#define CONTRAIL_PNG_IO_HPP

#include <filesystem>

#include "contrail/raster.hpp"

namespace contrail {

// Reads an 8- or 16-bit PNG (grayscale or color) and rescales it to the unit
// interval. Color inputs are converted to luminance first.
Image read_unit_gray(const std::filesystem::path& path);

// Writes a unit-interval image as 16-bit grayscale PNG.
void write_unit_gray16(const std::filesystem::path& path, const Image& img);

// Writes a binary mask as 8-bit PNG with values {0, 255}.
void write_mask_png(const std::filesystem::path& path, const Mask& mask);

// Writes a composite of the grayscale image with mask pixels painted red.
void write_overlay_png(const std::filesystem::path& path, const Image& img,
                       const Mask& mask);

}  // namespace contrail

#endif  // CONTRAIL_PNG_IO_HPP
