#include "contrail/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include <hdf5.h>

#include "contrail/errors.hpp"
#include "contrail/png_io.hpp"

namespace contrail::ingest {

namespace fs = std::filesystem;

std::string to_string(Split s) {
  return s == Split::kTrain ? "train" : "eval";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "eval") return Split::kEval;
  throw ConfigError("unknown split tag '" + s + "' (expected train|eval)");
}

double wavelength_for_band(int band) {
  // GOES-16 ABI infrared bands.
  static const std::map<int, double> kTable = {
      {8, 6.2},  {9, 6.9},   {10, 7.3},  {11, 8.4}, {12, 9.6},
      {13, 10.35}, {14, 11.2}, {15, 12.3}, {16, 13.3},
  };
  auto it = kTable.find(band);
  if (it == kTable.end()) {
    throw DataError("no wavelength known for band " + std::to_string(band));
  }
  return it->second;
}

// ---------------------------------------------------------------------------
// BTDR raw raster format
// ---------------------------------------------------------------------------

void write_btdr(const fs::path& path, const Image& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write("BTDR", 4);
  uint32_t h = static_cast<uint32_t>(values.height);
  uint32_t w = static_cast<uint32_t>(values.width);
  out.write(reinterpret_cast<const char*>(&h), 4);
  out.write(reinterpret_cast<const char*>(&w), 4);
  out.write(reinterpret_cast<const char*>(values.data.data()),
            static_cast<std::streamsize>(values.data.size() * sizeof(float)));
  if (!out) throw DataError("short write: " + path.string());
}

ChannelRaster read_btdr(const fs::path& path, int band_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("band " + std::to_string(band_id) +
                           " not found: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "BTDR", 4) != 0) {
    throw DataError("not a BTDR file: " + path.string());
  }
  uint32_t h = 0, w = 0;
  in.read(reinterpret_cast<char*>(&h), 4);
  in.read(reinterpret_cast<char*>(&w), 4);
  if (!in || h == 0 || w == 0) {
    throw DataError("corrupt BTDR header: " + path.string());
  }
  ChannelRaster r;
  r.values = Image(static_cast<int>(h), static_cast<int>(w));
  in.read(reinterpret_cast<char*>(r.values.data.data()),
          static_cast<std::streamsize>(r.values.data.size() * sizeof(float)));
  if (!in) throw DataError("truncated BTDR payload: " + path.string());
  r.band_id = band_id;
  r.wavelength_um = wavelength_for_band(band_id);
  r.valid.resize(r.values.size());
  for (size_t i = 0; i < r.values.size(); ++i) {
    r.valid[i] = std::isfinite(r.values.data[i]) ? 1 : 0;
    if (!r.valid[i]) r.values.data[i] = 0.0f;
  }
  return r;
}

// ---------------------------------------------------------------------------
// GOES L2 netCDF4 (HDF5 container) reader
// ---------------------------------------------------------------------------

namespace {

struct H5File {
  hid_t id = -1;
  explicit H5File(const fs::path& p) {
    id = H5Fopen(p.string().c_str(), H5F_ACC_RDONLY, H5P_DEFAULT);
  }
  ~H5File() { if (id >= 0) H5Fclose(id); }
};

bool read_double_attr(hid_t dset, const char* name, double* out) {
  if (H5Aexists(dset, name) <= 0) return false;
  hid_t attr = H5Aopen(dset, name, H5P_DEFAULT);
  if (attr < 0) return false;
  herr_t st = H5Aread(attr, H5T_NATIVE_DOUBLE, out);
  H5Aclose(attr);
  return st >= 0;
}

ChannelRaster read_goes_band(hid_t file, const fs::path& path, int band) {
  char var[16];
  std::snprintf(var, sizeof(var), "CMI_C%02d", band);
  if (H5Lexists(file, var, H5P_DEFAULT) <= 0) {
    throw DataError("band " + std::to_string(band) + " not found: variable " +
                    var + " missing in " + path.string());
  }
  hid_t dset = H5Dopen2(file, var, H5P_DEFAULT);
  if (dset < 0) throw DataError(std::string("cannot open variable ") + var);

  hid_t space = H5Dget_space(dset);
  int rank = H5Sget_simple_extent_ndims(space);
  hsize_t dims[2] = {0, 0};
  if (rank == 2) H5Sget_simple_extent_dims(space, dims, nullptr);
  H5Sclose(space);
  if (rank != 2 || dims[0] == 0 || dims[1] == 0) {
    H5Dclose(dset);
    throw DataError(std::string(var) + " is not a 2-D grid in " + path.string());
  }

  ChannelRaster r;
  r.values = Image(static_cast<int>(dims[0]), static_cast<int>(dims[1]));
  r.valid.assign(r.values.size(), 1);
  r.band_id = band;
  r.wavelength_um = wavelength_for_band(band);

  double scale = 1.0, offset = 0.0, fill = 0.0;
  bool has_scale = read_double_attr(dset, "scale_factor", &scale);
  bool has_offset = read_double_attr(dset, "add_offset", &offset);
  bool has_fill = read_double_attr(dset, "_FillValue", &fill);

  hid_t dtype = H5Dget_type(dset);
  H5T_class_t cls = H5Tget_class(dtype);
  H5Tclose(dtype);

  const size_t n = r.values.size();
  if (cls == H5T_INTEGER) {
    std::vector<int32_t> raw(n);
    if (H5Dread(dset, H5T_NATIVE_INT32, H5S_ALL, H5S_ALL, H5P_DEFAULT,
                raw.data()) < 0) {
      H5Dclose(dset);
      throw DataError(std::string("read failed for ") + var);
    }
    const int32_t ifill = static_cast<int32_t>(fill);
    for (size_t i = 0; i < n; ++i) {
      if (has_fill && raw[i] == ifill) {
        r.valid[i] = 0;
        r.values.data[i] = 0.0f;
      } else {
        double v = static_cast<double>(raw[i]);
        if (has_scale) v *= scale;
        if (has_offset) v += offset;
        r.values.data[i] = static_cast<float>(v);
      }
    }
  } else {
    std::vector<double> raw(n);
    if (H5Dread(dset, H5T_NATIVE_DOUBLE, H5S_ALL, H5S_ALL, H5P_DEFAULT,
                raw.data()) < 0) {
      H5Dclose(dset);
      throw DataError(std::string("read failed for ") + var);
    }
    for (size_t i = 0; i < n; ++i) {
      double v = raw[i];
      bool bad = !std::isfinite(v) || (has_fill && v == fill);
      if (bad) {
        r.valid[i] = 0;
        r.values.data[i] = 0.0f;
      } else {
        if (has_scale) v *= scale;
        if (has_offset) v += offset;
        r.values.data[i] = static_cast<float>(v);
      }
    }
  }
  H5Dclose(dset);
  return r;
}

bool is_netcdf(const fs::path& path) {
  auto ext = path.extension().string();
  return ext == ".nc" || ext == ".nc4" || ext == ".h5";
}

fs::path btdr_band_path(const fs::path& stem, int band) {
  char suffix[24];
  std::snprintf(suffix, sizeof(suffix), "_C%02d.btdr", band);
  return fs::path(stem.string() + suffix);
}

}  // namespace

std::pair<ChannelRaster, ChannelRaster> load_scene(const fs::path& path,
                                                   int band_a, int band_b) {
  ChannelRaster a, b;
  if (is_netcdf(path)) {
    if (!fs::exists(path)) throw DataError("scene file missing: " + path.string());
    H5File f(path);
    if (f.id < 0) throw DataError("cannot open as HDF5/netCDF4: " + path.string());
    a = read_goes_band(f.id, path, band_a);
    b = read_goes_band(f.id, path, band_b);
  } else {
    // BTDR layout: path is the scene stem (or one of the band files).
    std::string stem = path.string();
    static const std::regex kBandFile("_C[0-9]{2}\\.btdr$");
    stem = std::regex_replace(stem, kBandFile, "");
    a = read_btdr(btdr_band_path(stem, band_a), band_a);
    b = read_btdr(btdr_band_path(stem, band_b), band_b);
  }
  if (!a.values.same_shape(b.values)) {
    std::ostringstream msg;
    msg << "shape mismatch between band " << band_a << " (" << a.values.height
        << "x" << a.values.width << ") and band " << band_b << " ("
        << b.values.height << "x" << b.values.width << ")";
    throw DataError(msg.str());
  }
  return {std::move(a), std::move(b)};
}

BTDImage compute_btd(const ChannelRaster& shorter, const ChannelRaster& longer) {
  if (!shorter.values.same_shape(longer.values)) {
    throw DataError("compute_btd: band shapes differ");
  }
  if (!(shorter.wavelength_um < longer.wavelength_um)) {
    std::ostringstream msg;
    msg << "compute_btd: band " << shorter.band_id << " (" << shorter.wavelength_um
        << " um) must have a shorter wavelength than band " << longer.band_id
        << " (" << longer.wavelength_um << " um)";
    throw DataError(msg.str());
  }
  BTDImage out;
  out.values = Image(shorter.values.height, shorter.values.width);
  out.valid.resize(out.values.size());
  out.source_bands = {shorter.band_id, longer.band_id};
  for (size_t i = 0; i < out.values.size(); ++i) {
    out.values.data[i] = longer.values.data[i] - shorter.values.data[i];
    out.valid[i] = shorter.valid[i] && longer.valid[i];
  }
  return out;
}

namespace {

// Sort-based percentile with linear interpolation between order statistics.
double percentile(const std::vector<float>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  if (sorted.size() == 1) return sorted[0];
  double rank = q / 100.0 * static_cast<double>(sorted.size() - 1);
  size_t lo = static_cast<size_t>(std::floor(rank));
  size_t hi = std::min(lo + 1, sorted.size() - 1);
  double frac = rank - static_cast<double>(lo);
  return (1.0 - frac) * sorted[lo] + frac * sorted[hi];
}

}  // namespace

NormalizeResult normalize(const BTDImage& btd, double lo_percentile,
                          double hi_percentile) {
  if (!(0.0 <= lo_percentile && lo_percentile < hi_percentile &&
        hi_percentile <= 100.0)) {
    throw ConfigError("normalize: need 0 <= lo < hi <= 100");
  }
  std::vector<float> vals;
  vals.reserve(btd.values.size());
  for (size_t i = 0; i < btd.values.size(); ++i) {
    if (btd.valid[i]) vals.push_back(btd.values.data[i]);
  }
  if (vals.empty()) throw DataError("normalize: image has no valid pixels");
  std::sort(vals.begin(), vals.end());

  NormalizeResult res;
  res.lo_value = percentile(vals, lo_percentile);
  res.hi_value = percentile(vals, hi_percentile);
  res.image = Image(btd.values.height, btd.values.width);

  if (res.hi_value == res.lo_value) {
    res.degenerate = true;
    for (size_t i = 0; i < btd.values.size(); ++i) {
      res.image.data[i] = btd.valid[i] ? 0.5f : 0.0f;
    }
    return res;
  }

  const double span = res.hi_value - res.lo_value;
  for (size_t i = 0; i < btd.values.size(); ++i) {
    if (!btd.valid[i]) {
      res.image.data[i] = 0.0f;
      continue;
    }
    double v = (static_cast<double>(btd.values.data[i]) - res.lo_value) / span;
    res.image.data[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return res;
}

LabeledScene pair_with_mask(const Image& image, const fs::path& mask_path,
                            const std::string& scene_id, Split split) {
  Image raw = read_unit_gray(mask_path);
  if (!raw.same_shape(image)) {
    std::ostringstream msg;
    msg << "mask " << mask_path.string() << " is " << raw.height << "x"
        << raw.width << " but image is " << image.height << "x" << image.width;
    throw DataError(msg.str());
  }
  LabeledScene scene;
  scene.image = image;
  scene.mask = Mask(raw.height, raw.width);
  for (size_t i = 0; i < raw.size(); ++i) {
    scene.mask.data[i] = raw.data[i] >= 0.5f ? 1 : 0;
  }
  scene.scene_id = scene_id;
  scene.split = split;
  return scene;
}

SceneFiles save_scene(const LabeledScene& scene, const fs::path& dir,
                      const NormalizeResult* norm, double lo_percentile,
                      double hi_percentile) {
  fs::create_directories(dir);
  SceneFiles files;
  files.image_png = dir / (scene.scene_id + ".png");
  files.mask_png = dir / (scene.scene_id + "_mask.png");
  files.meta = dir / (scene.scene_id + ".meta");

  write_unit_gray16(files.image_png, scene.image);
  write_mask_png(files.mask_png, scene.mask);

  std::ofstream meta(files.meta);
  if (!meta) throw DataError("cannot write " + files.meta.string());
  meta << "scene_id = " << scene.scene_id << "\n";
  meta << "split = " << to_string(scene.split) << "\n";
  if (norm != nullptr) {
    meta << "lo_percentile = " << lo_percentile << "\n";
    meta << "hi_percentile = " << hi_percentile << "\n";
    meta << "lo_value = " << norm->lo_value << "\n";
    meta << "hi_value = " << norm->hi_value << "\n";
    meta << "degenerate = " << (norm->degenerate ? "true" : "false") << "\n";
  }
  return files;
}

LabeledScene load_labeled(const fs::path& image_png, const fs::path& mask_png,
                          const std::string& scene_id, Split split) {
  Image img = read_unit_gray(image_png);
  return pair_with_mask(img, mask_png, scene_id, split);
}

}  // namespace contrail::ingest
