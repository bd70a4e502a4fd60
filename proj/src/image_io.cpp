#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "abysslight/errors.hpp"
#include "abysslight/image_io.hpp"

namespace abysslight {

namespace {

using nlohmann::json;

bool has_extension(const std::filesystem::path& path,
                   std::initializer_list<const char*> exts) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  for (const char* e : exts) {
    if (ext == e) return true;
  }
  return false;
}

Frame raster_to_frame(RawRaster&& raw, const std::filesystem::path& path,
                      TransferCurve curve, std::size_t index) {
  if (raw.channels != 1 && raw.channels != 3) {
    throw format_error("frame must have 1 or 3 channels: " + path.string());
  }
  Frame frame;
  frame.index = index;
  frame.tag = path.filename().string();
  frame.planes.reserve(static_cast<std::size_t>(raw.channels));
  for (int c = 0; c < raw.channels; ++c) {
    frame.planes.emplace_back(raw.width, raw.height);
  }
  const std::size_t pixels =
      static_cast<std::size_t>(raw.width) * raw.height;
  for (std::size_t p = 0; p < pixels; ++p) {
    for (int c = 0; c < raw.channels; ++c) {
      double v = raw.samples[p * raw.channels + c];
      if (curve == TransferCurve::srgb) v = srgb_to_linear(v);
      frame.planes[static_cast<std::size_t>(c)].data()[p] = v;
    }
  }
  frame.validate();
  return frame;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw format_error("invalid JSON in " + path.string() + ": " + e.what());
  }
  return doc;
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot open " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw io_error("write failed: " + path.string());
}

std::filesystem::path sidecar_path(const std::filesystem::path& tiff_path) {
  std::filesystem::path p = tiff_path;
  p.replace_extension(".json");
  return p;
}

std::filesystem::path mask_path(const std::filesystem::path& tiff_path) {
  std::filesystem::path p = tiff_path;
  p.replace_extension("");
  p += "_mask.png";
  return p;
}

// Fields persist as 16-bit codes scaled so the per-channel maximum maps to
// full code; the sidecar records the scale needed to undo that.
void save_field_planes(const std::vector<ImagePlane>& planes,
                       const std::filesystem::path& tiff_path,
                       const char* kind) {
  if (planes.empty()) throw argument_error("empty field");
  const int width = planes.front().width();
  const int height = planes.front().height();
  const int channels = static_cast<int>(planes.size());

  std::vector<double> scale(planes.size());
  for (std::size_t c = 0; c < planes.size(); ++c) {
    if (!planes[c].same_size(planes.front())) {
      throw argument_error("field planes differ in size");
    }
    const double peak = planes[c].max_value();
    scale[c] = peak > 0.0 ? peak : 1.0;
  }

  RawRaster raw;
  raw.width = width;
  raw.height = height;
  raw.channels = channels;
  raw.bit_depth = 16;
  raw.samples.resize(raw.sample_count());
  const std::size_t pixels = static_cast<std::size_t>(width) * height;
  for (std::size_t p = 0; p < pixels; ++p) {
    for (int c = 0; c < channels; ++c) {
      raw.samples[p * channels + c] =
          planes[static_cast<std::size_t>(c)].data()[p] /
          scale[static_cast<std::size_t>(c)];
    }
  }
  write_tiff(tiff_path, raw, TiffSampleType::uint16);

  json sidecar = {
      {"schema", 1},
      {"kind", kind},
      {"width", width},
      {"height", height},
      {"channels", channels},
      {"scale", scale},
  };
  write_json_file(sidecar_path(tiff_path), sidecar);
}

std::vector<ImagePlane> load_field_planes(
    const std::filesystem::path& tiff_path, const char* kind) {
  const json sidecar = read_json_file(sidecar_path(tiff_path));
  if (!sidecar.contains("scale") || !sidecar["scale"].is_array()) {
    throw format_error("field sidecar missing scale: " + tiff_path.string());
  }
  if (sidecar.value("kind", "") != kind) {
    throw format_error("field sidecar kind mismatch: " + tiff_path.string());
  }
  const auto scale = sidecar["scale"].get<std::vector<double>>();

  RawRaster raw = read_tiff(tiff_path);
  if (raw.is_float || raw.bit_depth != 16) {
    throw format_error("field TIFF must be 16-bit: " + tiff_path.string());
  }
  if (scale.size() != static_cast<std::size_t>(raw.channels)) {
    throw format_error("field sidecar channel mismatch: " +
                       tiff_path.string());
  }

  std::vector<ImagePlane> planes;
  planes.reserve(scale.size());
  for (int c = 0; c < raw.channels; ++c) {
    planes.emplace_back(raw.width, raw.height);
  }
  const std::size_t pixels =
      static_cast<std::size_t>(raw.width) * raw.height;
  for (std::size_t p = 0; p < pixels; ++p) {
    for (int c = 0; c < raw.channels; ++c) {
      planes[static_cast<std::size_t>(c)].data()[p] =
          raw.samples[p * raw.channels + c] *
          scale[static_cast<std::size_t>(c)];
    }
  }
  return planes;
}

}  // namespace

double srgb_to_linear(double value) {
  if (value <= 0.04045) return value / 12.92;
  return std::pow((value + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double value) {
  if (value <= 0.0031308) return value * 12.92;
  return 1.055 * std::pow(value, 1.0 / 2.4) - 0.055;
}

Frame load_frame(const std::filesystem::path& path, TransferCurve curve,
                 std::size_t index) {
  if (has_extension(path, {".png"})) {
    return raster_to_frame(read_png(path), path, curve, index);
  }
  if (has_extension(path, {".tif", ".tiff"})) {
    RawRaster raw = read_tiff(path);
    if (raw.is_float) {
      throw format_error("float TIFF is not a frame format: " + path.string());
    }
    return raster_to_frame(std::move(raw), path, curve, index);
  }
  throw format_error("unsupported image extension: " + path.string());
}

void save_frame(const Frame& frame, const std::filesystem::path& path,
                int bit_depth, TransferCurve curve, bool clamp) {
  frame.validate();
  if (bit_depth != 8 && bit_depth != 16) {
    throw argument_error("bit depth must be 8 or 16");
  }

  RawRaster raw;
  raw.width = frame.width();
  raw.height = frame.height();
  raw.channels = frame.channels();
  raw.bit_depth = bit_depth;
  raw.samples.resize(raw.sample_count());
  const std::size_t pixels =
      static_cast<std::size_t>(raw.width) * raw.height;
  for (std::size_t p = 0; p < pixels; ++p) {
    for (int c = 0; c < raw.channels; ++c) {
      double v = frame.planes[static_cast<std::size_t>(c)].data()[p];
      if (v < 0.0 || v > 1.0) {
        if (!clamp) {
          throw argument_error("pixel value " + std::to_string(v) +
                               " outside [0,1] and clamping is disabled");
        }
        v = std::clamp(v, 0.0, 1.0);
      }
      if (curve == TransferCurve::srgb) v = linear_to_srgb(v);
      raw.samples[p * raw.channels + c] = v;
    }
  }

  if (has_extension(path, {".png"})) {
    write_png(path, raw);
  } else if (has_extension(path, {".tif", ".tiff"})) {
    write_tiff(path, raw,
               bit_depth == 8 ? TiffSampleType::uint8 : TiffSampleType::uint16);
  } else {
    throw format_error("unsupported image extension: " + path.string());
  }
}

void save_scatter_field(const ScatterField& field,
                        const std::filesystem::path& tiff_path) {
  save_field_planes(field.planes, tiff_path, "scatter");
}

ScatterField load_scatter_field(const std::filesystem::path& tiff_path) {
  ScatterField field;
  field.planes = load_field_planes(tiff_path, "scatter");
  return field;
}

void save_factor_field(const FactorField& field,
                       const std::filesystem::path& tiff_path) {
  if (field.planes.empty() || !field.valid.same_size(field.planes.front())) {
    throw argument_error("factor field mask does not match planes");
  }
  save_field_planes(field.planes, tiff_path, "factor");
  write_mask_png(mask_path(tiff_path), field.valid);
}

FactorField load_factor_field(const std::filesystem::path& tiff_path) {
  FactorField field;
  field.planes = load_field_planes(tiff_path, "factor");
  field.valid = read_mask_png(mask_path(tiff_path));
  if (!field.valid.same_size(field.planes.front())) {
    throw format_error("factor mask size mismatch: " + tiff_path.string());
  }
  return field;
}

void save_correspondence_map(const std::filesystem::path& path,
                             const ImagePlane& u, const ImagePlane& v) {
  if (!u.same_size(v) || u.empty()) {
    throw argument_error("correspondence planes must match");
  }
  RawRaster raw;
  raw.width = u.width();
  raw.height = u.height();
  raw.channels = 2;
  raw.bit_depth = 32;
  raw.is_float = true;
  raw.samples.resize(raw.sample_count());
  const std::size_t pixels =
      static_cast<std::size_t>(raw.width) * raw.height;
  for (std::size_t p = 0; p < pixels; ++p) {
    raw.samples[p * 2] = u.data()[p];
    raw.samples[p * 2 + 1] = v.data()[p];
  }
  write_tiff(path, raw, TiffSampleType::float32);
}

std::pair<ImagePlane, ImagePlane> load_correspondence_map(
    const std::filesystem::path& path) {
  RawRaster raw = read_tiff(path);
  if (!raw.is_float || raw.channels != 2) {
    throw format_error("correspondence map must be 2-channel float TIFF: " +
                       path.string());
  }
  ImagePlane u(raw.width, raw.height);
  ImagePlane v(raw.width, raw.height);
  const std::size_t pixels =
      static_cast<std::size_t>(raw.width) * raw.height;
  for (std::size_t p = 0; p < pixels; ++p) {
    u.data()[p] = raw.samples[p * 2];
    v.data()[p] = raw.samples[p * 2 + 1];
  }
  return {std::move(u), std::move(v)};
}

}  // namespace abysslight
