#ifndef ABYSSLIGHT_IMAGE_IO_HPP
#define ABYSSLIGHT_IMAGE_IO_HPP

// Raster file input/output. PNG (8/16-bit, grayscale or RGB) carries camera
// frames and masks; a minimal little-endian TIFF codec (uncompressed strips,
// uint8/uint16/float32, 1 to 3 samples) carries calibration fields and
// correspondence maps. Pixel data crosses this boundary as doubles: integer
// codes are normalized to [0,1], float samples pass through untouched.

#include <filesystem>
#include <utility>
#include <vector>

#include "abysslight/image.hpp"

namespace abysslight {

// Interleaved row-major raster as stored on disk.
struct RawRaster {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;  // 8, 16, or 32; 32 implies float samples
  bool is_float = false;
  std::vector<double> samples;

  std::size_t sample_count() const {
    return static_cast<std::size_t>(width) * height * channels;
  }
};

// PNG. Grayscale 1/2/4-bit reads are expanded to 8-bit; palette or alpha
// content is rejected. Writes accept bit depth 8 or 16 and samples in [0,1].
RawRaster read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RawRaster& raster);

// 1-bit grayscale PNG; nonzero mask values store as 1. Read back via
// read_png (expanded to 8-bit full scale).
void write_mask_png(const std::filesystem::path& path, const ImagePlane& mask);
ImagePlane read_mask_png(const std::filesystem::path& path);

// TIFF. Little-endian, single IFD, uncompressed.
enum class TiffSampleType { uint8, uint16, float32 };
RawRaster read_tiff(const std::filesystem::path& path);
void write_tiff(const std::filesystem::path& path, const RawRaster& raster,
                TiffSampleType type);

// Transfer curve applied when mapping integer codes to linear radiance.
enum class TransferCurve { linear, srgb };

double srgb_to_linear(double value);
double linear_to_srgb(double value);

// Loads a PNG or TIFF (by extension) as a linear-radiance frame in [0,1]
// scale. 1 or 3 channels; anything else is a format error.
Frame load_frame(const std::filesystem::path& path,
                 TransferCurve curve = TransferCurve::linear,
                 std::size_t index = 0);

// Writes a frame as PNG or TIFF at the given integer depth. With clamp,
// values outside [0,1] are clipped; without it they raise an argument error.
void save_frame(const Frame& frame, const std::filesystem::path& path,
                int bit_depth = 16, TransferCurve curve = TransferCurve::linear,
                bool clamp = true);

// Field persistence: 16-bit TIFF plus a JSON sidecar (same stem, .json)
// recording the per-channel scale that maps full code back to the stored
// maximum. Factor fields additionally persist their validity mask as a
// 1-bit PNG at <stem>_mask.png.
void save_scatter_field(const ScatterField& field,
                        const std::filesystem::path& tiff_path);
ScatterField load_scatter_field(const std::filesystem::path& tiff_path);
void save_factor_field(const FactorField& field,
                       const std::filesystem::path& tiff_path);
FactorField load_factor_field(const std::filesystem::path& tiff_path);

// Correspondence map: 2-channel float32 TIFF, seafloor (u,v) in meters.
void save_correspondence_map(const std::filesystem::path& path,
                             const ImagePlane& u, const ImagePlane& v);
std::pair<ImagePlane, ImagePlane> load_correspondence_map(
    const std::filesystem::path& path);

}  // namespace abysslight

#endif
