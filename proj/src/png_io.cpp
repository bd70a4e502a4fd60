#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "abysslight/errors.hpp"
#include "abysslight/image_io.hpp"

namespace abysslight {

namespace {

struct PngErrorState {
  std::string message;
};

// libpng reports fatal errors by longjmp through its own C frames only;
// the landing pad lives in the calling function below.
void png_error_fn(png_structp png, png_const_charp msg) {
  auto* state = static_cast<PngErrorState*>(png_get_error_ptr(png));
  if (state != nullptr) state->message = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FileHandle = std::unique_ptr<std::FILE, FileCloser>;

FileHandle open_file(const std::filesystem::path& path, const char* mode) {
  FileHandle file(std::fopen(path.string().c_str(), mode));
  if (!file) {
    throw io_error("cannot open " + path.string());
  }
  return file;
}

}  // namespace

RawRaster read_png(const std::filesystem::path& path) {
  FileHandle file = open_file(path, "rb");

  unsigned char signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 ||
      png_sig_cmp(signature, 0, 8) != 0) {
    throw format_error("not a PNG file: " + path.string());
  }

  PngErrorState err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err,
                                           png_error_fn, png_warning_fn);
  if (png == nullptr) throw io_error("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw io_error("libpng init failed");
  }

  std::vector<unsigned char> data;
  std::vector<png_bytep> rows;
  int width = 0, height = 0, channels = 0, depth = 0;

  if (setjmp(png_jmpbuf(png)) != 0) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw io_error("PNG read failed: " + path.string() +
                   (err.message.empty() ? "" : " (" + err.message + ")"));
  }

  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_byte color_type = png_get_color_type(png, info);
  depth = png_get_bit_depth(png, info);

  if (color_type == PNG_COLOR_TYPE_PALETTE) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw format_error("palette PNG not supported: " + path.string());
  }
  if ((color_type & PNG_COLOR_MASK_ALPHA) != 0 ||
      png_get_valid(png, info, PNG_INFO_tRNS) != 0) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw format_error("PNG with alpha not supported: " + path.string());
  }

  if (depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
    depth = 8;
  }
#if defined(PNG_READ_SWAP_SUPPORTED)
  if (depth == 16) png_set_swap(png);
#endif
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  channels = png_get_channels(png, info);
  if (width <= 0 || height <= 0 || (channels != 1 && channels != 3)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw format_error("unsupported PNG layout: " + path.string());
  }

  const std::size_t row_bytes = png_get_rowbytes(png, info);
  data.resize(row_bytes * static_cast<std::size_t>(height));
  rows.resize(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    rows[static_cast<std::size_t>(y)] =
        data.data() + row_bytes * static_cast<std::size_t>(y);
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  RawRaster out;
  out.width = width;
  out.height = height;
  out.channels = channels;
  out.bit_depth = depth;
  out.samples.resize(out.sample_count());

  const std::size_t per_row = static_cast<std::size_t>(width) * channels;
  if (depth == 8) {
    for (int y = 0; y < height; ++y) {
      const unsigned char* src = data.data() + row_bytes * y;
      double* dst = out.samples.data() + per_row * y;
      for (std::size_t i = 0; i < per_row; ++i) dst[i] = src[i] / 255.0;
    }
  } else {
    for (int y = 0; y < height; ++y) {
      const unsigned char* src = data.data() + row_bytes * y;
      double* dst = out.samples.data() + per_row * y;
      for (std::size_t i = 0; i < per_row; ++i) {
        std::uint16_t code;
        std::memcpy(&code, src + 2 * i, 2);
        dst[i] = code / 65535.0;
      }
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const RawRaster& raster) {
  if (raster.bit_depth != 8 && raster.bit_depth != 16) {
    throw argument_error("PNG bit depth must be 8 or 16");
  }
  if (raster.channels != 1 && raster.channels != 3) {
    throw argument_error("PNG channel count must be 1 or 3");
  }
  if (raster.width <= 0 || raster.height <= 0 ||
      raster.samples.size() != raster.sample_count()) {
    throw argument_error("inconsistent raster dimensions");
  }

  const int width = raster.width;
  const int height = raster.height;
  const std::size_t per_row = static_cast<std::size_t>(width) * raster.channels;
  const double full = raster.bit_depth == 8 ? 255.0 : 65535.0;
  const std::size_t row_bytes = per_row * (raster.bit_depth / 8);

  std::vector<unsigned char> data(row_bytes * static_cast<std::size_t>(height));
  if (raster.bit_depth == 8) {
    for (std::size_t i = 0; i < raster.samples.size(); ++i) {
      double v = raster.samples[i];
      v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
      data[i] = static_cast<unsigned char>(std::lround(v * full));
    }
  } else {
    for (std::size_t i = 0; i < raster.samples.size(); ++i) {
      double v = raster.samples[i];
      v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
      const auto code = static_cast<std::uint16_t>(std::lround(v * full));
      std::memcpy(data.data() + 2 * i, &code, 2);
    }
  }

  FileHandle file = open_file(path, "wb");
  PngErrorState err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err,
                                            png_error_fn, png_warning_fn);
  if (png == nullptr) throw io_error("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw io_error("libpng init failed");
  }

  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    rows[static_cast<std::size_t>(y)] =
        data.data() + row_bytes * static_cast<std::size_t>(y);
  }

  if (setjmp(png_jmpbuf(png)) != 0) {
    png_destroy_write_struct(&png, &info);
    throw io_error("PNG write failed: " + path.string() +
                   (err.message.empty() ? "" : " (" + err.message + ")"));
  }

  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width),
               static_cast<png_uint_32>(height), raster.bit_depth,
               raster.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
#if defined(PNG_WRITE_SWAP_SUPPORTED)
  if (raster.bit_depth == 16) png_set_swap(png);
#endif
  png_write_image(png, rows.data());
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
}

void write_mask_png(const std::filesystem::path& path, const ImagePlane& mask) {
  if (mask.empty()) throw argument_error("empty mask");
  const int width = mask.width();
  const int height = mask.height();

  std::vector<unsigned char> data(
      static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    const double* src = mask.row(y);
    unsigned char* dst = data.data() + static_cast<std::size_t>(width) * y;
    for (int x = 0; x < width; ++x) dst[x] = src[x] != 0.0 ? 1 : 0;
  }

  FileHandle file = open_file(path, "wb");
  PngErrorState err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err,
                                            png_error_fn, png_warning_fn);
  if (png == nullptr) throw io_error("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw io_error("libpng init failed");
  }

  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    rows[static_cast<std::size_t>(y)] =
        data.data() + static_cast<std::size_t>(width) * y;
  }

  if (setjmp(png_jmpbuf(png)) != 0) {
    png_destroy_write_struct(&png, &info);
    throw io_error("PNG write failed: " + path.string() +
                   (err.message.empty() ? "" : " (" + err.message + ")"));
  }

  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width),
               static_cast<png_uint_32>(height), 1, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_set_packing(png);
  png_write_image(png, rows.data());
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
}

ImagePlane read_mask_png(const std::filesystem::path& path) {
  RawRaster raw = read_png(path);
  if (raw.channels != 1) {
    throw format_error("mask PNG must be single-channel: " + path.string());
  }
  ImagePlane mask(raw.width, raw.height);
  for (int y = 0; y < raw.height; ++y) {
    const double* src = raw.samples.data() +
                        static_cast<std::size_t>(raw.width) * y;
    double* dst = mask.row(y);
    for (int x = 0; x < raw.width; ++x) dst[x] = src[x] >= 0.5 ? 1.0 : 0.0;
  }
  return mask;
}

}  // namespace abysslight
