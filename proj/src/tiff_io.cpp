#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "abysslight/errors.hpp"
#include "abysslight/image_io.hpp"

// Minimal TIFF 6.0 subset: little-endian, single IFD, chunky planar layout,
// uncompressed strips, 1 to 3 samples of uint8, uint16, or float32.

static_assert(std::endian::native == std::endian::little,
              "TIFF codec assumes a little-endian host");

namespace abysslight {

namespace {

constexpr std::uint16_t kTagWidth = 256;
constexpr std::uint16_t kTagHeight = 257;
constexpr std::uint16_t kTagBitsPerSample = 258;
constexpr std::uint16_t kTagCompression = 259;
constexpr std::uint16_t kTagPhotometric = 262;
constexpr std::uint16_t kTagStripOffsets = 273;
constexpr std::uint16_t kTagSamplesPerPixel = 277;
constexpr std::uint16_t kTagRowsPerStrip = 278;
constexpr std::uint16_t kTagStripByteCounts = 279;
constexpr std::uint16_t kTagPlanarConfig = 284;
constexpr std::uint16_t kTagExtraSamples = 338;
constexpr std::uint16_t kTagSampleFormat = 339;

constexpr std::uint16_t kTypeByte = 1;
constexpr std::uint16_t kTypeShort = 3;
constexpr std::uint16_t kTypeLong = 4;

std::size_t type_size(std::uint16_t type) {
  switch (type) {
    case kTypeByte: return 1;
    case kTypeShort: return 2;
    case kTypeLong: return 4;
    default: return 0;
  }
}

[[noreturn]] void malformed(const std::filesystem::path& path,
                            const std::string& what) {
  throw format_error("malformed TIFF (" + what + "): " + path.string());
}

class Reader {
 public:
  Reader(const std::vector<unsigned char>& data,
         const std::filesystem::path& path)
      : data_(data), path_(path) {}

  std::uint16_t u16(std::size_t at) const {
    check(at, 2);
    std::uint16_t v;
    std::memcpy(&v, data_.data() + at, 2);
    return v;
  }

  std::uint32_t u32(std::size_t at) const {
    check(at, 4);
    std::uint32_t v;
    std::memcpy(&v, data_.data() + at, 4);
    return v;
  }

  const unsigned char* bytes(std::size_t at, std::size_t count) const {
    check(at, count);
    return data_.data() + at;
  }

  void check(std::size_t at, std::size_t count) const {
    if (at + count > data_.size() || at + count < at) {
      malformed(path_, "truncated");
    }
  }

 private:
  const std::vector<unsigned char>& data_;
  const std::filesystem::path& path_;
};

struct Entry {
  std::uint16_t type = 0;
  std::uint32_t count = 0;
  std::size_t value_at = 0;  // absolute offset of the value bytes
};

// Unsigned element i of an entry, whatever its storage type.
std::uint32_t entry_value(const Reader& r, const Entry& e, std::uint32_t i,
                          const std::filesystem::path& path) {
  if (i >= e.count) malformed(path, "index out of range");
  const std::size_t at = e.value_at + i * type_size(e.type);
  switch (e.type) {
    case kTypeByte: return *r.bytes(at, 1);
    case kTypeShort: return r.u16(at);
    case kTypeLong: return r.u32(at);
    default: malformed(path, "unsupported field type");
  }
}

void append_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  unsigned char b[2];
  std::memcpy(b, &v, 2);
  out.insert(out.end(), b, b + 2);
}

void append_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  unsigned char b[4];
  std::memcpy(b, &v, 4);
  out.insert(out.end(), b, b + 4);
}

struct IfdEntry {
  std::uint16_t tag;
  std::uint16_t type;
  std::uint32_t count;
  std::uint32_t value;  // inline value or absolute offset
};

void append_entry(std::vector<unsigned char>& out, const IfdEntry& e) {
  append_u16(out, e.tag);
  append_u16(out, e.type);
  append_u32(out, e.count);
  append_u32(out, e.value);
}

// Two SHORT values packed into the 4-byte value slot.
std::uint32_t pack_shorts(std::uint16_t a, std::uint16_t b) {
  return static_cast<std::uint32_t>(a) |
         (static_cast<std::uint32_t>(b) << 16);
}

}  // namespace

RawRaster read_tiff(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path.string());
  std::vector<unsigned char> data(
      (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw io_error("read failed: " + path.string());

  Reader r(data, path);
  if (data.size() < 8) malformed(path, "truncated");
  if (data[0] == 'M' && data[1] == 'M') {
    throw format_error("big-endian TIFF not supported: " + path.string());
  }
  if (data[0] != 'I' || data[1] != 'I' || r.u16(2) != 42) {
    throw format_error("not a TIFF file: " + path.string());
  }

  const std::uint32_t ifd_at = r.u32(4);
  const std::uint16_t entry_count = r.u16(ifd_at);
  if (entry_count == 0) malformed(path, "empty IFD");

  auto find = [&](std::uint16_t tag) -> Entry {
    for (std::uint16_t i = 0; i < entry_count; ++i) {
      const std::size_t at = ifd_at + 2 + i * 12u;
      if (r.u16(at) != tag) continue;
      Entry e;
      e.type = r.u16(at + 2);
      e.count = r.u32(at + 4);
      const std::size_t bytes = type_size(e.type) * e.count;
      if (bytes == 0) malformed(path, "unsupported field type");
      e.value_at = bytes <= 4 ? at + 8 : r.u32(at + 8);
      r.check(e.value_at, bytes);
      return e;
    }
    return Entry{};
  };

  auto scalar = [&](std::uint16_t tag, std::uint32_t fallback,
                    bool required) -> std::uint32_t {
    Entry e = find(tag);
    if (e.type == 0) {
      if (required) malformed(path, "missing tag " + std::to_string(tag));
      return fallback;
    }
    return entry_value(r, e, 0, path);
  };

  const std::uint32_t width = scalar(kTagWidth, 0, true);
  const std::uint32_t height = scalar(kTagHeight, 0, true);
  const std::uint32_t channels = scalar(kTagSamplesPerPixel, 1, false);
  if (width == 0 || height == 0) malformed(path, "zero dimensions");
  if (channels < 1 || channels > 3) {
    throw format_error("unsupported TIFF sample count: " + path.string());
  }
  if (scalar(kTagCompression, 1, false) != 1) {
    throw format_error("compressed TIFF not supported: " + path.string());
  }
  if (scalar(kTagPlanarConfig, 1, false) != 1) {
    throw format_error("planar TIFF not supported: " + path.string());
  }

  const Entry bits_entry = find(kTagBitsPerSample);
  const std::uint32_t bits =
      bits_entry.type == 0 ? 8 : entry_value(r, bits_entry, 0, path);
  if (bits_entry.type != 0) {
    for (std::uint32_t i = 1; i < bits_entry.count; ++i) {
      if (entry_value(r, bits_entry, i, path) != bits) {
        malformed(path, "mixed bits per sample");
      }
    }
  }
  const std::uint32_t sample_format = scalar(kTagSampleFormat, 1, false);

  bool is_float = false;
  if (bits == 32 && sample_format == 3) {
    is_float = true;
  } else if ((bits == 8 || bits == 16) && sample_format == 1) {
    is_float = false;
  } else {
    throw format_error("unsupported TIFF sample type: " + path.string());
  }

  const Entry offsets = find(kTagStripOffsets);
  const Entry counts = find(kTagStripByteCounts);
  if (offsets.type == 0 || counts.type == 0 || offsets.count != counts.count) {
    malformed(path, "strip layout");
  }

  RawRaster out;
  out.width = static_cast<int>(width);
  out.height = static_cast<int>(height);
  out.channels = static_cast<int>(channels);
  out.bit_depth = static_cast<int>(bits);
  out.is_float = is_float;
  out.samples.resize(out.sample_count());

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t expected =
      out.sample_count() * bytes_per_sample;

  std::size_t written = 0;
  for (std::uint32_t s = 0; s < offsets.count; ++s) {
    const std::uint32_t strip_at = entry_value(r, offsets, s, path);
    const std::uint32_t strip_bytes = entry_value(r, counts, s, path);
    if (strip_bytes % bytes_per_sample != 0 ||
        written + strip_bytes > expected) {
      malformed(path, "strip sizes");
    }
    const unsigned char* src = r.bytes(strip_at, strip_bytes);
    double* dst = out.samples.data() + written / bytes_per_sample;
    const std::size_t n = strip_bytes / bytes_per_sample;
    if (bits == 8) {
      for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] / 255.0;
    } else if (bits == 16) {
      for (std::size_t i = 0; i < n; ++i) {
        std::uint16_t code;
        std::memcpy(&code, src + 2 * i, 2);
        dst[i] = code / 65535.0;
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        float v;
        std::memcpy(&v, src + 4 * i, 4);
        dst[i] = v;
      }
    }
    written += strip_bytes;
  }
  if (written != expected) malformed(path, "incomplete pixel data");
  return out;
}

void write_tiff(const std::filesystem::path& path, const RawRaster& raster,
                TiffSampleType type) {
  if (raster.width <= 0 || raster.height <= 0 ||
      raster.channels < 1 || raster.channels > 3 ||
      raster.samples.size() != raster.sample_count()) {
    throw argument_error("inconsistent raster dimensions");
  }

  const auto channels = static_cast<std::uint16_t>(raster.channels);
  const bool is_float = type == TiffSampleType::float32;
  const std::uint16_t bits = type == TiffSampleType::uint8 ? 8
                             : type == TiffSampleType::uint16 ? 16
                                                              : 32;
  const std::uint16_t format_code = is_float ? 3 : 1;
  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t data_bytes = raster.sample_count() * bytes_per_sample;

  const std::uint16_t entry_count = channels == 2 ? 12 : 11;
  const std::size_t ifd_bytes = 2 + entry_count * 12u + 4;
  std::size_t cursor = 8 + ifd_bytes;

  // SHORT arrays longer than two values live outside the IFD.
  std::uint32_t bits_value = pack_shorts(bits, channels >= 2 ? bits : 0);
  std::uint32_t format_value =
      pack_shorts(format_code, channels >= 2 ? format_code : 0);
  std::size_t bits_array_at = 0;
  std::size_t format_array_at = 0;
  if (channels == 3) {
    bits_array_at = cursor;
    cursor += channels * 2;
    format_array_at = cursor;
    cursor += channels * 2;
    bits_value = static_cast<std::uint32_t>(bits_array_at);
    format_value = static_cast<std::uint32_t>(format_array_at);
  }
  cursor = (cursor + 3) & ~std::size_t{3};
  const std::size_t strip_at = cursor;

  std::vector<unsigned char> out;
  out.reserve(strip_at + data_bytes);
  out.push_back('I');
  out.push_back('I');
  append_u16(out, 42);
  append_u32(out, 8);

  append_u16(out, entry_count);
  append_entry(out, {kTagWidth, kTypeLong, 1,
                     static_cast<std::uint32_t>(raster.width)});
  append_entry(out, {kTagHeight, kTypeLong, 1,
                     static_cast<std::uint32_t>(raster.height)});
  append_entry(out, {kTagBitsPerSample, kTypeShort, channels, bits_value});
  append_entry(out, {kTagCompression, kTypeShort, 1, 1});
  append_entry(out, {kTagPhotometric, kTypeShort, 1,
                     channels == 3 ? 2u : 1u});
  append_entry(out, {kTagStripOffsets, kTypeLong, 1,
                     static_cast<std::uint32_t>(strip_at)});
  append_entry(out, {kTagSamplesPerPixel, kTypeShort, 1, channels});
  append_entry(out, {kTagRowsPerStrip, kTypeLong, 1,
                     static_cast<std::uint32_t>(raster.height)});
  append_entry(out, {kTagStripByteCounts, kTypeLong, 1,
                     static_cast<std::uint32_t>(data_bytes)});
  append_entry(out, {kTagPlanarConfig, kTypeShort, 1, 1});
  if (channels == 2) {
    append_entry(out, {kTagExtraSamples, kTypeShort, 1, 0});
  }
  append_entry(out, {kTagSampleFormat, kTypeShort, channels, format_value});
  append_u32(out, 0);

  if (channels == 3) {
    for (int i = 0; i < 3; ++i) append_u16(out, bits);
    for (int i = 0; i < 3; ++i) append_u16(out, format_code);
  }
  out.resize(strip_at, 0);

  out.resize(strip_at + data_bytes);
  unsigned char* dst = out.data() + strip_at;
  if (bits == 8) {
    for (std::size_t i = 0; i < raster.samples.size(); ++i) {
      double v = raster.samples[i];
      v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
      dst[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
  } else if (bits == 16) {
    for (std::size_t i = 0; i < raster.samples.size(); ++i) {
      double v = raster.samples[i];
      v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
      const auto code = static_cast<std::uint16_t>(std::lround(v * 65535.0));
      std::memcpy(dst + 2 * i, &code, 2);
    }
  } else {
    for (std::size_t i = 0; i < raster.samples.size(); ++i) {
      const auto v = static_cast<float>(raster.samples[i]);
      std::memcpy(dst + 4 * i, &v, 4);
    }
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw io_error("cannot open " + path.string());
  file.write(reinterpret_cast<const char*>(out.data()),
             static_cast<std::streamsize>(out.size()));
  if (!file) throw io_error("write failed: " + path.string());
}

}  // namespace abysslight
