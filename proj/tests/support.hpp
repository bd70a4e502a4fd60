#ifndef ABYSSLIGHT_TESTS_SUPPORT_HPP
#define ABYSSLIGHT_TESTS_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "abysslight/image.hpp"

namespace testsupport {

// Unique scratch directory, removed with its contents on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& label) {
    std::random_device rd;
    std::uint64_t tag = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    path_ = std::filesystem::temp_directory_path() /
            (label + "-" + std::to_string(tag));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

inline abysslight::ImagePlane random_plane(int width, int height,
                                           std::uint64_t seed,
                                           double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  abysslight::ImagePlane plane(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) plane.at(x, y) = dist(rng);
  return plane;
}

inline abysslight::Frame random_frame(int width, int height, int channels,
                                      std::uint64_t seed, double lo = 0.0,
                                      double hi = 1.0) {
  abysslight::Frame frame;
  for (int c = 0; c < channels; ++c)
    frame.planes.push_back(random_plane(width, height, seed + 1000 * c, lo, hi));
  return frame;
}

// Oracle median: full sort, midpoint of the central pair for even counts.
inline double sort_median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

inline double max_abs_diff(const abysslight::ImagePlane& a,
                           const abysslight::ImagePlane& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::fabs(a.data()[i] - b.data()[i]));
  return worst;
}

inline double max_abs_diff(const abysslight::Frame& a,
                           const abysslight::Frame& b) {
  double worst = 0.0;
  for (int c = 0; c < a.channels(); ++c)
    worst = std::max(worst, max_abs_diff(a.planes[c], b.planes[c]));
  return worst;
}

inline bool bit_identical(const abysslight::ImagePlane& a,
                          const abysslight::ImagePlane& b) {
  if (!a.same_size(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

inline bool bit_identical(const abysslight::Frame& a,
                          const abysslight::Frame& b) {
  if (a.channels() != b.channels()) return false;
  for (int c = 0; c < a.channels(); ++c)
    if (!bit_identical(a.planes[c], b.planes[c])) return false;
  return true;
}

}  // namespace testsupport

#endif
