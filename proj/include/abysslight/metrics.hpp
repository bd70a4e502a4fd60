#ifndef ABYSSLIGHT_METRICS_HPP
#define ABYSSLIGHT_METRICS_HPP

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <vector>

#include "abysslight/image.hpp"

namespace abysslight {

// Planar mapping between frame pixel coordinates and seafloor meters.
// Pixel coordinates follow the index convention: pixel (i, j) is centered
// at coordinate (i, j). Stored as the forward homography (pixels to meters)
// with its inverse; dense correspondence maps reduce to the same form via a
// least-squares fit, which is exact when the scene is a plane.
class FrameMapping {
 public:
  static FrameMapping from_homography(const std::array<double, 9>& forward);
  static FrameMapping from_correspondence(const ImagePlane& u,
                                          const ImagePlane& v);

  void to_mosaic(double px, double py, double& u, double& v) const;
  void to_frame(double u, double v, double& px, double& py) const;

  // Linear extent of one pixel on the seafloor at the given pixel, meters.
  double pixel_scale(double px, double py) const;

  const std::array<double, 9>& forward() const { return forward_; }

 private:
  FrameMapping() = default;
  std::array<double, 9> forward_{};
  std::array<double, 9> inverse_{};
};

struct Registration {
  std::vector<FrameMapping> mappings;
};

// Registration JSON: {"schema": 1, "homographies": [[9 numbers], ...]} with
// row-major frame-to-mosaic matrices, or {"maps": [tiff paths, ...]} naming
// correspondence maps. Relative paths resolve against the file's directory.
Registration load_registration(const std::filesystem::path& path);

struct ConsistencyReport {
  // Mean absolute deviation of samples from the mosaic mean, divided by the
  // standard deviation of the mosaic over the overlap, per channel.
  std::vector<double> channel_error;
  std::size_t overlap_pixel_count = 0;  // mosaic cells covered >= 2 times
  // Per frame, per channel, the frame's own deviations under the same
  // normalization.
  std::vector<std::vector<double>> frame_error;
};

// Optional predicate over seafloor coordinates restricting which mosaic
// cells the metric aggregates, for region-split reporting.
using RegionMask = std::function<bool(double u, double v)>;

ConsistencyReport consistency_error(const std::vector<Frame>& frames,
                                    const Registration& reg,
                                    const RegionMask& region = {});

// Per channel: RMSE of s* times restored against truth over the mask,
// divided by the mean of truth, where s* is the closed-form least-squares
// scale. mask of nullptr means every pixel. trim_fraction in [0, 1) drops
// that share of the worst squared residuals per channel, then refits,
// shielding the score from sparse outliers.
std::vector<double> scale_invariant_rmse(const Frame& restored,
                                         const Frame& truth,
                                         const ImagePlane* mask = nullptr,
                                         double trim_fraction = 0.0);

// Two-band mosaic blend: per frame, a Gaussian low band (sigma = frame
// width / 16) is averaged under a rectangular center-to-boundary weight;
// the high band comes from the highest-weight frame per mosaic pixel.
Frame composite(const std::vector<Frame>& frames, const Registration& reg);

}  // namespace abysslight

#endif
