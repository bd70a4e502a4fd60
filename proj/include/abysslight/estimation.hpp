#ifndef ABYSSLIGHT_ESTIMATION_HPP
#define ABYSSLIGHT_ESTIMATION_HPP

#include <vector>

#include "abysslight/image.hpp"
#include "abysslight/robust_stats.hpp"

namespace abysslight {

// Target seafloor albedo used as the white-balance reference when solving
// for the illumination factor. Restored output is correct up to this
// per-channel scale.
struct ReferenceColor {
  std::vector<double> channels;

  static ReferenceColor grey(int channel_count, double value = 0.5);
  void validate() const;
};

struct EnhancementConfig {
  WindowSpec window;
  ReferenceColor reference;  // empty = neutral grey 0.5 per stream channel
  double epsilon = 1e-4;     // division floor in [0,1] radiance units
  bool clamp_output = false;

  void validate() const;
};

// Additive term: per-channel temporal median over b >= 3 frames of pure
// water column. Transient particles vanish wherever they cover fewer than
// half the samples at a pixel.
ScatterField estimate_scatter(const std::vector<Frame>& water_frames);

// Noise-reduction and scale chain applied to every plane entering the
// temporal estimate: spatial median, then box downsample.
ImagePlane preprocess_plane(const ImagePlane& plane, const WindowSpec& spec);

// Scatter reduced with the same chain as the frames so the subtraction in
// the factor solve is resolution-consistent. Computed once per stream.
ScatterField preprocess_scatter(const ScatterField& scatter,
                                const WindowSpec& spec);

// Reduced-resolution frame in which moving objects are suppressed, plus the
// full resolution it stands for.
struct AllSeafloor {
  Frame low;
  int full_width = 0;
  int full_height = 0;
};

// Per channel: preprocess every frame in the window, then take the
// per-pixel temporal median. Window length 3..spec.length; lengths below
// spec.length occur only at stream boundaries.
AllSeafloor estimate_allseafloor(const std::vector<Frame>& window,
                                 const WindowSpec& spec);

// Same estimate over already-preprocessed low-resolution frames (the
// streaming path caches those).
AllSeafloor allseafloor_from_preprocessed(const std::vector<const Frame*>& window,
                                          int full_width, int full_height,
                                          const WindowSpec& spec);

// Solves the multiplicative term: F = max(allseafloor - scatter, 0) / A_ref
// per channel at reduced resolution, flags pixels whose numerator falls
// below epsilon, then upsamples to full resolution. A full-resolution pixel
// is valid only where it interpolates exclusively valid texels.
FactorField compute_factor(const AllSeafloor& allseafloor,
                           const ScatterField& low_scatter,
                           const ReferenceColor& reference, double epsilon);

struct Enhanced {
  Frame frame;
  ImagePlane coverage;  // 1 where the factor was valid, 0 elsewhere
};

// Removes both effects: max(frame - scatter, 0) / max(factor, epsilon).
// Invalid-factor pixels emit 0 across channels and clear the coverage bit.
Enhanced enhance(const Frame& frame, const ScatterField& scatter,
                 const FactorField& factor, const EnhancementConfig& config);

}  // namespace abysslight

#endif
