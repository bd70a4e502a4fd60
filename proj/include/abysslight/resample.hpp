#ifndef ABYSSLIGHT_RESAMPLE_HPP
#define ABYSSLIGHT_RESAMPLE_HPP

#include "abysslight/image.hpp"

namespace abysslight {

// Box-mean reduction by an integer factor. Output dimensions are
// ceil(dim / factor); partial boxes at the right/bottom edge average
// over the pixels actually present instead of padding.
ImagePlane downsample(const ImagePlane& plane, int factor);

// Bilinear enlargement to target_w x target_h with the align-centers
// convention: sample i of an n-pixel axis sits at (i + 0.5) / n, which
// keeps a field estimated at 1/f scale registered with the full-resolution
// frame it later divides. Coordinates outside the source grid clamp to the
// edge samples. Constant planes map to constant planes exactly.
ImagePlane upsample(const ImagePlane& plane, int target_w, int target_h);

}  // namespace abysslight

#endif
