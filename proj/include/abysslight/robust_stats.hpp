#ifndef ABYSSLIGHT_ROBUST_STATS_HPP
#define ABYSSLIGHT_ROBUST_STATS_HPP

#include <vector>

#include "abysslight/image.hpp"

namespace abysslight {

// Parameters of the sliding-window estimator. The temporal window length
// must be odd so each output frame has a well-defined center.
struct WindowSpec {
  int length = 7;
  int spatial_radius = 1;
  int downsample_factor = 8;

  void validate() const;
};

// Fraction of samples at a pixel expected to show transient objects rather
// than seafloor. Strictly below 0.5, the median's breakdown point.
struct ContaminationModel {
  double rate = 0.0;

  explicit ContaminationModel(double c);
};

// Per-pixel exact median across the stack. Even stack lengths (reachable
// only at stream boundaries) use the midpoint of the two central order
// statistics.
ImagePlane temporal_median(const std::vector<ImagePlane>& stack);

// Median over the (2r+1)^2 neighborhood clipped to the image bounds.
// Radius 0 is the identity.
ImagePlane spatial_median(const ImagePlane& plane, int radius);

// Probability that at least ceil(n/2) of n independent samples are
// contaminated, i.e. the per-pixel median breaks. Evaluated through
// log-gamma binomial terms so large n stays stable.
double p_half(const ContaminationModel& c, int n);

// Smallest odd n with p_half(c, n) <= target.
int required_window(const ContaminationModel& c, double target);

}  // namespace abysslight

#endif
