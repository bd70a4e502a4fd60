#include "abysslight/resample.hpp"

#include <algorithm>
#include <cmath>

#include "abysslight/errors.hpp"
#include "abysslight/threading.hpp"

namespace abysslight {

ImagePlane downsample(const ImagePlane& plane, int factor) {
  if (factor < 1) throw argument_error("downsample factor must be >= 1");
  if (plane.empty()) throw argument_error("downsample: empty plane");
  if (factor == 1) return plane;

  const int sw = plane.width();
  const int sh = plane.height();
  const int dw = (sw + factor - 1) / factor;
  const int dh = (sh + factor - 1) / factor;
  ImagePlane out(dw, dh);

  parallel_for(static_cast<std::size_t>(dh), [&](std::size_t r0, std::size_t r1) {
    for (std::size_t oy = r0; oy < r1; ++oy) {
      const int y0 = static_cast<int>(oy) * factor;
      const int y1 = std::min(y0 + factor, sh);
      double* orow = out.row(static_cast<int>(oy));
      for (int ox = 0; ox < dw; ++ox) {
        const int x0 = ox * factor;
        const int x1 = std::min(x0 + factor, sw);
        double sum = 0.0;
        for (int y = y0; y < y1; ++y) {
          const double* srow = plane.row(y);
          for (int x = x0; x < x1; ++x) sum += srow[x];
        }
        orow[ox] = sum / ((y1 - y0) * (x1 - x0));
      }
    }
  });
  return out;
}

ImagePlane upsample(const ImagePlane& plane, int target_w, int target_h) {
  if (target_w <= 0 || target_h <= 0)
    throw argument_error("upsample target dimensions must be positive");
  if (plane.empty()) throw argument_error("upsample: empty plane");
  if (target_w < plane.width() || target_h < plane.height())
    throw argument_error("upsample target must not be smaller than the source");
  if (target_w == plane.width() && target_h == plane.height()) return plane;

  const int sw = plane.width();
  const int sh = plane.height();
  ImagePlane out(target_w, target_h);

  const double sx = static_cast<double>(sw) / target_w;
  const double sy = static_cast<double>(sh) / target_h;

  parallel_for(static_cast<std::size_t>(target_h),
               [&](std::size_t r0, std::size_t r1) {
    for (std::size_t oy = r0; oy < r1; ++oy) {
      double fy = (static_cast<double>(oy) + 0.5) * sy - 0.5;
      fy = std::clamp(fy, 0.0, static_cast<double>(sh - 1));
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, sh - 1);
      const double wy = fy - y0;
      const double* row0 = plane.row(y0);
      const double* row1 = plane.row(y1);
      double* orow = out.row(static_cast<int>(oy));
      for (int ox = 0; ox < target_w; ++ox) {
        double fx = (ox + 0.5) * sx - 0.5;
        fx = std::clamp(fx, 0.0, static_cast<double>(sw - 1));
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, sw - 1);
        const double wx = fx - x0;
        const double top = row0[x0] + (row0[x1] - row0[x0]) * wx;
        const double bot = row1[x0] + (row1[x1] - row1[x0]) * wx;
        orow[ox] = top + (bot - top) * wy;
      }
    }
  });
  return out;
}

}  // namespace abysslight
