#include "abysslight/robust_stats.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "abysslight/errors.hpp"
#include "abysslight/threading.hpp"

namespace abysslight {

void WindowSpec::validate() const {
  if (length < 1 || length % 2 == 0) {
    throw argument_error("window length must be a positive odd integer");
  }
  if (spatial_radius < 0) {
    throw argument_error("spatial radius must be non-negative");
  }
  if (downsample_factor < 1) {
    throw argument_error("downsample factor must be >= 1");
  }
}

ContaminationModel::ContaminationModel(double c) : rate(c) {
  if (!(c > 0.0 && c < 0.5)) {
    throw argument_error(
        "contamination rate must lie in (0, 0.5); the median breaks at 0.5");
  }
}

namespace {

// Midpoint-of-central-order-statistics median, exact for any k.
double median_of(double* values, int k) {
  double* mid = values + k / 2;
  std::nth_element(values, mid, values + k);
  if (k % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(values, mid);
  return 0.5 * (lower + upper);
}

inline void order2(double& a, double& b) {
  if (b < a) std::swap(a, b);
}

// 19-exchange selection network for the median of 9 (Paeth's grid median).
double median9(double p0, double p1, double p2, double p3, double p4,
               double p5, double p6, double p7, double p8) {
  order2(p1, p2); order2(p4, p5); order2(p7, p8);
  order2(p0, p1); order2(p3, p4); order2(p6, p7);
  order2(p1, p2); order2(p4, p5); order2(p7, p8);
  order2(p0, p3); order2(p5, p8); order2(p4, p7);
  order2(p3, p6); order2(p1, p4); order2(p2, p5);
  order2(p4, p7); order2(p4, p2); order2(p6, p4);
  order2(p4, p2);
  return p4;
}

}  // namespace

ImagePlane temporal_median(const std::vector<ImagePlane>& stack) {
  if (stack.empty()) throw argument_error("temporal median of an empty stack");
  const ImagePlane& first = stack.front();
  for (const ImagePlane& plane : stack) {
    if (!plane.same_size(first)) {
      throw argument_error("temporal median stack has mismatched dimensions");
    }
  }
  const int k = static_cast<int>(stack.size());
  if (k == 1) return first;

  const int width = first.width();
  const int height = first.height();
  ImagePlane out(width, height);

  parallel_for(static_cast<std::size_t>(height),
               [&](std::size_t r0, std::size_t r1) {
    std::vector<double> scratch(static_cast<std::size_t>(k));
    for (std::size_t y = r0; y < r1; ++y) {
      double* orow = out.row(static_cast<int>(y));
      for (int x = 0; x < width; ++x) {
        for (int i = 0; i < k; ++i) {
          scratch[static_cast<std::size_t>(i)] =
              stack[static_cast<std::size_t>(i)].row(static_cast<int>(y))[x];
        }
        orow[x] = median_of(scratch.data(), k);
      }
    }
  });
  return out;
}

ImagePlane spatial_median(const ImagePlane& plane, int radius) {
  if (radius < 0) throw argument_error("spatial median radius must be >= 0");
  if (plane.empty()) throw argument_error("spatial median of an empty plane");
  if (radius == 0) return plane;

  const int width = plane.width();
  const int height = plane.height();
  ImagePlane out(width, height);

  const bool fast3x3 = radius == 1 && width >= 3 && height >= 3;
  const int side = 2 * radius + 1;

  parallel_for(static_cast<std::size_t>(height),
               [&](std::size_t r0, std::size_t r1) {
    std::vector<double> scratch(static_cast<std::size_t>(side) * side);
    auto clipped = [&](int x, int y) {
      const int x0 = std::max(0, x - radius);
      const int x1 = std::min(width - 1, x + radius);
      const int y0 = std::max(0, y - radius);
      const int y1 = std::min(height - 1, y + radius);
      int count = 0;
      for (int ny = y0; ny <= y1; ++ny) {
        const double* srow = plane.row(ny);
        for (int nx = x0; nx <= x1; ++nx) {
          scratch[static_cast<std::size_t>(count++)] = srow[nx];
        }
      }
      return median_of(scratch.data(), count);
    };

    for (std::size_t yy = r0; yy < r1; ++yy) {
      const int y = static_cast<int>(yy);
      double* orow = out.row(y);
      if (fast3x3 && y >= 1 && y < height - 1) {
        const double* above = plane.row(y - 1);
        const double* here = plane.row(y);
        const double* below = plane.row(y + 1);
        for (int x = 1; x < width - 1; ++x) {
          orow[x] = median9(above[x - 1], above[x], above[x + 1],
                            here[x - 1], here[x], here[x + 1],
                            below[x - 1], below[x], below[x + 1]);
        }
        orow[0] = clipped(0, y);
        orow[width - 1] = clipped(width - 1, y);
      } else {
        for (int x = 0; x < width; ++x) orow[x] = clipped(x, y);
      }
    }
  });
  return out;
}

double p_half(const ContaminationModel& c, int n) {
  if (n < 1) throw argument_error("window length must be >= 1");
  const double log_c = std::log(c.rate);
  const double log_q = std::log1p(-c.rate);
  const double log_fact_n = std::lgamma(n + 1.0);

  const int threshold = (n + 1) / 2;  // ceil(n/2) contaminated samples break
  double sum = 0.0;
  for (int u = n; u >= threshold; --u) {
    const double log_term = log_fact_n - std::lgamma(u + 1.0) -
                            std::lgamma(n - u + 1.0) + u * log_c +
                            (n - u) * log_q;
    sum += std::exp(log_term);
  }
  return std::min(sum, 1.0);
}

int required_window(const ContaminationModel& c, double target) {
  if (!(target > 0.0 && target < 1.0)) {
    throw argument_error("target probability must lie in (0, 1)");
  }
  int n = 1;
  while (p_half(c, n) > target) n += 2;
  return n;
}

}  // namespace abysslight
