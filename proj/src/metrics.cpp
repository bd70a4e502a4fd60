#include "abysslight/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "abysslight/errors.hpp"
#include "abysslight/image_io.hpp"
#include "abysslight/resample.hpp"
#include "abysslight/threading.hpp"

namespace abysslight {

namespace {

using nlohmann::json;

void apply_homography(const std::array<double, 9>& h, double x, double y,
                      double& ox, double& oy) {
  const double w = h[6] * x + h[7] * y + h[8];
  ox = (h[0] * x + h[1] * y + h[2]) / w;
  oy = (h[3] * x + h[4] * y + h[5]) / w;
}

std::array<double, 9> invert3(const std::array<double, 9>& m) {
  const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) -
                     m[1] * (m[3] * m[8] - m[5] * m[6]) +
                     m[2] * (m[3] * m[7] - m[4] * m[6]);
  const double inv = 1.0 / det;
  const std::array<double, 9> out{
      (m[4] * m[8] - m[5] * m[7]) * inv, (m[2] * m[7] - m[1] * m[8]) * inv,
      (m[1] * m[5] - m[2] * m[4]) * inv, (m[5] * m[6] - m[3] * m[8]) * inv,
      (m[0] * m[8] - m[2] * m[6]) * inv, (m[2] * m[3] - m[0] * m[5]) * inv,
      (m[3] * m[7] - m[4] * m[6]) * inv, (m[1] * m[6] - m[0] * m[7]) * inv,
      (m[0] * m[4] - m[1] * m[3]) * inv};
  for (double value : out) {
    if (!std::isfinite(value)) {
      throw argument_error("registration mapping is not invertible");
    }
  }
  return out;
}

// Gaussian elimination with partial pivoting for the small dense systems of
// the homography fit.
void solve_linear(std::vector<double>& a, std::vector<double>& b, int n) {
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int row = col + 1; row < n; ++row) {
      if (std::abs(a[row * n + col]) > std::abs(a[pivot * n + col])) {
        pivot = row;
      }
    }
    if (std::abs(a[pivot * n + col]) < 1e-14) {
      throw argument_error("correspondence map is degenerate");
    }
    if (pivot != col) {
      for (int k = 0; k < n; ++k) std::swap(a[col * n + k], a[pivot * n + k]);
      std::swap(b[col], b[pivot]);
    }
    const double diag = a[col * n + col];
    for (int row = col + 1; row < n; ++row) {
      const double f = a[row * n + col] / diag;
      if (f == 0.0) continue;
      for (int k = col; k < n; ++k) a[row * n + k] -= f * a[col * n + k];
      b[row] -= f * b[col];
    }
  }
  for (int row = n - 1; row >= 0; --row) {
    double sum = b[row];
    for (int k = row + 1; k < n; ++k) sum -= a[row * n + k] * b[k];
    b[row] = sum / a[row * n + row];
  }
}

struct Normalizer {
  double cx = 0.0, cy = 0.0, scale = 1.0;
  void apply(double x, double y, double& ox, double& oy) const {
    ox = (x - cx) * scale;
    oy = (y - cy) * scale;
  }
};

Normalizer fit_normalizer(const std::vector<double>& xs,
                          const std::vector<double>& ys) {
  Normalizer norm;
  norm.cx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  norm.cy = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
  double mean_dist = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mean_dist += std::hypot(xs[i] - norm.cx, ys[i] - norm.cy);
  }
  mean_dist /= xs.size();
  norm.scale = mean_dist > 0.0 ? std::sqrt(2.0) / mean_dist : 1.0;
  return norm;
}

// 2-level box pyramid and the coordinate bookkeeping for sampling it.
struct FramePyramid {
  std::vector<ImagePlane> level0;
  std::vector<ImagePlane> level1;
  int width = 0;
  int height = 0;
  int level = 0;

  double sample(int channel, double px, double py) const {
    const std::vector<ImagePlane>& planes = level == 0 ? level0 : level1;
    double x = px;
    double y = py;
    if (level == 1) {
      x = (px - 0.5) / 2.0;
      y = (py - 0.5) / 2.0;
    }
    const ImagePlane& plane = planes[static_cast<std::size_t>(channel)];
    const int w = plane.width();
    const int h = plane.height();
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const int x0 = static_cast<int>(x);
    const int y0 = static_cast<int>(y);
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double wx = x - x0;
    const double wy = y - y0;
    const double top =
        plane.at(x0, y0) + (plane.at(x1, y0) - plane.at(x0, y0)) * wx;
    const double bot =
        plane.at(x0, y1) + (plane.at(x1, y1) - plane.at(x0, y1)) * wx;
    return top + (bot - top) * wy;
  }
};

struct MosaicLayout {
  double u0 = 0.0;
  double v0 = 0.0;
  double gsd = 0.0;  // meters per mosaic cell
  int nx = 0;
  int ny = 0;
};

MosaicLayout plan_mosaic(const std::vector<Frame>& frames,
                         const Registration& reg) {
  double umin = std::numeric_limits<double>::infinity();
  double vmin = std::numeric_limits<double>::infinity();
  double umax = -umin;
  double vmax = -vmin;
  std::vector<double> scales;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const double w = frames[f].width();
    const double h = frames[f].height();
    const double corners[4][2] = {{-0.5, -0.5},
                                  {w - 0.5, -0.5},
                                  {-0.5, h - 0.5},
                                  {w - 0.5, h - 0.5}};
    for (const auto& corner : corners) {
      double u = 0.0, v = 0.0;
      reg.mappings[f].to_mosaic(corner[0], corner[1], u, v);
      umin = std::min(umin, u);
      umax = std::max(umax, u);
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
    scales.push_back(
        reg.mappings[f].pixel_scale((w - 1.0) / 2.0, (h - 1.0) / 2.0));
  }
  std::sort(scales.begin(), scales.end());
  const std::size_t n = scales.size();
  const double gsd = n % 2 == 1
                         ? scales[n / 2]
                         : 0.5 * (scales[n / 2 - 1] + scales[n / 2]);
  if (!(gsd > 0.0) || !std::isfinite(umax - umin) ||
      !std::isfinite(vmax - vmin)) {
    throw metric_error("registration does not span a valid mosaic extent");
  }
  MosaicLayout layout;
  layout.gsd = gsd;
  layout.u0 = umin;
  layout.v0 = vmin;
  layout.nx = std::max(1, static_cast<int>(std::ceil((umax - umin) / gsd)));
  layout.ny = std::max(1, static_cast<int>(std::ceil((vmax - vmin) / gsd)));
  if (static_cast<std::int64_t>(layout.nx) * layout.ny > 64LL * 1024 * 1024) {
    throw metric_error("mosaic extent too large for evaluation");
  }
  return layout;
}

std::vector<FramePyramid> build_pyramids(const std::vector<Frame>& frames,
                                         const Registration& reg,
                                         double gsd) {
  std::vector<FramePyramid> pyramids;
  pyramids.reserve(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    FramePyramid pyr;
    pyr.width = frames[f].width();
    pyr.height = frames[f].height();
    const double scale = reg.mappings[f].pixel_scale(
        (pyr.width - 1.0) / 2.0, (pyr.height - 1.0) / 2.0);
    pyr.level = gsd / scale >= 2.0 ? 1 : 0;
    for (const ImagePlane& plane : frames[f].planes) {
      pyr.level0.push_back(plane);
      if (pyr.level == 1) pyr.level1.push_back(downsample(plane, 2));
    }
    pyramids.push_back(std::move(pyr));
  }
  return pyramids;
}

void check_metric_inputs(const std::vector<Frame>& frames,
                         const Registration& reg) {
  if (frames.empty()) throw argument_error("empty frame list");
  if (reg.mappings.size() != frames.size()) {
    throw argument_error("registration must map every frame");
  }
  const int channels = frames.front().channels();
  for (const Frame& frame : frames) {
    frame.validate("metric input");
    if (frame.channels() != channels) {
      throw argument_error("frames disagree on channel count");
    }
  }
}

json read_json_document(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw format_error("invalid JSON in " + path.string() + ": " + e.what());
  }
  return doc;
}

}  // namespace

FrameMapping FrameMapping::from_homography(
    const std::array<double, 9>& forward) {
  FrameMapping mapping;
  mapping.forward_ = forward;
  mapping.inverse_ = invert3(forward);
  return mapping;
}

FrameMapping FrameMapping::from_correspondence(const ImagePlane& u,
                                               const ImagePlane& v) {
  if (u.empty() || !u.same_size(v)) {
    throw argument_error("correspondence planes must match and be non-empty");
  }
  const int w = u.width();
  const int h = u.height();
  const int step = std::max(1, std::min(w, h) / 64);

  std::vector<double> px, py, mu, mv;
  for (int y = 0; y < h; y += step) {
    for (int x = 0; x < w; x += step) {
      const double su = u.at(x, y);
      const double sv = v.at(x, y);
      if (!std::isfinite(su) || !std::isfinite(sv)) continue;
      px.push_back(x);
      py.push_back(y);
      mu.push_back(su);
      mv.push_back(sv);
    }
  }
  if (px.size() < 8) {
    throw argument_error("correspondence map has too few valid pixels");
  }

  const Normalizer np = fit_normalizer(px, py);
  const Normalizer nm = fit_normalizer(mu, mv);

  // Least-squares homography with the bottom-right entry pinned to 1 in
  // normalized coordinates; normal equations of the direct linear system.
  std::vector<double> a(64, 0.0);
  std::vector<double> b(8, 0.0);
  for (std::size_t i = 0; i < px.size(); ++i) {
    double x, y, s, t;
    np.apply(px[i], py[i], x, y);
    nm.apply(mu[i], mv[i], s, t);
    const double rows[2][8] = {
        {x, y, 1.0, 0.0, 0.0, 0.0, -s * x, -s * y},
        {0.0, 0.0, 0.0, x, y, 1.0, -t * x, -t * y}};
    const double rhs[2] = {s, t};
    for (int r = 0; r < 2; ++r) {
      for (int j = 0; j < 8; ++j) {
        for (int k = 0; k < 8; ++k) {
          a[static_cast<std::size_t>(j) * 8 + k] += rows[r][j] * rows[r][k];
        }
        b[static_cast<std::size_t>(j)] += rows[r][j] * rhs[r];
      }
    }
  }
  solve_linear(a, b, 8);

  // Denormalize: H = Tm^-1 * Hn * Tp.
  const std::array<double, 9> hn{b[0], b[1], b[2], b[3], b[4],
                                 b[5], b[6], b[7], 1.0};
  const std::array<double, 9> tp{np.scale, 0.0, -np.scale * np.cx,
                                 0.0, np.scale, -np.scale * np.cy,
                                 0.0, 0.0, 1.0};
  const std::array<double, 9> tm_inv{1.0 / nm.scale, 0.0, nm.cx,
                                     0.0, 1.0 / nm.scale, nm.cy,
                                     0.0, 0.0, 1.0};
  auto mul = [](const std::array<double, 9>& lhs,
                const std::array<double, 9>& rhs) {
    std::array<double, 9> out{};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        for (int k = 0; k < 3; ++k) {
          out[static_cast<std::size_t>(r) * 3 + c] +=
              lhs[static_cast<std::size_t>(r) * 3 + k] *
              rhs[static_cast<std::size_t>(k) * 3 + c];
        }
      }
    }
    return out;
  };
  std::array<double, 9> forward = mul(tm_inv, mul(hn, tp));
  const double norm = forward[8] != 0.0 ? forward[8] : 1.0;
  for (double& value : forward) value /= norm;
  return from_homography(forward);
}

void FrameMapping::to_mosaic(double px, double py, double& u,
                             double& v) const {
  apply_homography(forward_, px, py, u, v);
}

void FrameMapping::to_frame(double u, double v, double& px,
                            double& py) const {
  apply_homography(inverse_, u, v, px, py);
}

double FrameMapping::pixel_scale(double px, double py) const {
  const std::array<double, 9>& h = forward_;
  const double d = h[6] * px + h[7] * py + h[8];
  const double nu = h[0] * px + h[1] * py + h[2];
  const double nv = h[3] * px + h[4] * py + h[5];
  const double dudx = (h[0] * d - nu * h[6]) / (d * d);
  const double dudy = (h[1] * d - nu * h[7]) / (d * d);
  const double dvdx = (h[3] * d - nv * h[6]) / (d * d);
  const double dvdy = (h[4] * d - nv * h[7]) / (d * d);
  return std::sqrt(std::abs(dudx * dvdy - dudy * dvdx));
}

Registration load_registration(const std::filesystem::path& path) {
  const json doc = read_json_document(path);
  if (!doc.is_object() || !doc.contains("schema") ||
      !doc["schema"].is_number_integer() || doc["schema"].get<int>() != 1) {
    throw format_error("registration: schema must be 1");
  }

  Registration reg;
  if (doc.contains("homographies")) {
    const json& list = doc["homographies"];
    if (!list.is_array() || list.empty()) {
      throw format_error("registration: homographies must be a non-empty array");
    }
    for (const json& entry : list) {
      if (!entry.is_array() || entry.size() != 9) {
        throw format_error("registration: each homography needs 9 numbers");
      }
      std::array<double, 9> h{};
      for (std::size_t i = 0; i < 9; ++i) {
        if (!entry[i].is_number()) {
          throw format_error("registration: each homography needs 9 numbers");
        }
        h[i] = entry[i].get<double>();
      }
      reg.mappings.push_back(FrameMapping::from_homography(h));
    }
  } else if (doc.contains("maps")) {
    const json& list = doc["maps"];
    if (!list.is_array() || list.empty()) {
      throw format_error("registration: maps must be a non-empty array");
    }
    for (const json& entry : list) {
      if (!entry.is_string()) {
        throw format_error("registration: maps must hold file paths");
      }
      std::filesystem::path map_path = entry.get<std::string>();
      if (map_path.is_relative()) {
        map_path = path.parent_path() / map_path;
      }
      const auto [u, v] = load_correspondence_map(map_path);
      reg.mappings.push_back(FrameMapping::from_correspondence(u, v));
    }
  } else {
    throw format_error("registration: needs homographies or maps");
  }
  return reg;
}

ConsistencyReport consistency_error(const std::vector<Frame>& frames,
                                    const Registration& reg,
                                    const RegionMask& region) {
  check_metric_inputs(frames, reg);
  if (frames.size() < 2) {
    throw argument_error("consistency needs at least two frames");
  }
  const int channels = frames.front().channels();
  const std::size_t frame_count = frames.size();
  const MosaicLayout layout = plan_mosaic(frames, reg);
  const std::vector<FramePyramid> pyramids =
      build_pyramids(frames, reg, layout.gsd);

  const std::size_t cells =
      static_cast<std::size_t>(layout.nx) * layout.ny;
  std::vector<std::uint32_t> coverage(cells, 0);
  std::vector<double> mean(cells * channels, 0.0);

  // Pass 1: per-cell coverage and mean color. Cells are independent, so any
  // row chunking yields identical results.
  parallel_for(static_cast<std::size_t>(layout.ny),
               [&](std::size_t r0, std::size_t r1) {
    for (std::size_t iy = r0; iy < r1; ++iy) {
      const double v = layout.v0 + (iy + 0.5) * layout.gsd;
      for (int ix = 0; ix < layout.nx; ++ix) {
        const double u = layout.u0 + (ix + 0.5) * layout.gsd;
        if (region && !region(u, v)) continue;
        const std::size_t cell = iy * layout.nx + ix;
        std::uint32_t count = 0;
        for (std::size_t f = 0; f < frame_count; ++f) {
          double px = 0.0, py = 0.0;
          reg.mappings[f].to_frame(u, v, px, py);
          if (px < 0.0 || py < 0.0 || px > pyramids[f].width - 1.0 ||
              py > pyramids[f].height - 1.0) {
            continue;
          }
          ++count;
          for (int c = 0; c < channels; ++c) {
            mean[cell * channels + static_cast<std::size_t>(c)] +=
                pyramids[f].sample(c, px, py);
          }
        }
        coverage[cell] = count;
        if (count > 0) {
          for (int c = 0; c < channels; ++c) {
            mean[cell * channels + static_cast<std::size_t>(c)] /= count;
          }
        }
      }
    }
  });

  // Pass 2: deviations against the mosaic mean, reduced per mosaic row so
  // the summation order never depends on the thread count.
  struct RowPartial {
    std::vector<double> abs_dev;        // per channel, cell-mean deviations
    std::vector<double> mosaic_sum;     // per channel
    std::vector<double> mosaic_sq;      // per channel
    std::vector<double> frame_abs;      // per frame * channel
    std::vector<std::size_t> frame_n;   // per frame
    std::size_t overlap = 0;
  };
  std::vector<RowPartial> rows(static_cast<std::size_t>(layout.ny));

  parallel_for(static_cast<std::size_t>(layout.ny),
               [&](std::size_t r0, std::size_t r1) {
    for (std::size_t iy = r0; iy < r1; ++iy) {
      RowPartial& row = rows[iy];
      row.abs_dev.assign(static_cast<std::size_t>(channels), 0.0);
      row.mosaic_sum.assign(static_cast<std::size_t>(channels), 0.0);
      row.mosaic_sq.assign(static_cast<std::size_t>(channels), 0.0);
      row.frame_abs.assign(frame_count * channels, 0.0);
      row.frame_n.assign(frame_count, 0);
      const double v = layout.v0 + (iy + 0.5) * layout.gsd;
      for (int ix = 0; ix < layout.nx; ++ix) {
        const std::size_t cell = iy * layout.nx + ix;
        if (coverage[cell] < 2) continue;
        const double u = layout.u0 + (ix + 0.5) * layout.gsd;
        ++row.overlap;
        for (int c = 0; c < channels; ++c) {
          const double m = mean[cell * channels + static_cast<std::size_t>(c)];
          row.mosaic_sum[static_cast<std::size_t>(c)] += m;
          row.mosaic_sq[static_cast<std::size_t>(c)] += m * m;
        }
        std::array<double, 3> cell_dev{};
        for (std::size_t f = 0; f < frame_count; ++f) {
          double px = 0.0, py = 0.0;
          reg.mappings[f].to_frame(u, v, px, py);
          if (px < 0.0 || py < 0.0 || px > pyramids[f].width - 1.0 ||
              py > pyramids[f].height - 1.0) {
            continue;
          }
          ++row.frame_n[f];
          for (int c = 0; c < channels; ++c) {
            const double dev = std::abs(
                pyramids[f].sample(c, px, py) -
                mean[cell * channels + static_cast<std::size_t>(c)]);
            cell_dev[static_cast<std::size_t>(c)] += dev;
            row.frame_abs[f * channels + static_cast<std::size_t>(c)] += dev;
          }
        }
        for (int c = 0; c < channels; ++c) {
          row.abs_dev[static_cast<std::size_t>(c)] +=
              cell_dev[static_cast<std::size_t>(c)] / coverage[cell];
        }
      }
    }
  });

  std::vector<double> abs_dev(static_cast<std::size_t>(channels), 0.0);
  std::vector<double> mosaic_sum(static_cast<std::size_t>(channels), 0.0);
  std::vector<double> mosaic_sq(static_cast<std::size_t>(channels), 0.0);
  std::vector<double> frame_abs(frame_count * channels, 0.0);
  std::vector<std::size_t> frame_n(frame_count, 0);
  std::size_t overlap = 0;
  for (const RowPartial& row : rows) {
    if (row.frame_n.empty()) continue;
    overlap += row.overlap;
    for (int c = 0; c < channels; ++c) {
      abs_dev[static_cast<std::size_t>(c)] +=
          row.abs_dev[static_cast<std::size_t>(c)];
      mosaic_sum[static_cast<std::size_t>(c)] +=
          row.mosaic_sum[static_cast<std::size_t>(c)];
      mosaic_sq[static_cast<std::size_t>(c)] +=
          row.mosaic_sq[static_cast<std::size_t>(c)];
    }
    for (std::size_t i = 0; i < frame_abs.size(); ++i) {
      frame_abs[i] += row.frame_abs[i];
    }
    for (std::size_t f = 0; f < frame_count; ++f) {
      frame_n[f] += row.frame_n[f];
    }
  }

  if (overlap == 0) {
    throw metric_error("no mosaic pixel is covered by two frames");
  }

  ConsistencyReport report;
  report.overlap_pixel_count = overlap;
  report.frame_error.assign(frame_count,
                            std::vector<double>(channels, 0.0));
  for (int c = 0; c < channels; ++c) {
    const std::size_t ci = static_cast<std::size_t>(c);
    const double m = mosaic_sum[ci] / overlap;
    const double var = std::max(0.0, mosaic_sq[ci] / overlap - m * m);
    const double sd = std::sqrt(var);
    const double mad = abs_dev[ci] / overlap;
    if (sd <= 1e-12) {
      if (mad <= 1e-12) {
        report.channel_error.push_back(0.0);
        continue;
      }
      throw metric_error("mosaic overlap has no variation to normalize by");
    }
    report.channel_error.push_back(mad / sd);
    for (std::size_t f = 0; f < frame_count; ++f) {
      if (frame_n[f] == 0) continue;
      report.frame_error[f][ci] = frame_abs[f * channels + ci] /
                                  static_cast<double>(frame_n[f]) / sd;
    }
  }
  return report;
}

std::vector<double> scale_invariant_rmse(const Frame& restored,
                                         const Frame& truth,
                                         const ImagePlane* mask,
                                         double trim_fraction) {
  restored.validate("restored frame");
  truth.validate("truth frame");
  if (restored.width() != truth.width() ||
      restored.height() != truth.height() ||
      restored.channels() != truth.channels()) {
    throw argument_error("restored and truth frames must match in shape");
  }
  if (mask && (mask->width() != truth.width() ||
               mask->height() != truth.height())) {
    throw argument_error("mask dimensions must match the frames");
  }
  if (!(trim_fraction >= 0.0 && trim_fraction < 1.0)) {
    throw argument_error("trim fraction must lie in [0, 1)");
  }

  const std::size_t total =
      static_cast<std::size_t>(truth.width()) * truth.height();
  std::vector<std::size_t> selected;
  selected.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    if (!mask || mask->data()[i] > 0.0) selected.push_back(i);
  }
  if (selected.empty()) throw argument_error("mask selects no pixels");

  std::vector<double> errors;
  std::vector<double> squared(selected.size());
  std::vector<std::size_t> kept;
  for (int c = 0; c < truth.channels(); ++c) {
    const double* r = restored.planes[static_cast<std::size_t>(c)].data();
    const double* t = truth.planes[static_cast<std::size_t>(c)].data();

    auto fit_scale = [&](const std::vector<std::size_t>& idx) {
      double rt = 0.0, rr = 0.0;
      for (std::size_t i : idx) {
        rt += r[i] * t[i];
        rr += r[i] * r[i];
      }
      if (rr <= 0.0) {
        throw metric_error("restored channel is all zero under the mask");
      }
      return rt / rr;
    };

    const std::vector<std::size_t>* active = &selected;
    double s = fit_scale(selected);
    if (trim_fraction > 0.0) {
      for (std::size_t i = 0; i < selected.size(); ++i) {
        const double d = s * r[selected[i]] - t[selected[i]];
        squared[i] = d * d;
      }
      const std::size_t keep = std::max<std::size_t>(
          1, static_cast<std::size_t>(
                 std::floor((1.0 - trim_fraction) * selected.size())));
      std::vector<double> order(squared.begin(), squared.end());
      std::nth_element(order.begin(), order.begin() + (keep - 1), order.end());
      const double cutoff = order[keep - 1];
      std::size_t budget = keep;
      kept.clear();
      for (std::size_t i = 0; i < selected.size() && budget > 0; ++i) {
        if (squared[i] <= cutoff) {
          kept.push_back(selected[i]);
          --budget;
        }
      }
      active = &kept;
      s = fit_scale(kept);
    }

    double sq_sum = 0.0;
    double truth_sum = 0.0;
    for (std::size_t i : *active) {
      const double d = s * r[i] - t[i];
      sq_sum += d * d;
      truth_sum += t[i];
    }
    const double denom = truth_sum / active->size();
    if (denom <= 0.0) {
      throw metric_error("truth channel mean is zero under the mask");
    }
    errors.push_back(std::sqrt(sq_sum / active->size()) / denom);
  }
  return errors;
}

Frame composite(const std::vector<Frame>& frames, const Registration& reg) {
  check_metric_inputs(frames, reg);
  const int channels = frames.front().channels();
  const std::size_t frame_count = frames.size();
  const MosaicLayout layout = plan_mosaic(frames, reg);

  // Per-frame band split: Gaussian low band with sigma of width/16, high
  // band as the residual. Splitting in frame space keeps band content
  // independent of the mosaic grid.
  std::vector<std::vector<ImagePlane>> low(frame_count);
  std::vector<std::vector<ImagePlane>> high(frame_count);
  for (std::size_t f = 0; f < frame_count; ++f) {
    const double sigma = frames[f].width() / 16.0;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(static_cast<std::size_t>(radius) + 1);
    double norm = 0.0;
    for (int k = -radius; k <= radius; ++k) {
      const double w = std::exp(-(k * k) / (2.0 * sigma * sigma));
      if (k >= 0) kernel[static_cast<std::size_t>(k)] = w;
      norm += w;
    }
    for (double& w : kernel) w /= norm;

    for (const ImagePlane& plane : frames[f].planes) {
      const int w = plane.width();
      const int h = plane.height();
      ImagePlane tmp(w, h);
      parallel_for(static_cast<std::size_t>(h),
                   [&](std::size_t r0, std::size_t r1) {
        for (std::size_t yy = r0; yy < r1; ++yy) {
          const int y = static_cast<int>(yy);
          for (int x = 0; x < w; ++x) {
            double acc = kernel[0] * plane.at(x, y);
            for (int k = 1; k <= radius; ++k) {
              const int xl = std::max(0, x - k);
              const int xr = std::min(w - 1, x + k);
              acc += kernel[static_cast<std::size_t>(k)] *
                     (plane.at(xl, y) + plane.at(xr, y));
            }
            tmp.at(x, y) = acc;
          }
        }
      });
      ImagePlane blurred(w, h);
      parallel_for(static_cast<std::size_t>(h),
                   [&](std::size_t r0, std::size_t r1) {
        for (std::size_t yy = r0; yy < r1; ++yy) {
          const int y = static_cast<int>(yy);
          for (int x = 0; x < w; ++x) {
            double acc = kernel[0] * tmp.at(x, y);
            for (int k = 1; k <= radius; ++k) {
              const int yu = std::max(0, y - k);
              const int yd = std::min(h - 1, y + k);
              acc += kernel[static_cast<std::size_t>(k)] *
                     (tmp.at(x, yu) + tmp.at(x, yd));
            }
            blurred.at(x, y) = acc;
          }
        }
      });
      ImagePlane residual(w, h);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          residual.at(x, y) = plane.at(x, y) - blurred.at(x, y);
        }
      }
      low[f].push_back(std::move(blurred));
      high[f].push_back(std::move(residual));
    }
  }

  Frame mosaic;
  mosaic.tag = "mosaic";
  for (int c = 0; c < channels; ++c) {
    mosaic.planes.emplace_back(layout.nx, layout.ny);
  }

  auto sample_plane = [](const ImagePlane& plane, double x, double y) {
    const int w = plane.width();
    const int h = plane.height();
    x = std::clamp(x, 0.0, static_cast<double>(w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const int x0 = static_cast<int>(x);
    const int y0 = static_cast<int>(y);
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double wx = x - x0;
    const double wy = y - y0;
    const double top =
        plane.at(x0, y0) + (plane.at(x1, y0) - plane.at(x0, y0)) * wx;
    const double bot =
        plane.at(x0, y1) + (plane.at(x1, y1) - plane.at(x0, y1)) * wx;
    return top + (bot - top) * wy;
  };

  parallel_for(static_cast<std::size_t>(layout.ny),
               [&](std::size_t r0, std::size_t r1) {
    for (std::size_t iy = r0; iy < r1; ++iy) {
      const double v = layout.v0 + (iy + 0.5) * layout.gsd;
      for (int ix = 0; ix < layout.nx; ++ix) {
        const double u = layout.u0 + (ix + 0.5) * layout.gsd;
        double weight_sum = 0.0;
        double best_weight = 0.0;
        std::size_t best = frame_count;
        std::array<double, 3> low_acc{};
        for (std::size_t f = 0; f < frame_count; ++f) {
          double px = 0.0, py = 0.0;
          reg.mappings[f].to_frame(u, v, px, py);
          const double fw = frames[f].width();
          const double fh = frames[f].height();
          if (px < 0.0 || py < 0.0 || px > fw - 1.0 || py > fh - 1.0) {
            continue;
          }
          const double wx = 1.0 - std::abs(2.0 * (px + 0.5) / fw - 1.0);
          const double wy = 1.0 - std::abs(2.0 * (py + 0.5) / fh - 1.0);
          const double weight = std::max(0.0, wx) * std::max(0.0, wy);
          weight_sum += weight;
          if (weight > best_weight || best == frame_count) {
            best_weight = weight;
            best = f;
          }
          for (int c = 0; c < channels; ++c) {
            low_acc[static_cast<std::size_t>(c)] +=
                weight *
                sample_plane(low[f][static_cast<std::size_t>(c)], px, py);
          }
        }
        if (best == frame_count) continue;
        double px = 0.0, py = 0.0;
        reg.mappings[best].to_frame(u, v, px, py);
        for (int c = 0; c < channels; ++c) {
          const std::size_t ci = static_cast<std::size_t>(c);
          const double high_part =
              sample_plane(high[best][ci], px, py);
          const double low_part =
              weight_sum > 0.0 ? low_acc[ci] / weight_sum
                               : sample_plane(low[best][ci], px, py);
          mosaic.planes[ci].at(ix, static_cast<int>(iy)) =
              std::max(0.0, low_part + high_part);
        }
      }
    }
  });
  return mosaic;
}

}  // namespace abysslight
