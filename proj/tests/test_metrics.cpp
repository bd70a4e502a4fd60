#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <vector>

#include "abysslight/errors.hpp"
#include "abysslight/image_io.hpp"
#include "abysslight/metrics.hpp"
#include "support.hpp"

using namespace abysslight;
using testsupport::TempDir;

namespace {

// Smooth positive seafloor texture, evaluated analytically anywhere.
double texture(double u, double v) {
  return 0.4 + 0.15 * std::sin(0.3 * u) * std::cos(0.2 * v) +
         0.05 * std::sin(0.07 * u * v);
}

// Frame whose pixel (i, j) observes seafloor point (i + dx, j + dy).
Frame sample_frame(int width, int height, double dx, double dy,
                   double noise_sigma = 0.0, std::uint64_t seed = 0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_sigma);
  ImagePlane plane(width, height);
  for (int j = 0; j < height; ++j)
    for (int i = 0; i < width; ++i) {
      double value = texture(i + dx, j + dy);
      if (noise_sigma > 0.0) value += noise(rng);
      plane.at(i, j) = std::max(0.0, value);
    }
  return Frame({plane});
}

FrameMapping translation(double dx, double dy) {
  return FrameMapping::from_homography(
      {1.0, 0.0, dx, 0.0, 1.0, dy, 0.0, 0.0, 1.0});
}

}  // namespace

TEST_CASE("homography mappings invert and report pixel scale") {
  FrameMapping scaled = FrameMapping::from_homography(
      {0.01, 0.0, 3.0, 0.0, 0.01, -2.0, 0.0, 0.0, 1.0});
  double u, v, px, py;
  scaled.to_mosaic(10.0, 20.0, u, v);
  CHECK(u == doctest::Approx(3.1));
  CHECK(v == doctest::Approx(-1.8));
  scaled.to_frame(u, v, px, py);
  CHECK(px == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(py == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(scaled.pixel_scale(10.0, 20.0) == doctest::Approx(0.01));
}

TEST_CASE("singular homographies are rejected") {
  CHECK_THROWS_AS(FrameMapping::from_homography(
                      {1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 1.0}),
                  argument_error);
}

TEST_CASE("correspondence maps reduce to the generating homography") {
  std::array<double, 9> h{1.02, 0.03, 5.0, -0.01, 0.96, -3.0,
                          1e-4, -5e-5, 1.0};
  const int w = 40, hgt = 30;
  ImagePlane u(w, hgt), v(w, hgt);
  for (int j = 0; j < hgt; ++j)
    for (int i = 0; i < w; ++i) {
      double d = h[6] * i + h[7] * j + h[8];
      u.at(i, j) = (h[0] * i + h[1] * j + h[2]) / d;
      v.at(i, j) = (h[3] * i + h[4] * j + h[5]) / d;
    }
  // A few invalid pixels must not disturb the fit.
  u.at(3, 4) = std::numeric_limits<double>::quiet_NaN();
  v.at(3, 4) = std::numeric_limits<double>::quiet_NaN();
  u.at(20, 11) = std::numeric_limits<double>::quiet_NaN();

  FrameMapping fit = FrameMapping::from_correspondence(u, v);
  for (int k = 0; k < 9; ++k)
    CHECK(fit.forward()[k] == doctest::Approx(h[k]).epsilon(1e-7));
}

TEST_CASE("degenerate correspondence maps are rejected") {
  ImagePlane u(16, 16, 1.0), v(16, 16, 2.0);  // every pixel maps to a point
  CHECK_THROWS_AS(FrameMapping::from_correspondence(u, v), argument_error);
  ImagePlane tiny_u(2, 2), tiny_v(2, 2);
  for (auto* p : {&tiny_u, &tiny_v})
    for (std::size_t i = 0; i < p->size(); ++i)
      p->data()[i] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(FrameMapping::from_correspondence(tiny_u, tiny_v),
                  argument_error);
}

TEST_CASE("perfectly consistent frames score zero") {
  // Integer offsets align mosaic cells with pixel centers, so overlapping
  // samples are exactly equal and the deviation term vanishes.
  std::vector<Frame> frames{sample_frame(48, 40, 0, 0),
                            sample_frame(48, 40, 7, 5)};
  Registration reg{{translation(0, 0), translation(7, 5)}};
  ConsistencyReport report = consistency_error(frames, reg);
  REQUIRE(report.channel_error.size() == 1);
  CHECK(report.channel_error[0] < 1e-10);
  CHECK(report.overlap_pixel_count > 1000);
  REQUIRE(report.frame_error.size() == 2);
  CHECK(report.frame_error[0][0] < 1e-10);
  CHECK(report.frame_error[1][0] < 1e-10);
}

TEST_CASE("consistency error grows with cross-frame noise") {
  double prev = -1.0;
  for (double sigma : {0.0, 0.01, 0.03}) {
    std::vector<Frame> frames{sample_frame(48, 40, 0, 0, sigma, 21),
                              sample_frame(48, 40, 9, 3, sigma, 22)};
    Registration reg{{translation(0, 0), translation(9, 3)}};
    double err = consistency_error(frames, reg).channel_error[0];
    CHECK(err > prev);
    prev = err;
  }
}

TEST_CASE("consistency error is invariant to gain and offset") {
  auto make = [](double gain, double offset) {
    std::vector<Frame> frames{sample_frame(48, 40, 0, 0, 0.02, 31),
                              sample_frame(48, 40, 6, 4, 0.02, 32)};
    for (auto& frame : frames)
      for (std::size_t i = 0; i < frame.planes[0].size(); ++i)
        frame.planes[0].data()[i] =
            gain * frame.planes[0].data()[i] + offset;
    return frames;
  };
  Registration reg{{translation(0, 0), translation(6, 4)}};
  double base = consistency_error(make(1.0, 0.0), reg).channel_error[0];
  double scaled = consistency_error(make(3.0, 0.2), reg).channel_error[0];
  CHECK(scaled == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("region masks restrict the aggregated mosaic cells") {
  std::vector<Frame> frames{sample_frame(48, 40, 0, 0, 0.02, 41),
                            sample_frame(48, 40, 6, 4, 0.02, 42)};
  Registration reg{{translation(0, 0), translation(6, 4)}};
  ConsistencyReport whole = consistency_error(frames, reg);
  ConsistencyReport left = consistency_error(
      frames, reg, [](double u, double) { return u < 24.0; });
  CHECK(left.overlap_pixel_count < whole.overlap_pixel_count);
  CHECK(left.overlap_pixel_count > 0);
  // A mask that excludes everything leaves nothing to evaluate.
  CHECK_THROWS_AS(consistency_error(frames, reg,
                                    [](double, double) { return false; }),
                  metric_error);
}

TEST_CASE("consistency rejects degenerate inputs") {
  std::vector<Frame> one{sample_frame(32, 24, 0, 0)};
  Registration reg_one{{translation(0, 0)}};
  CHECK_THROWS_AS(consistency_error(one, reg_one), argument_error);

  std::vector<Frame> two{sample_frame(32, 24, 0, 0),
                         sample_frame(32, 24, 2, 2)};
  CHECK_THROWS_AS(consistency_error(two, reg_one), argument_error);

  // Disjoint frames never cover a cell twice.
  Registration far_apart{{translation(0, 0), translation(500, 0)}};
  CHECK_THROWS_AS(consistency_error(two, far_apart), metric_error);
}

TEST_CASE("consistency handles flat mosaics explicitly") {
  // Identical constants agree perfectly: zero error without normalization.
  std::vector<Frame> same{Frame({ImagePlane(24, 20, 0.4)}),
                          Frame({ImagePlane(24, 20, 0.4)})};
  Registration reg{{translation(0, 0), translation(3, 2)}};
  CHECK(consistency_error(same, reg).channel_error[0] == 0.0);

  // Disagreeing constants have deviations but no variation to divide by.
  std::vector<Frame> differ{Frame({ImagePlane(24, 20, 0.3)}),
                            Frame({ImagePlane(24, 20, 0.5)})};
  CHECK_THROWS_AS(consistency_error(differ, reg), metric_error);
}

TEST_CASE("scale-invariant rmse is zero under global scaling") {
  Frame truth = sample_frame(32, 24, 0, 0);
  CHECK(scale_invariant_rmse(truth, truth)[0] == doctest::Approx(0.0));
  Frame doubled = truth;
  for (std::size_t i = 0; i < doubled.planes[0].size(); ++i)
    doubled.planes[0].data()[i] *= 2.0;
  CHECK(scale_invariant_rmse(doubled, truth)[0] ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("scale-invariant rmse matches hand arithmetic") {
  // truth [1,1,1,1], restored [1,1,1,2]: s* = 5/7, rmse = sqrt(3/28).
  Frame truth({ImagePlane(2, 2, 1.0)});
  Frame restored({ImagePlane(2, 2, 1.0)});
  restored.planes[0].at(1, 1) = 2.0;
  double expected = std::sqrt(3.0 / 28.0);
  CHECK(scale_invariant_rmse(restored, truth)[0] ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("trimming drops the worst residuals and refits") {
  // Dropping a quarter of four pixels removes the single outlier; the
  // remaining pixels agree exactly, so the trimmed score is zero.
  Frame truth({ImagePlane(2, 2, 1.0)});
  Frame restored({ImagePlane(2, 2, 1.0)});
  restored.planes[0].at(1, 1) = 2.0;
  CHECK(scale_invariant_rmse(restored, truth, nullptr, 0.25)[0] ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(scale_invariant_rmse(restored, truth, nullptr, 1.0),
                  argument_error);
}

TEST_CASE("masks limit the rmse to selected pixels") {
  Frame truth({ImagePlane(4, 4, 0.5)});
  Frame restored = truth;
  restored.planes[0].at(0, 0) = 1.0;  // outside the mask
  ImagePlane mask(4, 4, 1.0);
  mask.at(0, 0) = 0.0;
  CHECK(scale_invariant_rmse(restored, truth, &mask)[0] ==
        doctest::Approx(0.0).epsilon(1e-12));
  ImagePlane empty_mask(4, 4, 0.0);
  CHECK_THROWS_AS(scale_invariant_rmse(restored, truth, &empty_mask),
                  argument_error);
}

TEST_CASE("rmse degenerate channels raise metric errors") {
  Frame truth({ImagePlane(4, 4, 0.5)});
  Frame zero({ImagePlane(4, 4, 0.0)});
  CHECK_THROWS_AS(scale_invariant_rmse(zero, truth), metric_error);
  CHECK_THROWS_AS(scale_invariant_rmse(truth, zero), metric_error);
  Frame small({ImagePlane(3, 4, 0.5)});
  CHECK_THROWS_AS(scale_invariant_rmse(small, truth), argument_error);
}

TEST_CASE("composite of a single frame reproduces it over its footprint") {
  Frame frame = sample_frame(32, 24, 0, 0);
  Registration reg{{translation(0, 0)}};
  Frame mosaic = composite({frame}, reg);
  REQUIRE(mosaic.channels() == 1);
  // Mosaic cells align with pixel centers under the identity mapping.
  FrameMapping map = translation(0, 0);
  double worst = 0.0;
  for (int j = 0; j < 24; ++j)
    for (int i = 0; i < 32; ++i) {
      // Mosaic spans the frame bbox starting half a pixel before center 0.
      double value = mosaic.planes[0].at(i, j);
      worst = std::max(worst, std::fabs(value - frame.planes[0].at(i, j)));
    }
  CHECK(worst < 1e-9);
}

TEST_CASE("identical overlapping frames composite to the shared content") {
  Frame frame = sample_frame(32, 24, 0, 0);
  Registration reg{{translation(0, 0), translation(0, 0)}};
  Frame mosaic = composite({frame, frame}, reg);
  double worst = 0.0;
  for (int j = 0; j < 24; ++j)
    for (int i = 0; i < 32; ++i)
      worst = std::max(worst,
                       std::fabs(mosaic.planes[0].at(i, j) -
                                 frame.planes[0].at(i, j)));
  CHECK(worst < 1e-9);
}

TEST_CASE("composite conserves constant frames across the blend") {
  Frame a({ImagePlane(32, 24, 0.37)});
  Frame b({ImagePlane(32, 24, 0.37)});
  Registration reg{{translation(0, 0), translation(12, 0)}};
  Frame mosaic = composite({a, b}, reg);
  // Every covered cell carries the constant; gaps outside coverage are 0.
  std::size_t covered = 0;
  for (std::size_t i = 0; i < mosaic.planes[0].size(); ++i) {
    double value = mosaic.planes[0].data()[i];
    if (value > 0.0) {
      CHECK(value == doctest::Approx(0.37).epsilon(1e-9));
      ++covered;
    }
  }
  CHECK(covered > 32 * 24);
}

TEST_CASE("composite requires at least one frame") {
  CHECK_THROWS_AS(composite({}, Registration{}), argument_error);
}

TEST_CASE("registration files load homographies and correspondence maps") {
  TempDir dir("metrics-reg");
  {
    std::ofstream out(dir.file("homo.json"));
    out << R"({"schema": 1, "homographies": [
      [1, 0, 0, 0, 1, 0, 0, 0, 1],
      [1, 0, 7.5, 0, 1, -2.5, 0, 0, 1]
    ]})";
  }
  Registration reg = load_registration(dir.file("homo.json"));
  REQUIRE(reg.mappings.size() == 2);
  double u, v;
  reg.mappings[1].to_mosaic(1.0, 2.0, u, v);
  CHECK(u == doctest::Approx(8.5));
  CHECK(v == doctest::Approx(-0.5));

  // Correspondence-map variant with paths relative to the JSON file.
  ImagePlane cu(24, 18), cv(24, 18);
  for (int j = 0; j < 18; ++j)
    for (int i = 0; i < 24; ++i) {
      cu.at(i, j) = 0.05 * i + 1.0;
      cv.at(i, j) = 0.05 * j - 2.0;
    }
  save_correspondence_map(dir.file("map0.tif"), cu, cv);
  {
    std::ofstream out(dir.file("maps.json"));
    out << R"({"schema": 1, "maps": ["map0.tif"]})";
  }
  Registration from_maps = load_registration(dir.file("maps.json"));
  REQUIRE(from_maps.mappings.size() == 1);
  from_maps.mappings[0].to_mosaic(10.0, 4.0, u, v);
  CHECK(u == doctest::Approx(1.5).epsilon(1e-4));
  CHECK(v == doctest::Approx(-1.8).epsilon(1e-4));

  {
    std::ofstream out(dir.file("bad.json"));
    out << R"({"schema": 1})";
  }
  CHECK_THROWS_AS(load_registration(dir.file("bad.json")), format_error);
  {
    std::ofstream out(dir.file("schema.json"));
    out << R"({"schema": 3, "homographies": []})";
  }
  CHECK_THROWS_AS(load_registration(dir.file("schema.json")), format_error);
  CHECK_THROWS_AS(load_registration(dir.file("missing.json")), io_error);
}
