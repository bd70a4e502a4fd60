#ifndef ABYSSLIGHT_SIMULATOR_HPP
#define ABYSSLIGHT_SIMULATOR_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "abysslight/image.hpp"

namespace abysslight {

// Forward model of a camera sled over an abyssal plain: co-moving Gaussian
// cone lights, per-channel exponential attenuation, single-scattering
// backscatter, Lambertian seafloor. Conventions: the seafloor is the world
// plane z = 0 with z up; the camera sits at altitude above it looking down.
// Camera frame: x right, y down in the image, z along the optical axis.
// Lights are rigid to the camera and expressed in its frame.

struct CameraModel {
  int width = 0;
  int height = 0;
  double focal_px = 0.0;
  double cx = 0.0;  // principal point, pixels from the top-left corner
  double cy = 0.0;
};

// pitch tilts the optical axis about the camera x axis, roll spins about
// the optical axis, yaw rotates the heading about the world vertical.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double altitude = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
  double yaw = 0.0;
};

struct LightSource {
  std::array<double, 3> position{};   // camera frame, meters
  std::array<double, 3> direction{};  // cone axis, normalized on load
  std::vector<double> intensity;      // per channel, radiant intensity
  double cone_sigma = 0.0;            // radians, Gaussian angular fall-off
};

struct WaterProperties {
  std::vector<double> eta;         // attenuation, 1/m, per channel
  std::vector<double> beta_scale;  // scattering strength, 1/m, per channel
  double hg_g = 0.8;               // Henyey-Greenstein asymmetry, (-1, 1)
};

// Transient bright/dark ellipses stamped into each frame's albedo copy.
// density is the target fraction of covered area; the stamp count uses the
// Boolean-model correction -ln(1 - density) so overlaps do not dilute it.
struct ContaminationSpec {
  double density = 0.0;
  double min_radius = 0.1;  // meters, semi-axis range
  double max_radius = 0.3;
  double intensity_min = 0.1;  // stamped albedo value range
  double intensity_max = 0.9;
};

// Seafloor albedo patch. Texel (i, j) is centered at world coordinates
// (origin_u + (i + 0.5) * meters_per_texel, origin_v + (j + 0.5) * ...).
struct AlbedoMap {
  std::vector<ImagePlane> planes;
  double meters_per_texel = 0.01;
  double origin_u = 0.0;
  double origin_v = 0.0;

  int channels() const { return static_cast<int>(planes.size()); }
};

// Multiplicative value noise around a per-channel base color:
// base * (1 + amplitude * n(u, v)) clamped to [0.02, 1]. n sums `octaves`
// bilinear lattice-noise layers, each halving the texel spacing and scaling
// by 0.55, giving broadband texture. All channels share n.
AlbedoMap make_noise_albedo(int width, int height, double meters_per_texel,
                            const std::vector<double>& base, double amplitude,
                            int lattice, std::uint64_t seed,
                            double origin_u = 0.0, double origin_v = 0.0,
                            int octaves = 1);

struct SceneSpec {
  CameraModel camera;
  Pose pose;
  std::vector<LightSource> lights;
  WaterProperties water;
  AlbedoMap albedo;
  ContaminationSpec contamination;
  std::uint64_t seed = 0;
  int scatter_steps = 64;            // quadrature steps along each ray
  double scatter_max_distance = 20.0;  // cap for water-column integrals
  int scatter_grid = 4;              // backscatter evaluated every Nth pixel
  bool cosine_weighting = true;      // Lambert cosine at the seafloor

  void validate() const;
};

struct GroundTruth {
  Frame albedo;         // per-frame albedo (with that frame's transients)
  ScatterField scatter;  // exactly the additive field in the render
  FactorField factor;    // direct term / albedo, mask = hit and above floor
  ImagePlane corr_u;     // seafloor coordinates per pixel, meters
  ImagePlane corr_v;
};

struct Rendered {
  Frame observed;
  GroundTruth truth;
};

// One frame at scene.pose with the frame-0 contamination draw.
Rendered render_frame(const SceneSpec& scene);

// One frame per pose over the shared albedo map; frame k's transients come
// from a seed derived from (contamination_seed, k). Poses repeating the
// same (altitude, pitch, roll) share the lighting geometry computation.
std::vector<Rendered> render_sequence(const SceneSpec& scene,
                                      const std::vector<Pose>& trajectory,
                                      std::uint64_t contamination_seed);

// Same, seeded from scene.seed.
std::vector<Rendered> render_sequence(const SceneSpec& scene,
                                      const std::vector<Pose>& trajectory);

// Cumulative per-channel backscatter along the ray of pixel (px, py),
// integrated by the midpoint rule over [0, max_distance]. Exposed for the
// saturation analysis of how quickly the integral converges in distance.
std::vector<double> integrate_backscatter(const SceneSpec& scene, double px,
                                          double py, double max_distance,
                                          int steps);

// JSON scene and trajectory documents; schema violations raise a format
// error naming the offending field path.
SceneSpec load_scene(const std::filesystem::path& path);
std::vector<Pose> load_trajectory(const std::filesystem::path& path);

}  // namespace abysslight

#endif
