#include "abysslight/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <tuple>
#include <utility>

#include <nlohmann/json.hpp>

#include "abysslight/errors.hpp"
#include "abysslight/image_io.hpp"
#include "abysslight/resample.hpp"
#include "abysslight/threading.hpp"

namespace abysslight {

namespace {

using nlohmann::json;
using Vec3 = std::array<double, 3>;

constexpr double kPi = 3.14159265358979323846;
constexpr double kInf = std::numeric_limits<double>::infinity();
// Ground-truth factor pixels below this are masked, mirroring the default
// division floor of the enhancement config.
constexpr double kFactorFloor = 1e-4;

// ---------------------------------------------------------------- RNG ----
// All randomness flows through mt19937_64 (bit-exact across platforms) and
// an explicit 53-bit mantissa mapping; std:: distributions are not portable.

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

double uniform01(std::mt19937_64& rng) {
  return std::ldexp(static_cast<double>(rng() >> 11), -53);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// --------------------------------------------------------------- math ----

double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

Vec3 normalized(const Vec3& a) {
  const double n = norm(a);
  return {a[0] / n, a[1] / n, a[2] / n};
}

Vec3 rot_x(const Vec3& v, double c, double s) {
  return {v[0], c * v[1] - s * v[2], s * v[1] + c * v[2]};
}

Vec3 rot_z(const Vec3& v, double c, double s) {
  return {c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]};
}

// Nadir mapping from camera axes to world axes: x right stays east, y down
// in the image points south, the optical axis points at the floor.
Vec3 nadir(const Vec3& v) { return {v[0], -v[1], -v[2]}; }

// Camera direction to world direction, yaw excluded (applied per frame).
Vec3 cam_to_world_noyaw(const Vec3& d, double pitch, double roll) {
  const Vec3 rolled = rot_z(d, std::cos(roll), std::sin(roll));
  const Vec3 pitched = rot_x(rolled, std::cos(pitch), std::sin(pitch));
  return nadir(pitched);
}

// --------------------------------------------------------- components ----

Vec3 pixel_ray(const CameraModel& camera, double px, double py) {
  return normalized({(px + 0.5 - camera.cx) / camera.focal_px,
                     (py + 0.5 - camera.cy) / camera.focal_px, 1.0});
}

// Everything about a pose that ignores yaw and position: per-pixel floor
// distance, the direct-light factor, the backscatter field, and the world
// ray directions that yaw later spins.
struct Geometry {
  ImagePlane t_star;
  ImagePlane dir_nx, dir_ny;
  std::vector<ImagePlane> factor;
  std::vector<ImagePlane> scatter;
};

struct LightPrep {
  Vec3 position;
  Vec3 axis;
  std::vector<double> intensity;
  double inv_two_sigma_sq = 0.0;
};

std::vector<LightPrep> prepare_lights(const SceneSpec& scene) {
  std::vector<LightPrep> lights;
  lights.reserve(scene.lights.size());
  for (const LightSource& light : scene.lights) {
    LightPrep prep;
    prep.position = light.position;
    prep.axis = normalized(light.direction);
    prep.intensity = light.intensity;
    prep.inv_two_sigma_sq = 1.0 / (2.0 * light.cone_sigma * light.cone_sigma);
    lights.push_back(std::move(prep));
  }
  return lights;
}

// Single-scattering radiance along one camera ray, midpoint rule.
void backscatter_along(const SceneSpec& scene,
                       const std::vector<LightPrep>& lights, const Vec3& ray,
                       double end, int steps, double* out) {
  const int channels = scene.albedo.channels();
  for (int c = 0; c < channels; ++c) out[c] = 0.0;
  if (end <= 0.0) return;

  const double g = scene.water.hg_g;
  const double g_sq = g * g;
  const double phase_num = (1.0 - g_sq) / (4.0 * kPi);
  const double step = end / steps;

  for (int i = 0; i < steps; ++i) {
    const double s = (i + 0.5) * step;
    const Vec3 point{s * ray[0], s * ray[1], s * ray[2]};
    for (const LightPrep& light : lights) {
      const Vec3 to_point{point[0] - light.position[0],
                          point[1] - light.position[1],
                          point[2] - light.position[2]};
      const double d_ls = norm(to_point);
      if (d_ls <= 0.0) continue;
      const Vec3 w{to_point[0] / d_ls, to_point[1] / d_ls,
                   to_point[2] / d_ls};
      const double cos_axis = std::clamp(dot(w, light.axis), -1.0, 1.0);
      const double theta = std::acos(cos_axis);
      const double falloff =
          std::exp(-theta * theta * light.inv_two_sigma_sq);
      // Scattering angle between the light direction and the path back to
      // the camera (-ray).
      const double cos_alpha = std::clamp(-dot(w, ray), -1.0, 1.0);
      const double denom = 1.0 + g_sq - 2.0 * g * cos_alpha;
      const double phase = phase_num / (denom * std::sqrt(denom));
      for (int c = 0; c < channels; ++c) {
        const double eta = scene.water.eta[static_cast<std::size_t>(c)];
        out[c] += light.intensity[static_cast<std::size_t>(c)] * falloff *
                  std::exp(-eta * d_ls) *
                  scene.water.beta_scale[static_cast<std::size_t>(c)] *
                  phase * std::exp(-eta * s);
      }
    }
  }
  for (int c = 0; c < channels; ++c) out[c] *= step;
}

// Distance along a ray to the plane z = 0 for a camera at the given
// altitude; infinity when the ray never reaches the floor.
double floor_distance(const Vec3& dir_world, double altitude) {
  if (dir_world[2] >= -1e-12) return kInf;
  return altitude / -dir_world[2];
}

Geometry build_geometry(const SceneSpec& scene,
                        const std::vector<LightPrep>& lights, double altitude,
                        double pitch, double roll) {
  const CameraModel& camera = scene.camera;
  const int width = camera.width;
  const int height = camera.height;
  const int channels = scene.albedo.channels();

  Geometry geo;
  geo.t_star = ImagePlane(width, height);
  geo.dir_nx = ImagePlane(width, height);
  geo.dir_ny = ImagePlane(width, height);
  for (int c = 0; c < channels; ++c) {
    geo.factor.emplace_back(width, height);
  }

  // Seafloor normal (world up) seen from the camera.
  const Vec3 e0 = cam_to_world_noyaw({1, 0, 0}, pitch, roll);
  const Vec3 e1 = cam_to_world_noyaw({0, 1, 0}, pitch, roll);
  const Vec3 e2 = cam_to_world_noyaw({0, 0, 1}, pitch, roll);
  const Vec3 normal_cam{e0[2], e1[2], e2[2]};

  parallel_for(static_cast<std::size_t>(height),
               [&](std::size_t r0, std::size_t r1) {
    for (std::size_t yy = r0; yy < r1; ++yy) {
      const int py = static_cast<int>(yy);
      for (int px = 0; px < width; ++px) {
        const Vec3 ray = pixel_ray(camera, px, py);
        const Vec3 world = cam_to_world_noyaw(ray, pitch, roll);
        const double t = floor_distance(world, altitude);
        geo.t_star.at(px, py) = t;
        geo.dir_nx.at(px, py) = world[0];
        geo.dir_ny.at(px, py) = world[1];
        if (!std::isfinite(t)) {
          for (int c = 0; c < channels; ++c) geo.factor[c].at(px, py) = 0.0;
          continue;
        }

        const Vec3 point{t * ray[0], t * ray[1], t * ray[2]};
        double sum[3] = {0.0, 0.0, 0.0};
        for (const LightPrep& light : lights) {
          const Vec3 to_point{point[0] - light.position[0],
                              point[1] - light.position[1],
                              point[2] - light.position[2]};
          const double d_l = norm(to_point);
          if (d_l <= 0.0) continue;
          const Vec3 w{to_point[0] / d_l, to_point[1] / d_l,
                       to_point[2] / d_l};
          const double cos_axis = std::clamp(dot(w, light.axis), -1.0, 1.0);
          const double theta = std::acos(cos_axis);
          const double falloff =
              std::exp(-theta * theta * light.inv_two_sigma_sq);
          double cos_i = 1.0;
          if (scene.cosine_weighting) {
            cos_i = std::max(0.0, -dot(w, normal_cam));
          }
          for (int c = 0; c < channels; ++c) {
            const double eta = scene.water.eta[static_cast<std::size_t>(c)];
            sum[c] += light.intensity[static_cast<std::size_t>(c)] * falloff *
                      std::exp(-eta * d_l) * cos_i;
          }
        }
        for (int c = 0; c < channels; ++c) {
          const double eta = scene.water.eta[static_cast<std::size_t>(c)];
          geo.factor[c].at(px, py) = sum[c] * std::exp(-eta * t);
        }
      }
    }
  });

  // Backscatter on a coarse pixel grid, bilinearly enlarged. The render
  // adds exactly the enlarged field, so the ground-truth scatter stays an
  // exact decomposition of the observed frame.
  const int grid = std::max(1, scene.scatter_grid);
  const int gw = (width + grid - 1) / grid;
  const int gh = (height + grid - 1) / grid;
  std::vector<ImagePlane> low;
  for (int c = 0; c < channels; ++c) low.emplace_back(gw, gh);

  parallel_for(static_cast<std::size_t>(gh),
               [&](std::size_t r0, std::size_t r1) {
    std::vector<double> acc(static_cast<std::size_t>(channels));
    for (std::size_t yy = r0; yy < r1; ++yy) {
      const int gy = static_cast<int>(yy);
      const double py = (gy + 0.5) * height / static_cast<double>(gh) - 0.5;
      for (int gx = 0; gx < gw; ++gx) {
        const double px = (gx + 0.5) * width / static_cast<double>(gw) - 0.5;
        const Vec3 ray = pixel_ray(camera, px, py);
        const Vec3 world = cam_to_world_noyaw(ray, pitch, roll);
        const double end =
            std::min(floor_distance(world, altitude),
                     scene.scatter_max_distance);
        backscatter_along(scene, lights, ray, end, scene.scatter_steps,
                          acc.data());
        for (int c = 0; c < channels; ++c) {
          low[static_cast<std::size_t>(c)].at(gx, gy) =
              acc[static_cast<std::size_t>(c)];
        }
      }
    }
  });
  for (int c = 0; c < channels; ++c) {
    geo.scatter.push_back(
        grid == 1 && gw == width && gh == height
            ? std::move(low[static_cast<std::size_t>(c)])
            : upsample(low[static_cast<std::size_t>(c)], width, height));
  }
  return geo;
}

// ------------------------------------------------------------- albedo ----

double sample_albedo(const ImagePlane& plane, double tx, double ty) {
  const int w = plane.width();
  const int h = plane.height();
  const double fx = std::clamp(tx, 0.0, static_cast<double>(w - 1));
  const double fy = std::clamp(ty, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double wx = fx - x0;
  const double wy = fy - y0;
  const double top = plane.at(x0, y0) + (plane.at(x1, y0) - plane.at(x0, y0)) * wx;
  const double bot = plane.at(x0, y1) + (plane.at(x1, y1) - plane.at(x0, y1)) * wx;
  return top + (bot - top) * wy;
}

void stamp_objects(std::vector<ImagePlane>& planes,
                   const ContaminationSpec& spec, double meters_per_texel,
                   std::mt19937_64& rng) {
  if (spec.density <= 0.0) return;
  const int w = planes.front().width();
  const int h = planes.front().height();
  const double mean_semi =
      0.5 * (spec.min_radius + spec.max_radius) / meters_per_texel;
  const double mean_area = kPi * mean_semi * mean_semi;
  const double lambda = -std::log1p(-spec.density);
  const double total = static_cast<double>(w) * h;
  const long count =
      std::max(1L, std::lround(lambda * total / mean_area));

  for (long k = 0; k < count; ++k) {
    const double cu = uniform(rng, 0.0, w);
    const double cv = uniform(rng, 0.0, h);
    const double a = uniform(rng, spec.min_radius, spec.max_radius) /
                     meters_per_texel;
    const double b = uniform(rng, spec.min_radius, spec.max_radius) /
                     meters_per_texel;
    const double angle = uniform(rng, 0.0, kPi);
    const double value =
        uniform(rng, spec.intensity_min, spec.intensity_max);
    const double ca = std::cos(angle);
    const double sa = std::sin(angle);

    const double reach = std::max(a, b);
    const int x0 = std::max(0, static_cast<int>(std::floor(cu - reach)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cu + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cv - reach)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cv + reach)));
    for (int ty = y0; ty <= y1; ++ty) {
      for (int tx = x0; tx <= x1; ++tx) {
        const double dx = tx + 0.5 - cu;
        const double dy = ty + 0.5 - cv;
        const double ea = (dx * ca + dy * sa) / a;
        const double eb = (-dx * sa + dy * ca) / b;
        if (ea * ea + eb * eb <= 1.0) {
          for (ImagePlane& plane : planes) plane.at(tx, ty) = value;
        }
      }
    }
  }
}

// ------------------------------------------------------------- render ----

using GeometryKey = std::tuple<double, double, double>;

Rendered render_one(const SceneSpec& scene,
                    const std::vector<LightPrep>& lights, const Pose& pose,
                    std::size_t frame_index, std::uint64_t contamination_seed,
                    std::map<GeometryKey, Geometry>& cache) {
  if (!(pose.altitude > 0.0)) {
    throw argument_error("pose altitude must be positive");
  }
  const GeometryKey key{pose.altitude, pose.pitch, pose.roll};
  auto found = cache.find(key);
  if (found == cache.end()) {
    found = cache.emplace(key, build_geometry(scene, lights, pose.altitude,
                                              pose.pitch, pose.roll))
                .first;
  }
  const Geometry& geo = found->second;

  const int width = scene.camera.width;
  const int height = scene.camera.height;
  const int channels = scene.albedo.channels();

  // Per-frame transient objects live in a copy of the albedo map.
  std::vector<ImagePlane> albedo = scene.albedo.planes;
  std::mt19937_64 rng(derive_seed(contamination_seed, frame_index + 1));
  stamp_objects(albedo, scene.contamination, scene.albedo.meters_per_texel,
                rng);

  Rendered out;
  out.observed.index = frame_index;
  out.truth.albedo.index = frame_index;
  for (int c = 0; c < channels; ++c) {
    out.observed.planes.emplace_back(width, height);
    out.truth.albedo.planes.emplace_back(width, height);
    out.truth.factor.planes.push_back(geo.factor[static_cast<std::size_t>(c)]);
    out.truth.scatter.planes.push_back(
        geo.scatter[static_cast<std::size_t>(c)]);
  }
  out.truth.factor.valid = ImagePlane(width, height);
  out.truth.corr_u = ImagePlane(width, height);
  out.truth.corr_v = ImagePlane(width, height);

  const double cos_yaw = std::cos(pose.yaw);
  const double sin_yaw = std::sin(pose.yaw);
  const double mpt = scene.albedo.meters_per_texel;
  const int map_w = scene.albedo.planes.front().width();
  const int map_h = scene.albedo.planes.front().height();
  std::atomic<bool> out_of_map{false};

  parallel_for(static_cast<std::size_t>(height),
               [&](std::size_t r0, std::size_t r1) {
    for (std::size_t yy = r0; yy < r1; ++yy) {
      const int py = static_cast<int>(yy);
      for (int px = 0; px < width; ++px) {
        const double t = geo.t_star.at(px, py);
        if (!std::isfinite(t)) {
          out.truth.corr_u.at(px, py) =
              std::numeric_limits<double>::quiet_NaN();
          out.truth.corr_v.at(px, py) =
              std::numeric_limits<double>::quiet_NaN();
          out.truth.factor.valid.at(px, py) = 0.0;
          for (int c = 0; c < channels; ++c) {
            out.observed.planes[static_cast<std::size_t>(c)].at(px, py) =
                out.truth.scatter.planes[static_cast<std::size_t>(c)].at(px,
                                                                         py);
          }
          continue;
        }
        const double nx = geo.dir_nx.at(px, py);
        const double ny = geo.dir_ny.at(px, py);
        const double u = pose.x + t * (cos_yaw * nx - sin_yaw * ny);
        const double v = pose.y + t * (sin_yaw * nx + cos_yaw * ny);
        out.truth.corr_u.at(px, py) = u;
        out.truth.corr_v.at(px, py) = v;

        const double tx = (u - scene.albedo.origin_u) / mpt - 0.5;
        const double ty = (v - scene.albedo.origin_v) / mpt - 0.5;
        if (tx < -0.5 || ty < -0.5 || tx > map_w - 0.5 || ty > map_h - 0.5) {
          out_of_map.store(true, std::memory_order_relaxed);
          continue;
        }

        double valid = 1.0;
        for (int c = 0; c < channels; ++c) {
          const std::size_t ci = static_cast<std::size_t>(c);
          const double a = sample_albedo(albedo[ci], tx, ty);
          const double f = geo.factor[ci].at(px, py);
          out.truth.albedo.planes[ci].at(px, py) = a;
          out.observed.planes[ci].at(px, py) =
              a * f + out.truth.scatter.planes[ci].at(px, py);
          if (f < kFactorFloor) valid = 0.0;
        }
        out.truth.factor.valid.at(px, py) = valid;
      }
    }
  });

  if (out_of_map.load()) {
    throw argument_error("frame footprint leaves the albedo map");
  }
  return out;
}

// --------------------------------------------------------------- JSON ----

const json& require_field(const json& doc, const char* key,
                          const std::string& path) {
  if (!doc.is_object() || !doc.contains(key)) {
    throw format_error("missing field " + path + key);
  }
  return doc[key];
}

double require_number(const json& doc, const char* key,
                      const std::string& path) {
  const json& field = require_field(doc, key, path);
  if (!field.is_number()) {
    throw format_error("field " + path + key + " must be a number");
  }
  return field.get<double>();
}

double number_or(const json& doc, const char* key, double fallback,
                 const std::string& path) {
  if (!doc.is_object() || !doc.contains(key)) return fallback;
  if (!doc[key].is_number()) {
    throw format_error("field " + path + key + " must be a number");
  }
  return doc[key].get<double>();
}

std::vector<double> require_numbers(const json& doc, const char* key,
                                    const std::string& path,
                                    std::size_t count = 0) {
  const json& field = require_field(doc, key, path);
  if (!field.is_array()) {
    throw format_error("field " + path + key + " must be an array");
  }
  std::vector<double> values;
  for (const json& item : field) {
    if (!item.is_number()) {
      throw format_error("field " + path + key + " must hold numbers only");
    }
    values.push_back(item.get<double>());
  }
  if (count != 0 && values.size() != count) {
    throw format_error("field " + path + key + " must hold " +
                       std::to_string(count) + " values");
  }
  return values;
}

void check_schema(const json& doc, const char* what) {
  if (!doc.is_object() || !doc.contains("schema") ||
      !doc["schema"].is_number_integer() || doc["schema"].get<int>() != 1) {
    throw format_error(std::string(what) + ": schema must be 1");
  }
}

Pose pose_from_json(const json& doc, const std::string& path) {
  Pose pose;
  pose.altitude = require_number(doc, "altitude", path);
  pose.x = number_or(doc, "x", 0.0, path);
  pose.y = number_or(doc, "y", 0.0, path);
  pose.pitch = number_or(doc, "pitch", 0.0, path);
  pose.roll = number_or(doc, "roll", 0.0, path);
  pose.yaw = number_or(doc, "yaw", 0.0, path);
  return pose;
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

AlbedoMap make_noise_albedo(int width, int height, double meters_per_texel,
                            const std::vector<double>& base, double amplitude,
                            int lattice, std::uint64_t seed, double origin_u,
                            double origin_v, int octaves) {
  if (width <= 0 || height <= 0) {
    throw argument_error("albedo dimensions must be positive");
  }
  if (base.empty() || (base.size() != 1 && base.size() != 3)) {
    throw argument_error("albedo base must have 1 or 3 channels");
  }
  if (lattice < 1) throw argument_error("noise lattice must be >= 1");
  if (octaves < 1) throw argument_error("octave count must be >= 1");
  if (!(meters_per_texel > 0.0)) {
    throw argument_error("meters per texel must be positive");
  }

  ImagePlane noise(width, height);
  double gain = 1.0;
  for (int octave = 0; octave < octaves; ++octave) {
    const int spacing = std::max(1, lattice >> octave);
    const int nodes_x = width / spacing + 2;
    const int nodes_y = height / spacing + 2;
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(octave)));
    ImagePlane nodes(nodes_x, nodes_y);
    for (int y = 0; y < nodes_y; ++y) {
      for (int x = 0; x < nodes_x; ++x) {
        nodes.at(x, y) = uniform(rng, -1.0, 1.0);
      }
    }
    for (int y = 0; y < height; ++y) {
      const double fy = static_cast<double>(y) / spacing;
      const int y0 = static_cast<int>(fy);
      const double wy = fy - y0;
      for (int x = 0; x < width; ++x) {
        const double fx = static_cast<double>(x) / spacing;
        const int x0 = static_cast<int>(fx);
        const double wx = fx - x0;
        const double top =
            nodes.at(x0, y0) + (nodes.at(x0 + 1, y0) - nodes.at(x0, y0)) * wx;
        const double bot =
            nodes.at(x0, y0 + 1) +
            (nodes.at(x0 + 1, y0 + 1) - nodes.at(x0, y0 + 1)) * wx;
        noise.at(x, y) += gain * (top + (bot - top) * wy);
      }
    }
    gain *= 0.55;
  }

  AlbedoMap map;
  map.meters_per_texel = meters_per_texel;
  map.origin_u = origin_u;
  map.origin_v = origin_v;
  for (double b : base) {
    if (!(b > 0.0 && b <= 1.0)) {
      throw argument_error("albedo base values must lie in (0, 1]");
    }
    map.planes.emplace_back(width, height);
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double n = noise.at(x, y);
      for (std::size_t c = 0; c < base.size(); ++c) {
        map.planes[c].at(x, y) =
            std::clamp(base[c] * (1.0 + amplitude * n), 0.02, 1.0);
      }
    }
  }
  return map;
}

void SceneSpec::validate() const {
  if (camera.width <= 0 || camera.height <= 0) {
    throw argument_error("camera dimensions must be positive");
  }
  if (!(camera.focal_px > 0.0)) {
    throw argument_error("camera focal length must be positive");
  }
  if (!(pose.altitude > 0.0)) {
    throw argument_error("pose altitude must be positive");
  }
  if (albedo.planes.empty() ||
      (albedo.planes.size() != 1 && albedo.planes.size() != 3)) {
    throw argument_error("albedo map must have 1 or 3 channels");
  }
  for (const ImagePlane& plane : albedo.planes) {
    if (!plane.same_size(albedo.planes.front())) {
      throw argument_error("albedo planes differ in size");
    }
    if (plane.min_value() < 0.0 || plane.max_value() > 1.0) {
      throw argument_error("albedo values must lie in [0, 1]");
    }
  }
  if (!(albedo.meters_per_texel > 0.0)) {
    throw argument_error("meters per texel must be positive");
  }
  const std::size_t channels = albedo.planes.size();
  if (water.eta.size() != channels || water.beta_scale.size() != channels) {
    throw argument_error("water coefficients must match the channel count");
  }
  for (double e : water.eta) {
    if (!(e > 0.0)) throw argument_error("attenuation must be positive");
  }
  for (double b : water.beta_scale) {
    if (b < 0.0) throw argument_error("scattering must be non-negative");
  }
  if (!(water.hg_g > -1.0 && water.hg_g < 1.0)) {
    throw argument_error("phase asymmetry must lie in (-1, 1)");
  }
  if (lights.empty()) throw argument_error("scene needs at least one light");
  for (const LightSource& light : lights) {
    if (norm(light.direction) <= 0.0) {
      throw argument_error("light direction must be non-zero");
    }
    if (!(light.cone_sigma > 0.0)) {
      throw argument_error("light cone sigma must be positive");
    }
    if (light.intensity.size() != channels) {
      throw argument_error("light intensity must match the channel count");
    }
    for (double i : light.intensity) {
      if (i < 0.0) throw argument_error("light intensity must be >= 0");
    }
  }
  if (!(contamination.density >= 0.0 && contamination.density < 0.5)) {
    throw argument_error("contamination density must lie in [0, 0.5)");
  }
  if (contamination.density > 0.0) {
    if (!(contamination.min_radius > 0.0) ||
        contamination.max_radius < contamination.min_radius) {
      throw argument_error("contamination radius range is invalid");
    }
    if (contamination.intensity_min < 0.0 ||
        contamination.intensity_max > 1.0 ||
        contamination.intensity_max < contamination.intensity_min) {
      throw argument_error("contamination intensity range is invalid");
    }
  }
  if (scatter_steps < 50) {
    throw argument_error("scatter integration needs at least 50 steps");
  }
  if (!(scatter_max_distance > 0.0)) {
    throw argument_error("scatter range must be positive");
  }
  if (scatter_grid < 1) {
    throw argument_error("scatter grid factor must be >= 1");
  }
}

Rendered render_frame(const SceneSpec& scene) {
  scene.validate();
  const std::vector<LightPrep> lights = prepare_lights(scene);
  std::map<GeometryKey, Geometry> cache;
  return render_one(scene, lights, scene.pose, 0, scene.seed, cache);
}

std::vector<Rendered> render_sequence(const SceneSpec& scene,
                                      const std::vector<Pose>& trajectory,
                                      std::uint64_t contamination_seed) {
  scene.validate();
  if (trajectory.empty()) {
    throw argument_error("trajectory must list at least one pose");
  }
  const std::vector<LightPrep> lights = prepare_lights(scene);
  std::map<GeometryKey, Geometry> cache;
  std::vector<Rendered> frames;
  frames.reserve(trajectory.size());
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    frames.push_back(render_one(scene, lights, trajectory[i], i,
                                contamination_seed, cache));
  }
  return frames;
}

std::vector<Rendered> render_sequence(const SceneSpec& scene,
                                      const std::vector<Pose>& trajectory) {
  return render_sequence(scene, trajectory, scene.seed);
}

std::vector<double> integrate_backscatter(const SceneSpec& scene, double px,
                                          double py, double max_distance,
                                          int steps) {
  if (steps <= 0) throw argument_error("step count must be positive");
  if (!(max_distance > 0.0)) {
    throw argument_error("integration distance must be positive");
  }
  scene.validate();
  const std::vector<LightPrep> lights = prepare_lights(scene);
  const Vec3 ray = pixel_ray(scene.camera, px, py);
  std::vector<double> out(scene.albedo.planes.size());
  backscatter_along(scene, lights, ray, max_distance, steps, out.data());
  return out;
}

SceneSpec load_scene(const std::filesystem::path& path) {
  const json doc = read_json_document(path);
  check_schema(doc, "scene");

  SceneSpec scene;
  const json& camera = require_field(doc, "camera", "");
  scene.camera.width =
      static_cast<int>(require_number(camera, "width", "camera."));
  scene.camera.height =
      static_cast<int>(require_number(camera, "height", "camera."));
  scene.camera.focal_px = require_number(camera, "focal_px", "camera.");
  scene.camera.cx =
      number_or(camera, "cx", scene.camera.width / 2.0, "camera.");
  scene.camera.cy =
      number_or(camera, "cy", scene.camera.height / 2.0, "camera.");

  scene.pose = pose_from_json(require_field(doc, "pose", ""), "pose.");

  const json& lights = require_field(doc, "lights", "");
  if (!lights.is_array() || lights.empty()) {
    throw format_error("scene: field lights must be a non-empty array");
  }
  for (std::size_t i = 0; i < lights.size(); ++i) {
    const std::string light_path = "lights[" + std::to_string(i) + "].";
    const json& entry = lights[i];
    LightSource light;
    const std::vector<double> position =
        require_numbers(entry, "position", light_path, 3);
    const std::vector<double> direction =
        require_numbers(entry, "direction", light_path, 3);
    std::copy(position.begin(), position.end(), light.position.begin());
    std::copy(direction.begin(), direction.end(), light.direction.begin());
    light.intensity = require_numbers(entry, "intensity", light_path);
    light.cone_sigma = require_number(entry, "cone_sigma", light_path);
    scene.lights.push_back(std::move(light));
  }

  const json& albedo = require_field(doc, "albedo", "");
  const double mpt = require_number(albedo, "meters_per_texel", "albedo.");
  const std::vector<double> origin =
      require_numbers(albedo, "origin", "albedo.", 2);
  if (albedo.contains("path")) {
    if (!albedo["path"].is_string()) {
      throw format_error("field albedo.path must be a string");
    }
    std::filesystem::path image_path = albedo["path"].get<std::string>();
    if (image_path.is_relative()) {
      image_path = path.parent_path() / image_path;
    }
    const Frame frame = load_frame(image_path, TransferCurve::linear);
    scene.albedo.planes = frame.planes;
    scene.albedo.meters_per_texel = mpt;
    scene.albedo.origin_u = origin[0];
    scene.albedo.origin_v = origin[1];
  } else {
    const int width =
        static_cast<int>(require_number(albedo, "width", "albedo."));
    const int height =
        static_cast<int>(require_number(albedo, "height", "albedo."));
    const std::vector<double> base =
        require_numbers(albedo, "base", "albedo.");
    const double amplitude = number_or(albedo, "amplitude", 0.5, "albedo.");
    const int lattice =
        static_cast<int>(number_or(albedo, "lattice", 64, "albedo."));
    const int octaves =
        static_cast<int>(number_or(albedo, "octaves", 1, "albedo."));
    const std::uint64_t seed =
        static_cast<std::uint64_t>(number_or(doc, "seed", 0.0, ""));
    scene.albedo = make_noise_albedo(width, height, mpt, base, amplitude,
                                     lattice, seed, origin[0], origin[1],
                                     octaves);
  }

  // Water defaults mimic deep-ocean spectral attenuation, red dying first.
  const std::size_t channels = scene.albedo.planes.size();
  scene.water.eta = channels == 3 ? std::vector<double>{0.65, 0.35, 0.30}
                                  : std::vector<double>(channels, 0.35);
  scene.water.beta_scale.assign(channels, 0.05);
  if (doc.contains("water")) {
    const json& water = doc["water"];
    if (water.contains("eta")) {
      scene.water.eta = require_numbers(water, "eta", "water.");
    }
    if (water.contains("beta_scale")) {
      scene.water.beta_scale = require_numbers(water, "beta_scale", "water.");
    }
    scene.water.hg_g = number_or(water, "hg_g", 0.8, "water.");
  }

  if (doc.contains("contamination")) {
    const json& contamination = doc["contamination"];
    scene.contamination.density =
        number_or(contamination, "density", 0.0, "contamination.");
    if (contamination.contains("radius")) {
      const std::vector<double> radius =
          require_numbers(contamination, "radius", "contamination.", 2);
      scene.contamination.min_radius = radius[0];
      scene.contamination.max_radius = radius[1];
    }
    if (contamination.contains("intensity")) {
      const std::vector<double> intensity =
          require_numbers(contamination, "intensity", "contamination.", 2);
      scene.contamination.intensity_min = intensity[0];
      scene.contamination.intensity_max = intensity[1];
    }
  }

  scene.seed = static_cast<std::uint64_t>(number_or(doc, "seed", 0.0, ""));
  scene.scatter_steps =
      static_cast<int>(number_or(doc, "scatter_steps", 64, ""));
  scene.scatter_max_distance =
      number_or(doc, "scatter_max_distance", 20.0, "");
  scene.scatter_grid =
      static_cast<int>(number_or(doc, "scatter_grid", 4, ""));
  if (doc.contains("cosine_weighting")) {
    if (!doc["cosine_weighting"].is_boolean()) {
      throw format_error("field cosine_weighting must be a boolean");
    }
    scene.cosine_weighting = doc["cosine_weighting"].get<bool>();
  }

  scene.validate();
  return scene;
}

std::vector<Pose> load_trajectory(const std::filesystem::path& path) {
  const json doc = read_json_document(path);
  check_schema(doc, "trajectory");
  const json& poses = require_field(doc, "poses", "");
  if (!poses.is_array() || poses.empty()) {
    throw format_error("trajectory: field poses must be a non-empty array");
  }
  std::vector<Pose> out;
  out.reserve(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    out.push_back(pose_from_json(poses[i],
                                 "poses[" + std::to_string(i) + "]."));
  }
  return out;
}

}  // namespace abysslight
