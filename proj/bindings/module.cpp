// Python bindings. Planes cross the boundary as float64 numpy arrays of
// shape (height, width); frames as (height, width) or (height, width,
// channels). Single-channel results come back 2-D, RGB results (h, w, 3).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

#include "abysslight/errors.hpp"
#include "abysslight/estimation.hpp"
#include "abysslight/image_io.hpp"
#include "abysslight/metrics.hpp"
#include "abysslight/pipeline.hpp"
#include "abysslight/resample.hpp"
#include "abysslight/robust_stats.hpp"
#include "abysslight/simulator.hpp"
#include "abysslight/threading.hpp"

namespace py = pybind11;
using namespace abysslight;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

ImagePlane to_plane(const DoubleArray& array, const char* what) {
  if (array.ndim() != 2) {
    throw argument_error(std::string(what) + " must be a 2-D array");
  }
  const int h = static_cast<int>(array.shape(0));
  const int w = static_cast<int>(array.shape(1));
  std::vector<double> data(array.data(), array.data() + array.size());
  return ImagePlane(w, h, std::move(data));
}

py::array plane_to_array(const ImagePlane& plane) {
  py::array_t<double> out({plane.height(), plane.width()});
  std::copy(plane.data(), plane.data() + plane.size(),
            out.mutable_data());
  return out;
}

std::vector<ImagePlane> split_channels(const DoubleArray& array,
                                       const char* what) {
  if (array.ndim() == 2) {
    return {to_plane(array, what)};
  }
  if (array.ndim() != 3) {
    throw argument_error(std::string(what) +
                         " must have shape (h, w) or (h, w, c)");
  }
  const int h = static_cast<int>(array.shape(0));
  const int w = static_cast<int>(array.shape(1));
  const int c = static_cast<int>(array.shape(2));
  std::vector<ImagePlane> planes;
  const double* src = array.data();
  for (int ci = 0; ci < c; ++ci) {
    ImagePlane plane(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        plane.at(x, y) = src[(static_cast<std::size_t>(y) * w + x) * c + ci];
    planes.push_back(std::move(plane));
  }
  return planes;
}

Frame to_frame(const DoubleArray& array, const char* what) {
  Frame frame;
  frame.planes = split_channels(array, what);
  frame.validate(what);
  return frame;
}

py::array channels_to_array(const std::vector<ImagePlane>& planes) {
  if (planes.size() == 1) return plane_to_array(planes[0]);
  const int h = planes[0].height();
  const int w = planes[0].width();
  const int c = static_cast<int>(planes.size());
  py::array_t<double> out({h, w, c});
  double* dst = out.mutable_data();
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        dst[(static_cast<std::size_t>(y) * w + x) * c + ci] =
            planes[ci].at(x, y);
  return out;
}

std::vector<Frame> to_frames(const std::vector<DoubleArray>& arrays,
                             const char* what) {
  std::vector<Frame> frames;
  for (std::size_t k = 0; k < arrays.size(); ++k) {
    Frame frame = to_frame(arrays[k], what);
    frame.index = k;
    frames.push_back(std::move(frame));
  }
  return frames;
}

ScatterField to_scatter(const DoubleArray& array) {
  ScatterField field;
  field.planes = split_channels(array, "scatter");
  return field;
}

TransferCurve parse_curve(const std::string& name) {
  if (name == "linear") return TransferCurve::linear;
  if (name == "srgb") return TransferCurve::srgb;
  throw argument_error("transfer curve must be 'linear' or 'srgb'");
}

EnhancementConfig make_config(int length, int spatial_radius,
                              int downsample_factor, double epsilon,
                              const std::optional<std::vector<double>>& reference,
                              bool clamp_output) {
  EnhancementConfig config;
  config.window.length = length;
  config.window.spatial_radius = spatial_radius;
  config.window.downsample_factor = downsample_factor;
  config.epsilon = epsilon;
  config.clamp_output = clamp_output;
  if (reference) config.reference.channels = *reference;
  return config;
}

Registration registration_from_object(const py::object& reg) {
  if (py::isinstance<py::str>(reg)) {
    return load_registration(reg.cast<std::string>());
  }
  DoubleArray array = reg.cast<DoubleArray>();
  if (array.ndim() != 3 || array.shape(1) != 3 || array.shape(2) != 3) {
    throw argument_error(
        "registration must be an (n, 3, 3) array of frame-to-mosaic "
        "homographies or a path to a registration JSON file");
  }
  Registration out;
  const double* src = array.data();
  for (py::ssize_t k = 0; k < array.shape(0); ++k) {
    std::array<double, 9> h;
    std::copy(src + 9 * k, src + 9 * (k + 1), h.begin());
    out.mappings.push_back(FrameMapping::from_homography(h));
  }
  return out;
}

py::dict rendered_to_dict(Rendered& r) {
  py::dict out;
  out["observed"] = channels_to_array(r.observed.planes);
  out["albedo"] = channels_to_array(r.truth.albedo.planes);
  out["scatter"] = channels_to_array(r.truth.scatter.planes);
  out["factor"] = channels_to_array(r.truth.factor.planes);
  out["factor_valid"] = plane_to_array(r.truth.factor.valid);
  out["corr_u"] = plane_to_array(r.truth.corr_u);
  out["corr_v"] = plane_to_array(r.truth.corr_v);
  return out;
}

}  // namespace

PYBIND11_MODULE(_abysslight, m) {
  m.doc() = "Removal of co-moving lighting and water effects from "
            "deep-sea image sequences";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const io_error& e) {
      PyErr_SetString(PyExc_OSError, e.what());
    } catch (const metric_error& e) {
      PyErr_SetString(PyExc_RuntimeError, e.what());
    } catch (const argument_error& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def(
      "p_half",
      [](double rate, int n) { return p_half(ContaminationModel(rate), n); },
      py::arg("rate"), py::arg("n"),
      "Probability that at least half of n samples are contaminated at the "
      "given per-sample rate, i.e. that a per-pixel median breaks.");

  m.def(
      "required_window",
      [](double rate, double target) {
        return required_window(ContaminationModel(rate), target);
      },
      py::arg("rate"), py::arg("target"),
      "Smallest odd window length whose breakdown probability is at most "
      "target.");

  m.def(
      "temporal_median",
      [](const std::vector<DoubleArray>& stack) {
        std::vector<ImagePlane> planes;
        for (const auto& array : stack)
          planes.push_back(to_plane(array, "stack frame"));
        ImagePlane result;
        {
          py::gil_scoped_release release;
          result = temporal_median(planes);
        }
        return plane_to_array(result);
      },
      py::arg("stack"),
      "Per-pixel median across a list of equally sized 2-D arrays.");

  m.def(
      "spatial_median",
      [](const DoubleArray& plane, int radius) {
        ImagePlane input = to_plane(plane, "plane");
        ImagePlane result;
        {
          py::gil_scoped_release release;
          result = spatial_median(input, radius);
        }
        return plane_to_array(result);
      },
      py::arg("plane"), py::arg("radius"),
      "Median over the (2r+1)^2 neighborhood clipped to the image bounds.");

  m.def(
      "downsample",
      [](const DoubleArray& plane, int factor) {
        return plane_to_array(downsample(to_plane(plane, "plane"), factor));
      },
      py::arg("plane"), py::arg("factor"),
      "Box-mean reduction by an integer factor.");

  m.def(
      "upsample",
      [](const DoubleArray& plane, int width, int height) {
        return plane_to_array(
            upsample(to_plane(plane, "plane"), width, height));
      },
      py::arg("plane"), py::arg("width"), py::arg("height"),
      "Bilinear enlargement with the align-centers convention.");

  m.def(
      "estimate_scatter",
      [](const std::vector<DoubleArray>& water_frames) {
        std::vector<Frame> frames = to_frames(water_frames, "water frame");
        ScatterField field;
        {
          py::gil_scoped_release release;
          field = estimate_scatter(frames);
        }
        return channels_to_array(field.planes);
      },
      py::arg("water_frames"),
      "Additive backscatter field: per-channel temporal median over at "
      "least three pure water frames.");

  m.def(
      "enhance_sequence",
      [](const std::vector<DoubleArray>& frame_arrays,
         const DoubleArray& scatter_array, int length, int spatial_radius,
         int downsample_factor, double epsilon,
         const std::optional<std::vector<double>>& reference,
         bool clamp_output, bool static_factor) {
        std::vector<Frame> frames = to_frames(frame_arrays, "frame");
        ScatterField scatter = to_scatter(scatter_array);
        EnhancementConfig config =
            make_config(length, spatial_radius, downsample_factor, epsilon,
                        reference, clamp_output);
        std::vector<StreamOutput> outputs;
        {
          py::gil_scoped_release release;
          outputs = enhance_sequence(frames, scatter, config, static_factor);
        }
        py::list result;
        for (StreamOutput& out : outputs) {
          py::dict entry;
          entry["frame_index"] = out.frame_index;
          entry["enhanced"] = channels_to_array(out.enhanced.planes);
          entry["coverage"] = plane_to_array(out.coverage);
          entry["window_size"] = out.window_size;
          entry["invalid_fraction"] = out.factor.invalid_fraction();
          result.append(entry);
        }
        return result;
      },
      py::arg("frames"), py::arg("scatter"), py::arg("length") = 7,
      py::arg("spatial_radius") = 1, py::arg("downsample_factor") = 8,
      py::arg("epsilon") = 1e-4, py::arg("reference") = py::none(),
      py::arg("clamp_output") = false, py::arg("static_factor") = false,
      "Sliding-window enhancement of an ordered frame list. Returns one "
      "dict per input frame with keys frame_index, enhanced, coverage, "
      "window_size and invalid_fraction.");

  m.def(
      "render_frame",
      [](const std::filesystem::path& scene_path) {
        SceneSpec scene = load_scene(scene_path);
        Rendered r;
        {
          py::gil_scoped_release release;
          r = render_frame(scene);
        }
        return rendered_to_dict(r);
      },
      py::arg("scene"),
      "Renders the scene JSON at its own pose. Returns a dict with keys "
      "observed, albedo, scatter, factor, factor_valid, corr_u, corr_v.");

  m.def(
      "render_sequence",
      [](const std::filesystem::path& scene_path,
         const std::filesystem::path& trajectory_path,
         std::optional<std::uint64_t> seed) {
        SceneSpec scene = load_scene(scene_path);
        std::vector<Pose> trajectory = load_trajectory(trajectory_path);
        std::vector<Rendered> rendered;
        {
          py::gil_scoped_release release;
          rendered = seed ? render_sequence(scene, trajectory, *seed)
                          : render_sequence(scene, trajectory);
        }
        py::list result;
        for (Rendered& r : rendered) result.append(rendered_to_dict(r));
        return result;
      },
      py::arg("scene"), py::arg("trajectory"), py::arg("seed") = py::none(),
      "Renders one frame per trajectory pose. seed overrides the scene's "
      "transient-object seed.");

  m.def(
      "integrate_backscatter",
      [](const std::filesystem::path& scene_path, double px, double py_,
         double max_distance, int steps) {
        SceneSpec scene = load_scene(scene_path);
        return integrate_backscatter(scene, px, py_, max_distance, steps);
      },
      py::arg("scene"), py::arg("px"), py::arg("py"),
      py::arg("max_distance"), py::arg("steps"),
      "Cumulative per-channel backscatter along one pixel's ray.");

  m.def(
      "consistency_error",
      [](const std::vector<DoubleArray>& frame_arrays,
         const py::object& registration) {
        std::vector<Frame> frames = to_frames(frame_arrays, "frame");
        Registration reg = registration_from_object(registration);
        ConsistencyReport report;
        {
          py::gil_scoped_release release;
          report = consistency_error(frames, reg);
        }
        py::dict out;
        out["channel_error"] = report.channel_error;
        out["overlap_pixel_count"] = report.overlap_pixel_count;
        out["frame_error"] = report.frame_error;
        return out;
      },
      py::arg("frames"), py::arg("registration"),
      "Registration-based consistency metric. registration is an (n, 3, 3) "
      "array of frame-to-mosaic homographies or a path to a registration "
      "JSON file.");

  m.def(
      "scale_invariant_rmse",
      [](const DoubleArray& restored, const DoubleArray& truth,
         const std::optional<DoubleArray>& mask, double trim_fraction) {
        Frame a = to_frame(restored, "restored");
        Frame b = to_frame(truth, "truth");
        std::optional<ImagePlane> mask_plane;
        if (mask) mask_plane = to_plane(*mask, "mask");
        return scale_invariant_rmse(a, b,
                                    mask_plane ? &*mask_plane : nullptr,
                                    trim_fraction);
      },
      py::arg("restored"), py::arg("truth"), py::arg("mask") = py::none(),
      py::arg("trim_fraction") = 0.0,
      "Per-channel RMSE after the closed-form least-squares scale, "
      "normalized by the truth mean.");

  m.def(
      "composite",
      [](const std::vector<DoubleArray>& frame_arrays,
         const py::object& registration) {
        std::vector<Frame> frames = to_frames(frame_arrays, "frame");
        Registration reg = registration_from_object(registration);
        Frame mosaic;
        {
          py::gil_scoped_release release;
          mosaic = composite(frames, reg);
        }
        return channels_to_array(mosaic.planes);
      },
      py::arg("frames"), py::arg("registration"),
      "Two-band mosaic blend over the registered frames.");

  m.def(
      "load_frame",
      [](const std::filesystem::path& path, const std::string& curve) {
        Frame frame = load_frame(path, parse_curve(curve));
        return channels_to_array(frame.planes);
      },
      py::arg("path"), py::arg("curve") = "linear",
      "Loads a PNG or TIFF as linear radiance in [0, 1].");

  m.def(
      "save_frame",
      [](const DoubleArray& array, const std::filesystem::path& path,
         int bit_depth, const std::string& curve, bool clamp) {
        save_frame(to_frame(array, "frame"), path, bit_depth,
                   parse_curve(curve), clamp);
      },
      py::arg("frame"), py::arg("path"), py::arg("bit_depth") = 16,
      py::arg("curve") = "linear", py::arg("clamp") = true,
      "Writes a frame as PNG or TIFF at the given integer depth.");

  m.def(
      "load_scatter_field",
      [](const std::filesystem::path& path) {
        return channels_to_array(load_scatter_field(path).planes);
      },
      py::arg("path"),
      "Loads a scatter field saved as 16-bit TIFF with a JSON scale "
      "sidecar.");

  m.def(
      "save_scatter_field",
      [](const DoubleArray& array, const std::filesystem::path& path) {
        save_scatter_field(to_scatter(array), path);
      },
      py::arg("field"), py::arg("path"),
      "Saves a scatter field as 16-bit TIFF with a JSON scale sidecar.");

  m.def("set_max_threads", &set_max_threads, py::arg("n"),
        "Caps the worker threads used by pixel kernels; 0 means all "
        "hardware threads. Outputs are bit-identical for any setting.");
  m.def("max_threads", &max_threads, "Current worker thread cap.");

  m.attr("__version__") = "0.1.0";
}
