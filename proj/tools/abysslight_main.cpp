#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "abysslight/errors.hpp"
#include "abysslight/estimation.hpp"
#include "abysslight/image_io.hpp"
#include "abysslight/metrics.hpp"
#include "abysslight/pipeline.hpp"
#include "abysslight/robust_stats.hpp"
#include "abysslight/simulator.hpp"
#include "abysslight/threading.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace abysslight;

namespace {

void log_progress(bool verbose, const std::string& message) {
  if (verbose) std::cerr << message << "\n";
}

std::vector<Frame> load_frames(const std::vector<fs::path>& paths) {
  std::vector<Frame> frames;
  frames.reserve(paths.size());
  for (std::size_t i = 0; i < paths.size(); ++i) {
    frames.push_back(load_frame(paths[i], TransferCurve::linear, i));
  }
  return frames;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path.string());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Removes co-moving lighting and water effects from seafloor image "
      "sequences"};
  app.require_subcommand(1);
  app.fallthrough();

  int threads = 0;
  bool verbose = false;
  std::uint64_t seed = 0;
  app.add_option("--threads", threads, "worker threads, 0 uses every core")
      ->check(CLI::NonNegativeNumber);
  app.add_flag("--verbose", verbose, "progress logging on stderr");
  CLI::Option* seed_opt =
      app.add_option("--seed", seed, "override the scene seed");

  auto* scatter_cmd = app.add_subcommand(
      "estimate-scatter", "Temporal median over water-column frames");
  fs::path water_manifest, scatter_out;
  scatter_cmd
      ->add_option("--water-manifest", water_manifest,
                   "manifest of frames showing only water")
      ->required();
  scatter_cmd->add_option("--out", scatter_out, "output TIFF path")
      ->required();
  scatter_cmd->callback([&] {
    set_max_threads(threads);
    const std::vector<fs::path> paths = read_manifest(water_manifest);
    log_progress(verbose, "estimating scatter from " +
                              std::to_string(paths.size()) + " frames");
    save_scatter_field(estimate_scatter(load_frames(paths)), scatter_out);
    log_progress(verbose, "wrote " + scatter_out.string());
  });

  auto* enhance_cmd = app.add_subcommand(
      "enhance", "Stream a manifest through the enhancement pipeline");
  fs::path manifest, scatter_path, out_dir;
  int window = 7;
  int spatial_radius = 1;
  int downsample_factor = 8;
  double epsilon = 1e-4;
  std::vector<double> reference;
  bool static_factor = false;
  bool dump_factors = false;
  enhance_cmd->add_option("--manifest", manifest, "ordered frame manifest")
      ->required();
  enhance_cmd->add_option("--scatter", scatter_path, "scatter field TIFF")
      ->required();
  enhance_cmd->add_option("--out-dir", out_dir, "output directory")
      ->required();
  enhance_cmd->add_option("--window", window, "temporal window length, odd");
  enhance_cmd->add_option("--spatial-radius", spatial_radius,
                          "median prefilter radius");
  enhance_cmd->add_option("--downsample", downsample_factor,
                          "estimation grid reduction factor");
  enhance_cmd
      ->add_option("--reference", reference,
                   "per-channel reference color, comma separated")
      ->delimiter(',');
  enhance_cmd->add_option("--epsilon", epsilon, "division floor");
  enhance_cmd->add_flag("--static-factor", static_factor,
                        "freeze the factor from the first full window");
  enhance_cmd->add_flag("--dump-factors", dump_factors,
                        "persist per-frame factor fields");
  enhance_cmd->callback([&] {
    set_max_threads(threads);
    EnhancementConfig config;
    config.window.length = window;
    config.window.spatial_radius = spatial_radius;
    config.window.downsample_factor = downsample_factor;
    if (!reference.empty()) config.reference.channels = reference;
    config.epsilon = epsilon;
    config.validate();
    const ScatterField scatter = load_scatter_field(scatter_path);
    RunBatchOptions options;
    options.dump_factors = dump_factors;
    options.static_factor = static_factor;
    const RunReport report =
        run_batch(manifest, scatter, config, out_dir, options);
    double total_ms = 0.0;
    for (double ms : report.ms_per_frame) total_ms += ms;
    std::printf("enhanced %zu frames (%.1f ms/frame) -> %s\n", report.frames,
                report.frames ? total_ms / report.frames : 0.0,
                out_dir.string().c_str());
  });

  auto* sample_cmd = app.add_subcommand(
      "sample-size",
      "Window length needed to push the median breakdown probability below "
      "a target");
  double contamination = 0.0;
  double target = 0.0;
  sample_cmd
      ->add_option("--contamination", contamination,
                   "expected fraction of contaminated samples")
      ->required();
  sample_cmd->add_option("--target", target, "acceptable breakdown probability")
      ->required();
  sample_cmd->callback([&] {
    if (contamination >= 0.5) throw argument_error("breakdown point exceeded");
    if (!(target > 0.0 && target < 1.0)) {
      throw argument_error("target must lie in (0, 1)");
    }
    const ContaminationModel model(contamination);
    const int needed = required_window(model, target);
    std::printf("  n    p_half\n");
    for (int n = 1; n <= needed; n += 2) {
      std::printf("%3d    %.6f\n", n, p_half(model, n));
    }
    std::printf("required window: %d\n", needed);
  });

  auto* simulate_cmd = app.add_subcommand(
      "simulate", "Render a synthetic seafloor sequence with ground truth");
  fs::path scene_path, trajectory_path, sim_out;
  simulate_cmd->add_option("--scene", scene_path, "scene JSON")->required();
  simulate_cmd->add_option("--trajectory", trajectory_path, "trajectory JSON")
      ->required();
  simulate_cmd->add_option("--out-dir", sim_out, "output directory")
      ->required();
  simulate_cmd->callback([&] {
    set_max_threads(threads);
    SceneSpec scene = load_scene(scene_path);
    if (seed_opt->count() > 0) scene.seed = seed;
    const std::vector<Pose> trajectory = load_trajectory(trajectory_path);
    log_progress(verbose,
                 "rendering " + std::to_string(trajectory.size()) + " frames");
    const std::vector<Rendered> rendered = render_sequence(scene, trajectory);

    std::error_code ec;
    fs::create_directories(sim_out, ec);
    std::ofstream frames_out = open_output(sim_out / "manifest.txt");
    std::ofstream truth_out = open_output(sim_out / "truth_manifest.txt");
    json maps = json::array();
    for (std::size_t k = 0; k < rendered.size(); ++k) {
      char base[32];
      std::snprintf(base, sizeof(base), "frame_%04zu", k);
      const std::string stem = base;
      const Rendered& frame = rendered[k];
      save_frame(frame.observed, sim_out / (stem + ".png"));
      save_frame(frame.truth.albedo, sim_out / (stem + "_gt_albedo.png"));
      save_scatter_field(frame.truth.scatter,
                         sim_out / (stem + "_gt_scatter.tif"));
      save_factor_field(frame.truth.factor,
                        sim_out / (stem + "_gt_factor.tif"));
      save_correspondence_map(sim_out / (stem + "_corr.tif"),
                              frame.truth.corr_u, frame.truth.corr_v);
      frames_out << stem << ".png\n";
      truth_out << stem << "_gt_albedo.png\n";
      maps.push_back(stem + "_corr.tif");
    }
    const json registration{{"schema", 1}, {"maps", maps}};
    open_output(sim_out / "registration.json") << registration.dump(2) << "\n";
    log_progress(verbose, "wrote " + std::to_string(rendered.size()) +
                              " frames -> " + sim_out.string());
  });

  auto* eval_cmd = app.add_subcommand(
      "evaluate", "Consistency of registered frames, optional truth RMSE");
  fs::path frames_manifest, registration_path, truth_manifest, eval_out;
  eval_cmd->add_option("--frames", frames_manifest, "frame manifest")
      ->required();
  eval_cmd
      ->add_option("--registration", registration_path, "registration JSON")
      ->required();
  CLI::Option* truth_opt = eval_cmd->add_option(
      "--truth", truth_manifest, "ground-truth manifest, same order");
  eval_cmd->add_option("--out", eval_out, "report JSON path")->required();
  eval_cmd->callback([&] {
    set_max_threads(threads);
    const std::vector<Frame> frames =
        load_frames(read_manifest(frames_manifest));
    const Registration reg = load_registration(registration_path);
    const ConsistencyReport report = consistency_error(frames, reg);

    json doc{{"schema", 1}};
    doc["channel_error"] = report.channel_error;
    doc["overlap_pixel_count"] = report.overlap_pixel_count;
    doc["frame_error"] = report.frame_error;

    std::printf("channel    error\n");
    for (std::size_t c = 0; c < report.channel_error.size(); ++c) {
      std::printf("%7zu    %.6f\n", c, report.channel_error[c]);
    }
    std::printf("overlap pixels: %zu\n", report.overlap_pixel_count);

    if (truth_opt->count() > 0) {
      const std::vector<Frame> truth =
          load_frames(read_manifest(truth_manifest));
      if (truth.size() != frames.size()) {
        throw argument_error("truth manifest must match the frame manifest");
      }
      json rmse = json::array();
      for (std::size_t i = 0; i < frames.size(); ++i) {
        const std::vector<double> errors =
            scale_invariant_rmse(frames[i], truth[i]);
        rmse.push_back(errors);
        double mean = 0.0;
        for (double e : errors) mean += e;
        std::printf("frame %4zu rmse %.6f\n", i,
                    errors.empty() ? 0.0 : mean / errors.size());
      }
      doc["scale_invariant_rmse"] = rmse;
    }
    open_output(eval_out) << doc.dump(2) << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const metric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const argument_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const io_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
