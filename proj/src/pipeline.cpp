#include "abysslight/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "abysslight/errors.hpp"

namespace abysslight {

namespace {

using nlohmann::json;

Frame preprocess_frame(const Frame& frame, const WindowSpec& spec) {
  Frame low;
  low.index = frame.index;
  low.planes.reserve(frame.planes.size());
  for (const ImagePlane& plane : frame.planes) {
    low.planes.push_back(preprocess_plane(plane, spec));
  }
  return low;
}

}  // namespace

EnhancementStream::EnhancementStream(ScatterField scatter,
                                     EnhancementConfig config,
                                     bool static_factor)
    : scatter_(std::move(scatter)),
      config_(std::move(config)),
      static_factor_(static_factor) {
  config_.validate();
  if (config_.window.length < 3) {
    throw argument_error("streaming window must hold at least 3 frames");
  }
  if (scatter_.planes.empty()) {
    throw argument_error("stream needs a scatter field");
  }
  low_scatter_ = preprocess_scatter(scatter_, config_.window);
}

std::vector<StreamOutput> EnhancementStream::push(Frame frame) {
  if (finished_) throw stream_error("push after flush");
  frame.validate("stream frame");
  if (frame.channels() != scatter_.channels() ||
      frame.width() != scatter_.width() ||
      frame.height() != scatter_.height()) {
    if (pushed_ == 0) {
      throw argument_error("scatter field does not match the frame layout");
    }
    throw stream_error("frame does not match the stream layout");
  }
  if (config_.reference.channels.empty()) {
    config_.reference = ReferenceColor::grey(frame.channels());
  }

  Slot slot;
  slot.low = preprocess_frame(frame, config_.window);
  slot.full = std::move(frame);
  ring_.push_back(std::move(slot));
  ++pushed_;

  std::vector<StreamOutput> outputs;
  const std::size_t n = static_cast<std::size_t>(config_.window.length);
  const std::size_t h = n / 2;
  if (pushed_ < n) return outputs;

  const std::size_t last = pushed_ - 1;
  while (emitted_ + h <= last) {
    outputs.push_back(emit_one(emitted_, last));
    drop_consumed();
  }
  return outputs;
}

std::vector<StreamOutput> EnhancementStream::flush() {
  if (finished_) return {};
  finished_ = true;
  if (pushed_ < 3) {
    throw stream_error("stream ended with fewer than 3 frames");
  }
  std::vector<StreamOutput> outputs;
  const std::size_t last = pushed_ - 1;
  while (emitted_ <= last) {
    outputs.push_back(emit_one(emitted_, last));
    drop_consumed();
  }
  ring_.clear();
  return outputs;
}

StreamOutput EnhancementStream::emit_one(std::size_t t, std::size_t last) {
  const std::size_t h = static_cast<std::size_t>(config_.window.length) / 2;
  std::size_t lo = t > h ? t - h : 0;
  std::size_t hi = std::min(last, t + h);
  while (hi - lo + 1 < 3) {
    if (hi < last) {
      ++hi;
    } else if (lo > 0) {
      --lo;
    } else {
      throw stream_error("window cannot reach 3 frames");
    }
  }

  std::vector<const Frame*> window;
  window.reserve(hi - lo + 1);
  for (std::size_t i = lo; i <= hi; ++i) {
    window.push_back(&ring_[i - base_].low);
  }
  const Frame& center = ring_[t - base_].full;

  FactorField factor;
  if (static_factor_) {
    if (!frozen_ready_) {
      // The frozen factor comes from the first complete window (all frames
      // buffered at warm-up), not from the first emission's shrunk window.
      std::vector<const Frame*> first_window;
      const std::size_t full_hi =
          std::min(last, static_cast<std::size_t>(config_.window.length) - 1);
      first_window.reserve(full_hi + 1);
      for (std::size_t i = 0; i <= full_hi; ++i) {
        first_window.push_back(&ring_[i - base_].low);
      }
      const AllSeafloor estimate = allseafloor_from_preprocessed(
          first_window, center.width(), center.height(), config_.window);
      frozen_factor_ = compute_factor(estimate, low_scatter_,
                                      config_.reference, config_.epsilon);
      frozen_ready_ = true;
    }
    factor = frozen_factor_;
  } else {
    const AllSeafloor estimate = allseafloor_from_preprocessed(
        window, center.width(), center.height(), config_.window);
    factor = compute_factor(estimate, low_scatter_, config_.reference,
                            config_.epsilon);
  }

  Enhanced enhanced = enhance(center, scatter_, factor, config_);

  StreamOutput out;
  out.frame_index = t;
  out.enhanced = std::move(enhanced.frame);
  out.coverage = std::move(enhanced.coverage);
  out.factor = std::move(factor);
  out.window_size = static_cast<int>(hi - lo + 1);
  ++emitted_;
  return out;
}

void EnhancementStream::drop_consumed() {
  const std::size_t h = static_cast<std::size_t>(config_.window.length) / 2;
  // The next emission needs frames from emitted_ - h on; the shrink-to-3
  // rule at the tail can additionally reach back to the third-from-last.
  std::size_t keep_from = emitted_ > h ? emitted_ - h : 0;
  if (pushed_ >= 3) keep_from = std::min(keep_from, pushed_ - 3);
  while (base_ < keep_from && !ring_.empty()) {
    ring_.pop_front();
    ++base_;
  }
}

std::vector<StreamOutput> enhance_sequence(const std::vector<Frame>& frames,
                                           const ScatterField& scatter,
                                           const EnhancementConfig& config,
                                           bool static_factor) {
  EnhancementStream stream(scatter, config, static_factor);
  std::vector<StreamOutput> outputs;
  for (const Frame& frame : frames) {
    std::vector<StreamOutput> emitted = stream.push(frame);
    for (StreamOutput& out : emitted) outputs.push_back(std::move(out));
  }
  std::vector<StreamOutput> tail = stream.flush();
  for (StreamOutput& out : tail) outputs.push_back(std::move(out));
  return outputs;
}

std::vector<std::filesystem::path> read_manifest(
    const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw io_error("cannot open manifest " + manifest_path.string());
  const std::filesystem::path base = manifest_path.parent_path();

  std::vector<std::filesystem::path> paths;
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    const std::size_t end = line.find_last_not_of(" \t\r");
    std::filesystem::path entry(line.substr(start, end - start + 1));
    if (entry.is_relative()) entry = base / entry;
    paths.push_back(std::move(entry));
  }
  if (paths.empty()) {
    throw argument_error("manifest lists no images: " + manifest_path.string());
  }
  return paths;
}

namespace {

json config_to_json(const EnhancementConfig& config,
                    const RunBatchOptions& options) {
  return json{
      {"window",
       {{"length", config.window.length},
        {"spatial_radius", config.window.spatial_radius},
        {"downsample_factor", config.window.downsample_factor}}},
      {"reference", config.reference.channels},
      {"epsilon", config.epsilon},
      {"clamp_output", config.clamp_output},
      {"static_factor", options.static_factor},
      {"transfer", options.load_curve == TransferCurve::srgb ? "srgb"
                                                             : "linear"},
      {"output_depth", options.output_depth},
  };
}

}  // namespace

void write_run_report(const RunReport& report,
                      const std::filesystem::path& path) {
  json doc{
      {"schema", 1},
      {"frames", report.frames},
      {"window_sizes", report.window_sizes},
      {"invalid_fraction", report.invalid_fraction},
      {"ms_per_frame", report.ms_per_frame},
      {"complete", report.complete},
      {"config", config_to_json(report.config, report.options)},
  };
  if (!report.error.empty()) doc["error"] = report.error;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot open " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw io_error("write failed: " + path.string());
}

RunReport run_batch(const std::filesystem::path& manifest_path,
                    const ScatterField& scatter,
                    const EnhancementConfig& config,
                    const std::filesystem::path& out_dir,
                    const RunBatchOptions& options) {
  const std::vector<std::filesystem::path> paths =
      read_manifest(manifest_path);
  std::filesystem::create_directories(out_dir);

  EnhancementConfig resolved = config;
  if (resolved.reference.channels.empty() && scatter.channels() > 0) {
    resolved.reference = ReferenceColor::grey(scatter.channels());
  }

  RunReport report;
  report.config = resolved;
  report.options = options;

  using clock = std::chrono::steady_clock;
  double pending_ms = 0.0;

  auto write_outputs = [&](std::vector<StreamOutput>&& outputs, double ms) {
    if (!outputs.empty()) {
      const double share =
          (pending_ms + ms) / static_cast<double>(outputs.size());
      pending_ms = 0.0;
      for (StreamOutput& out : outputs) {
        const std::filesystem::path& src = paths[out.frame_index];
        const std::string stem = src.stem().string();
        save_frame(out.enhanced, out_dir / (stem + "_enhanced.png"),
                   options.output_depth, TransferCurve::linear, true);
        write_mask_png(out_dir / (stem + "_coverage.png"), out.coverage);
        if (options.dump_factors) {
          save_factor_field(out.factor, out_dir / (stem + "_factor.tif"));
        }
        report.window_sizes.push_back(out.window_size);
        report.invalid_fraction.push_back(out.factor.invalid_fraction());
        report.ms_per_frame.push_back(share);
        ++report.frames;
      }
    } else {
      pending_ms += ms;
    }
  };

  try {
    EnhancementStream stream(scatter, resolved, options.static_factor);
    for (std::size_t i = 0; i < paths.size(); ++i) {
      Frame frame = load_frame(paths[i], options.load_curve, i);
      const auto t0 = clock::now();
      std::vector<StreamOutput> outputs = stream.push(std::move(frame));
      const double ms =
          std::chrono::duration<double, std::milli>(clock::now() - t0).count();
      write_outputs(std::move(outputs), ms);
    }
    const auto t0 = clock::now();
    std::vector<StreamOutput> outputs = stream.flush();
    const double ms =
        std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    write_outputs(std::move(outputs), ms);
  } catch (const error& e) {
    report.complete = false;
    report.error = e.what();
    write_run_report(report, out_dir / "run_report.json");
    throw;
  }

  report.complete = true;
  write_run_report(report, out_dir / "run_report.json");
  return report;
}

}  // namespace abysslight
