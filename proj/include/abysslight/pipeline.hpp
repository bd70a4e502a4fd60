#ifndef ABYSSLIGHT_PIPELINE_HPP
#define ABYSSLIGHT_PIPELINE_HPP

#include <deque>
#include <filesystem>
#include <string>
#include <vector>

#include "abysslight/estimation.hpp"
#include "abysslight/image.hpp"
#include "abysslight/image_io.hpp"

namespace abysslight {

struct StreamOutput {
  std::size_t frame_index = 0;
  Frame enhanced;
  ImagePlane coverage;
  FactorField factor;
  int window_size = 0;
};

// Sliding-window enhancement over an ordered frame stream. Output frame t
// uses the window [t - n/2, t + n/2] clipped to the stream, never shorter
// than 3 frames. Every input yields exactly one output, in input order:
// interior outputs appear as soon as their window completes, the leading
// n/2 outputs appear together with the first of them, and the trailing
// ones on flush. Memory stays bounded by the window, not the stream.
class EnhancementStream {
 public:
  // static_factor freezes the illumination factor computed from the first
  // complete window instead of re-solving it per frame.
  EnhancementStream(ScatterField scatter, EnhancementConfig config,
                    bool static_factor = false);

  std::vector<StreamOutput> push(Frame frame);
  std::vector<StreamOutput> flush();

  std::size_t pushed() const { return pushed_; }
  std::size_t emitted() const { return emitted_; }

 private:
  struct Slot {
    Frame full;
    Frame low;
  };

  StreamOutput emit_one(std::size_t t, std::size_t last);
  void drop_consumed();

  ScatterField scatter_;
  ScatterField low_scatter_;
  EnhancementConfig config_;
  bool static_factor_ = false;
  bool finished_ = false;

  std::deque<Slot> ring_;
  std::size_t base_ = 0;  // stream index of ring_.front()
  std::size_t pushed_ = 0;
  std::size_t emitted_ = 0;
  FactorField frozen_factor_;
  bool frozen_ready_ = false;
};

// Convenience wrapper: streams a whole in-memory sequence through
// EnhancementStream and returns the outputs in frame order.
std::vector<StreamOutput> enhance_sequence(const std::vector<Frame>& frames,
                                           const ScatterField& scatter,
                                           const EnhancementConfig& config,
                                           bool static_factor = false);

// Plain-text manifest: one image path per line, temporal order, `#` starts
// a comment. Relative paths resolve against the manifest's directory.
std::vector<std::filesystem::path> read_manifest(
    const std::filesystem::path& manifest_path);

struct RunBatchOptions {
  bool dump_factors = false;
  bool static_factor = false;
  TransferCurve load_curve = TransferCurve::linear;
  int output_depth = 16;
};

struct RunReport {
  std::size_t frames = 0;             // outputs written
  std::vector<int> window_sizes;      // per output frame
  std::vector<double> invalid_fraction;
  std::vector<double> ms_per_frame;   // processing time, file I/O excluded
  bool complete = false;
  std::string error;
  EnhancementConfig config;
  RunBatchOptions options;
};

void write_run_report(const RunReport& report,
                      const std::filesystem::path& path);

// Streams every manifest entry through an EnhancementStream, writing
// <stem>_enhanced.png, <stem>_coverage.png and optionally <stem>_factor.tif
// per input plus run_report.json into out_dir. A failing input aborts the
// run: outputs written so far persist and the report is saved with
// complete=false and the failing path before the error is rethrown.
RunReport run_batch(const std::filesystem::path& manifest_path,
                    const ScatterField& scatter,
                    const EnhancementConfig& config,
                    const std::filesystem::path& out_dir,
                    const RunBatchOptions& options = {});

}  // namespace abysslight

#endif
