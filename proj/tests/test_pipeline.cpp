#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <string>
#include <vector>

#include "abysslight/errors.hpp"
#include "abysslight/pipeline.hpp"
#include "support.hpp"

using namespace abysslight;
using testsupport::TempDir;

namespace {

std::vector<Frame> make_stream(int count, int width = 20, int height = 14,
                               int channels = 1) {
  std::vector<Frame> frames;
  for (int k = 0; k < count; ++k) {
    Frame frame = testsupport::random_frame(width, height, channels,
                                            9000 + k, 0.1, 0.9);
    frame.index = static_cast<std::size_t>(k);
    frames.push_back(std::move(frame));
  }
  return frames;
}

ScatterField flat_scatter(int width, int height, int channels, double value) {
  ScatterField field;
  for (int c = 0; c < channels; ++c)
    field.planes.push_back(ImagePlane(width, height, value));
  return field;
}

EnhancementConfig small_config(int length) {
  EnhancementConfig config;
  config.window.length = length;
  config.window.spatial_radius = 1;
  config.window.downsample_factor = 2;
  return config;
}

// Reference implementation that materializes every window: output t uses
// frames [t-h, t+h] clipped to the stream and grown forward, then backward,
// to at least 3 frames.
std::vector<Frame> reference_outputs(const std::vector<Frame>& frames,
                                     const ScatterField& scatter,
                                     const EnhancementConfig& config) {
  const std::size_t n = frames.size();
  const std::size_t h = static_cast<std::size_t>(config.window.length) / 2;
  ScatterField low_scatter = preprocess_scatter(scatter, config.window);
  std::vector<Frame> outputs;
  for (std::size_t t = 0; t < n; ++t) {
    std::size_t lo = t > h ? t - h : 0;
    std::size_t hi = std::min(n - 1, t + h);
    while (hi - lo + 1 < 3) {
      if (hi < n - 1)
        ++hi;
      else
        --lo;
    }
    std::vector<Frame> window(frames.begin() + lo, frames.begin() + hi + 1);
    AllSeafloor all = estimate_allseafloor(window, config.window);
    ReferenceColor ref = config.reference.channels.empty()
                             ? ReferenceColor::grey(frames[t].channels())
                             : config.reference;
    FactorField factor =
        compute_factor(all, low_scatter, ref, config.epsilon);
    outputs.push_back(enhance(frames[t], scatter, factor, config).frame);
  }
  return outputs;
}

}  // namespace

TEST_CASE("streaming outputs are bit-identical to materialized windows") {
  auto frames = make_stream(12);
  auto scatter = flat_scatter(20, 14, 1, 0.02);
  auto config = small_config(5);

  auto streamed = enhance_sequence(frames, scatter, config);
  auto reference = reference_outputs(frames, scatter, config);
  REQUIRE(streamed.size() == frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    CHECK(streamed[t].frame_index == t);
    CHECK(testsupport::bit_identical(streamed[t].enhanced, reference[t]));
  }
}

TEST_CASE("every input frame yields exactly one output in order") {
  auto frames = make_stream(7);
  auto scatter = flat_scatter(20, 14, 1, 0.02);
  auto outputs = enhance_sequence(frames, scatter, small_config(7));
  REQUIRE(outputs.size() == 7);
  std::vector<int> sizes;
  for (std::size_t t = 0; t < outputs.size(); ++t) {
    CHECK(outputs[t].frame_index == t);
    sizes.push_back(outputs[t].window_size);
  }
  // Clipped center windows: [0,3], [0,4], ..., [0,6], ..., [3,6].
  CHECK(sizes == std::vector<int>{4, 5, 6, 7, 6, 5, 4});
}

TEST_CASE("warm-up outputs arrive in a batch with the first complete window") {
  auto frames = make_stream(10);
  auto scatter = flat_scatter(20, 14, 1, 0.02);
  EnhancementStream stream(scatter, small_config(7));
  std::vector<std::size_t> emitted_per_push;
  for (const Frame& frame : frames)
    emitted_per_push.push_back(stream.push(frame).size());
  auto tail = stream.flush();
  CHECK(emitted_per_push ==
        std::vector<std::size_t>{0, 0, 0, 0, 0, 0, 4, 1, 1, 1});
  CHECK(tail.size() == 3);
  CHECK(stream.emitted() == 10);
}

TEST_CASE("a three-frame stream reuses the whole stream as every window") {
  auto frames = make_stream(3);
  auto scatter = flat_scatter(20, 14, 1, 0.02);
  auto outputs = enhance_sequence(frames, scatter, small_config(7));
  REQUIRE(outputs.size() == 3);
  for (const auto& out : outputs) CHECK(out.window_size == 3);
}

TEST_CASE("streams shorter than three frames are rejected at flush") {
  auto scatter = flat_scatter(20, 14, 1, 0.02);
  EnhancementStream stream(scatter, small_config(5));
  stream.push(make_stream(1)[0]);
  CHECK_THROWS_AS(stream.flush(), stream_error);
}

TEST_CASE("pushing after flush is a stream violation") {
  auto frames = make_stream(4);
  auto scatter = flat_scatter(20, 14, 1, 0.02);
  EnhancementStream stream(scatter, small_config(3));
  for (const auto& frame : frames) stream.push(frame);
  stream.flush();
  CHECK_THROWS_AS(stream.push(frames[0]), stream_error);
}

TEST_CASE("layout changes mid-stream are rejected") {
  auto scatter = flat_scatter(20, 14, 1, 0.02);
  EnhancementStream stream(scatter, small_config(5));
  stream.push(make_stream(1)[0]);
  Frame wrong = testsupport::random_frame(10, 14, 1, 77);
  CHECK_THROWS_AS(stream.push(wrong), stream_error);
  // A first frame that disagrees with the scatter field is a setup error.
  EnhancementStream fresh(scatter, small_config(5));
  CHECK_THROWS_AS(fresh.push(wrong), argument_error);
}

TEST_CASE("static factor freezes the first complete window's estimate") {
  auto frames = make_stream(9);
  auto scatter = flat_scatter(20, 14, 1, 0.02);
  auto config = small_config(5);
  auto outputs = enhance_sequence(frames, scatter, config, true);
  REQUIRE(outputs.size() == 9);
  // All outputs share one factor field.
  for (const auto& out : outputs)
    CHECK(testsupport::bit_identical(out.factor.planes[0],
                                     outputs[0].factor.planes[0]));
  // The sliding estimate differs from the frozen one on changing scenes.
  auto sliding = enhance_sequence(frames, scatter, config, false);
  CHECK_FALSE(testsupport::bit_identical(sliding[7].factor.planes[0],
                                         outputs[7].factor.planes[0]));
}

TEST_CASE("repeated runs over the same stream are bit-identical") {
  auto frames = make_stream(8, 20, 14, 3);
  auto scatter = flat_scatter(20, 14, 3, 0.03);
  auto config = small_config(5);
  auto first = enhance_sequence(frames, scatter, config);
  auto second = enhance_sequence(frames, scatter, config);
  REQUIRE(first.size() == second.size());
  for (std::size_t t = 0; t < first.size(); ++t)
    CHECK(testsupport::bit_identical(first[t].enhanced, second[t].enhanced));
}

TEST_CASE("manifest parsing skips comments and resolves relative paths") {
  TempDir dir("pipeline-manifest");
  std::filesystem::create_directories(dir.file("sub"));
  {
    std::ofstream out(dir.file("list.txt"));
    out << "# header comment\n";
    out << "\n";
    out << "  sub/a.png  \n";
    out << "/absolute/b.png\n";
  }
  auto paths = read_manifest(dir.file("list.txt"));
  REQUIRE(paths.size() == 2);
  CHECK(paths[0] == dir.file("sub") / "a.png");
  CHECK(paths[1] == std::filesystem::path("/absolute/b.png"));
}

TEST_CASE("missing or empty manifests are reported") {
  CHECK_THROWS_WITH_AS(read_manifest("/nonexistent/list.txt"),
                       doctest::Contains("list.txt"), io_error);
  TempDir dir("pipeline-manifest-empty");
  std::ofstream(dir.file("empty.txt")) << "# nothing\n";
  CHECK_THROWS_AS(read_manifest(dir.file("empty.txt")), argument_error);
}

TEST_CASE("run_batch writes outputs, coverage and a complete report") {
  TempDir dir("pipeline-batch");
  auto frames = make_stream(6, 24, 16, 1);
  std::ofstream manifest(dir.file("list.txt"));
  for (int k = 0; k < 6; ++k) {
    std::string name = "frame" + std::to_string(k) + ".png";
    save_frame(frames[k], dir.file(name));
    manifest << name << "\n";
  }
  manifest.close();

  auto scatter = flat_scatter(24, 16, 1, 0.02);
  auto out_dir = dir.file("out");
  RunReport report =
      run_batch(dir.file("list.txt"), scatter, small_config(5), out_dir);
  CHECK(report.complete);
  CHECK(report.frames == 6);
  CHECK(report.window_sizes == std::vector<int>{3, 4, 5, 5, 4, 3});
  CHECK(report.ms_per_frame.size() == 6);
  for (int k = 0; k < 6; ++k) {
    std::string stem = "frame" + std::to_string(k);
    CHECK(std::filesystem::exists(out_dir / (stem + "_enhanced.png")));
    CHECK(std::filesystem::exists(out_dir / (stem + "_coverage.png")));
  }
  CHECK(std::filesystem::exists(out_dir / "run_report.json"));
}

TEST_CASE("run_batch aborts on a corrupt input but keeps earlier outputs") {
  TempDir dir("pipeline-abort");
  auto frames = make_stream(10, 24, 16, 1);
  std::ofstream manifest(dir.file("list.txt"));
  for (int k = 0; k < 10; ++k) {
    std::string name = "frame" + std::to_string(k) + ".png";
    save_frame(frames[k], dir.file(name));
    manifest << name << "\n";
  }
  manifest.close();

  // Truncate the eighth entry: enough frames before it to emit outputs.
  auto bad = dir.file("frame7.png");
  auto size = std::filesystem::file_size(bad);
  std::filesystem::resize_file(bad, size / 2);

  auto scatter = flat_scatter(24, 16, 1, 0.02);
  auto out_dir = dir.file("out");
  CHECK_THROWS_AS(
      run_batch(dir.file("list.txt"), scatter, small_config(5), out_dir),
      io_error);

  // Frames 0..4 were emitted before the failure and must persist.
  for (int k = 0; k <= 4; ++k) {
    std::string stem = "frame" + std::to_string(k);
    CHECK(std::filesystem::exists(out_dir / (stem + "_enhanced.png")));
  }
  std::ifstream report_in(out_dir / "run_report.json");
  REQUIRE(report_in.good());
  std::string text((std::istreambuf_iterator<char>(report_in)),
                   std::istreambuf_iterator<char>());
  CHECK(text.find("\"complete\": false") != std::string::npos);
  CHECK(text.find("frame7.png") != std::string::npos);
}

TEST_CASE("run_batch can dump per-frame factor fields") {
  TempDir dir("pipeline-factors");
  auto frames = make_stream(4, 16, 12, 1);
  std::ofstream manifest(dir.file("list.txt"));
  for (int k = 0; k < 4; ++k) {
    std::string name = "frame" + std::to_string(k) + ".png";
    save_frame(frames[k], dir.file(name));
    manifest << name << "\n";
  }
  manifest.close();

  RunBatchOptions options;
  options.dump_factors = true;
  auto scatter = flat_scatter(16, 12, 1, 0.02);
  auto out_dir = dir.file("out");
  run_batch(dir.file("list.txt"), scatter, small_config(3), out_dir, options);
  for (int k = 0; k < 4; ++k) {
    auto tif = out_dir / ("frame" + std::to_string(k) + "_factor.tif");
    CHECK(std::filesystem::exists(tif));
    FactorField field = load_factor_field(tif);
    CHECK(field.width() == 16);
  }
}
