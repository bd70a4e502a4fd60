#include "abysslight/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "abysslight/errors.hpp"
#include "abysslight/resample.hpp"
#include "abysslight/threading.hpp"

namespace abysslight {

namespace {

void check_consistent(const std::vector<Frame>& frames, const char* what) {
  if (frames.empty()) throw argument_error(std::string(what) + ": no frames");
  const Frame& first = frames.front();
  first.validate(what);
  for (const Frame& frame : frames) {
    frame.validate(what);
    if (frame.channels() != first.channels() ||
        frame.width() != first.width() || frame.height() != first.height()) {
      throw argument_error(std::string(what) +
                           ": frames differ in size or channel count");
    }
  }
}

}  // namespace

ReferenceColor ReferenceColor::grey(int channel_count, double value) {
  if (channel_count < 1) {
    throw argument_error("reference needs at least one channel");
  }
  ReferenceColor ref;
  ref.channels.assign(static_cast<std::size_t>(channel_count), value);
  ref.validate();
  return ref;
}

void ReferenceColor::validate() const {
  if (channels.empty()) {
    throw argument_error("reference needs at least one channel");
  }
  for (double v : channels) {
    if (!(v > 0.0)) {
      throw argument_error("reference channels must be positive");
    }
  }
}

void EnhancementConfig::validate() const {
  window.validate();
  if (!reference.channels.empty()) reference.validate();
  if (!(epsilon > 0.0)) throw argument_error("epsilon must be positive");
}

ScatterField estimate_scatter(const std::vector<Frame>& water_frames) {
  if (water_frames.size() < 3) {
    throw argument_error(
        "scatter estimation needs at least 3 water-column frames");
  }
  check_consistent(water_frames, "scatter estimation");

  ScatterField field;
  const int channels = water_frames.front().channels();
  field.planes.reserve(static_cast<std::size_t>(channels));
  std::vector<ImagePlane> stack;
  stack.reserve(water_frames.size());
  for (int c = 0; c < channels; ++c) {
    stack.clear();
    for (const Frame& frame : water_frames) {
      stack.push_back(frame.planes[static_cast<std::size_t>(c)]);
    }
    field.planes.push_back(temporal_median(stack));
  }
  return field;
}

ImagePlane preprocess_plane(const ImagePlane& plane, const WindowSpec& spec) {
  spec.validate();
  return downsample(spatial_median(plane, spec.spatial_radius),
                    spec.downsample_factor);
}

ScatterField preprocess_scatter(const ScatterField& scatter,
                                const WindowSpec& spec) {
  if (scatter.planes.empty()) throw argument_error("empty scatter field");
  ScatterField low;
  low.planes.reserve(scatter.planes.size());
  for (const ImagePlane& plane : scatter.planes) {
    low.planes.push_back(preprocess_plane(plane, spec));
  }
  return low;
}

AllSeafloor estimate_allseafloor(const std::vector<Frame>& window,
                                 const WindowSpec& spec) {
  spec.validate();
  check_consistent(window, "all-seafloor estimation");
  if (window.size() < 3) {
    throw argument_error("all-seafloor window must hold at least 3 frames");
  }
  if (window.size() > static_cast<std::size_t>(spec.length)) {
    throw argument_error("all-seafloor window exceeds the configured length");
  }

  std::vector<Frame> lowres;
  lowres.reserve(window.size());
  for (const Frame& frame : window) {
    Frame low;
    low.index = frame.index;
    low.planes.reserve(frame.planes.size());
    for (const ImagePlane& plane : frame.planes) {
      low.planes.push_back(preprocess_plane(plane, spec));
    }
    lowres.push_back(std::move(low));
  }

  std::vector<const Frame*> pointers;
  pointers.reserve(lowres.size());
  for (const Frame& frame : lowres) pointers.push_back(&frame);
  return allseafloor_from_preprocessed(pointers, window.front().width(),
                                       window.front().height(), spec);
}

AllSeafloor allseafloor_from_preprocessed(
    const std::vector<const Frame*>& window, int full_width, int full_height,
    const WindowSpec& spec) {
  spec.validate();
  if (window.size() < 3) {
    throw argument_error("all-seafloor window must hold at least 3 frames");
  }
  if (window.size() > static_cast<std::size_t>(spec.length)) {
    throw argument_error("all-seafloor window exceeds the configured length");
  }
  for (const Frame* frame : window) {
    if (frame == nullptr) throw argument_error("null frame in window");
  }

  AllSeafloor result;
  result.full_width = full_width;
  result.full_height = full_height;
  const int channels = window.front()->channels();
  result.low.index = window[window.size() / 2]->index;
  result.low.planes.reserve(static_cast<std::size_t>(channels));

  std::vector<ImagePlane> stack;
  stack.reserve(window.size());
  for (int c = 0; c < channels; ++c) {
    stack.clear();
    for (const Frame* frame : window) {
      stack.push_back(frame->planes[static_cast<std::size_t>(c)]);
    }
    result.low.planes.push_back(temporal_median(stack));
  }
  return result;
}

FactorField compute_factor(const AllSeafloor& allseafloor,
                           const ScatterField& low_scatter,
                           const ReferenceColor& reference, double epsilon) {
  reference.validate();
  if (!(epsilon > 0.0)) throw argument_error("epsilon must be positive");
  const int channels = allseafloor.low.channels();
  if (low_scatter.channels() != channels ||
      reference.channels.size() != static_cast<std::size_t>(channels)) {
    throw argument_error("factor solve: channel counts disagree");
  }
  if (allseafloor.low.width() != low_scatter.width() ||
      allseafloor.low.height() != low_scatter.height()) {
    throw argument_error(
        "factor solve: scatter not at the all-seafloor resolution");
  }
  if (allseafloor.full_width < allseafloor.low.width() ||
      allseafloor.full_height < allseafloor.low.height()) {
    throw argument_error("factor solve: bad full-resolution dimensions");
  }

  const int low_w = allseafloor.low.width();
  const int low_h = allseafloor.low.height();
  const std::size_t pixels = static_cast<std::size_t>(low_w) * low_h;

  FactorField field;
  field.planes.reserve(static_cast<std::size_t>(channels));
  ImagePlane low_valid(low_w, low_h, 1.0);
  for (int c = 0; c < channels; ++c) {
    const std::size_t ci = static_cast<std::size_t>(c);
    ImagePlane low_factor(low_w, low_h);
    const double* all = allseafloor.low.planes[ci].data();
    const double* sct = low_scatter.planes[ci].data();
    const double a_ref = reference.channels[ci];
    double* f = low_factor.data();
    double* valid = low_valid.data();
    for (std::size_t p = 0; p < pixels; ++p) {
      const double numerator = all[p] - sct[p];
      if (numerator < epsilon) valid[p] = 0.0;
      f[p] = std::max(numerator, 0.0) / a_ref;
    }
    field.planes.push_back(upsample(low_factor, allseafloor.full_width,
                                    allseafloor.full_height));
  }

  // A full-resolution pixel keeps its validity only where the interpolated
  // indicator stays at 1, i.e. every texel it draws from was valid.
  ImagePlane valid_up = upsample(low_valid, allseafloor.full_width,
                                 allseafloor.full_height);
  ImagePlane valid(allseafloor.full_width, allseafloor.full_height);
  const std::size_t full_pixels =
      static_cast<std::size_t>(allseafloor.full_width) *
      allseafloor.full_height;
  for (std::size_t p = 0; p < full_pixels; ++p) {
    valid.data()[p] = valid_up.data()[p] >= 0.999 ? 1.0 : 0.0;
  }
  field.valid = std::move(valid);
  return field;
}

Enhanced enhance(const Frame& frame, const ScatterField& scatter,
                 const FactorField& factor, const EnhancementConfig& config) {
  frame.validate("enhance input");
  if (!(config.epsilon > 0.0)) throw argument_error("epsilon must be positive");
  const int channels = frame.channels();
  if (scatter.channels() != channels || factor.channels() != channels) {
    throw argument_error("enhance: channel counts disagree");
  }
  if (scatter.width() != frame.width() || scatter.height() != frame.height() ||
      factor.width() != frame.width() || factor.height() != frame.height()) {
    throw argument_error("enhance: scatter and factor must match the frame");
  }
  if (!factor.valid.same_size(frame.planes.front())) {
    throw argument_error("enhance: factor mask must match the frame");
  }

  const int width = frame.width();
  const int height = frame.height();
  const double epsilon = config.epsilon;
  const bool clamp = config.clamp_output;

  Enhanced out;
  out.frame.index = frame.index;
  out.frame.tag = frame.tag;
  out.coverage = factor.valid;
  for (int c = 0; c < channels; ++c) {
    out.frame.planes.emplace_back(width, height);
  }

  parallel_for(static_cast<std::size_t>(height),
               [&](std::size_t r0, std::size_t r1) {
    for (std::size_t yy = r0; yy < r1; ++yy) {
      const int y = static_cast<int>(yy);
      const double* valid = factor.valid.row(y);
      for (int c = 0; c < channels; ++c) {
        const std::size_t ci = static_cast<std::size_t>(c);
        const double* in = frame.planes[ci].row(y);
        const double* sct = scatter.planes[ci].row(y);
        const double* fct = factor.planes[ci].row(y);
        double* dst = out.frame.planes[ci].row(y);
        for (int x = 0; x < width; ++x) {
          if (valid[x] == 0.0) {
            dst[x] = 0.0;
            continue;
          }
          double v = std::max(in[x] - sct[x], 0.0) / std::max(fct[x], epsilon);
          if (clamp) v = std::min(v, 1.0);
          dst[x] = v;
        }
      }
    }
  });
  return out;
}

}  // namespace abysslight
