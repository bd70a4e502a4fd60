#include "abysslight/image.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "abysslight/errors.hpp"

namespace abysslight {

ImagePlane::ImagePlane(int width, int height, double fill)
    : width_(width), height_(height) {
  if (width <= 0 || height <= 0)
    throw argument_error("image plane dimensions must be positive");
  data_.assign(static_cast<std::size_t>(width) * height, fill);
}

ImagePlane::ImagePlane(int width, int height, std::vector<double> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width <= 0 || height <= 0)
    throw argument_error("image plane dimensions must be positive");
  if (data_.size() != static_cast<std::size_t>(width) * height)
    throw argument_error("image plane data length does not match dimensions");
}

double ImagePlane::min_value() const {
  return data_.empty() ? 0.0 : *std::min_element(data_.begin(), data_.end());
}

double ImagePlane::max_value() const {
  return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end());
}

double ImagePlane::mean_value() const {
  if (data_.empty()) return 0.0;
  return std::accumulate(data_.begin(), data_.end(), 0.0) / data_.size();
}

void ImagePlane::validate(const char* what) const {
  for (double v : data_) {
    if (!std::isfinite(v))
      throw argument_error(std::string(what) + ": non-finite pixel value");
    if (v < 0.0)
      throw argument_error(std::string(what) + ": negative pixel value");
  }
}

Frame::Frame(std::vector<ImagePlane> p, std::size_t idx, std::string t)
    : planes(std::move(p)), index(idx), tag(std::move(t)) {}

void Frame::validate(const char* what) const {
  if (planes.size() != 1 && planes.size() != 3)
    throw argument_error(std::string(what) + ": frame must have 1 or 3 channels");
  for (const auto& p : planes) {
    if (!p.same_size(planes[0]))
      throw argument_error(std::string(what) + ": channel dimensions differ");
  }
}

double FactorField::invalid_fraction() const {
  if (valid.empty()) return 0.0;
  std::size_t bad = 0;
  const double* v = valid.data();
  for (std::size_t i = 0; i < valid.size(); ++i)
    if (v[i] == 0.0) ++bad;
  return static_cast<double>(bad) / valid.size();
}

}  // namespace abysslight
