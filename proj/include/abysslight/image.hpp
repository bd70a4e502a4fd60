#ifndef ABYSSLIGHT_IMAGE_HPP
#define ABYSSLIGHT_IMAGE_HPP

#include <cstddef>
#include <string>
#include <vector>

namespace abysslight {

// Single-channel raster of linear radiance. Values are non-negative,
// normalized so that sensor full scale is 1.0; intermediate results
// (factor fields, enhanced albedo) may exceed 1.
class ImagePlane {
 public:
  ImagePlane() = default;
  ImagePlane(int width, int height, double fill = 0.0);
  ImagePlane(int width, int height, std::vector<double> data);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(int y) { return data_.data() + static_cast<std::size_t>(y) * width_; }
  const double* row(int y) const {
    return data_.data() + static_cast<std::size_t>(y) * width_;
  }
  double& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  double at(int x, int y) const {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }

  bool same_size(const ImagePlane& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

  double min_value() const;
  double max_value() const;
  double mean_value() const;

  // Throws argument_error if any value is non-finite or negative.
  void validate(const char* what = "image plane") const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

// One observation of the scene: 1 (gray) or 3 (RGB) planes of equal size.
struct Frame {
  std::vector<ImagePlane> planes;
  std::size_t index = 0;
  std::string tag;

  Frame() = default;
  Frame(std::vector<ImagePlane> p, std::size_t idx = 0, std::string t = {});

  int width() const { return planes.empty() ? 0 : planes[0].width(); }
  int height() const { return planes.empty() ? 0 : planes[0].height(); }
  int channels() const { return static_cast<int>(planes.size()); }

  // Checks 1-or-3 channels and equal plane dimensions.
  void validate(const char* what = "frame") const;
};

// Additive backscatter estimate, one plane per channel.
struct ScatterField {
  std::vector<ImagePlane> planes;

  int width() const { return planes.empty() ? 0 : planes[0].width(); }
  int height() const { return planes.empty() ? 0 : planes[0].height(); }
  int channels() const { return static_cast<int>(planes.size()); }
};

// Multiplicative illumination/attenuation estimate plus a validity mask.
// valid is 1.0 where the factor is usable and 0.0 where the all-seafloor
// signal fell below the division floor.
struct FactorField {
  std::vector<ImagePlane> planes;
  ImagePlane valid;

  int width() const { return planes.empty() ? 0 : planes[0].width(); }
  int height() const { return planes.empty() ? 0 : planes[0].height(); }
  int channels() const { return static_cast<int>(planes.size()); }

  double invalid_fraction() const;
};

}  // namespace abysslight

#endif
