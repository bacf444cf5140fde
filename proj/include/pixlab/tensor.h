#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace pixlab {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major array of doubles.
///
/// Value type: copies are deep, and nothing in the library mutates a tensor
/// it did not construct, so a const Tensor can be shared between threads.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }

  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }
  const std::vector<double>& data() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  // Channel-last 3-D access (h, w, c).
  double at(std::size_t h, std::size_t w, std::size_t c) const {
    return data_[(h * shape_[1] + w) * shape_[2] + c];
  }
  double& at(std::size_t h, std::size_t w, std::size_t c) {
    return data_[(h * shape_[1] + w) * shape_[2] + c];
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Domain tag for images that have not been through any pre-processing.
inline constexpr const char* kRawDomain = "raw";

/// H x W x C image plus the name of the pixel domain it lives in: "raw" or
/// the name of the pre-processing spec that produced it.
struct Image {
  Tensor pixels;
  std::string domain = kRawDomain;

  std::size_t height() const { return pixels.shape()[0]; }
  std::size_t width() const { return pixels.shape()[1]; }
  std::size_t channels() const { return pixels.shape()[2]; }

  bool operator==(const Image&) const = default;
};

enum class ElementOp { kAdd, kSub, kMul, kSign, kAbs, kClampLo, kClampHi };

// Pointwise op. Unary ops (sign, abs) ignore `b`. Clamp-lo raises every value
// to at least b; clamp-hi caps at b. Throws ShapeError on mismatched shapes.
Tensor elementwise(ElementOp op, const Tensor& a, const Tensor& b);
Tensor elementwise(ElementOp op, const Tensor& a, double b);

double linf_distance(const Tensor& a, const Tensor& b);
double l2_distance(const Tensor& a, const Tensor& b);

struct ChannelSummary {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::size_t zero_count = 0;
};

using ChannelStats = std::vector<ChannelSummary>;

// Per-channel summary of an H x W x C tensor. A value counts as zero when it
// compares equal to 0.0, so -0.0 is included.
ChannelStats channel_stats(const Tensor& img);
inline ChannelStats channel_stats(const Image& img) { return channel_stats(img.pixels); }

std::size_t zero_count(const Tensor& t);

// Throws ShapeError unless `t` is rank 3.
void require_image_shape(const Tensor& t);

}  // namespace pixlab
