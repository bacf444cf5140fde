#include "pixlab/tensor.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pixlab/error.h"

namespace pixlab {

std::string shape_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + shape_string(shape_) + " needs " +
                     std::to_string(shape_size(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("shape mismatch: " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

double apply_op(ElementOp op, double x, double y) {
  switch (op) {
    case ElementOp::kAdd: return x + y;
    case ElementOp::kSub: return x - y;
    case ElementOp::kMul: return x * y;
    case ElementOp::kSign: return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    case ElementOp::kAbs: return std::abs(x);
    case ElementOp::kClampLo: return std::max(x, y);
    case ElementOp::kClampHi: return std::min(x, y);
  }
  return x;
}

}  // namespace

Tensor elementwise(ElementOp op, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = apply_op(op, a[i], b[i]);
  return out;
}

Tensor elementwise(ElementOp op, const Tensor& a, double b) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = apply_op(op, a[i], b);
  return out;
}

double linf_distance(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double l2_distance(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

void require_image_shape(const Tensor& t) {
  if (t.rank() != 3) {
    throw ShapeError("expected an H x W x C image, got shape " + shape_string(t.shape()));
  }
}

ChannelStats channel_stats(const Tensor& img) {
  require_image_shape(img);
  const std::size_t channels = img.shape()[2];
  const std::size_t pixels = img.shape()[0] * img.shape()[1];
  ChannelStats stats(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    auto& s = stats[c];
    s.min = std::numeric_limits<double>::infinity();
    s.max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (std::size_t p = 0; p < pixels; ++p) {
      const double v = img[p * channels + c];
      s.min = std::min(s.min, v);
      s.max = std::max(s.max, v);
      sum += v;
      if (v == 0.0) ++s.zero_count;
    }
    if (pixels == 0) {
      s.min = s.max = 0.0;
      continue;
    }
    s.mean = std::clamp(sum / static_cast<double>(pixels), s.min, s.max);
    double sq = 0.0;
    for (std::size_t p = 0; p < pixels; ++p) {
      const double d = img[p * channels + c] - s.mean;
      sq += d * d;
    }
    s.stddev = std::sqrt(sq / static_cast<double>(pixels));
  }
  return stats;
}

std::size_t zero_count(const Tensor& t) {
  return static_cast<std::size_t>(
      std::count_if(t.data().begin(), t.data().end(), [](double v) { return v == 0.0; }));
}

}  // namespace pixlab
