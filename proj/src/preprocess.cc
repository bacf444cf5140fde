#include "pixlab/preprocess.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pixlab/error.h"

namespace pixlab {

namespace {

constexpr double kRawMax = 255.0;

void require_rgb(const Tensor& t) {
  require_image_shape(t);
  if (t.shape()[2] != 3) {
    throw ShapeError("expected 3 channels, got shape " + shape_string(t.shape()));
  }
}

}  // namespace

PreprocessSpec caffe_bgr_spec() {
  PreprocessSpec s;
  s.name = "caffe-bgr";
  s.kind = PreprocessKind::kCaffeBgr;
  s.means = kCaffeBgrMeans;
  for (std::size_t c = 0; c < 3; ++c) s.limits[c] = {0.0 - s.means[c], kRawMax - s.means[c]};
  return s;
}

PreprocessSpec inception_sym_spec() {
  PreprocessSpec s;
  s.name = "inception-sym";
  s.kind = PreprocessKind::kInceptionSym;
  s.scale = 127.5;
  s.limits.fill({-1.0, 1.0});
  return s;
}

PreprocessSpec identity_spec() {
  PreprocessSpec s;
  s.name = "identity";
  s.kind = PreprocessKind::kIdentity;
  s.limits.fill({0.0, kRawMax});
  return s;
}

PreprocessSpec preprocess_spec(std::string_view name) {
  if (name == "caffe-bgr") return caffe_bgr_spec();
  if (name == "inception-sym") return inception_sym_spec();
  if (name == "identity") return identity_spec();
  throw ValidationError("unknown preprocess spec '" + std::string(name) + "'");
}

std::vector<ChannelRange> channel_limits(const PreprocessSpec& spec) {
  return {spec.limits.begin(), spec.limits.end()};
}

Image apply(const PreprocessSpec& spec, const Image& raw) {
  if (raw.domain != kRawDomain) {
    throw ShapeError("apply expects a raw image, got domain '" + raw.domain + "'");
  }
  require_rgb(raw.pixels);
  for (double v : raw.pixels.values()) {
    if (!(v >= 0.0 && v <= kRawMax)) {
      throw ValidationError("raw pixel value " + std::to_string(v) + " outside [0, 255]");
    }
  }

  const auto& in = raw.pixels;
  Tensor out(in.shape());
  const std::size_t pixels = in.size() / 3;
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      switch (spec.kind) {
        case PreprocessKind::kCaffeBgr:
          out[p * 3 + c] = in[p * 3 + (2 - c)] - spec.means[c];
          break;
        case PreprocessKind::kInceptionSym:
          out[p * 3 + c] = in[p * 3 + c] / spec.scale - 1.0;
          break;
        case PreprocessKind::kIdentity:
          out[p * 3 + c] = in[p * 3 + c];
          break;
      }
    }
  }
  return Image{std::move(out), spec.name};
}

InvertResult invert(const PreprocessSpec& spec, const Image& pre) {
  if (pre.domain != spec.name) {
    throw ShapeError("invert under '" + spec.name + "' got image in domain '" + pre.domain + "'");
  }
  require_rgb(pre.pixels);

  const auto& in = pre.pixels;
  Tensor out(in.shape());
  bool clamped = false;
  const std::size_t pixels = in.size() / 3;
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t c = 0; c < 3; ++c) {
      double v = 0.0;
      switch (spec.kind) {
        case PreprocessKind::kCaffeBgr:
          // output RGB channel c came from BGR channel 2 - c
          v = in[p * 3 + (2 - c)] + spec.means[2 - c];
          break;
        case PreprocessKind::kInceptionSym:
          v = (in[p * 3 + c] + 1.0) * spec.scale;
          break;
        case PreprocessKind::kIdentity:
          v = in[p * 3 + c];
          break;
      }
      if (v < 0.0 || v > kRawMax) {
        clamped = true;
        v = std::clamp(v, 0.0, kRawMax);
      }
      out[p * 3 + c] = v;
    }
  }
  return {Image{std::move(out), kRawDomain}, clamped};
}

std::string_view clip_name(ClipKind kind) {
  switch (kind) {
    case ClipKind::kNone: return "none";
    case ClipKind::kModelBox: return "model-box";
    case ClipKind::kPixelBox: return "pixel-box";
    case ClipKind::kUnitBox: return "unit-box";
  }
  return "none";
}

ClipKind parse_clip_kind(std::string_view name) {
  for (auto k : {ClipKind::kNone, ClipKind::kModelBox, ClipKind::kPixelBox, ClipKind::kUnitBox}) {
    if (clip_name(k) == name) return k;
  }
  throw ValidationError("unknown clip policy '" + std::string(name) + "'");
}

std::array<ChannelRange, 3> clip_box(const ClipPolicy& policy, const PreprocessSpec& spec) {
  std::array<ChannelRange, 3> box{};
  switch (policy.kind) {
    case ClipKind::kNone: {
      const double inf = std::numeric_limits<double>::infinity();
      box.fill({-inf, inf});
      break;
    }
    case ClipKind::kModelBox:
      box = spec.limits;
      break;
    case ClipKind::kPixelBox:
      box.fill({0.0, kRawMax});
      break;
    case ClipKind::kUnitBox:
      box.fill({0.0, 1.0});
      break;
  }
  return box;
}

Image clip(const ClipPolicy& policy, const PreprocessSpec& spec, const Image& img) {
  if (policy.kind == ClipKind::kNone) return img;
  require_rgb(img.pixels);
  const auto box = clip_box(policy, spec);
  Image out = img;
  auto values = out.pixels.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto& r = box[i % 3];
    values[i] = std::clamp(values[i], r.lo, r.hi);
  }
  return out;
}

}  // namespace pixlab
