#pragma once

#include <array>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pixlab/tensor.h"

namespace pixlab {

enum class PreprocessKind {
  kCaffeBgr,      // RGB -> BGR, then subtract ImageNet channel means
  kInceptionSym,  // x / 127.5 - 1, values in [-1, 1]
  kIdentity,      // raw pixels passed through
};

struct ChannelRange {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const ChannelRange&) const = default;
};

/// A named invertible pixel transform. `limits` are the images of raw 0 and
/// 255 under the transform, per output channel.
struct PreprocessSpec {
  std::string name;
  PreprocessKind kind = PreprocessKind::kIdentity;
  std::array<double, 3> means{};  // BGR order, caffe-bgr only
  double scale = 1.0;             // inception-sym divisor
  std::array<ChannelRange, 3> limits{};
};

inline constexpr std::array<double, 3> kCaffeBgrMeans = {103.939, 116.779, 123.68};

PreprocessSpec caffe_bgr_spec();
PreprocessSpec inception_sym_spec();
PreprocessSpec identity_spec();

// Looks up "caffe-bgr", "inception-sym" or "identity". Throws ValidationError
// for anything else.
PreprocessSpec preprocess_spec(std::string_view name);

std::vector<ChannelRange> channel_limits(const PreprocessSpec& spec);

// Raw RGB image in [0, 255] -> pre-processed image tagged with spec.name.
Image apply(const PreprocessSpec& spec, const Image& raw);

struct InvertResult {
  Image raw;
  bool clamped = false;  // some value fell outside [0, 255] and was clamped
};

InvertResult invert(const PreprocessSpec& spec, const Image& pre);

enum class ClipKind { kNone, kModelBox, kPixelBox, kUnitBox };

struct ClipPolicy {
  ClipKind kind = ClipKind::kNone;
  bool operator==(const ClipPolicy&) const = default;
};

std::string_view clip_name(ClipKind kind);
ClipKind parse_clip_kind(std::string_view name);

// Per-channel box of `policy` in spec's pre-processed space. kNone yields
// infinite bounds.
std::array<ChannelRange, 3> clip_box(const ClipPolicy& policy, const PreprocessSpec& spec);

Image clip(const ClipPolicy& policy, const PreprocessSpec& spec, const Image& img);

}  // namespace pixlab
