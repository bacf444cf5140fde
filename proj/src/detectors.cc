#include "pixlab/detectors.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pixlab/error.h"

namespace pixlab {

DetectionVerdict gap_detect(const Image& img, const PreprocessSpec& spec, double epsilon) {
  if (img.domain != spec.name) {
    throw ShapeError("gap detector for '" + spec.name + "' got image in domain '" + img.domain + "'");
  }
  const auto stats = channel_stats(img);
  if (stats.size() != spec.limits.size()) {
    throw ShapeError("gap detector expects " + std::to_string(spec.limits.size()) + " channels");
  }
  double score = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < stats.size(); ++c) {
    score = std::min({score, stats[c].min - spec.limits[c].lo, spec.limits[c].hi - stats[c].max});
  }
  return {"gap", score >= epsilon, score, epsilon, std::nullopt};
}

DetectionVerdict shift_detect(const Image& img, std::size_t channel, double epsilon) {
  if (img.domain != "inception-sym") {
    throw ShapeError("shift detector expects an inception-sym image, got domain '" + img.domain + "'");
  }
  const auto stats = channel_stats(img);
  if (channel >= stats.size()) {
    throw ValidationError("channel " + std::to_string(channel) + " out of range for " +
                          std::to_string(stats.size()) + " channels");
  }
  const double score = (stats[channel].min + stats[channel].max) / 2.0;
  const double threshold = epsilon / 2.0;
  return {"shift", score >= threshold, score, threshold, channel};
}

DetectionVerdict zero_detect(const Image& img, double count_threshold) {
  const auto score = static_cast<double>(zero_count(img.pixels));
  return {"zero", score >= count_threshold, score, count_threshold, std::nullopt};
}

DetectionVerdict disagreement_detect(const Model& a, const Model& b, const Image& raw) {
  const std::size_t pa = predict(a, apply(preprocess_spec(a.preprocess), raw));
  const std::size_t pb = predict(b, apply(preprocess_spec(b.preprocess), raw));
  const bool differ = pa != pb;
  return {"disagreement", differ, differ ? 1.0 : 0.0, 1.0, std::nullopt};
}

namespace {

ExtremaAggregate aggregate(const std::vector<double>& v) {
  ExtremaAggregate a;
  a.min = *std::min_element(v.begin(), v.end());
  a.max = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  a.avg = std::clamp(sum / static_cast<double>(v.size()), a.min, a.max);
  double sq = 0.0;
  for (double x : v) sq += (x - a.avg) * (x - a.avg);
  a.stddev = std::sqrt(sq / static_cast<double>(v.size()));
  return a;
}

}  // namespace

ChannelTable corpus_channel_table(std::span<const Image> corpus, const PreprocessSpec& spec) {
  if (corpus.empty()) throw ValidationError("channel table needs at least one image");
  const std::size_t channels = corpus.front().channels();
  std::vector<std::vector<double>> minima(channels), maxima(channels);
  for (const auto& img : corpus) {
    if (img.domain != spec.name) {
      throw ShapeError("channel table for '" + spec.name + "' got image in domain '" + img.domain + "'");
    }
    const auto stats = channel_stats(img);
    if (stats.size() != channels) throw ShapeError("images in corpus disagree on channel count");
    for (std::size_t c = 0; c < channels; ++c) {
      minima[c].push_back(stats[c].min);
      maxima[c].push_back(stats[c].max);
    }
  }
  ChannelTable table;
  table.images = corpus.size();
  table.limits = channel_limits(spec);
  for (std::size_t c = 0; c < channels; ++c) {
    table.channels.push_back({aggregate(minima[c]), aggregate(maxima[c])});
  }
  return table;
}

}  // namespace pixlab
