#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pixlab/nn.h"
#include "pixlab/preprocess.h"
#include "pixlab/tensor.h"

namespace pixlab {

struct DetectionVerdict {
  std::string detector;  // "gap" | "shift" | "zero" | "disagreement"
  bool flagged = false;
  double score = 0.0;
  double threshold = 0.0;
  std::optional<std::size_t> channel;
};

inline constexpr std::size_t kDefaultShiftChannel = 0;
inline constexpr double kDefaultZeroThreshold = 100.0;

// score = min over channels of min(ch_min - lo, hi - ch_max); flagged when
// score >= epsilon, i.e. no channel extreme comes within epsilon of a limit.
DetectionVerdict gap_detect(const Image& img, const PreprocessSpec& spec, double epsilon);

// score = (ch_min + ch_max) / 2 on one channel; flagged when score >= epsilon / 2.
// Only meaningful for inception-sym images.
DetectionVerdict shift_detect(const Image& img, std::size_t channel, double epsilon);

// score = number of values exactly 0.0 across all channels; flagged when
// score >= count_threshold.
DetectionVerdict zero_detect(const Image& img, double count_threshold = kDefaultZeroThreshold);

// Flags a raw image when two models, each given the image under its own
// pre-processing, predict different classes.
DetectionVerdict disagreement_detect(const Model& a, const Model& b, const Image& raw);

// Aggregates over a corpus of per-image channel minima and maxima, one row per
// statistic, mirroring the layout of a channel min/max table.
struct ExtremaAggregate {
  double min = 0.0;
  double avg = 0.0;
  double max = 0.0;
  double stddev = 0.0;
};

struct ChannelExtremaRow {
  ExtremaAggregate of_minima;
  ExtremaAggregate of_maxima;
};

struct ChannelTable {
  std::vector<ChannelExtremaRow> channels;
  std::vector<ChannelRange> limits;
  std::size_t images = 0;
};

ChannelTable corpus_channel_table(std::span<const Image> corpus, const PreprocessSpec& spec);

}  // namespace pixlab
