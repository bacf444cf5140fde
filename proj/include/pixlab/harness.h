#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pixlab/attacks.h"
#include "pixlab/nn.h"
#include "pixlab/preprocess.h"
#include "pixlab/tensor.h"

namespace pixlab {

// ---- PXT1 tensor files ----------------------------------------------------
//
// "PXT1", u8 dtype (1 = float32), u8 rank, rank x u32 dims (little-endian),
// then the row-major float32 little-endian payload.

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);
void write_tensor_file(const Tensor& t, const std::string& path);
Tensor read_tensor_file(const std::string& path);

// ---- corpora ----------------------------------------------------------------

struct CorpusEntry {
  std::string id;  // image_file column, unique within a corpus
  Image raw;
  std::size_t label = 0;
};

struct Corpus {
  std::vector<CorpusEntry> entries;
  std::string manifest_path;
};

// Reads a manifest CSV (header `image_file,label`) and the PXT1 files it names,
// resolved relative to the manifest's directory. Errors:
//   IoError     missing manifest or image file
//   ParseError  bad tensor magic / truncated tensor / malformed manifest row
//   ShapeError  images of different shapes (message names both)
Corpus load_corpus(const std::string& manifest_path);

// Writes each image as <dir>/<id> plus <dir>/manifest.csv. Returns the
// manifest path.
std::string write_corpus(const std::string& dir, std::span<const CorpusEntry> entries);

// Pre-processes every entry for a model.
std::vector<Sample> to_samples(const Corpus& corpus, const PreprocessSpec& spec);

// ---- transfer rate ------------------------------------------------------------

// Records the source model classified correctly when clean and wrongly when
// adversarial.
bool is_eligible(const AdvRecord& r);
std::vector<AdvRecord> select_eligible(std::span<const AdvRecord> records);

struct TransferResult {
  std::size_t eligible = 0;
  std::size_t transferred = 0;  // target prediction != true label
  std::size_t hit_target = 0;   // target prediction == record's attack target
  std::size_t clamped = 0;      // handoffs that left the raw [0, 255] range
  std::optional<double> rate;   // unset when eligible == 0
  std::optional<double> hit_target_rate;
};

// Transfer counts from precomputed target predictions, one per eligible record.
TransferResult transfer_rate(std::span<const AdvRecord> eligible, std::span<const std::size_t> target_predictions);

// Moves an adversarial image from the source model's pixel space into the
// target's: invert the source transform (clamping to [0, 255]) then apply the
// target transform.
struct Handoff {
  Image image;
  bool clamped = false;
};
Handoff handoff(const Image& adversarial, const PreprocessSpec& source, const PreprocessSpec& target);

TransferResult transfer_rate(std::span<const AdvRecord> eligible, const PreprocessSpec& source,
                             const Model& target);

// Mean L-inf perturbation (source pre-processed space); unset for an empty set.
std::optional<double> avg_linf(std::span<const AdvRecord> eligible);

// "-" when undefined, otherwise fixed six decimals.
std::string format_metric(std::optional<double> v);

}  // namespace pixlab
