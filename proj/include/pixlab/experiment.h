#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pixlab/attacks.h"
#include "pixlab/detectors.h"
#include "pixlab/harness.h"

namespace pixlab {

struct AttackEntry {
  std::string name;
  AttackConfig config;
  bool explicit_seed = false;  // otherwise derived from the experiment seed
};

struct DetectorEntry {
  std::string detector;  // gap | shift | zero | disagreement
  double epsilon = 8.0;  // gap, shift
  std::size_t channel = kDefaultShiftChannel;
  double threshold = kDefaultZeroThreshold;  // zero
  std::string model;     // disagreement: second model path; empty = first target
};

/// Parsed experiment config. Paths are resolved against the config file's
/// directory.
///
///   {
///     "corpus": "corpus/manifest.csv",
///     "source_model": "models/source.pxm",
///     "target_models": ["models/target.pxm"],
///     "attacks": [{"name": "pgd8", "variant": "pgd", "epsilon": 8, "alpha": 2, "steps": 7}],
///     "detectors": [{"detector": "gap", "epsilon": 8}],
///     "clip_policy": "pixel-box",
///     "seed": 7,
///     "out_dir": "out",
///     "saturation_sweep": [150, 160]
///   }
struct ExperimentConfig {
  std::string corpus;
  std::string source_model;
  std::vector<std::string> target_models;
  std::vector<AttackEntry> attacks;
  std::vector<DetectorEntry> detectors;
  ClipPolicy clip;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::vector<double> saturation_sweep;
};

// Throws ValidationError whose path() is a JSON pointer into the document.
ExperimentConfig parse_experiment_config(const std::string& json_text, const std::string& base_dir);
ExperimentConfig load_experiment_config(const std::string& path);

struct NamedModel {
  std::string name;  // file stem
  Model model;
};

struct Experiment {
  ExperimentConfig config;
  Corpus corpus;
  NamedModel source;
  std::vector<NamedModel> targets;
};

// Loads corpus and models, and checks labels and shapes against the source model.
Experiment load_experiment(const ExperimentConfig& cfg);

struct AttackRun {
  std::string name;
  AttackConfig config;
  std::vector<BatchItem> items;

  std::vector<AdvRecord> records() const;  // successful items only
};

std::vector<AttackRun> run_attacks(const Experiment& exp, unsigned workers);

struct SweepRow {
  double epsilon = 0.0;
  double max_linf = 0.0;
};

// Untargeted FGSM on the whole corpus for each epsilon, under the config's
// clip policy; reports the largest per-image L-inf perturbation.
std::vector<SweepRow> saturation_sweep(const Experiment& exp, const std::vector<double>& epsilons, unsigned workers);

// Report writers. Each returns the path written.
std::string write_transfer_reports(const Experiment& exp, const std::vector<AttackRun>& runs,
                                   const std::string& out_dir, std::vector<std::string>* written);
std::string write_channel_stats(const Experiment& exp, const std::vector<AttackRun>& runs, const std::string& out_dir);
std::string write_zero_counts(const Experiment& exp, const std::vector<AttackRun>& runs, const std::string& out_dir);
std::string write_verdicts(const Experiment& exp, const std::vector<AttackRun>& runs,
                           const std::vector<DetectorEntry>& detectors, const std::string& path);
std::string write_sweep(const std::vector<SweepRow>& rows, const std::string& out_dir);

// Attack records on disk: <dir>/<attack>.jsonl plus one PXT1 file per
// adversarial image under <dir>/<attack>/.
std::vector<std::string> write_records(const std::vector<AttackRun>& runs, const Experiment& exp,
                                       const std::string& dir);
std::vector<AttackRun> read_records(const Experiment& exp, const std::string& dir);

struct RunOptions {
  std::string out_dir;  // empty: config's out_dir
  unsigned workers = 1;
  std::optional<std::uint64_t> seed;
};

// Full pipeline: attack -> transfer -> detect -> stats -> sweep. Returns every
// file written. Output bytes depend only on (config, seed).
std::vector<std::string> run_experiment(const std::string& config_path, const RunOptions& opts);

}  // namespace pixlab
