#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pixlab/nn.h"
#include "pixlab/preprocess.h"

namespace pixlab {

// All attack parameters are in the model's pre-processed pixel units.

struct FgsmParams {
  double epsilon = 0.0;
  bool targeted = false;
  std::optional<std::size_t> target;
};

struct PgdParams {
  double epsilon = 8.0;
  double alpha = 2.0;
  int steps = 7;
  int random_starts = 0;  // 0: start at x
  bool targeted = false;
  std::optional<std::size_t> target;
};

struct CwL2Params {
  double confidence = 0.0;  // kappa
  int binary_steps = 9;
  int iterations = 1000;
  double learning_rate = 1e-2;  // Adam step, in pre-processed pixel units
  double initial_const = 1e-2;
  // Unset: attack the highest-scoring class other than the true label.
  std::optional<std::size_t> target;
};

struct CwLinfParams {
  int iterations = 100;
  std::optional<double> initial_tau;  // unset: widest channel of the clip box
  double tau_decay = 0.9;
  double constant = 10.0;
  double learning_rate = 1e-2;  // fraction of the clip box width per step
  std::optional<std::size_t> target;
};

using AttackParams = std::variant<FgsmParams, PgdParams, CwL2Params, CwLinfParams>;

struct AttackConfig {
  AttackParams params;
  ClipPolicy clip;
  std::uint64_t seed = 0;
};

void validate(const AttackConfig& cfg);
std::string variant_name(const AttackParams& params);
bool is_targeted(const AttackParams& params);

struct AdvRecord {
  Image original;
  Image adversarial;
  std::size_t true_label = 0;
  std::size_t clean_pred = 0;
  std::size_t adv_pred = 0;
  std::optional<std::size_t> target;  // class the attack pushed towards, if any
  double linf = 0.0;
  double l2 = 0.0;
  bool succeeded = false;
};

AdvRecord fgsm(const Model& model, const Image& x, std::size_t label, const FgsmParams& params,
               const ClipPolicy& clip);

AdvRecord pgd(const Model& model, const Image& x, std::size_t label, const PgdParams& params,
              const ClipPolicy& clip, std::uint64_t seed);

AdvRecord cw_l2(const Model& model, const Image& x, std::size_t label, const CwL2Params& params,
                const ClipPolicy& clip);

AdvRecord cw_linf(const Model& model, const Image& x, std::size_t label, const CwLinfParams& params,
                  const ClipPolicy& clip);

AdvRecord run_attack(const Model& model, const Image& x, std::size_t label, const AttackConfig& cfg);

struct BatchItem {
  std::optional<AdvRecord> record;
  std::string error;  // set when the attack on this image threw
};

// Attacks every sample. Image i uses seed mix_seed(cfg.seed, i); a targeted
// attack without a fixed target draws one uniformly from the other classes
// with that seed. Output order and content do not depend on `workers`.
std::vector<BatchItem> attack_batch(const Model& model, std::span<const Sample> corpus,
                                    const AttackConfig& cfg, unsigned workers);

}  // namespace pixlab
