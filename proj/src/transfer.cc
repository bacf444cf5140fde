#include <cstdio>

#include "pixlab/error.h"
#include "pixlab/harness.h"

namespace pixlab {

bool is_eligible(const AdvRecord& r) { return r.clean_pred == r.true_label && r.adv_pred != r.true_label; }

std::vector<AdvRecord> select_eligible(std::span<const AdvRecord> records) {
  std::vector<AdvRecord> out;
  for (const auto& r : records) {
    if (is_eligible(r)) out.push_back(r);
  }
  return out;
}

TransferResult transfer_rate(std::span<const AdvRecord> eligible, std::span<const std::size_t> target_predictions) {
  if (eligible.size() != target_predictions.size()) {
    throw ShapeError("transfer_rate: " + std::to_string(eligible.size()) + " records but " +
                     std::to_string(target_predictions.size()) + " predictions");
  }
  TransferResult res;
  res.eligible = eligible.size();
  std::size_t with_target = 0;
  for (std::size_t i = 0; i < eligible.size(); ++i) {
    if (target_predictions[i] != eligible[i].true_label) ++res.transferred;
    if (eligible[i].target) {
      ++with_target;
      if (target_predictions[i] == *eligible[i].target) ++res.hit_target;
    }
  }
  if (res.eligible > 0) res.rate = static_cast<double>(res.transferred) / static_cast<double>(res.eligible);
  if (with_target > 0) res.hit_target_rate = static_cast<double>(res.hit_target) / static_cast<double>(with_target);
  return res;
}

Handoff handoff(const Image& adversarial, const PreprocessSpec& source, const PreprocessSpec& target) {
  auto raw = invert(source, adversarial);
  return {apply(target, raw.raw), raw.clamped};
}

TransferResult transfer_rate(std::span<const AdvRecord> eligible, const PreprocessSpec& source,
                             const Model& target) {
  const PreprocessSpec target_spec = preprocess_spec(target.preprocess);
  std::vector<std::size_t> preds;
  preds.reserve(eligible.size());
  std::size_t clamped = 0;
  for (const auto& r : eligible) {
    const auto h = handoff(r.adversarial, source, target_spec);
    clamped += h.clamped;
    preds.push_back(predict(target, h.image));
  }
  auto res = transfer_rate(eligible, preds);
  res.clamped = clamped;
  return res;
}

std::optional<double> avg_linf(std::span<const AdvRecord> eligible) {
  if (eligible.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& r : eligible) sum += r.linf;
  return sum / static_cast<double>(eligible.size());
}

std::string format_metric(std::optional<double> v) {
  if (!v) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

}  // namespace pixlab
