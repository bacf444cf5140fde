#include "pixlab/attacks.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "pixlab/error.h"
#include "pixlab/random.h"

namespace pixlab {

namespace {

using Box = std::array<ChannelRange, 3>;

void require_attack_input(const Model& model, const Image& x, std::size_t label) {
  if (x.domain != model.preprocess) {
    throw ShapeError("attack input is in domain '" + x.domain + "', model expects '" + model.preprocess + "'");
  }
  if (x.pixels.shape() != model.input_shape) {
    throw ShapeError("attack input " + shape_string(x.pixels.shape()) + " vs model input " +
                     shape_string(model.input_shape));
  }
  if (label >= model.classes) throw ValidationError("label " + std::to_string(label) + " out of range");
}

std::size_t require_target(const std::optional<std::size_t>& target, std::size_t classes) {
  if (!target) throw ValidationError("targeted attack needs a target label");
  if (*target >= classes) throw ValidationError("target " + std::to_string(*target) + " out of range");
  return *target;
}

// Nearest point to v within [center - eps, center + eps], with the bound
// holding for the computed difference |v - center|, not just in exact math.
double clamp_to_ball(double v, double center, double eps) {
  v = std::clamp(v, center - eps, center + eps);
  while (std::abs(v - center) > eps) v = std::nextafter(v, center);
  return v;
}

// Ball projection, then box clip. When a pixel's eps-interval misses the box
// the box cannot be honoured without breaking the budget; the final ball pass
// keeps the budget and leaves the pixel at the interval end nearest the box.
Tensor project_and_clip(const Tensor& origin, const Tensor& candidate, double eps, const Box& box) {
  Tensor out(candidate.shape());
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    const auto& r = box[i % 3];
    double v = clamp_to_ball(candidate[i], origin[i], eps);
    v = std::clamp(v, r.lo, r.hi);
    out[i] = clamp_to_ball(v, origin[i], eps);
  }
  return out;
}

Tensor clip_to_box(const Tensor& t, const Box& box) {
  Tensor out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = std::clamp(t[i], box[i % 3].lo, box[i % 3].hi);
  return out;
}

bool inside_box(const Tensor& t, const Box& box) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < box[i % 3].lo || t[i] > box[i % 3].hi) return false;
  }
  return true;
}

AdvRecord make_record(const Model& model, const Image& x, Image adv, std::size_t label,
                      std::size_t clean_pred, std::optional<std::size_t> target, bool succeeded) {
  AdvRecord r;
  r.linf = linf_distance(x.pixels, adv.pixels);
  r.l2 = l2_distance(x.pixels, adv.pixels);
  r.adv_pred = predict(model, adv);
  r.original = x;
  r.adversarial = std::move(adv);
  r.true_label = label;
  r.clean_pred = clean_pred;
  r.target = target;
  r.succeeded = succeeded;
  return r;
}

bool attack_hit(std::size_t pred, std::size_t label, std::optional<std::size_t> target) {
  return target ? pred == *target : pred != label;
}

// Gradient of the CW margin max_{i != t} z_i - z_t with respect to the input,
// scaled by `scale`.
Tensor margin_input_gradient(const Model& model, const Tensor& x, const Tensor& logits, std::size_t target,
                             double scale) {
  Tensor lg(logits.shape());
  lg[argmax_excluding(logits, target)] += scale;
  lg[target] -= scale;
  return backward(model, x, lg, false).input;
}

// Elementwise Adam on a flat parameter vector.
class Adam {
 public:
  Adam(std::size_t n, double lr) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
    }
  }

 private:
  double lr_;
  int t_ = 0;
  std::vector<double> m_, v_;
};

// Maps an unconstrained variable onto a box per pixel:
//   x = lo + h * (tanh(w / h) + 1),  h = (hi - lo) / 2
// The 1/h scaling makes dx/dw = 1 at the box centre, so optimizer step sizes
// mean the same thing in pixel units whether or not the box is bounded. An
// unbounded box uses the identity map.
class BoxReparam {
 public:
  explicit BoxReparam(const Box& box) : box_(box), bounded_(std::isfinite(box[0].lo)) {}

  Tensor to_free(const Tensor& x) const {
    if (!bounded_) return x;
    constexpr double kLimit = 1.0 - 1e-9;
    Tensor w(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto& r = box_[i % 3];
      const double h = (r.hi - r.lo) / 2.0;
      const double u = std::clamp((x[i] - r.lo) / h - 1.0, -kLimit, kLimit);
      w[i] = h * std::atanh(u);
    }
    return w;
  }

  Tensor to_box(const Tensor& w) const {
    if (!bounded_) return w;
    Tensor x(w.shape());
    for (std::size_t i = 0; i < w.size(); ++i) {
      const auto& r = box_[i % 3];
      const double h = (r.hi - r.lo) / 2.0;
      x[i] = std::clamp(r.lo + h * (std::tanh(w[i] / h) + 1.0), r.lo, r.hi);
    }
    return x;
  }

  // Chain rule through to_box: dL/dw = dL/dx * dx/dw.
  void chain(const Tensor& w, Tensor& grad) const {
    if (!bounded_) return;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const auto& r = box_[i % 3];
      const double t = std::tanh(w[i] / ((r.hi - r.lo) / 2.0));
      grad[i] *= 1.0 - t * t;
    }
  }

 private:
  Box box_;
  bool bounded_;
};

}  // namespace

void validate(const AttackConfig& cfg) {
  std::visit(
      [](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, FgsmParams>) {
          if (!(p.epsilon >= 0.0)) throw ValidationError("epsilon must be >= 0");
        } else if constexpr (std::is_same_v<P, PgdParams>) {
          if (!(p.epsilon >= 0.0)) throw ValidationError("epsilon must be >= 0");
          if (!(p.alpha > 0.0)) throw ValidationError("alpha must be > 0");
          if (p.steps < 1) throw ValidationError("steps must be >= 1");
          if (p.random_starts < 0) throw ValidationError("random_starts must be >= 0");
        } else if constexpr (std::is_same_v<P, CwL2Params>) {
          if (!(p.confidence >= 0.0 && p.confidence <= 100.0)) throw ValidationError("confidence must be in [0, 100]");
          if (p.binary_steps < 1) throw ValidationError("binary_steps must be >= 1");
          if (p.iterations < 1) throw ValidationError("iterations must be >= 1");
          if (!(p.learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
          if (!(p.initial_const > 0.0)) throw ValidationError("initial_const must be > 0");
        } else {
          if (p.iterations < 1) throw ValidationError("iterations must be >= 1");
          if (p.initial_tau && !(*p.initial_tau > 0.0)) throw ValidationError("initial_tau must be > 0");
          if (!(p.tau_decay > 0.0 && p.tau_decay < 1.0)) throw ValidationError("tau_decay must be in (0, 1)");
          if (!(p.constant > 0.0)) throw ValidationError("constant must be > 0");
          if (!(p.learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
        }
      },
      cfg.params);
  if (std::holds_alternative<CwLinfParams>(cfg.params) && cfg.clip.kind == ClipKind::kNone) {
    throw ValidationError("cw-linf needs a clip policy other than none");
  }
}

std::string variant_name(const AttackParams& params) {
  static constexpr const char* kNames[] = {"fgsm", "pgd", "cw-l2", "cw-linf"};
  return kNames[params.index()];
}

bool is_targeted(const AttackParams& params) {
  return std::visit(
      [](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, FgsmParams> || std::is_same_v<P, PgdParams>) {
          return p.targeted;
        } else {
          return p.target.has_value();
        }
      },
      params);
}

AdvRecord fgsm(const Model& model, const Image& x, std::size_t label, const FgsmParams& params,
               const ClipPolicy& clip) {
  require_attack_input(model, x, label);
  if (!(params.epsilon >= 0.0)) throw ValidationError("epsilon must be >= 0");
  const std::optional<std::size_t> target =
      params.targeted ? std::optional(require_target(params.target, model.classes)) : std::nullopt;
  const Box box = clip_box(clip, preprocess_spec(model.preprocess));

  const Tensor grad = input_gradient(model, x, target.value_or(label));
  const double step = target ? -params.epsilon : params.epsilon;
  Tensor cand(x.pixels.shape());
  for (std::size_t i = 0; i < cand.size(); ++i) {
    const double s = grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0);
    cand[i] = x.pixels[i] + step * s;
  }
  Image adv{project_and_clip(x.pixels, cand, params.epsilon, box), x.domain};
  const std::size_t clean_pred = predict(model, x);
  auto rec = make_record(model, x, std::move(adv), label, clean_pred, target, false);
  rec.succeeded = attack_hit(rec.adv_pred, label, target);
  return rec;
}

AdvRecord pgd(const Model& model, const Image& x, std::size_t label, const PgdParams& params,
              const ClipPolicy& clip, std::uint64_t seed) {
  require_attack_input(model, x, label);
  validate(AttackConfig{params, clip, seed});
  const std::optional<std::size_t> target =
      params.targeted ? std::optional(require_target(params.target, model.classes)) : std::nullopt;
  const Box box = clip_box(clip, preprocess_spec(model.preprocess));
  const std::size_t loss_label = target.value_or(label);
  const double dir = target ? -1.0 : 1.0;

  auto descend = [&](Tensor cur) {
    for (int step = 0; step < params.steps; ++step) {
      const Tensor grad = input_gradient(model, Image{cur, x.domain}, loss_label);
      for (std::size_t i = 0; i < cur.size(); ++i) {
        const double s = grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0);
        cur[i] += dir * params.alpha * s;
      }
      cur = project_and_clip(x.pixels, cur, params.epsilon, box);
    }
    return cur;
  };

  Tensor best;
  if (params.random_starts == 0) {
    best = descend(x.pixels);
  } else {
    // Keep the first restart that fools the model, otherwise the one with
    // the best attack loss.
    Rng rng(seed);
    double best_score = -std::numeric_limits<double>::infinity();
    for (int r = 0; r < params.random_starts; ++r) {
      Tensor start(x.pixels.shape());
      for (std::size_t i = 0; i < start.size(); ++i) {
        start[i] = x.pixels[i] + rng.uniform(-params.epsilon, params.epsilon);
      }
      Tensor cand = descend(project_and_clip(x.pixels, start, params.epsilon, box));
      const Tensor logits = forward_tensor(model, cand);
      const double score = dir * cross_entropy(logits, loss_label);
      const bool hit = attack_hit(argmax(logits), label, target);
      if (hit || score > best_score) {
        best_score = score;
        best = std::move(cand);
      }
      if (hit) break;
    }
  }

  const std::size_t clean_pred = predict(model, x);
  auto rec = make_record(model, x, Image{std::move(best), x.domain}, label, clean_pred, target, false);
  rec.succeeded = attack_hit(rec.adv_pred, label, target);
  return rec;
}

AdvRecord cw_l2(const Model& model, const Image& x, std::size_t label, const CwL2Params& params,
                const ClipPolicy& clip) {
  require_attack_input(model, x, label);
  validate(AttackConfig{params, clip, 0});
  const Box box = clip_box(clip, preprocess_spec(model.preprocess));
  const Tensor clean_logits = forward(model, x);
  const std::size_t clean_pred = argmax(clean_logits);
  if (model.classes < 2) throw ValidationError("cw-l2 needs at least two classes");
  const std::size_t target = params.target ? require_target(params.target, model.classes)
                                           : argmax_excluding(clean_logits, label);
  const double kappa = params.confidence;

  // x itself may already satisfy the objective; nothing can beat L2 = 0.
  if (inside_box(x.pixels, box) && cw_margin(clean_logits, target) <= -kappa) {
    return make_record(model, x, x, label, clean_pred, target, true);
  }

  const BoxReparam reparam(box);
  const Tensor w0 = reparam.to_free(x.pixels);
  std::optional<Tensor> best;
  double best_l2 = std::numeric_limits<double>::infinity();

  double lower = 0.0, upper = 1e10, c = params.initial_const;
  for (int bs = 0; bs < params.binary_steps; ++bs) {
    Tensor w = w0;
    Adam adam(w.size(), params.learning_rate);
    bool found = false;
    for (int it = 0; it <= params.iterations; ++it) {
      const Tensor xa = reparam.to_box(w);
      const Tensor logits = forward_tensor(model, xa);
      const double margin = cw_margin(logits, target);
      if (margin <= -kappa) {
        found = true;
        const double l2 = l2_distance(xa, x.pixels);
        if (l2 < best_l2) {
          best_l2 = l2;
          best = xa;
        }
      }
      if (it == params.iterations) break;

      // d/dx [ |xa - x|^2 + c * max(margin, -kappa) ]
      Tensor grad(xa.shape());
      for (std::size_t i = 0; i < xa.size(); ++i) grad[i] = 2.0 * (xa[i] - x.pixels[i]);
      if (margin > -kappa) {
        const Tensor mg = margin_input_gradient(model, xa, logits, target, c);
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += mg[i];
      }
      reparam.chain(w, grad);
      adam.step(w.values(), grad.values());
    }

    if (found) {
      upper = std::min(upper, c);
      if (upper < 1e9) c = (lower + upper) / 2.0;
    } else {
      lower = std::max(lower, c);
      c = upper < 1e9 ? (lower + upper) / 2.0 : c * 10.0;
    }
  }

  if (!best) return make_record(model, x, x, label, clean_pred, target, false);
  return make_record(model, x, Image{std::move(*best), x.domain}, label, clean_pred, target, true);
}

AdvRecord cw_linf(const Model& model, const Image& x, std::size_t label, const CwLinfParams& params,
                  const ClipPolicy& clip) {
  require_attack_input(model, x, label);
  validate(AttackConfig{params, clip, 0});
  const Box box = clip_box(clip, preprocess_spec(model.preprocess));
  double width = 0.0;
  for (const auto& r : box) width = std::max(width, r.hi - r.lo);

  const Tensor clean_logits = forward(model, x);
  const std::size_t clean_pred = argmax(clean_logits);
  if (model.classes < 2) throw ValidationError("cw-linf needs at least two classes");
  const std::size_t target = params.target ? require_target(params.target, model.classes)
                                           : argmax_excluding(clean_logits, label);

  double tau = params.initial_tau.value_or(width);
  Tensor cur = clip_to_box(x.pixels, box);
  Adam adam(cur.size(), params.learning_rate * width);
  std::optional<Tensor> last_success;

  for (int it = 0; it <= params.iterations; ++it) {
    const Tensor logits = forward_tensor(model, cur);
    const double margin = cw_margin(logits, target);
    if (margin <= 0.0) last_success = cur;
    if (it == params.iterations) break;

    // d/dx [ c * max(margin, 0) + sum_i max(0, |x_i - x0_i| - tau) ]
    Tensor grad(cur.shape());
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const double d = cur[i] - x.pixels[i];
      if (std::abs(d) > tau) grad[i] = d > 0.0 ? 1.0 : -1.0;
    }
    if (margin > 0.0) {
      const Tensor mg = margin_input_gradient(model, cur, logits, target, params.constant);
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += mg[i];
    }
    adam.step(cur.values(), grad.values());
    cur = clip_to_box(cur, box);

    if (linf_distance(cur, x.pixels) <= tau) tau *= params.tau_decay;
  }

  if (!last_success) return make_record(model, x, x, label, clean_pred, target, false);
  return make_record(model, x, Image{std::move(*last_success), x.domain}, label, clean_pred, target, true);
}

AdvRecord run_attack(const Model& model, const Image& x, std::size_t label, const AttackConfig& cfg) {
  validate(cfg);
  return std::visit(
      [&](const auto& p) -> AdvRecord {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, FgsmParams>) return fgsm(model, x, label, p, cfg.clip);
        else if constexpr (std::is_same_v<P, PgdParams>) return pgd(model, x, label, p, cfg.clip, cfg.seed);
        else if constexpr (std::is_same_v<P, CwL2Params>) return cw_l2(model, x, label, p, cfg.clip);
        else return cw_linf(model, x, label, p, cfg.clip);
      },
      cfg.params);
}

std::vector<BatchItem> attack_batch(const Model& model, std::span<const Sample> corpus,
                                    const AttackConfig& cfg, unsigned workers) {
  validate(cfg);
  std::vector<BatchItem> out(corpus.size());
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    for (std::size_t i = next++; i < corpus.size(); i = next++) {
      try {
        AttackConfig item = cfg;
        item.seed = mix_seed(cfg.seed, i);
        const auto& sample = corpus[i];
        std::visit(
            [&](auto& p) {
              using P = std::decay_t<decltype(p)>;
              if constexpr (std::is_same_v<P, FgsmParams> || std::is_same_v<P, PgdParams>) {
                if (p.targeted && !p.target && model.classes > 1) {
                  Rng rng(item.seed ^ 0x7461726765740000ULL);
                  std::size_t t = rng.below(model.classes - 1);
                  p.target = t >= sample.label ? t + 1 : t;
                }
              }
            },
            item.params);
        out[i].record = run_attack(model, sample.image, sample.label, item);
      } catch (const std::exception& e) {
        out[i].error = e.what();
      }
    }
  };

  const unsigned n = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(corpus.size())));
  if (n <= 1) {
    work();
    return out;
  }
  std::vector<std::thread> pool;
  pool.reserve(n);
  for (unsigned t = 0; t < n; ++t) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  return out;
}

}  // namespace pixlab
