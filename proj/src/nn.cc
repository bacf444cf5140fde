#include "pixlab/nn.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pixlab/error.h"
#include "pixlab/random.h"

namespace pixlab {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double round_to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

void round_params(Model& model) {
  for (auto& layer : model.layers) {
    std::visit(Overloaded{
                   [](Conv2d& l) {
                     for (double& v : l.weight.values()) v = round_to_float(v);
                     for (double& v : l.bias.values()) v = round_to_float(v);
                   },
                   [](Dense& l) {
                     for (double& v : l.weight.values()) v = round_to_float(v);
                     for (double& v : l.bias.values()) v = round_to_float(v);
                   },
                   [](auto&) {},
               },
               layer);
  }
}

// ---- per-layer forward ---------------------------------------------------

Tensor conv_forward(const Conv2d& l, const Tensor& in) {
  const std::size_t h = in.shape()[0], w = in.shape()[1], cin = in.shape()[2];
  const std::size_t k = l.kernel, oh = h - k + 1, ow = w - k + 1;
  Tensor out({oh, ow, l.out_channels});
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      for (std::size_t o = 0; o < l.out_channels; ++o) {
        double acc = l.bias[o];
        for (std::size_t i = 0; i < k; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            const double* src = &in.data()[((y + i) * w + (x + j)) * cin];
            const double* wt = &l.weight.data()[((o * k + i) * k + j) * cin];
            for (std::size_t c = 0; c < cin; ++c) acc += wt[c] * src[c];
          }
        }
        out[(y * ow + x) * l.out_channels + o] = acc;
      }
    }
  }
  return out;
}

Tensor dense_forward(const Dense& l, const Tensor& in) {
  Tensor out({l.out_features});
  for (std::size_t o = 0; o < l.out_features; ++o) {
    double acc = l.bias[o];
    const double* row = &l.weight.data()[o * l.in_features];
    for (std::size_t i = 0; i < l.in_features; ++i) acc += row[i] * in[i];
    out[o] = acc;
  }
  return out;
}

// Returns the flat input index of the max of window (y, x, c). First maximal
// element in row-major window order wins.
std::size_t pool_argmax(const Tensor& in, std::size_t y, std::size_t x, std::size_t c) {
  const std::size_t w = in.shape()[1], ch = in.shape()[2];
  std::size_t best = ((2 * y) * w + 2 * x) * ch + c;
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      const std::size_t idx = ((2 * y + i) * w + (2 * x + j)) * ch + c;
      if (in[idx] > in[best]) best = idx;
    }
  }
  return best;
}

Tensor pool_forward(const Tensor& in) {
  const std::size_t oh = in.shape()[0] / 2, ow = in.shape()[1] / 2, ch = in.shape()[2];
  Tensor out({oh, ow, ch});
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x)
      for (std::size_t c = 0; c < ch; ++c) out[(y * ow + x) * ch + c] = in[pool_argmax(in, y, x, c)];
  return out;
}

Tensor layer_forward(const Layer& layer, const Tensor& in) {
  return std::visit(Overloaded{
                        [&](const Conv2d& l) { return conv_forward(l, in); },
                        [&](const Dense& l) { return dense_forward(l, in); },
                        [&](const Relu&) { return elementwise(ElementOp::kClampLo, in, 0.0); },
                        [&](const MaxPool2&) { return pool_forward(in); },
                        [&](const Flatten&) { return Tensor({in.size()}, in.data()); },
                    },
                    layer);
}

// ---- per-layer backward --------------------------------------------------

Tensor conv_backward(const Conv2d& l, const Tensor& in, const Tensor& g, LayerGrad* pg) {
  const std::size_t w = in.shape()[1], cin = in.shape()[2];
  const std::size_t k = l.kernel, oh = g.shape()[0], ow = g.shape()[1];
  Tensor din(in.shape());
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      for (std::size_t o = 0; o < l.out_channels; ++o) {
        const double go = g[(y * ow + x) * l.out_channels + o];
        if (go == 0.0) continue;
        if (pg) pg->bias[o] += go;
        for (std::size_t i = 0; i < k; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            const std::size_t src = ((y + i) * w + (x + j)) * cin;
            const std::size_t wt = ((o * k + i) * k + j) * cin;
            for (std::size_t c = 0; c < cin; ++c) {
              din[src + c] += l.weight[wt + c] * go;
              if (pg) pg->weight[wt + c] += in[src + c] * go;
            }
          }
        }
      }
    }
  }
  return din;
}

Tensor dense_backward(const Dense& l, const Tensor& in, const Tensor& g, LayerGrad* pg) {
  Tensor din(in.shape());
  for (std::size_t o = 0; o < l.out_features; ++o) {
    const double go = g[o];
    if (pg) pg->bias[o] += go;
    const std::size_t row = o * l.in_features;
    for (std::size_t i = 0; i < l.in_features; ++i) {
      din[i] += l.weight[row + i] * go;
      if (pg) pg->weight[row + i] += in[i] * go;
    }
  }
  return din;
}

Tensor pool_backward(const Tensor& in, const Tensor& g) {
  Tensor din(in.shape());
  const std::size_t oh = g.shape()[0], ow = g.shape()[1], ch = g.shape()[2];
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x)
      for (std::size_t c = 0; c < ch; ++c) din[pool_argmax(in, y, x, c)] += g[(y * ow + x) * ch + c];
  return din;
}

Tensor layer_backward(const Layer& layer, const Tensor& in, const Tensor& g, LayerGrad* pg) {
  return std::visit(Overloaded{
                        [&](const Conv2d& l) { return conv_backward(l, in, g, pg); },
                        [&](const Dense& l) { return dense_backward(l, in, g, pg); },
                        [&](const Relu&) {
                          Tensor din(in.shape());
                          for (std::size_t i = 0; i < in.size(); ++i) din[i] = in[i] > 0.0 ? g[i] : 0.0;
                          return din;
                        },
                        [&](const MaxPool2&) { return pool_backward(in, g); },
                        [&](const Flatten&) { return Tensor(in.shape(), g.data()); },
                    },
                    layer);
}

std::vector<Tensor> forward_trace(const Model& model, const Tensor& x) {
  std::vector<Tensor> acts;
  acts.reserve(model.layers.size() + 1);
  acts.push_back(x);
  for (const auto& layer : model.layers) acts.push_back(layer_forward(layer, acts.back()));
  return acts;
}

void require_input_shape(const Model& model, const Tensor& x) {
  if (x.shape() != model.input_shape) {
    throw ShapeError("model expects input " + shape_string(model.input_shape) + ", got " +
                     shape_string(x.shape()));
  }
}

void require_label(std::size_t label, std::size_t classes) {
  if (label >= classes) {
    throw ValidationError("label " + std::to_string(label) + " out of range for " +
                          std::to_string(classes) + " classes");
  }
}

void require_finite(const Tensor& weight, const Tensor& bias, const char* what) {
  auto finite = [](const Tensor& t) {
    return std::all_of(t.data().begin(), t.data().end(), [](double v) { return std::isfinite(v); });
  };
  if (!finite(weight) || !finite(bias)) throw ValidationError(std::string("non-finite ") + what + " parameter");
}

LayerGrad zero_grad_for(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const Conv2d& l) { return LayerGrad{Tensor(l.weight.shape()), Tensor(l.bias.shape())}; },
                        [](const Dense& l) { return LayerGrad{Tensor(l.weight.shape()), Tensor(l.bias.shape())}; },
                        [](const auto&) { return LayerGrad{}; },
                    },
                    layer);
}

}  // namespace

LayerType layer_type(const Layer& layer) {
  return std::visit(Overloaded{
                        [](const Conv2d&) { return LayerType::kConv2d; },
                        [](const Dense&) { return LayerType::kDense; },
                        [](const Relu&) { return LayerType::kRelu; },
                        [](const MaxPool2&) { return LayerType::kMaxPool2; },
                        [](const Flatten&) { return LayerType::kFlatten; },
                    },
                    layer);
}

std::string layer_name(LayerType type) {
  switch (type) {
    case LayerType::kConv2d: return "conv2d";
    case LayerType::kDense: return "dense";
    case LayerType::kRelu: return "relu";
    case LayerType::kMaxPool2: return "maxpool2";
    case LayerType::kFlatten: return "flatten";
  }
  return "unknown";
}

Shape layer_output_shape(const Layer& layer, const Shape& in) {
  return std::visit(
      Overloaded{
          [&](const Conv2d& l) -> Shape {
            if (in.size() != 3 || in[2] != l.in_channels || in[0] < l.kernel || in[1] < l.kernel ||
                l.kernel == 0) {
              throw ShapeError("conv2d (k=" + std::to_string(l.kernel) + ", in=" +
                               std::to_string(l.in_channels) + ") cannot take input " + shape_string(in));
            }
            if (l.weight.shape() != Shape{l.out_channels, l.kernel, l.kernel, l.in_channels} ||
                l.bias.shape() != Shape{l.out_channels}) {
              throw ShapeError("conv2d parameter shapes inconsistent");
            }
            return {in[0] - l.kernel + 1, in[1] - l.kernel + 1, l.out_channels};
          },
          [&](const Dense& l) -> Shape {
            if (in.size() != 1 || in[0] != l.in_features) {
              throw ShapeError("dense (in=" + std::to_string(l.in_features) + ") cannot take input " +
                               shape_string(in));
            }
            if (l.weight.shape() != Shape{l.out_features, l.in_features} || l.bias.shape() != Shape{l.out_features}) {
              throw ShapeError("dense parameter shapes inconsistent");
            }
            return {l.out_features};
          },
          [&](const Relu&) -> Shape { return in; },
          [&](const MaxPool2&) -> Shape {
            if (in.size() != 3 || in[0] < 2 || in[1] < 2) {
              throw ShapeError("maxpool2 cannot take input " + shape_string(in));
            }
            return {in[0] / 2, in[1] / 2, in[2]};
          },
          [&](const Flatten&) -> Shape { return {shape_size(in)}; },
      },
      layer);
}

void validate(const Model& model) {
  Shape s = model.input_shape;
  if (s.size() != 3) throw ShapeError("model input must be H x W x C, got " + shape_string(s));
  for (const auto& layer : model.layers) {
    s = layer_output_shape(layer, s);
    std::visit(Overloaded{
                   [](const Conv2d& l) { require_finite(l.weight, l.bias, "conv2d"); },
                   [](const Dense& l) { require_finite(l.weight, l.bias, "dense"); },
                   [](const auto&) {},
               },
               layer);
  }
  if (s != Shape{model.classes}) {
    throw ShapeError("model output " + shape_string(s) + " does not match " +
                     std::to_string(model.classes) + " classes");
  }
}

Model build_model(const Shape& input_shape, const std::string& preprocess,
                  std::span<const LayerSpec> layers, std::uint64_t seed) {
  Rng rng(seed);
  Model model;
  model.input_shape = input_shape;
  model.preprocess = preprocess;
  Shape s = input_shape;
  for (const auto& spec : layers) {
    Layer layer;
    switch (spec.type) {
      case LayerType::kConv2d: {
        if (s.size() != 3) throw ShapeError("conv2d needs a 3-D input, got " + shape_string(s));
        Conv2d l{s[2], spec.size, spec.kernel,
                 Tensor({spec.size, spec.kernel, spec.kernel, s[2]}), Tensor({spec.size})};
        const double fan_in = static_cast<double>(spec.kernel * spec.kernel * s[2]);
        const double fan_out = static_cast<double>(spec.kernel * spec.kernel * spec.size);
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& v : l.weight.values()) v = rng.uniform(-bound, bound);
        layer = std::move(l);
        break;
      }
      case LayerType::kDense: {
        if (s.size() != 1) throw ShapeError("dense needs a flattened input, got " + shape_string(s));
        Dense l{s[0], spec.size, Tensor({spec.size, s[0]}), Tensor({spec.size})};
        const double bound = std::sqrt(6.0 / static_cast<double>(s[0] + spec.size));
        for (double& v : l.weight.values()) v = rng.uniform(-bound, bound);
        layer = std::move(l);
        break;
      }
      case LayerType::kRelu: layer = Relu{}; break;
      case LayerType::kMaxPool2: layer = MaxPool2{}; break;
      case LayerType::kFlatten: layer = Flatten{}; break;
    }
    s = layer_output_shape(layer, s);
    model.layers.push_back(std::move(layer));
  }
  if (s.size() != 1) throw ShapeError("architecture must end in a rank-1 output, got " + shape_string(s));
  model.classes = s[0];
  round_params(model);
  validate(model);
  return model;
}

Tensor forward_tensor(const Model& model, const Tensor& x) {
  require_input_shape(model, x);
  Tensor a = x;
  for (const auto& layer : model.layers) a = layer_forward(layer, a);
  return a;
}

Tensor forward(const Model& model, const Image& x) {
  if (x.domain != model.preprocess) {
    throw ShapeError("model expects '" + model.preprocess + "' input, got '" + x.domain + "'");
  }
  return forward_tensor(model, x.pixels);
}

std::size_t argmax(const Tensor& v) {
  return static_cast<std::size_t>(std::max_element(v.data().begin(), v.data().end()) - v.data().begin());
}

std::size_t predict(const Model& model, const Image& x) { return argmax(forward(model, x)); }

Tensor softmax(const Tensor& logits) {
  const double m = *std::max_element(logits.data().begin(), logits.data().end());
  Tensor p(logits.shape());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += (p[i] = std::exp(logits[i] - m));
  for (double& v : p.values()) v /= sum;
  return p;
}

double cross_entropy(const Tensor& logits, std::size_t label) {
  require_label(label, logits.size());
  const double m = *std::max_element(logits.data().begin(), logits.data().end());
  const double zy = logits[label];
  if (zy == m) {
    // log1p keeps confident predictions accurate instead of cancelling to 0
    double rest = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      if (i != label) rest += std::exp(logits[i] - zy);
    }
    return std::log1p(rest);
  }
  double sum = 0.0;
  for (double z : logits.values()) sum += std::exp(z - m);
  return std::max(0.0, m + std::log(sum) - zy);
}

Tensor cross_entropy_grad(const Tensor& logits, std::size_t label) {
  require_label(label, logits.size());
  Tensor g = softmax(logits);
  double rest = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (i != label) rest += g[i];
  }
  g[label] = -rest;
  return g;
}

std::size_t argmax_excluding(const Tensor& logits, std::size_t excluded) {
  std::size_t best = logits.size();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (i == excluded) continue;
    if (best == logits.size() || logits[i] > logits[best]) best = i;
  }
  return best;
}

double cw_margin(const Tensor& logits, std::size_t target) {
  require_label(target, logits.size());
  if (logits.size() < 2) throw ValidationError("cw_margin needs at least two classes");
  return logits[argmax_excluding(logits, target)] - logits[target];
}

Gradients backward(const Model& model, const Tensor& x, const Tensor& logit_grad, bool with_params) {
  require_input_shape(model, x);
  const auto acts = forward_trace(model, x);
  if (logit_grad.shape() != acts.back().shape()) {
    throw ShapeError("logit gradient " + shape_string(logit_grad.shape()) + " vs logits " +
                     shape_string(acts.back().shape()));
  }
  Gradients grads;
  if (with_params) {
    grads.layers.reserve(model.layers.size());
    for (const auto& layer : model.layers) grads.layers.push_back(zero_grad_for(layer));
  }
  Tensor g = logit_grad;
  for (std::size_t i = model.layers.size(); i-- > 0;) {
    LayerGrad* pg = with_params ? &grads.layers[i] : nullptr;
    g = layer_backward(model.layers[i], acts[i], g, pg);
  }
  grads.input = std::move(g);
  return grads;
}

Tensor input_gradient(const Model& model, const Image& x, std::size_t label) {
  const Tensor logits = forward(model, x);
  return backward(model, x.pixels, cross_entropy_grad(logits, label), false).input;
}

double mean_loss(const Model& model, std::span<const Sample> samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) total += cross_entropy(forward(model, s.image), s.label);
  return total / static_cast<double>(samples.size());
}

double accuracy(const Model& model, std::span<const Sample> samples) {
  if (samples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : samples) hits += predict(model, s.image) == s.label;
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

Model train(Model model, std::span<const Sample> samples, const TrainConfig& cfg) {
  if (samples.empty()) throw ValidationError("cannot train on an empty corpus");
  if (!(cfg.learning_rate > 0.0)) throw ValidationError("learning rate must be > 0");
  if (cfg.epochs < 1) throw ValidationError("epochs must be >= 1");
  if (cfg.batch_size < 1) throw ValidationError("batch size must be >= 1");
  for (const auto& s : samples) require_label(s.label, model.classes);
  validate(model);

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<LayerGrad> acc;
      for (const auto& layer : model.layers) acc.push_back(zero_grad_for(layer));
      for (std::size_t b = start; b < end; ++b) {
        const auto& s = samples[order[b]];
        const Tensor logits = forward(model, s.image);
        auto g = backward(model, s.image.pixels, cross_entropy_grad(logits, s.label));
        for (std::size_t l = 0; l < acc.size(); ++l) {
          for (std::size_t k = 0; k < acc[l].weight.size(); ++k) acc[l].weight[k] += g.layers[l].weight[k];
          for (std::size_t k = 0; k < acc[l].bias.size(); ++k) acc[l].bias[k] += g.layers[l].bias[k];
        }
      }
      const double step = cfg.learning_rate / static_cast<double>(end - start);
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto update = [&](Tensor& weight, Tensor& bias) {
          for (std::size_t k = 0; k < weight.size(); ++k) weight[k] -= step * acc[l].weight[k];
          for (std::size_t k = 0; k < bias.size(); ++k) bias[k] -= step * acc[l].bias[k];
        };
        std::visit(Overloaded{
                       [&](Conv2d& layer) { update(layer.weight, layer.bias); },
                       [&](Dense& layer) { update(layer.weight, layer.bias); },
                       [](auto&) {},
                   },
                   model.layers[l]);
      }
    }
  }
  round_params(model);
  validate(model);
  return model;
}

}  // namespace pixlab
