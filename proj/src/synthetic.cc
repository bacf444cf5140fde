#include "pixlab/synthetic.h"

#include <algorithm>
#include <cstdio>

#include "pixlab/error.h"
#include "pixlab/preprocess.h"
#include "pixlab/random.h"

namespace pixlab {

std::vector<CorpusEntry> synthetic_corpus(const SyntheticCorpusOptions& opts) {
  if (opts.classes < 1) throw ValidationError("synthetic corpus needs at least one class");
  Rng rng(opts.seed);

  struct Prototype {
    double base[3];
    double slope_y[3];
    double slope_x[3];
  };
  std::vector<Prototype> protos(opts.classes);
  for (auto& p : protos) {
    for (int c = 0; c < 3; ++c) {
      p.base[c] = rng.uniform(60.0, 195.0);
      p.slope_y[c] = rng.uniform(-60.0, 60.0);
      p.slope_x[c] = rng.uniform(-60.0, 60.0);
    }
  }

  std::vector<CorpusEntry> out;
  out.reserve(opts.images);
  const double hy = opts.height > 1 ? static_cast<double>(opts.height - 1) : 1.0;
  const double wx = opts.width > 1 ? static_cast<double>(opts.width - 1) : 1.0;
  for (std::size_t n = 0; n < opts.images; ++n) {
    const std::size_t label = n % opts.classes;
    const auto& p = protos[label];
    Tensor img({opts.height, opts.width, 3});
    for (std::size_t y = 0; y < opts.height; ++y) {
      for (std::size_t x = 0; x < opts.width; ++x) {
        for (std::size_t c = 0; c < 3; ++c) {
          double v = p.base[c] + p.slope_y[c] * (static_cast<double>(y) / hy - 0.5) +
                     p.slope_x[c] * (static_cast<double>(x) / wx - 0.5) + rng.uniform(-opts.noise, opts.noise);
          if (rng.uniform() < opts.extreme_fraction) v = rng.uniform() < 0.5 ? 0.0 : 255.0;
          img.at(y, x, c) = std::clamp(v, 0.0, 255.0);
        }
      }
    }
    char id[32];
    std::snprintf(id, sizeof id, "img_%05zu.pxt", n);
    out.push_back({id, Image{std::move(img), kRawDomain}, label});
  }
  return out;
}

Model linear_model(const Shape& input_shape, const std::string& preprocess, const std::vector<double>& w0,
                   const std::vector<double>& w1, double b0, double b1) {
  const std::size_t n = shape_size(input_shape);
  if (w0.size() != n || w1.size() != n) throw ShapeError("linear_model weight rows must have " + std::to_string(n) + " entries");
  Dense d{n, 2, Tensor({2, n}), Tensor({2}, {b0, b1})};
  std::copy(w0.begin(), w0.end(), d.weight.values().begin());
  std::copy(w1.begin(), w1.end(), d.weight.values().begin() + static_cast<std::ptrdiff_t>(n));
  Model m{{Flatten{}, std::move(d)}, input_shape, 2, preprocess};
  validate(m);
  return m;
}

Model monotone_model(const Shape& input_shape, const std::string& preprocess, double weight) {
  if (!(weight > 0.0)) throw ValidationError("monotone model weight must be > 0");
  const std::size_t n = shape_size(input_shape);
  return linear_model(input_shape, preprocess, std::vector<double>(n, weight), std::vector<double>(n, 0.0), 0.0, 0.0);
}

std::vector<LayerSpec> conv_architecture(std::size_t classes) {
  return {
      {LayerType::kConv2d, 4, 3}, {LayerType::kRelu, 0, 0}, {LayerType::kMaxPool2, 0, 0},
      {LayerType::kFlatten, 0, 0}, {LayerType::kDense, classes, 0},
  };
}

std::vector<LayerSpec> dense_architecture(std::size_t classes) {
  return {
      {LayerType::kFlatten, 0, 0}, {LayerType::kDense, 16, 0}, {LayerType::kRelu, 0, 0},
      {LayerType::kDense, classes, 0},
  };
}

Model train_fixture_model(const Corpus& corpus, const std::string& preprocess, const std::vector<LayerSpec>& arch,
                          std::size_t classes, std::uint64_t seed) {
  if (corpus.entries.empty()) throw ValidationError("cannot train a fixture model on an empty corpus");
  const auto spec = preprocess_spec(preprocess);
  const auto samples = to_samples(corpus, spec);
  Model m = build_model(corpus.entries.front().raw.pixels.shape(), preprocess, arch, seed);
  if (m.classes != classes) throw ValidationError("architecture output does not match class count");
  // Inputs under caffe-bgr are ~100x larger than under inception-sym.
  const double lr = spec.kind == PreprocessKind::kInceptionSym ? 0.05 : 1e-4;
  return train(std::move(m), samples, TrainConfig{lr, 60, 8, seed});
}

}  // namespace pixlab
