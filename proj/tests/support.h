#pragma once

// Shared oracles and fixtures for the test binaries.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "pixlab/nn.h"
#include "pixlab/random.h"

namespace pixlab::testing {

inline Tensor random_tensor(Rng& rng, const Shape& shape, double lo, double hi) {
  Tensor t(shape);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline Image random_raw(Rng& rng, std::size_t h, std::size_t w) {
  return Image{random_tensor(rng, {h, w, 3}, 0.0, 255.0), kRawDomain};
}

// Gives every parameter, biases included, a fresh uniform value.
inline void randomize_params(Model& m, Rng& rng, double scale) {
  for (auto& layer : m.layers) {
    if (auto* c = std::get_if<Conv2d>(&layer)) {
      for (auto& v : c->weight.values()) v = rng.uniform(-scale, scale);
      for (auto& v : c->bias.values()) v = rng.uniform(-scale, scale);
    } else if (auto* d = std::get_if<Dense>(&layer)) {
      for (auto& v : d->weight.values()) v = rng.uniform(-scale, scale);
      for (auto& v : d->bias.values()) v = rng.uniform(-scale, scale);
    }
  }
}

// The four families used for gradient checks, each exercising one layer type.
enum class Family { kDense, kConv, kRelu, kMaxPool };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::kDense: return "dense";
    case Family::kConv: return "conv";
    case Family::kRelu: return "relu";
    case Family::kMaxPool: return "maxpool";
  }
  return "?";
}

inline std::vector<LayerSpec> family_layers(Family f) {
  using T = LayerType;
  switch (f) {
    case Family::kDense: return {{T::kFlatten, 0, 0}, {T::kDense, 4, 0}};
    case Family::kConv: return {{T::kConv2d, 3, 3}, {T::kFlatten, 0, 0}, {T::kDense, 4, 0}};
    case Family::kRelu: return {{T::kFlatten, 0, 0}, {T::kDense, 12, 0}, {T::kRelu, 0, 0}, {T::kDense, 4, 0}};
    case Family::kMaxPool: return {{T::kMaxPool2, 0, 0}, {T::kFlatten, 0, 0}, {T::kDense, 4, 0}};
  }
  return {};
}

inline Model family_model(Family f, std::uint64_t seed, const Shape& input = {6, 5, 3}) {
  const auto layers = family_layers(f);
  Model m = build_model(input, "identity", layers, seed);
  Rng rng(mix_seed(seed, 99));
  randomize_params(m, rng, 0.3);
  return m;
}

// Central differences of a scalar function, one coordinate at a time.
inline Tensor fd_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(const Tensor& a, const Tensor& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

// Straight-line forward pass written independently of the library, over
// nested vectors instead of flat offsets.
inline std::vector<double> reference_forward(const Model& m, const Tensor& x) {
  using Grid = std::vector<std::vector<std::vector<double>>>;
  const std::size_t H = x.shape()[0], W = x.shape()[1], C = x.shape()[2];
  Grid grid(H, std::vector<std::vector<double>>(W, std::vector<double>(C)));
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < W; ++w)
      for (std::size_t c = 0; c < C; ++c) grid[h][w][c] = x.at(h, w, c);
  std::vector<double> flat;
  bool flattened = false;

  for (const auto& layer : m.layers) {
    if (const auto* conv = std::get_if<Conv2d>(&layer)) {
      const std::size_t k = conv->kernel, oh = grid.size() - k + 1, ow = grid[0].size() - k + 1;
      const std::size_t cin = conv->in_channels, cout = conv->out_channels;
      Grid next(oh, std::vector<std::vector<double>>(ow, std::vector<double>(cout)));
      for (std::size_t o = 0; o < cout; ++o) {
        for (std::size_t y = 0; y < oh; ++y) {
          for (std::size_t xx = 0; xx < ow; ++xx) {
            double s = conv->bias[o];
            for (std::size_t c = 0; c < cin; ++c)
              for (std::size_t i = 0; i < k; ++i)
                for (std::size_t j = 0; j < k; ++j)
                  s += conv->weight[((o * k + i) * k + j) * cin + c] * grid[y + i][xx + j][c];
            next[y][xx][o] = s;
          }
        }
      }
      grid = std::move(next);
    } else if (std::holds_alternative<MaxPool2>(layer)) {
      const std::size_t oh = grid.size() / 2, ow = grid[0].size() / 2, ch = grid[0][0].size();
      Grid next(oh, std::vector<std::vector<double>>(ow, std::vector<double>(ch)));
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx)
          for (std::size_t c = 0; c < ch; ++c)
            next[y][xx][c] = std::max({grid[2 * y][2 * xx][c], grid[2 * y][2 * xx + 1][c], grid[2 * y + 1][2 * xx][c],
                                       grid[2 * y + 1][2 * xx + 1][c]});
      grid = std::move(next);
    } else if (std::holds_alternative<Relu>(layer)) {
      if (flattened) {
        for (auto& v : flat) v = std::max(v, 0.0);
      } else {
        for (auto& row : grid)
          for (auto& px : row)
            for (auto& v : px) v = std::max(v, 0.0);
      }
    } else if (std::holds_alternative<Flatten>(layer)) {
      if (!flattened) {
        flat.clear();
        for (const auto& row : grid)
          for (const auto& px : row)
            for (double v : px) flat.push_back(v);
        flattened = true;
      }
    } else if (const auto* d = std::get_if<Dense>(&layer)) {
      std::vector<double> out(d->out_features);
      for (std::size_t o = 0; o < d->out_features; ++o) {
        double s = d->bias[o];
        for (std::size_t i = 0; i < d->in_features; ++i) s += d->weight[o * d->in_features + i] * flat[i];
        out[o] = s;
      }
      flat = std::move(out);
    }
  }
  return flat;
}

}  // namespace pixlab::testing
