#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pixlab/harness.h"
#include "pixlab/nn.h"

namespace pixlab {

struct SyntheticCorpusOptions {
  std::size_t images = 100;
  std::size_t classes = 3;
  std::size_t height = 8;
  std::size_t width = 8;
  double noise = 30.0;             // uniform +-noise around the class prototype
  double extreme_fraction = 0.02;  // pixels forced to raw 0 or 255
  std::uint64_t seed = 1;
};

// Raw RGB images built from per-class colour/gradient prototypes plus noise.
// Labels cycle through the classes. Ids are "img_00000.pxt", ...
std::vector<CorpusEntry> synthetic_corpus(const SyntheticCorpusOptions& opts);

// Flatten -> Dense(2) with class-0 weights all `weight` > 0 and class-1
// weights zero. The cross-entropy input gradient for label 0 is negative at
// every pixel, and positive for label 1.
Model monotone_model(const Shape& input_shape, const std::string& preprocess, double weight = 0x1.0p-20);

// Flatten -> Dense(2) with the given rows and biases.
Model linear_model(const Shape& input_shape, const std::string& preprocess, const std::vector<double>& w0,
                   const std::vector<double>& w1, double b0, double b1);

// Small convolutional and dense architectures used for fixture classifiers.
std::vector<LayerSpec> conv_architecture(std::size_t classes);
std::vector<LayerSpec> dense_architecture(std::size_t classes);

// Builds and trains a fixture classifier on `corpus` pre-processed with `preprocess`.
Model train_fixture_model(const Corpus& corpus, const std::string& preprocess, const std::vector<LayerSpec>& arch,
                          std::size_t classes, std::uint64_t seed);

}  // namespace pixlab
