#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pixlab/tensor.h"

namespace pixlab {

// 2-D convolution, stride 1, valid padding. weight is (out, k, k, in).
struct Conv2d {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  Tensor weight;
  Tensor bias;
};

// Fully connected layer on a rank-1 input. weight is (out, in).
struct Dense {
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  Tensor weight;
  Tensor bias;
};

struct Relu {};
struct MaxPool2 {};  // 2x2 window, stride 2, floor on odd sizes
struct Flatten {};

using Layer = std::variant<Conv2d, Dense, Relu, MaxPool2, Flatten>;

/// Feed-forward classifier over pre-processed H x W x C images. The last
/// layer produces raw logits; softmax lives in the loss.
struct Model {
  std::vector<Layer> layers;
  Shape input_shape;
  std::size_t classes = 0;
  std::string preprocess;  // spec name the model expects its inputs in
};

enum class LayerType : std::uint8_t {
  kConv2d = 1,
  kDense = 2,
  kRelu = 3,
  kMaxPool2 = 4,
  kFlatten = 5,
};

// Architecture entry for build_model. `size` is filters for conv, units for
// dense; `kernel` is conv only.
struct LayerSpec {
  LayerType type = LayerType::kRelu;
  std::size_t size = 0;
  std::size_t kernel = 0;
};

LayerType layer_type(const Layer& layer);
std::string layer_name(LayerType type);

Shape layer_output_shape(const Layer& layer, const Shape& in);

// Checks shapes chain from input_shape to (classes) and parameters are finite.
// Throws ShapeError / ValidationError.
void validate(const Model& model);

// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero. All values
// are representable as float so a saved model reloads bit-identically.
Model build_model(const Shape& input_shape, const std::string& preprocess,
                  std::span<const LayerSpec> layers, std::uint64_t seed);

Tensor forward(const Model& model, const Image& x);
// Same as forward without the domain check.
Tensor forward_tensor(const Model& model, const Tensor& x);

std::size_t argmax(const Tensor& v);
std::size_t predict(const Model& model, const Image& x);

Tensor softmax(const Tensor& logits);
double cross_entropy(const Tensor& logits, std::size_t label);
// d cross_entropy / d logits = softmax - onehot(label).
Tensor cross_entropy_grad(const Tensor& logits, std::size_t label);

// max_{i != target} logits[i] - logits[target]
double cw_margin(const Tensor& logits, std::size_t target);
// Index of the maximal logit other than `excluded` (first on ties).
std::size_t argmax_excluding(const Tensor& logits, std::size_t excluded);

struct LayerGrad {
  Tensor weight;
  Tensor bias;
};

struct Gradients {
  Tensor input;
  std::vector<LayerGrad> layers;  // empty tensors for parameter-free layers
};

// Reverse pass for an arbitrary upstream gradient on the logits.
Gradients backward(const Model& model, const Tensor& x, const Tensor& logit_grad,
                   bool with_params = true);

// Gradient of cross_entropy(forward(m, x), label) with respect to x.
Tensor input_gradient(const Model& model, const Image& x, std::size_t label);

struct Sample {
  Image image;  // pre-processed under the model's spec
  std::size_t label = 0;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 10;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
};

double mean_loss(const Model& model, std::span<const Sample> samples);
double accuracy(const Model& model, std::span<const Sample> samples);

// Mini-batch SGD on cross-entropy. Deterministic for a given seed. Returned
// parameters are rounded to float precision.
Model train(Model model, std::span<const Sample> samples, const TrainConfig& cfg);

// Binary model file ("PXM1"), see model_io.cc for the layout.
std::vector<std::uint8_t> encode_model(const Model& model);
Model decode_model(std::span<const std::uint8_t> bytes);
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace pixlab
