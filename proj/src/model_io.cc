// PXM1 model file, all integers little-endian:
//
//   "PXM1"
//   u16 version (1)
//   u16 spec-name length, UTF-8 spec name
//   u8 input rank, rank x u32 input dims
//   u16 layer count
//   per layer: u8 type code, then
//     conv2d: u32 in_channels, u32 out_channels, u32 kernel, f32 weights, f32 bias
//     dense:  u32 in_features, u32 out_features, f32 weights, f32 bias
//     relu / maxpool2 / flatten: nothing

#include <fstream>
#include <iterator>
#include <limits>

#include "bytes.h"
#include "pixlab/error.h"
#include "pixlab/nn.h"

namespace pixlab {

namespace {

constexpr std::string_view kModelMagic = "PXM1";
constexpr std::uint16_t kModelVersion = 1;

void put_tensor(detail::ByteWriter& w, const Tensor& t) {
  for (double v : t.values()) w.put_f32(v);
}

Tensor get_tensor(detail::ByteReader& r, Shape shape, const char* what) {
  std::size_t n = 1;
  for (auto d : shape) {
    if (d != 0 && n > std::numeric_limits<std::size_t>::max() / 4 / d) {
      throw ParseError(std::string("implausible size for ") + what, r.offset());
    }
    n *= d;
  }
  r.need(n * 4, what);
  std::vector<double> data(n);
  for (auto& v : data) v = r.get_f32(what);
  return Tensor(std::move(shape), std::move(data));
}

std::uint32_t checked_u32(std::size_t v) {
  if (v > std::numeric_limits<std::uint32_t>::max()) throw ValidationError("dimension too large for model file");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

namespace detail {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace detail

std::vector<std::uint8_t> encode_model(const Model& model) {
  validate(model);
  if (model.preprocess.size() > 0xFFFF || model.layers.size() > 0xFFFF || model.input_shape.size() > 0xFF) {
    throw ValidationError("model too large for PXM1");
  }
  detail::ByteWriter w;
  w.put_bytes(kModelMagic);
  w.put_u16(kModelVersion);
  w.put_u16(static_cast<std::uint16_t>(model.preprocess.size()));
  w.put_bytes(model.preprocess);
  w.put_u8(static_cast<std::uint8_t>(model.input_shape.size()));
  for (auto d : model.input_shape) w.put_u32(checked_u32(d));
  w.put_u16(static_cast<std::uint16_t>(model.layers.size()));
  for (const auto& layer : model.layers) {
    w.put_u8(static_cast<std::uint8_t>(layer_type(layer)));
    if (const auto* c = std::get_if<Conv2d>(&layer)) {
      w.put_u32(checked_u32(c->in_channels));
      w.put_u32(checked_u32(c->out_channels));
      w.put_u32(checked_u32(c->kernel));
      put_tensor(w, c->weight);
      put_tensor(w, c->bias);
    } else if (const auto* d = std::get_if<Dense>(&layer)) {
      w.put_u32(checked_u32(d->in_features));
      w.put_u32(checked_u32(d->out_features));
      put_tensor(w, d->weight);
      put_tensor(w, d->bias);
    }
  }
  return w.take();
}

Model decode_model(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  const std::string magic = r.get_bytes(kModelMagic.size(), "magic");
  if (magic != kModelMagic) {
    throw ParseError("bad magic '" + magic + "', expected 'PXM1'", 0);
  }
  const std::size_t version_at = r.offset();
  if (const auto version = r.get_u16("version"); version != kModelVersion) {
    throw ParseError("unsupported model version " + std::to_string(version), version_at);
  }

  Model model;
  model.preprocess = r.get_bytes(r.get_u16("spec-name length"), "spec name");
  const auto rank = r.get_u8("input rank");
  for (int i = 0; i < rank; ++i) model.input_shape.push_back(r.get_u32("input dims"));

  const auto layer_count = r.get_u16("layer count");
  for (int i = 0; i < layer_count; ++i) {
    const std::size_t type_at = r.offset();
    switch (static_cast<LayerType>(r.get_u8("layer type"))) {
      case LayerType::kConv2d: {
        Conv2d c;
        c.in_channels = r.get_u32("conv2d in_channels");
        c.out_channels = r.get_u32("conv2d out_channels");
        c.kernel = r.get_u32("conv2d kernel");
        c.weight = get_tensor(r, {c.out_channels, c.kernel, c.kernel, c.in_channels}, "conv2d weights");
        c.bias = get_tensor(r, {c.out_channels}, "conv2d bias");
        model.layers.emplace_back(std::move(c));
        break;
      }
      case LayerType::kDense: {
        Dense d;
        d.in_features = r.get_u32("dense in_features");
        d.out_features = r.get_u32("dense out_features");
        d.weight = get_tensor(r, {d.out_features, d.in_features}, "dense weights");
        d.bias = get_tensor(r, {d.out_features}, "dense bias");
        model.layers.emplace_back(std::move(d));
        break;
      }
      case LayerType::kRelu: model.layers.emplace_back(Relu{}); break;
      case LayerType::kMaxPool2: model.layers.emplace_back(MaxPool2{}); break;
      case LayerType::kFlatten: model.layers.emplace_back(Flatten{}); break;
      default:
        throw ParseError("unknown layer type code " + std::to_string(bytes[type_at]), type_at);
    }
  }
  if (!r.done()) throw ParseError("trailing bytes after last layer", r.offset());

  Shape s = model.input_shape;
  try {
    for (const auto& layer : model.layers) s = layer_output_shape(layer, s);
    if (s.size() != 1) throw ShapeError("final output is not rank 1");
    model.classes = s[0];
    validate(model);
  } catch (const Error& e) {
    throw ParseError(std::string("invalid model: ") + e.what(), bytes.size());
  }
  return model;
}

void save_model(const Model& model, const std::string& path) {
  detail::write_file(path, encode_model(model));
}

Model load_model(const std::string& path) { return decode_model(detail::read_file(path)); }

}  // namespace pixlab
