#include <limits>

#include "bytes.h"
#include "pixlab/error.h"
#include "pixlab/harness.h"

namespace pixlab {

namespace {
constexpr std::string_view kTensorMagic = "PXT1";
constexpr std::uint8_t kDtypeF32 = 1;
}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.rank() > 0xFF) throw ValidationError("tensor rank too large for PXT1");
  detail::ByteWriter w;
  w.put_bytes(kTensorMagic);
  w.put_u8(kDtypeF32);
  w.put_u8(static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw ValidationError("dimension too large for PXT1");
    w.put_u32(static_cast<std::uint32_t>(d));
  }
  for (double v : t.values()) w.put_f32(v);
  return w.take();
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  const std::string magic = r.get_bytes(kTensorMagic.size(), "magic");
  if (magic != kTensorMagic) throw ParseError("bad magic '" + magic + "', expected 'PXT1'", 0);
  const std::size_t dtype_at = r.offset();
  if (const auto dtype = r.get_u8("dtype"); dtype != kDtypeF32) {
    throw ParseError("unsupported dtype " + std::to_string(dtype), dtype_at);
  }
  const auto rank = r.get_u8("rank");
  Shape shape;
  std::size_t n = 1;
  for (int i = 0; i < rank; ++i) {
    const std::size_t d = r.get_u32("dims");
    if (d != 0 && n > std::numeric_limits<std::size_t>::max() / 4 / d) {
      throw ParseError("implausible tensor size", r.offset());
    }
    n *= d;
    shape.push_back(d);
  }
  r.need(n * 4, "payload");
  std::vector<double> data(n);
  for (auto& v : data) v = r.get_f32("payload");
  if (!r.done()) throw ParseError("trailing bytes after payload", r.offset());
  return Tensor(std::move(shape), std::move(data));
}

void write_tensor_file(const Tensor& t, const std::string& path) {
  detail::write_file(path, encode_tensor(t));
}

Tensor read_tensor_file(const std::string& path) {
  const auto bytes = detail::read_file(path);
  try {
    return decode_tensor(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.detail(), e.offset());
  }
}

}  // namespace pixlab
