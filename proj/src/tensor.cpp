#include "creg/tensor.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include "creg/error.hpp"
#include "creg/io.hpp"

namespace creg {

namespace {

constexpr std::uint64_t kMaxDims = 32;

template <typename T>
T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    auto raw = std::bit_cast<std::array<std::byte, sizeof(T)>>(v);
    std::reverse(raw.begin(), raw.end());
    return std::bit_cast<T>(raw);
  }
}

template <typename T>
void put(std::vector<std::byte>& out, T v) {
  v = byteswap_if_big(v);
  const auto* p = reinterpret_cast<const std::byte*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::byte> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    if (bytes_.size() - pos_ < sizeof(T)) {
      throw Error(ErrorCode::Truncated, std::string("blob ends inside ") + what);
    }
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return byteswap_if_big(v);
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

std::uint64_t checked_product(const std::vector<std::uint64_t>& shape) {
  std::uint64_t n = 1;
  for (auto d : shape) {
    if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / 16 / d) {
      throw Error(ErrorCode::ShapeMismatch, "tensor shape overflows");
    }
    n *= d;
  }
  return n;
}

std::size_t dtype_size(DType d) { return d == DType::F32 ? 4 : 8; }

BlobHeader parse_header(Reader& r) {
  char magic[8];
  for (char& c : magic) c = static_cast<char>(r.get<std::uint8_t>("magic"));
  if (std::string_view(magic, 8) != kBlobMagic) {
    throw Error(ErrorCode::BadMagic, "expected CREGTNSR, got '" + std::string(magic, 8) + "'");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kBlobVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "format version " + std::to_string(version));
  }
  const auto dtype = r.get<std::uint32_t>("dtype");
  if (dtype > 1) throw Error(ErrorCode::UnsupportedDtype, "dtype code " + std::to_string(dtype));
  const auto ndim = r.get<std::uint32_t>("ndim");
  if (ndim > kMaxDims) throw Error(ErrorCode::ShapeMismatch, "ndim " + std::to_string(ndim) + " exceeds limit");
  BlobHeader h;
  h.dtype = static_cast<DType>(dtype);
  h.shape.resize(ndim);
  for (auto& d : h.shape) d = r.get<std::uint64_t>("dims");
  checked_product(h.shape);
  return h;
}

void require_finite(std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw Error(ErrorCode::NonFinite, "value at flat index " + std::to_string(i) + " is not finite");
    }
  }
}

}  // namespace

TensorBlob::TensorBlob(DType dtype, std::vector<std::uint64_t> shape, std::vector<double> values)
    : dtype_(dtype), shape_(std::move(shape)), values_(std::move(values)) {
  if (checked_product(shape_) != values_.size()) {
    throw Error(ErrorCode::ShapeMismatch, "shape product " + std::to_string(checked_product(shape_)) +
                                              " != value count " + std::to_string(values_.size()));
  }
  if (dtype_ == DType::F32) {
    for (auto& v : values_) v = static_cast<double>(static_cast<float>(v));
  }
}

TensorBlob TensorBlob::zeros(DType dtype, std::vector<std::uint64_t> shape) {
  const auto n = checked_product(shape);
  return TensorBlob(dtype, std::move(shape), std::vector<double>(n, 0.0));
}

std::span<const double> TensorBlob::slab(std::uint64_t index) const {
  if (shape_.empty() || index >= shape_[0]) {
    throw Error(ErrorCode::ShapeMismatch, "slab index out of range");
  }
  const std::size_t stride = shape_[0] == 0 ? 0 : values_.size() / shape_[0];
  return std::span<const double>(values_).subspan(index * stride, stride);
}

std::uint64_t BlobHeader::element_count() const { return checked_product(shape); }

std::uint64_t BlobHeader::payload_bytes() const { return element_count() * dtype_size(dtype); }

std::vector<std::byte> encode_blob(const TensorBlob& tensor) {
  require_finite(tensor.values());
  std::vector<std::byte> out;
  out.reserve(8 + 12 + 8 * tensor.ndim() + tensor.size() * dtype_size(tensor.dtype()));
  for (char c : kBlobMagic) out.push_back(static_cast<std::byte>(c));
  put<std::uint32_t>(out, kBlobVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.dtype()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.ndim()));
  for (auto d : tensor.shape()) put<std::uint64_t>(out, d);
  if (tensor.dtype() == DType::F32) {
    for (double v : tensor.values()) put<float>(out, static_cast<float>(v));
  } else {
    for (double v : tensor.values()) put<double>(out, v);
  }
  return out;
}

TensorBlob decode_blob(std::span<const std::byte> bytes) {
  Reader r(bytes);
  BlobHeader h = parse_header(r);
  const auto n = h.element_count();
  const auto need = h.payload_bytes();
  if (r.remaining() < need) {
    throw Error(ErrorCode::Truncated, "payload has " + std::to_string(r.remaining()) + " bytes, shape needs " +
                                          std::to_string(need));
  }
  if (r.remaining() > need) {
    throw Error(ErrorCode::TrailingData, std::to_string(r.remaining() - need) + " bytes after payload");
  }
  std::vector<double> values(n);
  if (h.dtype == DType::F32) {
    for (auto& v : values) v = r.get<float>("payload");
  } else {
    for (auto& v : values) v = r.get<double>("payload");
  }
  require_finite(values);
  return TensorBlob(h.dtype, std::move(h.shape), std::move(values));
}

void write_blob(const TensorBlob& tensor, const std::filesystem::path& path) {
  write_file_atomic(path, encode_blob(tensor));
}

TensorBlob read_blob(const std::filesystem::path& path) {
  try {
    return decode_blob(read_file_bytes(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Io) throw;
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
}

BlobHeader read_blob_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::byte> head(20 + 8 * kMaxDims);
  in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  Reader r(head);
  BlobHeader h;
  try {
    h = parse_header(r);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
  const auto file_size = std::filesystem::file_size(path);
  const auto expected = h.header_bytes() + h.payload_bytes();
  if (file_size < expected) throw Error(ErrorCode::Truncated, path.string() + ": payload shorter than shape");
  if (file_size > expected) throw Error(ErrorCode::TrailingData, path.string() + ": bytes after payload");
  return h;
}

}  // namespace creg
