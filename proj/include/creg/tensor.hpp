#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace creg {

enum class DType : std::uint32_t { F32 = 0, F64 = 1 };

inline constexpr std::string_view kBlobMagic = "CREGTNSR";
inline constexpr std::uint32_t kBlobVersion = 1;

/// Dense row-major array. Values are held as double regardless of the on-disk
/// dtype; F32 payloads survive the float -> double -> float trip bit for bit.
class TensorBlob {
 public:
  TensorBlob() = default;
  TensorBlob(DType dtype, std::vector<std::uint64_t> shape, std::vector<double> values);

  static TensorBlob zeros(DType dtype, std::vector<std::uint64_t> shape);

  DType dtype() const noexcept { return dtype_; }
  const std::vector<std::uint64_t>& shape() const noexcept { return shape_; }
  std::size_t ndim() const noexcept { return shape_.size(); }
  std::uint64_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  // Contiguous slice along the leading axis.
  std::span<const double> slab(std::uint64_t index) const;

  friend bool operator==(const TensorBlob&, const TensorBlob&) = default;

 private:
  DType dtype_ = DType::F64;
  std::vector<std::uint64_t> shape_;
  std::vector<double> values_;
};

struct BlobHeader {
  DType dtype = DType::F64;
  std::vector<std::uint64_t> shape;

  std::uint64_t element_count() const;
  std::uint64_t header_bytes() const { return 8 + 4 + 4 + 4 + 8 * shape.size(); }
  std::uint64_t payload_bytes() const;
};

std::vector<std::byte> encode_blob(const TensorBlob& tensor);
TensorBlob decode_blob(std::span<const std::byte> bytes);

/// Writes through a temporary sibling file and renames it into place.
void write_blob(const TensorBlob& tensor, const std::filesystem::path& path);
TensorBlob read_blob(const std::filesystem::path& path);

/// Validates magic, version, dtype, and that the file size matches the
/// declared shape, without reading the payload.
BlobHeader read_blob_header(const std::filesystem::path& path);

}  // namespace creg
