#include "creg/io.hpp"

#include <fstream>
#include <cstring>
#include <iterator>

#include "creg/error.hpp"

namespace creg {

namespace fs = std::filesystem;

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return "io";
    case ErrorCode::BadMagic: return "bad-magic";
    case ErrorCode::UnsupportedVersion: return "unsupported-version";
    case ErrorCode::UnsupportedDtype: return "unsupported-dtype";
    case ErrorCode::Truncated: return "truncated";
    case ErrorCode::TrailingData: return "trailing-data";
    case ErrorCode::NonFinite: return "non-finite";
    case ErrorCode::ShapeMismatch: return "shape-mismatch";
    case ErrorCode::MalformedManifest: return "malformed-manifest";
    case ErrorCode::DuplicateSampleId: return "duplicate-sample-id";
    case ErrorCode::DanglingRef: return "dangling-ref";
    case ErrorCode::BadLogits: return "bad-logits";
    case ErrorCode::GridMismatch: return "grid-mismatch";
    case ErrorCode::InvalidBox: return "invalid-box";
    case ErrorCode::MissingTarget: return "missing-target";
    case ErrorCode::MalformedAttention: return "malformed-attention";
    case ErrorCode::CoincidentCenters: return "coincident-centers";
    case ErrorCode::OutOfImage: return "out-of-image";
    case ErrorCode::EmptyInput: return "empty-input";
    case ErrorCode::InvalidArgument: return "invalid-argument";
  }
  return "unknown";
}

void write_file_atomic(const fs::path& path, std::span<const std::byte> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::Io, "rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

void write_text_atomic(const fs::path& path, std::string_view text) {
  write_file_atomic(path, std::as_bytes(std::span(text.data(), text.size())));
}

std::vector<std::byte> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace creg
