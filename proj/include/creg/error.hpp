#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace creg {

enum class ErrorCode {
  Io,
  BadMagic,
  UnsupportedVersion,
  UnsupportedDtype,
  Truncated,
  TrailingData,
  NonFinite,
  ShapeMismatch,
  MalformedManifest,
  DuplicateSampleId,
  DanglingRef,
  BadLogits,
  GridMismatch,
  InvalidBox,
  MissingTarget,
  MalformedAttention,
  CoincidentCenters,
  OutOfImage,
  EmptyInput,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace creg
