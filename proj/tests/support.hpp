#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "creg/error.hpp"
#include "creg/rng.hpp"
#include "creg/tensor.hpp"

namespace testing {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("creg-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

inline std::vector<double> uniform_values(creg::Rng& rng, std::size_t n, double lo = 0.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * creg::uniform01(rng);
  return v;
}

/// Error code thrown by f, or nullopt when it returns normally.
template <class F>
std::optional<creg::ErrorCode> error_of(F&& f) {
  try {
    f();
  } catch (const creg::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

/// Minimal XML well-formedness: single root, every tag closed in order.
bool well_formed_xml(const std::string& text);

}  // namespace testing
