#include "creg/relevance.hpp"

#include <algorithm>
#include <array>

namespace creg {

namespace {
constexpr std::array<std::pair<RelevanceSource, std::string_view>, 8> kSourceNames = {{
    {RelevanceSource::Creg, "creg"},
    {RelevanceSource::GradCam, "gradcam"},
    {RelevanceSource::GradNorm, "gradnorm"},
    {RelevanceSource::Ig, "ig"},
    {RelevanceSource::Rollout, "rollout"},
    {RelevanceSource::SingleLayer, "single_layer"},
    {RelevanceSource::Random, "random"},
    {RelevanceSource::Oracle, "oracle"},
}};
}  // namespace

std::string_view to_string(RelevanceSource s) noexcept {
  for (auto [src, name] : kSourceNames) {
    if (src == s) return name;
  }
  return "?";
}

std::optional<RelevanceSource> parse_source(std::string_view s) noexcept {
  for (auto [src, name] : kSourceNames) {
    if (name == s) return src;
  }
  return std::nullopt;
}

TokenScores minmax_normalize(std::vector<double> raw) {
  TokenScores out;
  if (raw.empty()) {
    out.degenerate = true;
    return out;
  }
  const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
  const double lo = *lo_it;
  const double span = *hi_it - lo;
  if (!(span > 0.0)) {
    std::fill(raw.begin(), raw.end(), 0.0);
    out.degenerate = true;
  } else {
    for (auto& v : raw) v = (v - lo) / span;
  }
  out.values = std::move(raw);
  return out;
}

TokenScores max_normalize(std::vector<double> raw) {
  TokenScores out;
  const double hi = raw.empty() ? 0.0 : *std::max_element(raw.begin(), raw.end());
  if (!(hi > 0.0)) {
    std::fill(raw.begin(), raw.end(), 0.0);
    out.degenerate = true;
  } else {
    for (auto& v : raw) v = std::max(0.0, v) / hi;
  }
  out.values = std::move(raw);
  return out;
}

RelevanceField mirror_field(const RelevanceField& field) {
  RelevanceField out = field;
  for (std::size_t r = 0; r < field.grid_h; ++r) {
    for (std::size_t c = 0; c < field.grid_w; ++c) {
      out.values[r * field.grid_w + c] = field.values[r * field.grid_w + (field.grid_w - 1 - c)];
    }
  }
  return out;
}

}  // namespace creg
