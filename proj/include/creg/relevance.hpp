#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

namespace creg {

enum class RelevanceSource { Creg, GradCam, GradNorm, Ig, Rollout, SingleLayer, Random, Oracle };

std::string_view to_string(RelevanceSource s) noexcept;
std::optional<RelevanceSource> parse_source(std::string_view s) noexcept;

/// Per-token scores before they are placed on a grid.
struct TokenScores {
  std::vector<double> values;
  bool degenerate = false;  // no spread to normalize; values are all zero
};

/// Non-negative per-vision-token relevance laid out row-major on grid_h x grid_w.
struct RelevanceField {
  std::vector<double> values;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  RelevanceSource source = RelevanceSource::Creg;
  bool degenerate = false;

  double at(std::size_t row, std::size_t col) const { return values[row * grid_w + col]; }
};

/// Min-max rescale into [0, 1]. A constant input (including all zeros) has no
/// direction information and maps to all zeros with the degenerate flag.
TokenScores minmax_normalize(std::vector<double> raw);

/// Divide by the maximum. For rectified maps where zero is a meaningful floor.
TokenScores max_normalize(std::vector<double> raw);

/// Columns reversed: the field of the horizontally mirrored image.
RelevanceField mirror_field(const RelevanceField& field);

}  // namespace creg
