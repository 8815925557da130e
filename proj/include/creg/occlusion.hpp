#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "creg/manifest.hpp"
#include "creg/metrics.hpp"
#include "creg/polar.hpp"
#include "creg/tensor.hpp"

namespace creg {

struct OcclusionConfig {
  PolarConfig polar;
  bool bounded = true;  // wedge radius r_max; false extends it to the image border
  std::array<int, 3> fill_rgb = {128, 128, 128};
};

/// Pixels of one compass sector around the reference center. Pixel (row, col)
/// is tested at its center (col + 0.5, row + 0.5) with the same angle and
/// half-open sector rule used for binning.
struct SectorMask {
  int sector = 0;
  std::size_t image_w = 0;
  std::size_t image_h = 0;
  Point center;
  double start_deg = 0.0;  // inclusive
  double end_deg = 0.0;    // exclusive
  double radius = 0.0;     // infinity when unbounded
  std::vector<std::uint8_t> pixels;  // row-major, 1 = occlude
  std::size_t count = 0;
  bool empty = false;

  /// F32 tensor of shape [image_h, image_w] holding 0/1.
  TensorBlob to_blob() const;
};

SectorMask build_sector_mask(std::size_t image_w, std::size_t image_h, Point ref_center, double d_ab, int sector,
                             const OcclusionConfig& cfg);

SectorMask build_sector_mask(const SampleRecord& sample, int sector, const OcclusionConfig& cfg);

enum class PlanStatus { Ok, EmptyTrueMask, EmptyOppositeMask };

std::string_view to_string(PlanStatus s) noexcept;

struct OcclusionPlan {
  std::string sample_id;
  double true_angle = 0.0;
  int true_sector = 0;
  int opposite_sector = 0;
  std::filesystem::path true_mask;
  std::filesystem::path opposite_mask;
  PlanStatus status = PlanStatus::Ok;
};

struct PlannedOcclusion {
  OcclusionPlan plan;
  SectorMask true_mask;
  SectorMask opposite_mask;
};

/// True sector holds the A -> B direction; the opposite sector is K/2 away.
PlannedOcclusion build_plan(const SampleRecord& sample, const OcclusionConfig& cfg);

/// COS from the three re-inference logit vectors, scored on the ground-truth class.
CosTriple evaluate_cos(const OcclusionPlan& plan, const Logits& base, const Logits& true_occluded,
                       const Logits& opposite_occluded, DirectionClass gt);

}  // namespace creg
