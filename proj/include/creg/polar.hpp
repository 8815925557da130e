#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "creg/geometry.hpp"
#include "creg/relevance.hpp"

namespace creg {

/// How the Gaussian spread relates to the A-B distance.
enum class SigmaRule {
  RadiusScaled,    // sigma = sigma_r * r_max (pixel units; default)
  DistanceScaled,  // sigma = sigma_r * r_max * d_AB (literal product form)
};

std::string_view to_string(SigmaRule r) noexcept;

struct PolarConfig {
  int sectors = 8;
  double sigma_r = 0.6;
  double rho_r = 2.0;
  SigmaRule sigma_rule = SigmaRule::RadiusScaled;

  void validate() const;
  double sector_width() const noexcept { return 360.0 / sectors; }
  double sector_center(int k) const noexcept { return k * sector_width(); }
  /// Sector k covers [center - w/2, center + w/2); a boundary angle belongs to
  /// the counterclockwise neighbour.
  int sector_of(double angle_deg) const noexcept;
  double r_max(double d_ab) const noexcept { return rho_r * d_ab; }
  double sigma(double d_ab) const noexcept;
};

/// Per-cell offsets from the reference center (screen coordinates, y down)
/// and the derived polar coordinates.
struct GridGeometry {
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  double image_w = 0.0;
  double image_h = 0.0;
  Point ref_center;
  std::vector<double> dx;
  std::vector<double> dy;
  std::vector<double> theta_deg;  // [0, 360)
  std::vector<double> rho;
  std::vector<std::uint8_t> zero_radius;

  std::size_t cells() const noexcept { return grid_h * grid_w; }
};

GridGeometry build_grid_geometry(std::size_t grid_h, std::size_t grid_w, double image_w, double image_h,
                                 Point ref_center);

/// Geometry of the horizontally mirrored image; offsets are negated exactly.
GridGeometry mirror_geometry(const GridGeometry& geom);

struct CompassDistribution {
  std::vector<double> probs;
  int peak_index = 0;
  double peak_angle = 0.0;
  bool degenerate = false;  // no mass inside r_max; probs are uniform

  int sectors() const noexcept { return static_cast<int>(probs.size()); }
};

/// Gaussian-weighted sector histogram of a relevance field around the
/// reference center, truncated at r_max and normalized. A cell whose center
/// coincides with the reference center has no direction and adds no mass.
CompassDistribution compass_bin(const RelevanceField& field, const GridGeometry& geom, double d_ab,
                                const PolarConfig& cfg);

/// Geometric A -> B direction in degrees, [0, 360).
double true_direction(const BBox& ref_box, const BBox& tgt_box);

/// Relabels sectors under a horizontal mirror: theta -> 180 - theta. Needs even K.
CompassDistribution flip_compass(const CompassDistribution& dist);

/// Builds a distribution from sector masses (normalizing, picking the peak).
CompassDistribution make_distribution(std::vector<double> masses);

}  // namespace creg
