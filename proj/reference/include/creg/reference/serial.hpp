#pragma once

// Straightforward single-threaded versions of the data-parallel kernels.
// They share no code with the optimized path and serve as test oracles and
// benchmark baselines.

#include <cstdint>
#include <span>
#include <vector>

#include "creg/geometry.hpp"
#include "creg/metrics.hpp"
#include "creg/polar.hpp"
#include "creg/relevance.hpp"
#include "creg/tensor.hpp"

namespace creg::serial {

std::vector<double> gradxact(const TensorBlob& hidden, const TensorBlob& grad);

/// Per-cell double loop: pixel center, atan2 angle, explicit interval test
/// against every sector, Gaussian weight, row-major sum, normalize. A cell at
/// the reference center has no direction and is skipped.
struct NaiveCompass {
  std::vector<double> probs;
  int peak = 0;
  bool degenerate = false;
};

NaiveCompass compass(std::span<const double> field, std::size_t grid_h, std::size_t grid_w, double image_w,
                     double image_h, Point ref_center, double d_ab, const PolarConfig& cfg);

/// Full chained product R = A_L ... A_1 of residual-mixed, head-averaged
/// matrices; returns row `last_token` restricted to the vision columns.
std::vector<double> rollout(const TensorBlob& attention, std::uint64_t vision_begin, std::uint64_t vision_end,
                            std::uint64_t last_token);

/// Same resampling streams as the parallel bootstrap, evaluated in order.
ConfidenceInterval bootstrap(std::span<const double> values, const BootstrapOptions& options);

}  // namespace creg::serial
