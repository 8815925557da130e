#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "creg/geometry.hpp"
#include "creg/polar.hpp"

namespace creg {

/// Circular distance between two angles in degrees, in [0, 180].
double dae(double peak_angle, double true_angle) noexcept;

/// Edge accuracy: the peak lies within +-45 degrees (inclusive).
constexpr bool ea(double dae_value) noexcept { return dae_value <= 45.0; }

/// Numerically stable log softmax evaluated at the ground-truth index.
double log_softmax_gt(const Logits& logits, DirectionClass gt);

struct CosTriple {
  double delta_true = 0.0;
  double delta_opp = 0.0;
  double cos = 0.0;
};

/// Delta S_k = log p_k(gt) - log p_0(gt); COS = Delta S_opp - Delta S_true.
CosTriple cos_score(double logp_base, double logp_true_occluded, double logp_opp_occluded) noexcept;

/// Mean of uniform-random-peak DAE against a sector-centered truth.
double expected_random_dae(int sectors);

enum class Statistic { Mean, Rate };

struct BootstrapOptions {
  std::size_t resamples = 10000;
  double level = 0.95;
  std::uint64_t seed = 0;
};

struct ConfidenceInterval {
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  bool degenerate = false;  // single observation: (v, v)
};

/// Percentile bootstrap. Resample b draws from its own stream derived from
/// (seed, b), so the result does not depend on the thread count.
ConfidenceInterval bootstrap_ci(std::span<const double> values, Statistic stat, const BootstrapOptions& options);

struct SampleMetrics {
  std::string sample_id;
  double dae = 0.0;
  bool ea = false;
  DirectionClass predicted = DirectionClass::Left;
  DirectionClass gt = DirectionClass::Left;
  bool correct = false;
  bool degenerate = false;
};

SampleMetrics score_sample(std::string sample_id, const CompassDistribution& compass, double true_angle,
                           DirectionClass gt, DirectionClass predicted);

struct SubReport {
  std::size_t n = 0;
  double mean_dae = 0.0;
  double ea_rate = 0.0;
  ConfidenceInterval dae_ci;
  ConfidenceInterval ea_ci;
};

struct CosEntry {
  std::string sample_id;
  CosTriple triple;
};

struct CosSummary {
  std::size_t n = 0;
  std::size_t skipped = 0;
  double mean_delta_true = 0.0;
  double mean_delta_opp = 0.0;
  double cos = 0.0;
};

struct AggregateOptions {
  BootstrapOptions bootstrap;
  bool exclude_degenerate = false;
};

struct AggregateReport {
  SubReport overall;
  std::array<std::optional<SubReport>, 4> per_class;  // by ground-truth class
  std::optional<SubReport> correct;
  std::optional<SubReport> incorrect;
  std::size_t degenerate_count = 0;
  std::size_t excluded_count = 0;
  std::optional<CosSummary> cos;
};

/// Overall, per-class and correct/incorrect splits. Samples are ordered by id
/// and each group's bootstrap seed is derived from its sorted ids, so the
/// report is invariant to input order.
AggregateReport aggregate(std::span<const SampleMetrics> samples, const AggregateOptions& options = {},
                          std::optional<std::span<const CosEntry>> cos = std::nullopt, std::size_t cos_skipped = 0);

struct Correlation {
  double r = 0.0;
  bool defined = true;  // false when either vector has zero variance
};

Correlation pearson(std::span<const double> a, std::span<const double> b);

/// Pearson r between the original compass and the mirror-relabelled compass
/// of the flipped-image run.
Correlation flip_correlation(const CompassDistribution& original, const CompassDistribution& flipped_run);

}  // namespace creg
