#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "creg/attribution.hpp"
#include "creg/manifest.hpp"
#include "creg/metrics.hpp"
#include "creg/polar.hpp"

namespace creg {

struct MethodOptions {
  RelevanceSource method = RelevanceSource::Creg;
  TargetMode mode = TargetMode::PredTargeted;
  CregOptions creg;
  int baseline_layer = -2;
  std::uint64_t seed = 0;
};

/// Blob references `method` would need that the sample lacks; empty when runnable.
std::vector<std::string> missing_inputs(const SampleRecord& sample, const MethodOptions& options);

RelevanceField compute_relevance(const SampleRecord& sample, const MethodOptions& options);

struct SampleResult {
  CompassDistribution compass;
  double true_angle = 0.0;
  double d_ab = 0.0;
  bool field_degenerate = false;
  SampleMetrics metrics;
};

/// Relevance -> polar projection -> compass -> DAE/EA for one sample.
SampleResult run_sample(const SampleRecord& sample, const MethodOptions& options, const PolarConfig& polar);

/// Projection and scoring of an already computed field.
SampleResult score_field(const SampleRecord& sample, const RelevanceField& field, const PolarConfig& polar);

}  // namespace creg
