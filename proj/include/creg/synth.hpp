#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "creg/manifest.hpp"
#include "creg/metrics.hpp"
#include "creg/polar.hpp"
#include "creg/relevance.hpp"

namespace creg::synth {

enum class FieldFamily { PointMass, GaussianBlobAtB, Diffuse, OppositeBlob, UniformRandom };

std::string_view to_string(FieldFamily f) noexcept;
std::optional<FieldFamily> parse_family(std::string_view s) noexcept;

struct SynthSpec {
  std::string sample_id = "synth-0";
  double image_w = 640.0;
  double image_h = 640.0;
  std::size_t grid_h = 32;
  std::size_t grid_w = 32;

  DirectionClass direction = DirectionClass::Right;
  /// Minimum ratio of the dominant to the minor displacement component.
  double displacement_ratio = 1.5;
  /// Place B exactly on the canonical axis through A.
  bool cardinal = false;
  /// Predicted class; defaults to the ground truth (a correct sample).
  std::optional<DirectionClass> predicted;

  FieldFamily family = FieldFamily::GaussianBlobAtB;        // contrastive gradients
  FieldFamily plain_family = FieldFamily::GaussianBlobAtB;  // plain z_gt gradients
  double noise = 0.0;            // additive U[0, noise) on relevance targets
  double blob_spread = 0.15;     // fraction of the image diagonal

  std::size_t hidden_dim = 4;
  std::vector<int> layers = {-2, -3, -4, -5};
  std::vector<int> signal_layers;  // empty: every layer carries signal
  bool with_attention = false;
  bool with_ig = false;
  std::size_t ig_steps = 4;
  bool with_gradcam = false;

  std::uint64_t seed = 0;

  void validate() const;
};

/// Boxes, logits and grid for one synthetic scene; no tensors attached.
SampleRecord generate_scene(const SynthSpec& spec);

/// Target relevance on the sample's grid for a family. `toward` overrides the
/// blob direction (used for prediction-targeted gradients).
std::vector<double> family_field(const SampleRecord& scene, FieldFamily family, const SynthSpec& spec,
                                 std::uint64_t seed, std::optional<DirectionClass> toward = std::nullopt);

/// Attaches hidden states and gradients whose Grad x Act reproduces the
/// requested fields: per token h = g = sqrt(target) in one channel. Channel 0
/// carries the contrastive target, 1 the plain target, 2 the prediction target.
void generate_layer_stack(SampleRecord& scene, const SynthSpec& spec);

/// Scene plus layer stack and any optional baseline tensors.
SampleRecord generate_sample(const SynthSpec& spec);

/// n samples cycling through the four classes (balanced when n % 4 == 0).
/// Sample i uses seed derive_seed(master_seed, i).
std::vector<SampleRecord> generate_batch(std::size_t n, const SynthSpec& base, std::uint64_t master_seed,
                                         bool with_tensors = true);

Manifest make_manifest(std::vector<SampleRecord> samples, const SynthSpec& base, std::string dataset = "synthetic");

struct ValidationRow {
  std::string name;
  std::size_t n = 0;
  double mean_dae = 0.0;
  double ea_rate = 0.0;
  ConfidenceInterval dae_ci;
  ConfidenceInterval ea_ci;
  double max_dae = 0.0;
  std::size_t degenerate = 0;
  std::string expectation;
  bool pass = false;
};

struct ValidationReport {
  std::vector<ValidationRow> rows;
  bool all_pass() const;
};

struct ValidationOptions {
  PolarConfig polar;
  BootstrapOptions bootstrap;
  std::size_t family_samples = 200;
};

/// Random baseline, geometry oracle and every field family through the full
/// pipeline, each checked against its analytic expectation.
ValidationReport run_validation_suite(std::size_t n, std::uint64_t seed, const ValidationOptions& options = {});

}  // namespace creg::synth
