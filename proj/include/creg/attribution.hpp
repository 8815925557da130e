#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "creg/manifest.hpp"
#include "creg/relevance.hpp"
#include "creg/tensor.hpp"

namespace creg {

enum class TargetMode { GtTargeted, PredTargeted };

std::string_view to_string(TargetMode m) noexcept;

struct ContrastPair {
  DirectionClass tgt;
  DirectionClass neg;
  bool tie = false;  // an exact logit tie was broken toward the lower class index
};

/// Contrastive target tau = z_tgt - z_neg. Ground-truth mode targets the label
/// and contrasts with the prediction (or the runner-up when the prediction is
/// right). Prediction mode targets the argmax and contrasts with the runner-up.
ContrastPair resolve_contrast(const Logits& logits, TargetMode mode, DirectionClass gt);

/// |sum_d g_{j,d} h_{j,d}| per token, before normalization.
std::vector<double> gradxact_raw(const TensorBlob& hidden, const TensorBlob& grad);

/// gradxact_raw followed by per-layer min-max normalization.
TokenScores gradxact_layer(const TensorBlob& hidden, const TensorBlob& grad);

struct LayerWeights {
  std::vector<int> layers;
  std::vector<double> weights;
};

struct AggregatedScores {
  TokenScores scores;
  LayerWeights weights;
};

/// Softmax over each layer's peak relevance, then a weighted sum of layers.
AggregatedScores aggregate_layers(std::span<const TokenScores> fields, std::span<const int> layer_ids = {});

struct CregOptions {
  std::vector<int> layers = {-2, -3, -4, -5};
  bool contrastive = true;  // false: differentiate plain z_gt (ablation)
};

/// Multi-layer contrastive Grad x Act relevance for one sample.
RelevanceField creg_relevance(const SampleRecord& sample, TargetMode mode, const CregOptions& options = {},
                              LayerWeights* weights_out = nullptr);

RelevanceField baseline_random(std::size_t grid_h, std::size_t grid_w, std::uint64_t seed);

TokenScores baseline_gradnorm(const TensorBlob& grad);

/// Integrated gradients from a zero baseline: the path increment is h / S, so
/// attribution is |sum_d h_{j,d} * mean_s g_{s,j,d}|.
std::vector<double> ig_raw(const TensorBlob& hidden, const TensorBlob& step_grads);
TokenScores baseline_ig(const TensorBlob& hidden, const TensorBlob& step_grads);

/// Last-token row of the rollout R = A_L ... A_1 restricted to vision columns,
/// where A_l = rownorm(0.5 * mean_heads + 0.5 * I). Computed as a chain of
/// vector-matrix products.
std::vector<double> rollout_raw(const TensorBlob& attention, std::uint64_t vision_begin, std::uint64_t vision_end,
                                std::uint64_t last_token);
TokenScores baseline_rollout(const TensorBlob& attention, std::uint64_t vision_begin, std::uint64_t vision_end,
                             std::uint64_t last_token);

/// Corner-aligned bilinear resampling of a rows x cols map.
std::vector<double> bilinear_resize(std::span<const double> src, std::size_t src_h, std::size_t src_w,
                                    std::size_t dst_h, std::size_t dst_w);

/// ReLU(sum_c mean(grad_c) * act_c) upsampled to the token grid, divided by its max.
TokenScores baseline_gradcam(const TensorBlob& act, const TensorBlob& grad, std::size_t grid_h, std::size_t grid_w);

/// Grad x Act at one layer using the plain ground-truth gradient.
RelevanceField baseline_single_layer(const SampleRecord& sample, int layer = -2);

/// 1 where the cell center lies in the target box, else 0; falls back to the
/// single cell nearest the box center.
RelevanceField baseline_geometry_oracle(const SampleRecord& sample);

}  // namespace creg
