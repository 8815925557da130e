#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "creg/geometry.hpp"
#include "creg/tensor.hpp"

namespace creg {

/// Which scalar the extractor differentiated to produce a gradient stack.
/// Gt and Pred are the contrastive targets; Plain is the bare ground-truth logit.
enum class GradTarget { Gt, Pred, Plain };

std::string_view to_string(GradTarget t) noexcept;
std::optional<GradTarget> parse_grad_target(std::string_view s) noexcept;

/// A tensor either resident in memory or referenced on disk (path relative to
/// the manifest directory). On-disk blobs are header-validated at manifest load
/// and read in full on first use.
class BlobRef {
 public:
  BlobRef() = default;
  BlobRef(std::filesystem::path relative, BlobHeader header, std::filesystem::path base_dir);
  BlobRef(std::filesystem::path relative, std::shared_ptr<const TensorBlob> data);

  const std::filesystem::path& relative_path() const noexcept { return relative_; }
  std::filesystem::path resolved_path() const { return base_dir_ / relative_; }
  const BlobHeader& header() const noexcept { return header_; }
  const std::vector<std::uint64_t>& shape() const noexcept { return header_.shape; }
  bool resident() const noexcept { return data_ != nullptr; }

  std::shared_ptr<const TensorBlob> load() const;

 private:
  std::filesystem::path relative_;
  std::filesystem::path base_dir_;
  BlobHeader header_;
  std::shared_ptr<const TensorBlob> data_;
};

using LayerBlobs = std::map<int, BlobRef>;

struct AttentionRef {
  BlobRef blob;  // layers x heads x T x T, row-stochastic per head
  std::uint64_t vision_begin = 0;
  std::uint64_t vision_end = 0;  // exclusive
  std::uint64_t last_token = 0;
};

struct GradCamRef {
  BlobRef act;   // C x H' x W'
  BlobRef grad;  // C x H' x W'
};

struct OcclusionLogits {
  Logits base{};
  Logits true_occluded{};
  Logits opposite_occluded{};
};

struct ContrastRecord {
  DirectionClass tgt;
  DirectionClass neg;
};

struct SampleRecord {
  std::string sample_id;
  double image_w = 0.0;
  double image_h = 0.0;
  BBox ref_box;
  BBox tgt_box;
  DirectionClass gt_class = DirectionClass::Left;
  Logits logits{};
  std::optional<std::size_t> grid_h;
  std::optional<std::size_t> grid_w;

  LayerBlobs hidden;                          // layer -> |V| x d
  std::map<GradTarget, LayerBlobs> grads;     // target -> layer -> |V| x d
  std::map<GradTarget, ContrastRecord> contrast;  // pair the extractor differentiated
  std::optional<AttentionRef> attention;
  std::optional<BlobRef> ig_steps;            // S x |V| x d
  std::optional<GradCamRef> gradcam;
  std::optional<OcclusionLogits> occlusion;

  DirectionClass predicted_class() const;
  bool correct() const { return predicted_class() == gt_class; }
  bool has_grid() const { return grid_h.has_value() && grid_w.has_value(); }
  std::size_t token_count() const { return grid_h.value_or(0) * grid_w.value_or(0); }
};

struct Provenance {
  std::string model;
  std::vector<int> layers;
  std::vector<std::string> target_modes;
};

struct Manifest {
  std::string dataset;
  Provenance provenance;
  std::vector<SampleRecord> samples;
  std::filesystem::path base_dir;
};

/// Everything the loader adjusted or inferred. Nothing is changed silently.
struct LoadReport {
  std::vector<std::string> notices;
  bool empty() const { return notices.empty(); }
};

Manifest load_manifest(const std::filesystem::path& path, LoadReport* report = nullptr);

/// Checks every SampleRecord invariant; throws the first violation.
void validate_sample(const SampleRecord& s);

/// Writes resident blobs under `dir` at their relative paths, then the manifest JSON.
void save_manifest(const Manifest& manifest, const std::filesystem::path& manifest_path);

/// Factor pair (rows, cols) of `tokens` whose cols/rows is closest to
/// image_w/image_h in log ratio; ties go to the wider grid.
std::pair<std::size_t, std::size_t> infer_grid(std::size_t tokens, double image_w, double image_h);

}  // namespace creg
