#include "creg/pipeline.hpp"

#include "creg/error.hpp"
#include "creg/rng.hpp"

namespace creg {

namespace {

void need_layers(const LayerBlobs& blobs, const std::vector<int>& layers, const std::string& what,
                 std::vector<std::string>& missing) {
  for (int l : layers) {
    if (!blobs.contains(l)) missing.push_back(what + "[" + std::to_string(l) + "]");
  }
}

const LayerBlobs kNoLayers;

const LayerBlobs& grads_for(const SampleRecord& s, GradTarget t) {
  auto it = s.grads.find(t);
  return it == s.grads.end() ? kNoLayers : it->second;
}

}  // namespace

std::vector<std::string> missing_inputs(const SampleRecord& s, const MethodOptions& o) {
  std::vector<std::string> missing;
  switch (o.method) {
    case RelevanceSource::Creg: {
      need_layers(s.hidden, o.creg.layers, "hidden", missing);
      if (!o.creg.contrastive) {
        need_layers(grads_for(s, GradTarget::Plain), o.creg.layers, "grad.plain", missing);
        break;
      }
      const auto want = resolve_contrast(s.logits, o.mode, s.gt_class);
      const auto other = resolve_contrast(
          s.logits, o.mode == TargetMode::GtTargeted ? TargetMode::PredTargeted : TargetMode::GtTargeted, s.gt_class);
      const GradTarget own = o.mode == TargetMode::GtTargeted ? GradTarget::Gt : GradTarget::Pred;
      const GradTarget alt = own == GradTarget::Gt ? GradTarget::Pred : GradTarget::Gt;
      const bool shared = want.tgt == other.tgt && want.neg == other.neg;
      std::vector<std::string> own_missing;
      need_layers(grads_for(s, own), o.creg.layers, "grad." + std::string(to_string(own)), own_missing);
      if (!own_missing.empty() && shared) {
        std::vector<std::string> alt_missing;
        need_layers(grads_for(s, alt), o.creg.layers, "grad." + std::string(to_string(alt)), alt_missing);
        if (alt_missing.empty()) own_missing.clear();
      }
      missing.insert(missing.end(), own_missing.begin(), own_missing.end());
      break;
    }
    case RelevanceSource::SingleLayer:
      need_layers(s.hidden, {o.baseline_layer}, "hidden", missing);
      need_layers(grads_for(s, GradTarget::Plain), {o.baseline_layer}, "grad.plain", missing);
      break;
    case RelevanceSource::GradNorm:
      need_layers(grads_for(s, GradTarget::Plain), {o.baseline_layer}, "grad.plain", missing);
      break;
    case RelevanceSource::Ig:
      need_layers(s.hidden, {o.baseline_layer}, "hidden", missing);
      if (!s.ig_steps) missing.push_back("ig_steps");
      break;
    case RelevanceSource::Rollout:
      if (!s.attention) missing.push_back("attention");
      break;
    case RelevanceSource::GradCam:
      if (!s.gradcam) missing.push_back("gradcam");
      break;
    case RelevanceSource::Random:
    case RelevanceSource::Oracle:
      break;
  }
  if (!s.has_grid()) missing.push_back("grid_h/grid_w");
  return missing;
}

namespace {

RelevanceField place(TokenScores scores, const SampleRecord& s, RelevanceSource source) {
  if (!s.has_grid()) throw Error(ErrorCode::GridMismatch, "sample '" + s.sample_id + "' has no token grid");
  if (scores.values.size() != s.token_count()) {
    throw Error(ErrorCode::GridMismatch, "sample '" + s.sample_id + "': relevance has " +
                                             std::to_string(scores.values.size()) + " tokens, grid has " +
                                             std::to_string(s.token_count()));
  }
  RelevanceField f;
  f.values = std::move(scores.values);
  f.grid_h = *s.grid_h;
  f.grid_w = *s.grid_w;
  f.source = source;
  f.degenerate = scores.degenerate;
  return f;
}

const BlobRef& layer_ref(const LayerBlobs& blobs, int layer, const SampleRecord& s, const std::string& what) {
  auto it = blobs.find(layer);
  if (it == blobs.end()) {
    throw Error(ErrorCode::MissingTarget, "sample '" + s.sample_id + "': no " + what + " for layer " + std::to_string(layer));
  }
  return it->second;
}

}  // namespace

RelevanceField compute_relevance(const SampleRecord& s, const MethodOptions& o) {
  switch (o.method) {
    case RelevanceSource::Creg:
      return creg_relevance(s, o.mode, o.creg);
    case RelevanceSource::SingleLayer:
      return baseline_single_layer(s, o.baseline_layer);
    case RelevanceSource::GradNorm: {
      const auto g = layer_ref(grads_for(s, GradTarget::Plain), o.baseline_layer, s, "plain gradient").load();
      return place(baseline_gradnorm(*g), s, RelevanceSource::GradNorm);
    }
    case RelevanceSource::Ig: {
      if (!s.ig_steps) throw Error(ErrorCode::MissingTarget, "sample '" + s.sample_id + "': no IG step gradients");
      const auto h = layer_ref(s.hidden, o.baseline_layer, s, "hidden state").load();
      return place(baseline_ig(*h, *s.ig_steps->load()), s, RelevanceSource::Ig);
    }
    case RelevanceSource::Rollout: {
      if (!s.attention) throw Error(ErrorCode::MissingTarget, "sample '" + s.sample_id + "': no attention stack");
      const auto& a = *s.attention;
      return place(baseline_rollout(*a.blob.load(), a.vision_begin, a.vision_end, a.last_token), s,
                   RelevanceSource::Rollout);
    }
    case RelevanceSource::GradCam: {
      if (!s.gradcam) throw Error(ErrorCode::MissingTarget, "sample '" + s.sample_id + "': no GradCAM maps");
      if (!s.has_grid()) throw Error(ErrorCode::GridMismatch, "sample '" + s.sample_id + "' has no token grid");
      return place(baseline_gradcam(*s.gradcam->act.load(), *s.gradcam->grad.load(), *s.grid_h, *s.grid_w), s,
                   RelevanceSource::GradCam);
    }
    case RelevanceSource::Random: {
      if (!s.has_grid()) throw Error(ErrorCode::GridMismatch, "sample '" + s.sample_id + "' has no token grid");
      return baseline_random(*s.grid_h, *s.grid_w, derive_seed(o.seed, hash_string(s.sample_id)));
    }
    case RelevanceSource::Oracle:
      return baseline_geometry_oracle(s);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown method");
}

SampleResult score_field(const SampleRecord& s, const RelevanceField& field, const PolarConfig& polar) {
  SampleResult r;
  const Point a = s.ref_box.center();
  r.true_angle = true_direction(s.ref_box, s.tgt_box);
  r.d_ab = distance(a, s.tgt_box.center());
  const GridGeometry geom = build_grid_geometry(field.grid_h, field.grid_w, s.image_w, s.image_h, a);
  r.compass = compass_bin(field, geom, r.d_ab, polar);
  r.field_degenerate = field.degenerate;
  r.metrics = score_sample(s.sample_id, r.compass, r.true_angle, s.gt_class, s.predicted_class());
  return r;
}

SampleResult run_sample(const SampleRecord& s, const MethodOptions& o, const PolarConfig& polar) {
  return score_field(s, compute_relevance(s, o), polar);
}

}  // namespace creg
