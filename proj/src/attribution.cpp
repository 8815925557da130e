#include "creg/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "creg/error.hpp"
#include "creg/rng.hpp"

namespace creg {

std::string_view to_string(TargetMode m) noexcept {
  return m == TargetMode::GtTargeted ? "gt" : "pred";
}

namespace {

struct Pick {
  int index = -1;
  bool tie = false;
};

// Highest logit excluding `skip`; lowest index wins ties.
Pick argmax_excluding(const Logits& z, int skip) {
  Pick p;
  for (int c = 0; c < 4; ++c) {
    if (c == skip) continue;
    if (p.index < 0 || z[c] > z[p.index]) {
      p.index = c;
      p.tie = false;
    } else if (z[c] == z[p.index]) {
      p.tie = true;
    }
  }
  return p;
}

void require_matrix(const TensorBlob& t, const char* what) {
  if (t.ndim() != 2) throw Error(ErrorCode::ShapeMismatch, std::string(what) + " must be a 2-D |V| x d tensor");
}

}  // namespace

ContrastPair resolve_contrast(const Logits& logits, TargetMode mode, DirectionClass gt) {
  for (double z : logits) {
    if (!std::isfinite(z)) throw Error(ErrorCode::NonFinite, "logits must be finite");
  }
  const Pick top = argmax_excluding(logits, -1);
  const int g = index_of(gt);
  ContrastPair out{gt, gt, false};
  if (mode == TargetMode::GtTargeted) {
    out.tgt = gt;
    if (top.index != g) {
      out.neg = class_from_index(top.index);
      out.tie = top.tie;
    } else {
      const Pick second = argmax_excluding(logits, g);
      out.neg = class_from_index(second.index);
      out.tie = top.tie || second.tie;
    }
  } else {
    const Pick second = argmax_excluding(logits, top.index);
    out.tgt = class_from_index(top.index);
    out.neg = class_from_index(second.index);
    out.tie = top.tie || second.tie;
  }
  return out;
}

std::vector<double> gradxact_raw(const TensorBlob& hidden, const TensorBlob& grad) {
  require_matrix(hidden, "hidden state");
  require_matrix(grad, "gradient");
  if (hidden.shape() != grad.shape()) throw Error(ErrorCode::ShapeMismatch, "hidden and gradient shapes differ");
  const auto tokens = static_cast<std::int64_t>(hidden.dim(0));
  const auto dims = static_cast<std::size_t>(hidden.dim(1));
  const double* h = hidden.values().data();
  const double* g = grad.values().data();
  std::vector<double> out(static_cast<std::size_t>(tokens));
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < tokens; ++j) {
    const std::size_t row = static_cast<std::size_t>(j) * dims;
    double acc = 0.0;
    for (std::size_t d = 0; d < dims; ++d) acc += g[row + d] * h[row + d];
    out[static_cast<std::size_t>(j)] = std::abs(acc);
  }
  return out;
}

TokenScores gradxact_layer(const TensorBlob& hidden, const TensorBlob& grad) {
  return minmax_normalize(gradxact_raw(hidden, grad));
}

AggregatedScores aggregate_layers(std::span<const TokenScores> fields, std::span<const int> layer_ids) {
  if (fields.empty()) throw Error(ErrorCode::InvalidArgument, "aggregate_layers needs at least one layer");
  if (!layer_ids.empty() && layer_ids.size() != fields.size()) {
    throw Error(ErrorCode::InvalidArgument, "layer id count does not match field count");
  }
  const std::size_t n = fields.front().values.size();
  for (const auto& f : fields) {
    if (f.values.size() != n) throw Error(ErrorCode::ShapeMismatch, "layers have different token counts");
  }

  std::vector<double> peaks(fields.size());
  for (std::size_t l = 0; l < fields.size(); ++l) {
    const auto& v = fields[l].values;
    peaks[l] = v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
  }
  const double top = *std::max_element(peaks.begin(), peaks.end());
  AggregatedScores out;
  out.weights.weights.resize(fields.size());
  double z = 0.0;
  for (std::size_t l = 0; l < fields.size(); ++l) {
    out.weights.weights[l] = std::exp(peaks[l] - top);
    z += out.weights.weights[l];
  }
  for (auto& w : out.weights.weights) w /= z;
  out.weights.layers.assign(layer_ids.begin(), layer_ids.end());

  out.scores.values.assign(n, 0.0);
  bool all_degenerate = true;
  for (std::size_t l = 0; l < fields.size(); ++l) {
    const double w = out.weights.weights[l];
    const auto& v = fields[l].values;
    for (std::size_t j = 0; j < n; ++j) out.scores.values[j] += w * v[j];
    all_degenerate = all_degenerate && fields[l].degenerate;
  }
  out.scores.degenerate = all_degenerate;
  return out;
}

namespace {

const BlobRef& layer_blob(const LayerBlobs& blobs, int layer, const std::string& what, const SampleRecord& s) {
  auto it = blobs.find(layer);
  if (it == blobs.end()) {
    throw Error(ErrorCode::MissingTarget,
                "sample '" + s.sample_id + "': no " + what + " blob for layer " + std::to_string(layer));
  }
  return it->second;
}

std::size_t require_grid(const SampleRecord& s) {
  if (!s.has_grid()) throw Error(ErrorCode::GridMismatch, "sample '" + s.sample_id + "' has no token grid");
  return s.token_count();
}

RelevanceField to_field(TokenScores scores, const SampleRecord& s, RelevanceSource source) {
  const std::size_t n = require_grid(s);
  if (scores.values.size() != n) {
    throw Error(ErrorCode::GridMismatch, "sample '" + s.sample_id + "': " + std::to_string(scores.values.size()) +
                                             " scores for a grid of " + std::to_string(n));
  }
  RelevanceField f;
  f.values = std::move(scores.values);
  f.grid_h = *s.grid_h;
  f.grid_w = *s.grid_w;
  f.source = source;
  f.degenerate = scores.degenerate;
  return f;
}

// Gradient stack for the contrast pair a mode resolves to. When both modes
// resolve to the same pair they share one stack, preferring the gt stack.
const LayerBlobs& contrastive_grads(const SampleRecord& s, TargetMode mode) {
  const GradTarget own = mode == TargetMode::GtTargeted ? GradTarget::Gt : GradTarget::Pred;
  const ContrastPair want = resolve_contrast(s.logits, mode, s.gt_class);

  auto matches = [&](GradTarget t) {
    auto rec = s.contrast.find(t);
    return rec == s.contrast.end() || (rec->second.tgt == want.tgt && rec->second.neg == want.neg);
  };

  const ContrastPair other = resolve_contrast(
      s.logits, mode == TargetMode::GtTargeted ? TargetMode::PredTargeted : TargetMode::GtTargeted, s.gt_class);
  const bool modes_agree = other.tgt == want.tgt && other.neg == want.neg;

  std::vector<GradTarget> candidates;
  if (modes_agree) candidates = {GradTarget::Gt, GradTarget::Pred};
  else candidates = {own};

  for (GradTarget t : candidates) {
    auto it = s.grads.find(t);
    if (it == s.grads.end() || it->second.empty()) continue;
    if (!matches(t)) {
      const auto& rec = s.contrast.at(t);
      throw Error(ErrorCode::MissingTarget, "sample '" + s.sample_id + "': " + std::string(to_string(t)) +
                                                " gradients were taken for " + std::string(to_string(rec.tgt)) + "-" +
                                                std::string(to_string(rec.neg)) + " but the contrast resolves to " +
                                                std::string(to_string(want.tgt)) + "-" +
                                                std::string(to_string(want.neg)));
    }
    return it->second;
  }
  throw Error(ErrorCode::MissingTarget, "sample '" + s.sample_id + "': no contrastive gradients for " +
                                            std::string(to_string(mode)) + "-targeted mode");
}

}  // namespace

RelevanceField creg_relevance(const SampleRecord& sample, TargetMode mode, const CregOptions& options,
                              LayerWeights* weights_out) {
  if (options.layers.empty()) throw Error(ErrorCode::InvalidArgument, "creg needs at least one layer");
  const LayerBlobs* grads = nullptr;
  if (options.contrastive) {
    grads = &contrastive_grads(sample, mode);
  } else {
    auto it = sample.grads.find(GradTarget::Plain);
    if (it == sample.grads.end()) {
      throw Error(ErrorCode::MissingTarget, "sample '" + sample.sample_id + "': no plain gradients");
    }
    grads = &it->second;
  }

  std::vector<TokenScores> layers;
  layers.reserve(options.layers.size());
  for (int layer : options.layers) {
    const auto grad = layer_blob(*grads, layer, "gradient", sample).load();
    const auto hidden = layer_blob(sample.hidden, layer, "hidden-state", sample).load();
    layers.push_back(gradxact_layer(*hidden, *grad));
  }
  AggregatedScores agg = aggregate_layers(layers, options.layers);
  if (weights_out) *weights_out = agg.weights;
  return to_field(std::move(agg.scores), sample, RelevanceSource::Creg);
}

RelevanceField baseline_random(std::size_t grid_h, std::size_t grid_w, std::uint64_t seed) {
  Rng rng(seed);
  RelevanceField f;
  f.grid_h = grid_h;
  f.grid_w = grid_w;
  f.source = RelevanceSource::Random;
  f.values.resize(grid_h * grid_w);
  for (auto& v : f.values) v = uniform01(rng);
  return f;
}

TokenScores baseline_gradnorm(const TensorBlob& grad) {
  require_matrix(grad, "gradient");
  const auto tokens = grad.dim(0);
  const auto dims = grad.dim(1);
  std::vector<double> raw(tokens);
  for (std::uint64_t j = 0; j < tokens; ++j) {
    double acc = 0.0;
    for (std::uint64_t d = 0; d < dims; ++d) {
      const double g = grad[j * dims + d];
      acc += g * g;
    }
    raw[j] = std::sqrt(acc);
  }
  return minmax_normalize(std::move(raw));
}

std::vector<double> ig_raw(const TensorBlob& hidden, const TensorBlob& step_grads) {
  require_matrix(hidden, "hidden state");
  if (step_grads.ndim() != 3 || step_grads.dim(0) == 0) {
    throw Error(ErrorCode::ShapeMismatch, "IG step gradients must be S x |V| x d with S >= 1");
  }
  if (step_grads.dim(1) != hidden.dim(0) || step_grads.dim(2) != hidden.dim(1)) {
    throw Error(ErrorCode::ShapeMismatch, "IG step gradients do not match the hidden-state shape");
  }
  const auto steps = step_grads.dim(0);
  const auto tokens = hidden.dim(0);
  const auto dims = hidden.dim(1);
  const auto plane = tokens * dims;
  std::vector<double> out(tokens);
  for (std::uint64_t j = 0; j < tokens; ++j) {
    double acc = 0.0;
    for (std::uint64_t d = 0; d < dims; ++d) {
      double g = 0.0;
      for (std::uint64_t s = 0; s < steps; ++s) g += step_grads[s * plane + j * dims + d];
      acc += hidden[j * dims + d] * (g / static_cast<double>(steps));
    }
    out[j] = std::abs(acc);
  }
  return out;
}

TokenScores baseline_ig(const TensorBlob& hidden, const TensorBlob& step_grads) {
  return minmax_normalize(ig_raw(hidden, step_grads));
}

std::vector<double> rollout_raw(const TensorBlob& attention, std::uint64_t vision_begin, std::uint64_t vision_end,
                                std::uint64_t last_token) {
  if (attention.ndim() != 4 || attention.dim(2) != attention.dim(3) || attention.dim(0) == 0 ||
      attention.dim(1) == 0) {
    throw Error(ErrorCode::MalformedAttention, "attention must be layers x heads x T x T");
  }
  const auto L = attention.dim(0);
  const auto H = attention.dim(1);
  const auto T = static_cast<std::int64_t>(attention.dim(2));
  if (vision_begin >= vision_end || vision_end > static_cast<std::uint64_t>(T) ||
      last_token >= static_cast<std::uint64_t>(T)) {
    throw Error(ErrorCode::MalformedAttention, "token indices out of range");
  }
  const std::size_t tt = static_cast<std::size_t>(T) * static_cast<std::size_t>(T);
  const double* a = attention.values().data();

  std::vector<double> mixed(tt);
  std::vector<double> v(static_cast<std::size_t>(T), 0.0);
  std::vector<double> next(static_cast<std::size_t>(T));
  v[last_token] = 1.0;

  for (std::uint64_t layer = L; layer-- > 0;) {
    const double* base = a + layer * H * tt;
    bool malformed = false;
#pragma omp parallel for schedule(static) reduction(|| : malformed)
    for (std::int64_t i = 0; i < T; ++i) {
      double* row = mixed.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(T);
      double head_sum = 0.0;
      for (std::int64_t j = 0; j < T; ++j) {
        double m = 0.0;
        for (std::uint64_t h = 0; h < H; ++h) m += base[h * tt + static_cast<std::size_t>(i * T + j)];
        m /= static_cast<double>(H);
        head_sum += m;
        row[j] = 0.5 * m + (i == j ? 0.5 : 0.0);
      }
      if (std::abs(head_sum - 1.0) > 1e-4) malformed = true;
      const double norm = 0.5 * head_sum + 0.5;
      for (std::int64_t j = 0; j < T; ++j) row[j] /= norm;
    }
    if (malformed) {
      throw Error(ErrorCode::MalformedAttention,
                  "layer " + std::to_string(layer) + " has a head-averaged row not summing to 1 within 1e-4");
    }
#pragma omp parallel for schedule(static)
    for (std::int64_t j = 0; j < T; ++j) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < T; ++i) acc += v[static_cast<std::size_t>(i)] * mixed[static_cast<std::size_t>(i * T + j)];
      next[static_cast<std::size_t>(j)] = acc;
    }
    v.swap(next);
  }
  return {v.begin() + static_cast<std::ptrdiff_t>(vision_begin), v.begin() + static_cast<std::ptrdiff_t>(vision_end)};
}

TokenScores baseline_rollout(const TensorBlob& attention, std::uint64_t vision_begin, std::uint64_t vision_end,
                             std::uint64_t last_token) {
  return minmax_normalize(rollout_raw(attention, vision_begin, vision_end, last_token));
}

std::vector<double> bilinear_resize(std::span<const double> src, std::size_t src_h, std::size_t src_w,
                                    std::size_t dst_h, std::size_t dst_w) {
  if (src.size() != src_h * src_w || src_h == 0 || src_w == 0 || dst_h == 0 || dst_w == 0) {
    throw Error(ErrorCode::ShapeMismatch, "bilinear_resize: bad dimensions");
  }
  // Corner-aligned: destination corners sample source corners exactly.
  auto coord = [](std::size_t i, std::size_t src_n, std::size_t dst_n) {
    if (dst_n == 1) return 0.5 * static_cast<double>(src_n - 1);
    return static_cast<double>(i) * static_cast<double>(src_n - 1) / static_cast<double>(dst_n - 1);
  };
  std::vector<double> out(dst_h * dst_w);
  for (std::size_t r = 0; r < dst_h; ++r) {
    const double y = coord(r, src_h, dst_h);
    const auto y0 = std::min(static_cast<std::size_t>(y), src_h - 1);
    const auto y1 = std::min(y0 + 1, src_h - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t c = 0; c < dst_w; ++c) {
      const double x = coord(c, src_w, dst_w);
      const auto x0 = std::min(static_cast<std::size_t>(x), src_w - 1);
      const auto x1 = std::min(x0 + 1, src_w - 1);
      const double fx = x - static_cast<double>(x0);
      const double top = src[y0 * src_w + x0] * (1.0 - fx) + src[y0 * src_w + x1] * fx;
      const double bottom = src[y1 * src_w + x0] * (1.0 - fx) + src[y1 * src_w + x1] * fx;
      out[r * dst_w + c] = top * (1.0 - fy) + bottom * fy;
    }
  }
  return out;
}

TokenScores baseline_gradcam(const TensorBlob& act, const TensorBlob& grad, std::size_t grid_h, std::size_t grid_w) {
  if (act.ndim() != 3 || act.shape() != grad.shape()) {
    throw Error(ErrorCode::ShapeMismatch, "GradCAM act and grad must share a C x H' x W' shape");
  }
  const auto C = act.dim(0);
  const auto hw = act.dim(1) * act.dim(2);
  if (hw == 0 || C == 0) throw Error(ErrorCode::ShapeMismatch, "GradCAM map is empty");
  std::vector<double> map(hw, 0.0);
  for (std::uint64_t c = 0; c < C; ++c) {
    double alpha = 0.0;
    for (std::uint64_t p = 0; p < hw; ++p) alpha += grad[c * hw + p];
    alpha /= static_cast<double>(hw);
    for (std::uint64_t p = 0; p < hw; ++p) map[p] += alpha * act[c * hw + p];
  }
  for (auto& m : map) m = std::max(0.0, m);
  return max_normalize(bilinear_resize(map, act.dim(1), act.dim(2), grid_h, grid_w));
}

RelevanceField baseline_single_layer(const SampleRecord& sample, int layer) {
  auto it = sample.grads.find(GradTarget::Plain);
  if (it == sample.grads.end()) {
    throw Error(ErrorCode::MissingTarget, "sample '" + sample.sample_id + "': no plain gradients");
  }
  const auto grad = layer_blob(it->second, layer, "plain gradient", sample).load();
  const auto hidden = layer_blob(sample.hidden, layer, "hidden-state", sample).load();
  return to_field(gradxact_layer(*hidden, *grad), sample, RelevanceSource::SingleLayer);
}

RelevanceField baseline_geometry_oracle(const SampleRecord& sample) {
  require_grid(sample);
  const std::size_t gh = *sample.grid_h;
  const std::size_t gw = *sample.grid_w;
  RelevanceField f;
  f.grid_h = gh;
  f.grid_w = gw;
  f.source = RelevanceSource::Oracle;
  f.values.assign(gh * gw, 0.0);
  bool any = false;
  std::size_t nearest = 0;
  double nearest_d = std::numeric_limits<double>::infinity();
  const Point target = sample.tgt_box.center();
  for (std::size_t r = 0; r < gh; ++r) {
    for (std::size_t c = 0; c < gw; ++c) {
      const Point p = cell_center(r, c, gh, gw, sample.image_w, sample.image_h);
      if (sample.tgt_box.contains(p)) {
        f.values[r * gw + c] = 1.0;
        any = true;
      }
      const double d = distance(p, target);
      if (d < nearest_d) {
        nearest_d = d;
        nearest = r * gw + c;
      }
    }
  }
  if (!any) f.values[nearest] = 1.0;
  return f;
}

}  // namespace creg
