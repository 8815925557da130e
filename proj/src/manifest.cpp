#include "creg/manifest.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "creg/error.hpp"
#include "creg/io.hpp"

namespace creg {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(GradTarget t) noexcept {
  switch (t) {
    case GradTarget::Gt: return "gt";
    case GradTarget::Pred: return "pred";
    case GradTarget::Plain: return "plain";
  }
  return "?";
}

std::optional<GradTarget> parse_grad_target(std::string_view s) noexcept {
  for (auto t : {GradTarget::Gt, GradTarget::Pred, GradTarget::Plain}) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

BlobRef::BlobRef(fs::path relative, BlobHeader header, fs::path base_dir)
    : relative_(std::move(relative)), base_dir_(std::move(base_dir)), header_(std::move(header)) {}

BlobRef::BlobRef(fs::path relative, std::shared_ptr<const TensorBlob> data)
    : relative_(std::move(relative)), data_(std::move(data)) {
  header_.dtype = data_->dtype();
  header_.shape = data_->shape();
}

std::shared_ptr<const TensorBlob> BlobRef::load() const {
  if (data_) return data_;
  return std::make_shared<const TensorBlob>(read_blob(resolved_path()));
}

DirectionClass SampleRecord::predicted_class() const {
  int best = 0;
  for (int i = 1; i < 4; ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return class_from_index(best);
}

std::pair<std::size_t, std::size_t> infer_grid(std::size_t tokens, double image_w, double image_h) {
  if (tokens == 0) throw Error(ErrorCode::GridMismatch, "cannot infer a grid for zero tokens");
  if (!(image_w > 0.0) || !(image_h > 0.0)) throw Error(ErrorCode::InvalidArgument, "image dims must be positive");
  const double target = std::log(image_w / image_h);
  std::pair<std::size_t, std::size_t> best{0, 0};
  double best_err = 0.0;
  for (std::size_t rows = 1; rows <= tokens; ++rows) {
    if (tokens % rows != 0) continue;
    const std::size_t cols = tokens / rows;
    const double err = std::abs(std::log(static_cast<double>(cols) / static_cast<double>(rows)) - target);
    // Iterating rows upward visits wider grids first, so strict < keeps the wider one on ties.
    if (best.first == 0 || err < best_err) {
      best = {rows, cols};
      best_err = err;
    }
  }
  return best;
}

namespace {

[[noreturn]] void malformed(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::MalformedManifest, where + ": " + what);
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) malformed(where, std::string("missing field '") + key + "'");
  return *it;
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) malformed(where, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw Error(ErrorCode::NonFinite, where);
  return d;
}

BBox parse_box(const json& v, const std::string& where) {
  if (!v.is_object()) malformed(where, "box must be an object {x, y, w, h}");
  return {number(require(v, "x", where), where + ".x"), number(require(v, "y", where), where + ".y"),
          number(require(v, "w", where), where + ".w"), number(require(v, "h", where), where + ".h")};
}

Logits parse_logits(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 4) {
    throw Error(ErrorCode::BadLogits, where + ": expected exactly 4 logits, got " +
                                          (v.is_array() ? std::to_string(v.size()) : std::string("non-array")));
  }
  Logits out{};
  for (std::size_t i = 0; i < 4; ++i) out[i] = number(v[i], where);
  return out;
}

DirectionClass parse_class(const json& v, const std::string& where) {
  if (!v.is_string()) malformed(where, "expected a direction name");
  auto c = parse_direction(v.get<std::string>());
  if (!c) malformed(where, "unknown direction '" + v.get<std::string>() + "'");
  return *c;
}

BlobRef parse_blob(const json& v, const fs::path& base, const std::string& where) {
  if (!v.is_string()) malformed(where, "blob reference must be a path string");
  fs::path rel = v.get<std::string>();
  fs::path full = base / rel;
  if (!fs::exists(full)) throw Error(ErrorCode::DanglingRef, where + ": " + full.string() + " does not exist");
  return BlobRef(rel, read_blob_header(full), base);
}

LayerBlobs parse_layers(const json& v, const fs::path& base, const std::string& where) {
  if (!v.is_object()) malformed(where, "expected an object keyed by layer index");
  LayerBlobs out;
  for (auto it = v.begin(); it != v.end(); ++it) {
    int layer = 0;
    try {
      std::size_t used = 0;
      layer = std::stoi(it.key(), &used);
      if (used != it.key().size()) throw std::invalid_argument(it.key());
    } catch (const std::exception&) {
      malformed(where, "layer key '" + it.key() + "' is not an integer");
    }
    out.emplace(layer, parse_blob(it.value(), base, where + "[" + it.key() + "]"));
  }
  return out;
}

std::uint64_t parse_index(const json& v, const std::string& where) {
  if (!v.is_number_unsigned()) malformed(where, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

SampleRecord parse_sample(const json& j, const fs::path& base, LoadReport* report) {
  SampleRecord s;
  if (!j.is_object()) malformed("samples", "each sample must be an object");
  const auto& id = require(j, "sample_id", "sample");
  if (!id.is_string()) malformed("sample", "sample_id must be a string");
  s.sample_id = id.get<std::string>();
  const std::string where = "sample '" + s.sample_id + "'";

  s.image_w = number(require(j, "image_w", where), where + ".image_w");
  s.image_h = number(require(j, "image_h", where), where + ".image_h");
  if (!(s.image_w > 0.0) || !(s.image_h > 0.0)) malformed(where, "image dims must be positive");

  for (auto [key, box] : {std::pair{"ref_box", &s.ref_box}, std::pair{"tgt_box", &s.tgt_box}}) {
    BBox raw = parse_box(require(j, key, where), where + "." + key);
    ClampResult c;
    try {
      c = clamp_box(raw, s.image_w, s.image_h);
    } catch (const Error& e) {
      throw Error(e.code(), where + "." + key + ": " + e.detail());
    }
    if (c.clamped && report) {
      std::ostringstream msg;
      msg << where << ": " << key << " clamped to image bounds (" << c.box.x << ", " << c.box.y << ", " << c.box.w
          << ", " << c.box.h << ")";
      report->notices.push_back(msg.str());
    }
    *box = c.box;
  }

  s.gt_class = parse_class(require(j, "gt_class", where), where + ".gt_class");
  s.logits = parse_logits(require(j, "logits", where), where + ".logits");

  const bool has_gh = j.contains("grid_h");
  const bool has_gw = j.contains("grid_w");
  if (has_gh != has_gw) malformed(where, "grid_h and grid_w must be given together");
  if (has_gh) {
    s.grid_h = parse_index(j["grid_h"], where + ".grid_h");
    s.grid_w = parse_index(j["grid_w"], where + ".grid_w");
    if (*s.grid_h == 0 || *s.grid_w == 0) malformed(where, "grid dims must be positive");
  }

  if (j.contains("hidden")) s.hidden = parse_layers(j["hidden"], base, where + ".hidden");
  if (j.contains("grad")) {
    const auto& g = j["grad"];
    if (!g.is_object()) malformed(where, "grad must be an object keyed by target");
    for (auto it = g.begin(); it != g.end(); ++it) {
      auto t = parse_grad_target(it.key());
      if (!t) malformed(where, "unknown gradient target '" + it.key() + "'");
      s.grads[*t] = parse_layers(it.value(), base, where + ".grad." + it.key());
    }
  }
  if (j.contains("contrast")) {
    const auto& c = j["contrast"];
    if (!c.is_object()) malformed(where, "contrast must be an object");
    for (auto it = c.begin(); it != c.end(); ++it) {
      auto t = parse_grad_target(it.key());
      if (!t || *t == GradTarget::Plain) malformed(where, "contrast key must be gt or pred");
      if (!it.value().is_array() || it.value().size() != 2) malformed(where, "contrast pair must be [tgt, neg]");
      s.contrast[*t] = {parse_class(it.value()[0], where), parse_class(it.value()[1], where)};
    }
  }
  if (j.contains("attention")) {
    const auto& a = j["attention"];
    const std::string w = where + ".attention";
    AttentionRef ref;
    ref.blob = parse_blob(require(a, "blob", w), base, w + ".blob");
    ref.vision_begin = parse_index(require(a, "vision_begin", w), w + ".vision_begin");
    ref.vision_end = parse_index(require(a, "vision_end", w), w + ".vision_end");
    ref.last_token = parse_index(require(a, "last_token", w), w + ".last_token");
    s.attention = std::move(ref);
  }
  if (j.contains("ig_steps")) s.ig_steps = parse_blob(j["ig_steps"], base, where + ".ig_steps");
  if (j.contains("gradcam")) {
    const auto& g = j["gradcam"];
    const std::string w = where + ".gradcam";
    s.gradcam = GradCamRef{parse_blob(require(g, "act", w), base, w + ".act"),
                           parse_blob(require(g, "grad", w), base, w + ".grad")};
  }
  if (j.contains("occlusion")) {
    const auto& o = j["occlusion"];
    const std::string w = where + ".occlusion";
    s.occlusion = OcclusionLogits{parse_logits(require(o, "logits_base", w), w),
                                  parse_logits(require(o, "logits_true_occ", w), w),
                                  parse_logits(require(o, "logits_opp_occ", w), w)};
  }

  if (!s.has_grid()) {
    std::optional<std::size_t> tokens;
    if (!s.hidden.empty()) tokens = s.hidden.begin()->second.shape().at(0);
    else if (!s.grads.empty() && !s.grads.begin()->second.empty()) tokens = s.grads.begin()->second.begin()->second.shape().at(0);
    else if (s.attention) tokens = s.attention->vision_end - s.attention->vision_begin;
    if (tokens) {
      auto [gh, gw] = infer_grid(*tokens, s.image_w, s.image_h);
      s.grid_h = gh;
      s.grid_w = gw;
      if (report) {
        report->notices.push_back(where + ": grid inferred as " + std::to_string(gh) + "x" + std::to_string(gw) +
                                  " from " + std::to_string(*tokens) + " vision tokens");
      }
    }
  }
  return s;
}

std::string layer_shape_string(const std::vector<std::uint64_t>& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) out += (i ? "x" : "") + std::to_string(shape[i]);
  return out + "]";
}

void check_token_matrix(const BlobRef& b, std::size_t tokens, const std::string& where) {
  if (b.shape().size() != 2) {
    throw Error(ErrorCode::ShapeMismatch, where + ": expected a 2-D |V| x d tensor, got " + layer_shape_string(b.shape()));
  }
  if (tokens != 0 && b.shape()[0] != tokens) {
    throw Error(ErrorCode::GridMismatch, where + ": grid has " + std::to_string(tokens) + " cells but tensor has " +
                                             std::to_string(b.shape()[0]) + " vision tokens");
  }
}

json box_json(const BBox& b) { return {{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}}; }

json layers_json(const LayerBlobs& layers) {
  json out = json::object();
  for (const auto& [layer, ref] : layers) out[std::to_string(layer)] = ref.relative_path().generic_string();
  return out;
}

}  // namespace

void validate_sample(const SampleRecord& s) {
  const std::string where = "sample '" + s.sample_id + "'";
  const std::size_t tokens = s.has_grid() ? s.token_count() : 0;

  for (const auto& [layer, ref] : s.hidden) {
    check_token_matrix(ref, tokens, where + " hidden[" + std::to_string(layer) + "]");
  }
  for (const auto& [target, layers] : s.grads) {
    for (const auto& [layer, ref] : layers) {
      const std::string w = where + " grad." + std::string(to_string(target)) + "[" + std::to_string(layer) + "]";
      check_token_matrix(ref, tokens, w);
      auto h = s.hidden.find(layer);
      if (h != s.hidden.end() && h->second.shape() != ref.shape()) {
        throw Error(ErrorCode::ShapeMismatch, w + ": shape " + layer_shape_string(ref.shape()) +
                                                  " differs from hidden state " + layer_shape_string(h->second.shape()));
      }
    }
  }
  for (const auto& [target, pair] : s.contrast) {
    if (pair.tgt == pair.neg) {
      throw Error(ErrorCode::InvalidArgument, where + ": contrast pair for " + std::string(to_string(target)) +
                                                  " has tgt == neg");
    }
  }
  if (s.attention) {
    const auto& sh = s.attention->blob.shape();
    const std::string w = where + " attention";
    if (sh.size() != 4 || sh[2] != sh[3]) {
      throw Error(ErrorCode::MalformedAttention, w + ": expected layers x heads x T x T, got " + layer_shape_string(sh));
    }
    const auto T = sh[2];
    const auto& a = *s.attention;
    if (a.vision_begin >= a.vision_end || a.vision_end > T || a.last_token >= T) {
      throw Error(ErrorCode::MalformedAttention, w + ": token indices out of range for T=" + std::to_string(T));
    }
    if (tokens != 0 && a.vision_end - a.vision_begin != tokens) {
      throw Error(ErrorCode::GridMismatch, w + ": vision range spans " + std::to_string(a.vision_end - a.vision_begin) +
                                               " tokens but grid has " + std::to_string(tokens));
    }
  }
  if (s.ig_steps) {
    const auto& sh = s.ig_steps->shape();
    const std::string w = where + " ig_steps";
    if (sh.size() != 3 || sh[0] == 0) {
      throw Error(ErrorCode::ShapeMismatch, w + ": expected S x |V| x d with S >= 1, got " + layer_shape_string(sh));
    }
    if (tokens != 0 && sh[1] != tokens) {
      throw Error(ErrorCode::GridMismatch, w + ": " + std::to_string(sh[1]) + " vision tokens but grid has " +
                                               std::to_string(tokens));
    }
  }
  if (s.gradcam) {
    const auto& a = s.gradcam->act.shape();
    if (a.size() != 3 || a != s.gradcam->grad.shape()) {
      throw Error(ErrorCode::ShapeMismatch, where + " gradcam: act and grad must share a C x H' x W' shape");
    }
  }
}

Manifest load_manifest(const fs::path& path, LoadReport* report) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedManifest, path.string() + ": " + e.what());
  }
  if (!doc.is_object()) malformed(path.string(), "top level must be an object");

  Manifest m;
  m.base_dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  m.dataset = doc.value("dataset", std::string());
  if (doc.contains("class_order")) {
    const auto& order = doc["class_order"];
    if (!order.is_array() || order.size() != 4) malformed("class_order", "must list four classes");
    for (std::size_t i = 0; i < 4; ++i) {
      if (!order[i].is_string() || order[i].get<std::string>() != to_string(class_from_index(static_cast<int>(i)))) {
        malformed("class_order", "must be [left, right, above, below]");
      }
    }
  }
  if (doc.contains("provenance")) {
    const auto& p = doc["provenance"];
    m.provenance.model = p.value("model", std::string());
    if (p.contains("layers")) m.provenance.layers = p["layers"].get<std::vector<int>>();
    if (p.contains("target_modes")) m.provenance.target_modes = p["target_modes"].get<std::vector<std::string>>();
  }
  const auto& samples = require(doc, "samples", path.string());
  if (!samples.is_array()) malformed(path.string(), "samples must be an array");

  std::set<std::string> seen;
  for (const auto& js : samples) {
    SampleRecord s = parse_sample(js, m.base_dir, report);
    if (!seen.insert(s.sample_id).second) {
      throw Error(ErrorCode::DuplicateSampleId, "sample_id '" + s.sample_id + "' appears more than once");
    }
    validate_sample(s);
    m.samples.push_back(std::move(s));
  }
  return m;
}

void save_manifest(const Manifest& manifest, const fs::path& manifest_path) {
  const fs::path dir = manifest_path.has_parent_path() ? manifest_path.parent_path() : fs::path(".");
  auto emit = [&](const BlobRef& ref) {
    const fs::path target = dir / ref.relative_path();
    if (ref.resident()) {
      write_blob(*ref.load(), target);
      return;
    }
    std::error_code ec;
    if (fs::exists(target) && fs::equivalent(target, ref.resolved_path(), ec)) return;
    write_blob(*ref.load(), target);
  };

  json doc;
  doc["format"] = "creg-manifest";
  doc["version"] = 1;
  doc["dataset"] = manifest.dataset;
  doc["class_order"] = {"left", "right", "above", "below"};
  doc["provenance"] = {{"model", manifest.provenance.model},
                       {"layers", manifest.provenance.layers},
                       {"target_modes", manifest.provenance.target_modes}};
  json samples = json::array();
  for (const auto& s : manifest.samples) {
    json j;
    j["sample_id"] = s.sample_id;
    j["image_w"] = s.image_w;
    j["image_h"] = s.image_h;
    j["ref_box"] = box_json(s.ref_box);
    j["tgt_box"] = box_json(s.tgt_box);
    j["gt_class"] = to_string(s.gt_class);
    j["logits"] = s.logits;
    if (s.has_grid()) {
      j["grid_h"] = *s.grid_h;
      j["grid_w"] = *s.grid_w;
    }
    if (!s.hidden.empty()) {
      j["hidden"] = layers_json(s.hidden);
      for (const auto& [_, ref] : s.hidden) emit(ref);
    }
    if (!s.grads.empty()) {
      json g = json::object();
      for (const auto& [target, layers] : s.grads) {
        g[std::string(to_string(target))] = layers_json(layers);
        for (const auto& [_, ref] : layers) emit(ref);
      }
      j["grad"] = g;
    }
    if (!s.contrast.empty()) {
      json c = json::object();
      for (const auto& [target, pair] : s.contrast) {
        c[std::string(to_string(target))] = {to_string(pair.tgt), to_string(pair.neg)};
      }
      j["contrast"] = c;
    }
    if (s.attention) {
      j["attention"] = {{"blob", s.attention->blob.relative_path().generic_string()},
                        {"vision_begin", s.attention->vision_begin},
                        {"vision_end", s.attention->vision_end},
                        {"last_token", s.attention->last_token}};
      emit(s.attention->blob);
    }
    if (s.ig_steps) {
      j["ig_steps"] = s.ig_steps->relative_path().generic_string();
      emit(*s.ig_steps);
    }
    if (s.gradcam) {
      j["gradcam"] = {{"act", s.gradcam->act.relative_path().generic_string()},
                      {"grad", s.gradcam->grad.relative_path().generic_string()}};
      emit(s.gradcam->act);
      emit(s.gradcam->grad);
    }
    if (s.occlusion) {
      j["occlusion"] = {{"logits_base", s.occlusion->base},
                        {"logits_true_occ", s.occlusion->true_occluded},
                        {"logits_opp_occ", s.occlusion->opposite_occluded}};
    }
    samples.push_back(std::move(j));
  }
  doc["samples"] = std::move(samples);
  write_text_atomic(manifest_path, doc.dump(2) + "\n");
}

}  // namespace creg
