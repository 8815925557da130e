#include "creg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "creg/attribution.hpp"
#include "creg/error.hpp"
#include "creg/pipeline.hpp"
#include "creg/rng.hpp"

namespace creg::synth {

namespace {

constexpr std::array<std::pair<FieldFamily, std::string_view>, 5> kFamilies = {{
    {FieldFamily::PointMass, "point_mass"},
    {FieldFamily::GaussianBlobAtB, "gaussian_blob"},
    {FieldFamily::Diffuse, "diffuse"},
    {FieldFamily::OppositeBlob, "opposite_blob"},
    {FieldFamily::UniformRandom, "uniform_random"},
}};

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

Point unit_toward(double angle_deg) {
  const double rad = angle_deg * std::numbers::pi / 180.0;
  return {std::cos(rad), -std::sin(rad)};
}

using BlobPtr = std::shared_ptr<const TensorBlob>;

BlobPtr make_blob(std::vector<std::uint64_t> shape, std::vector<double> values) {
  return std::make_shared<const TensorBlob>(DType::F32, std::move(shape), std::move(values));
}

std::string blob_path(const SampleRecord& s, const std::string& name) { return "blobs/" + s.sample_id + "/" + name + ".bin"; }

}  // namespace

std::string_view to_string(FieldFamily f) noexcept {
  for (auto [fam, name] : kFamilies) {
    if (fam == f) return name;
  }
  return "?";
}

std::optional<FieldFamily> parse_family(std::string_view s) noexcept {
  for (auto [fam, name] : kFamilies) {
    if (name == s) return fam;
  }
  return std::nullopt;
}

void SynthSpec::validate() const {
  if (!(image_w >= 16.0) || !(image_h >= 16.0)) throw Error(ErrorCode::InvalidArgument, "synthetic image too small");
  if (grid_h == 0 || grid_w == 0) throw Error(ErrorCode::InvalidArgument, "grid dims must be positive");
  if (!(displacement_ratio >= 1.0)) throw Error(ErrorCode::InvalidArgument, "displacement ratio must be >= 1");
  if (hidden_dim < 3) throw Error(ErrorCode::InvalidArgument, "hidden_dim must be >= 3");
  if (layers.empty()) throw Error(ErrorCode::InvalidArgument, "at least one layer is required");
  if (!(noise >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise must be non-negative");
  if (ig_steps == 0) throw Error(ErrorCode::InvalidArgument, "ig_steps must be >= 1");
}

SampleRecord generate_scene(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const double min_dim = std::min(spec.image_w, spec.image_h);

  SampleRecord s;
  s.sample_id = spec.sample_id;
  s.image_w = spec.image_w;
  s.image_h = spec.image_h;
  s.grid_h = spec.grid_h;
  s.grid_w = spec.grid_w;
  s.gt_class = spec.direction;

  // Integer centers and even integer sizes keep box centers exact, so cardinal
  // placements have exactly axis-aligned true directions.
  const Point a{std::round(0.5 * spec.image_w + uniform(rng, -0.05, 0.05) * min_dim),
                std::round(0.5 * spec.image_h + uniform(rng, -0.05, 0.05) * min_dim)};
  const double ref_side = 2.0 * std::round(0.5 * uniform(rng, 0.06, 0.10) * min_dim);
  s.ref_box = {a.x - 0.5 * ref_side, a.y - 0.5 * ref_side, ref_side, ref_side};

  const double max_off = std::atan(1.0 / spec.displacement_ratio) * 180.0 / std::numbers::pi;
  Point b;
  double d = 0.0;
  for (int attempt = 0;; ++attempt) {
    d = uniform(rng, 0.12, 0.20) * min_dim;
    const double off = spec.cardinal ? 0.0 : uniform(rng, -0.98, 0.98) * max_off;
    const Point u = unit_toward(canonical_angle(spec.direction) + off);
    b = {std::round(a.x + d * u.x), std::round(a.y + d * u.y)};
    const double ax = std::abs(b.x - a.x);
    const double ay = std::abs(b.y - a.y);
    const bool horizontal = spec.direction == DirectionClass::Left || spec.direction == DirectionClass::Right;
    const double major = horizontal ? ax : ay;
    const double minor = horizontal ? ay : ax;
    const bool sign_ok = (spec.direction == DirectionClass::Right && b.x > a.x) ||
                         (spec.direction == DirectionClass::Left && b.x < a.x) ||
                         (spec.direction == DirectionClass::Above && b.y < a.y) ||
                         (spec.direction == DirectionClass::Below && b.y > a.y);
    if (sign_ok && (minor == 0.0 || major > spec.displacement_ratio * minor)) break;
    if (attempt > 64) throw Error(ErrorCode::InvalidArgument, "cannot place target with the requested ratio");
  }
  d = distance(a, b);
  const double tgt_side = std::max(2.0, 2.0 * std::round(0.5 * uniform(rng, 0.2, 0.35) * d));
  s.tgt_box = {b.x - 0.5 * tgt_side, b.y - 0.5 * tgt_side, tgt_side, tgt_side};

  const DirectionClass pred = spec.predicted.value_or(spec.direction);
  for (auto c : kAllClasses) s.logits[static_cast<std::size_t>(index_of(c))] = uniform(rng, -1.0, 1.0);
  s.logits[static_cast<std::size_t>(index_of(pred))] = 2.0 + uniform(rng, 0.0, 1.0);

  for (auto [target, mode] : {std::pair{GradTarget::Gt, TargetMode::GtTargeted},
                              std::pair{GradTarget::Pred, TargetMode::PredTargeted}}) {
    const ContrastPair p = resolve_contrast(s.logits, mode, s.gt_class);
    s.contrast[target] = {p.tgt, p.neg};
  }
  return s;
}

std::vector<double> family_field(const SampleRecord& scene, FieldFamily family, const SynthSpec& spec,
                                 std::uint64_t seed, std::optional<DirectionClass> toward) {
  const std::size_t gh = *scene.grid_h;
  const std::size_t gw = *scene.grid_w;
  const Point a = scene.ref_box.center();
  Point b = scene.tgt_box.center();
  if (toward) {
    const Point u = unit_toward(canonical_angle(*toward));
    const double d = distance(a, b);
    b = {a.x + d * u.x, a.y + d * u.y};
  }
  const double spread = spec.blob_spread * std::hypot(scene.image_w, scene.image_h);
  Rng rng(seed);
  std::vector<double> field(gh * gw, 0.0);

  auto blob_at = [&](Point c) {
    for (std::size_t r = 0; r < gh; ++r) {
      for (std::size_t k = 0; k < gw; ++k) {
        const Point p = cell_center(r, k, gh, gw, scene.image_w, scene.image_h);
        const double dd = (p.x - c.x) * (p.x - c.x) + (p.y - c.y) * (p.y - c.y);
        field[r * gw + k] = std::exp(-dd / (2.0 * spread * spread));
      }
    }
  };

  switch (family) {
    case FieldFamily::PointMass: {
      const auto row = std::min(gh - 1, static_cast<std::size_t>(std::max(0.0, b.y * static_cast<double>(gh) / scene.image_h)));
      const auto col = std::min(gw - 1, static_cast<std::size_t>(std::max(0.0, b.x * static_cast<double>(gw) / scene.image_w)));
      field[row * gw + col] = 1.0;
      break;
    }
    case FieldFamily::GaussianBlobAtB:
      blob_at(b);
      break;
    case FieldFamily::OppositeBlob:
      blob_at({2.0 * a.x - b.x, 2.0 * a.y - b.y});
      break;
    case FieldFamily::Diffuse:
      std::fill(field.begin(), field.end(), 1.0);
      break;
    case FieldFamily::UniformRandom:
      for (auto& v : field) v = uniform01(rng);
      break;
  }
  if (spec.noise > 0.0) {
    for (auto& v : field) v += spec.noise * uniform01(rng);
  }
  return field;
}

void generate_layer_stack(SampleRecord& scene, const SynthSpec& spec) {
  spec.validate();
  if (!scene.has_grid()) throw Error(ErrorCode::GridMismatch, "scene has no grid");
  const std::size_t n = scene.token_count();
  const std::size_t dim = spec.hidden_dim;
  const DirectionClass pred = scene.predicted_class();
  const bool correct = pred == scene.gt_class;

  scene.hidden.clear();
  scene.grads.clear();
  std::vector<double> plain_at_baseline;

  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const int layer = spec.layers[li];
    const bool signal =
        spec.signal_layers.empty() ||
        std::find(spec.signal_layers.begin(), spec.signal_layers.end(), layer) != spec.signal_layers.end();
    const std::uint64_t layer_seed = derive_seed(spec.seed, 1000 + li);

    std::vector<double> t, p, q;
    if (signal) {
      t = family_field(scene, spec.family, spec, derive_seed(layer_seed, 1));
      p = family_field(scene, spec.plain_family, spec, derive_seed(layer_seed, 2));
      q = correct ? t : family_field(scene, spec.family, spec, derive_seed(layer_seed, 3), pred);
    } else {
      Rng rng(derive_seed(layer_seed, 4));
      t.assign(n, 0.0);
      for (auto& v : t) v = spec.noise * uniform01(rng);
      p = t;
      q = t;
    }
    if (layer == -2) plain_at_baseline = p;

    std::vector<double> h(n * dim, 0.0), g_gt(n * dim, 0.0), g_plain(n * dim, 0.0), g_pred(n * dim, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      h[j * dim + 0] = std::sqrt(t[j]);
      h[j * dim + 1] = std::sqrt(p[j]);
      h[j * dim + 2] = std::sqrt(q[j]);
      g_gt[j * dim + 0] = std::sqrt(t[j]);
      g_plain[j * dim + 1] = std::sqrt(p[j]);
      g_pred[j * dim + 2] = std::sqrt(q[j]);
    }
    const std::string tag = "L" + std::to_string(layer);
    scene.hidden.emplace(layer, BlobRef(blob_path(scene, "hidden_" + tag), make_blob({n, dim}, std::move(h))));
    BlobRef gt_ref(blob_path(scene, "grad_gt_" + tag), make_blob({n, dim}, std::move(g_gt)));
    scene.grads[GradTarget::Gt].emplace(layer, gt_ref);
    scene.grads[GradTarget::Plain].emplace(
        layer, BlobRef(blob_path(scene, "grad_plain_" + tag), make_blob({n, dim}, std::move(g_plain))));
    if (correct) {
      // Both contrastive modes differentiate the same scalar.
      scene.grads[GradTarget::Pred].emplace(layer, gt_ref);
    } else {
      scene.grads[GradTarget::Pred].emplace(
          layer, BlobRef(blob_path(scene, "grad_pred_" + tag), make_blob({n, dim}, std::move(g_pred))));
    }
  }
  if (plain_at_baseline.empty()) {
    plain_at_baseline = family_field(scene, spec.plain_family, spec, derive_seed(spec.seed, 77));
  }

  if (spec.with_ig) {
    std::vector<double> steps(spec.ig_steps * n * dim, 0.0);
    for (std::size_t st = 0; st < spec.ig_steps; ++st) {
      for (std::size_t j = 0; j < n; ++j) steps[(st * n + j) * dim + 1] = std::sqrt(plain_at_baseline[j]);
    }
    scene.ig_steps = BlobRef(blob_path(scene, "ig_steps"), make_blob({spec.ig_steps, n, dim}, std::move(steps)));
  } else {
    scene.ig_steps.reset();
  }

  if (spec.with_gradcam) {
    scene.gradcam = GradCamRef{
        BlobRef(blob_path(scene, "gradcam_act"), make_blob({1, *scene.grid_h, *scene.grid_w}, plain_at_baseline)),
        BlobRef(blob_path(scene, "gradcam_grad"),
                make_blob({1, *scene.grid_h, *scene.grid_w}, std::vector<double>(n, 1.0)))};
  } else {
    scene.gradcam.reset();
  }

  if (spec.with_attention) {
    constexpr std::size_t kPrefix = 2;
    constexpr std::size_t kSuffix = 3;
    constexpr std::size_t kLayers = 2;
    constexpr std::size_t kHeads = 2;
    const std::size_t T = kPrefix + n + kSuffix;
    Rng rng(derive_seed(spec.seed, 99));
    std::vector<double> attn(kLayers * kHeads * T * T, 0.0);
    for (std::size_t l = 0; l < kLayers; ++l) {
      for (std::size_t hd = 0; hd < kHeads; ++hd) {
        double* m = attn.data() + (l * kHeads + hd) * T * T;
        for (std::size_t i = 0; i < T; ++i) {
          double* row = m + i * T;
          double sum = 0.0;
          for (std::size_t j = 0; j < T; ++j) {
            double w = 0.0;
            if (i == T - 1) {
              w = (j >= kPrefix && j < kPrefix + n) ? 0.02 + plain_at_baseline[j - kPrefix] : 0.02;
            } else {
              w = 0.01 + uniform01(rng);
            }
            row[j] = w;
            sum += w;
          }
          for (std::size_t j = 0; j < T; ++j) row[j] /= sum;
        }
      }
    }
    scene.attention = AttentionRef{BlobRef(blob_path(scene, "attention"), make_blob({kLayers, kHeads, T, T}, std::move(attn))),
                                   kPrefix, kPrefix + n, T - 1};
  } else {
    scene.attention.reset();
  }
}

SampleRecord generate_sample(const SynthSpec& spec) {
  SampleRecord s = generate_scene(spec);
  generate_layer_stack(s, spec);
  return s;
}

std::vector<SampleRecord> generate_batch(std::size_t n, const SynthSpec& base, std::uint64_t master_seed,
                                         bool with_tensors) {
  std::vector<SampleRecord> out(n);
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < count; ++i) {
    SynthSpec spec = base;
    spec.seed = derive_seed(master_seed, static_cast<std::uint64_t>(i));
    spec.direction = class_from_index(static_cast<int>(i % 4));
    if (base.predicted) spec.predicted = base.predicted;
    char id[32];
    std::snprintf(id, sizeof id, "synth-%06lld", static_cast<long long>(i));
    spec.sample_id = id;
    out[static_cast<std::size_t>(i)] = with_tensors ? generate_sample(spec) : generate_scene(spec);
  }
  return out;
}

Manifest make_manifest(std::vector<SampleRecord> samples, const SynthSpec& base, std::string dataset) {
  Manifest m;
  m.dataset = std::move(dataset);
  m.provenance.model = "synthetic";
  m.provenance.layers = base.layers;
  m.provenance.target_modes = {"gt", "pred", "plain"};
  m.samples = std::move(samples);
  return m;
}

bool ValidationReport::all_pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const ValidationRow& r) { return r.pass; });
}

namespace {

struct RowInput {
  std::string name;
  std::size_t n = 0;
  SynthSpec spec;
  bool with_tensors = false;
  MethodOptions method;
};

ValidationRow run_row(const RowInput& in, std::uint64_t seed, const ValidationOptions& options) {
  std::vector<SampleMetrics> metrics(in.n);
  const auto count = static_cast<std::int64_t>(in.n);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < count; ++i) {
    SynthSpec spec = in.spec;
    spec.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    spec.direction = class_from_index(static_cast<int>(i % 4));
    spec.sample_id = in.name + "-" + std::to_string(i);
    const SampleRecord s = in.with_tensors ? generate_sample(spec) : generate_scene(spec);
    metrics[static_cast<std::size_t>(i)] = run_sample(s, in.method, options.polar).metrics;
  }
  AggregateOptions agg;
  agg.bootstrap = options.bootstrap;
  agg.bootstrap.seed = seed;
  const AggregateReport rep = aggregate(metrics, agg);

  ValidationRow row;
  row.name = in.name;
  row.n = in.n;
  row.mean_dae = rep.overall.mean_dae;
  row.ea_rate = rep.overall.ea_rate;
  row.dae_ci = rep.overall.dae_ci;
  row.ea_ci = rep.overall.ea_ci;
  row.degenerate = rep.degenerate_count;
  for (const auto& m : metrics) row.max_dae = std::max(row.max_dae, m.dae);
  return row;
}

}  // namespace

ValidationReport run_validation_suite(std::size_t n, std::uint64_t seed, const ValidationOptions& options) {
  if (n == 0) throw Error(ErrorCode::EmptyInput, "validation suite needs n >= 1");
  options.polar.validate();
  const double half_sector = 180.0 / options.polar.sectors;
  ValidationReport report;

  SynthSpec geometry_only;
  geometry_only.displacement_ratio = 1.5;

  SynthSpec cardinal = geometry_only;
  cardinal.cardinal = true;

  auto method = [](RelevanceSource src) {
    MethodOptions m;
    m.method = src;
    return m;
  };

  {
    RowInput in{"random_baseline", n, geometry_only, false, method(RelevanceSource::Random)};
    in.method.seed = derive_seed(seed, 1);
    ValidationRow row = run_row(in, derive_seed(seed, 11), options);
    row.expectation = "mean DAE in [85, 95], EA in [0.22, 0.28]";
    row.pass = row.mean_dae >= 85.0 && row.mean_dae <= 95.0 && row.ea_rate >= 0.22 && row.ea_rate <= 0.28;
    report.rows.push_back(row);
  }
  {
    ValidationRow row = run_row({"oracle_cardinal", n, cardinal, false, method(RelevanceSource::Oracle)},
                                derive_seed(seed, 12), options);
    row.expectation = "every DAE == 0, EA == 1";
    row.pass = row.max_dae == 0.0 && row.ea_rate == 1.0;
    report.rows.push_back(row);
  }
  {
    ValidationRow row = run_row({"oracle_offaxis", n, geometry_only, false, method(RelevanceSource::Oracle)},
                                derive_seed(seed, 13), options);
    row.expectation = "every DAE <= half a sector, EA == 1";
    row.pass = row.max_dae <= half_sector && row.ea_rate == 1.0;
    report.rows.push_back(row);
  }

  const std::size_t fn = options.family_samples;
  auto family_spec = [&](FieldFamily f, bool on_axis) {
    SynthSpec s = on_axis ? cardinal : geometry_only;
    s.family = f;
    s.plain_family = f;
    return s;
  };
  {
    ValidationRow row = run_row({"point_mass", fn, family_spec(FieldFamily::PointMass, true), true,
                                 method(RelevanceSource::Creg)},
                                derive_seed(seed, 14), options);
    row.expectation = "every DAE == 0, EA == 1";
    row.pass = row.max_dae == 0.0 && row.ea_rate == 1.0;
    report.rows.push_back(row);
  }
  {
    ValidationRow row = run_row({"gaussian_blob", fn, family_spec(FieldFamily::GaussianBlobAtB, true), true,
                                 method(RelevanceSource::Creg)},
                                derive_seed(seed, 15), options);
    row.expectation = "every DAE <= half a sector, EA == 1";
    row.pass = row.max_dae <= half_sector && row.ea_rate == 1.0;
    report.rows.push_back(row);
  }
  {
    ValidationRow row = run_row({"opposite_blob", fn, family_spec(FieldFamily::OppositeBlob, true), true,
                                 method(RelevanceSource::Creg)},
                                derive_seed(seed, 16), options);
    row.expectation = "mean DAE in [170, 180]";
    row.pass = row.mean_dae >= 170.0 && row.mean_dae <= 180.0;
    report.rows.push_back(row);
  }
  {
    ValidationRow row = run_row({"diffuse", fn, family_spec(FieldFamily::Diffuse, true), true,
                                 method(RelevanceSource::Creg)},
                                derive_seed(seed, 17), options);
    row.expectation = "every compass degenerate";
    row.pass = row.degenerate == row.n;
    report.rows.push_back(row);
  }
  {
    ValidationRow row = run_row({"uniform_random", fn, family_spec(FieldFamily::UniformRandom, false), true,
                                 method(RelevanceSource::Creg)},
                                derive_seed(seed, 18), options);
    // Four standard errors of a uniform-peak DAE (sd ~ 52 degrees), at least 5 degrees.
    const double tol = std::max(5.0, 4.0 * 52.0 / std::sqrt(static_cast<double>(fn)));
    const double expected = expected_random_dae(options.polar.sectors);
    char buf[96];
    std::snprintf(buf, sizeof buf, "mean DAE within %.1f of %.1f", tol, expected);
    row.expectation = buf;
    row.pass = std::abs(row.mean_dae - expected) <= tol;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace creg::synth
