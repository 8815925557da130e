#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "creg/cli.hpp"
#include "creg/error.hpp"
#include "creg/io.hpp"
#include "creg/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace creg::cli {

namespace {

json polar_json(const PolarConfig& p) {
  return json{{"sectors", p.sectors},
              {"sigma_r", p.sigma_r},
              {"rho_r", p.rho_r},
              {"sigma_rule", std::string(to_string(p.sigma_rule))}};
}

json ci_json(const ConfidenceInterval& ci) {
  return json{{"lower", ci.lower}, {"upper", ci.upper}, {"level", ci.level}, {"degenerate", ci.degenerate}};
}

json sub_json(const SubReport& s) {
  return json{{"n", s.n},
              {"dae_mean", s.mean_dae},
              {"dae_ci", ci_json(s.dae_ci)},
              {"ea", s.ea_rate},
              {"ea_ci", ci_json(s.ea_ci)}};
}

json opt_sub_json(const std::optional<SubReport>& s) { return s ? sub_json(*s) : json(nullptr); }

json report_json(const AggregateReport& r) {
  json j;
  j["overall"] = sub_json(r.overall);
  json per_class = json::object();
  for (auto c : kAllClasses) per_class[std::string(to_string(c))] = opt_sub_json(r.per_class[static_cast<int>(c)]);
  j["per_class"] = per_class;
  j["correct"] = opt_sub_json(r.correct);
  j["incorrect"] = opt_sub_json(r.incorrect);
  j["degenerate"] = r.degenerate_count;
  j["excluded"] = r.excluded_count;
  if (r.cos) {
    j["cos"] = json{{"n", r.cos->n},
                    {"skipped", r.cos->skipped},
                    {"delta_s_true", r.cos->mean_delta_true},
                    {"delta_s_opp", r.cos->mean_delta_opp},
                    {"cos", r.cos->cos}};
  }
  return j;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void write_json(const fs::path& path, const json& j, RunSummary& summary) {
  write_text_atomic(path, dump(j));
  summary.written.push_back(path);
}

void apply_workers(const RunConfig& c) {
  const int w = c.workers > 0 ? c.workers : env_workers();
  if (w > 0) omp_set_num_threads(w);
}

Manifest load(const RunConfig& c, RunSummary& summary) {
  LoadReport report;
  Manifest m = load_manifest(c.manifest, &report);
  summary.notices.insert(summary.notices.end(), report.notices.begin(), report.notices.end());
  return m;
}

struct Outcome {
  std::optional<SampleResult> result;
  bool tie = false;
  std::string error;
};

/// Runs one method over every sample, sample-parallel. Per-sample failures
/// (geometry or malformed tensors found on load) become skips.
std::vector<Outcome> run_method(const Manifest& m, const MethodOptions& opts, const PolarConfig& polar) {
  std::vector<Outcome> out(m.samples.size());
  const auto n = static_cast<std::int64_t>(m.samples.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& s = m.samples[static_cast<std::size_t>(i)];
    auto& o = out[static_cast<std::size_t>(i)];
    try {
      o.result = run_sample(s, opts, polar);
      if (opts.method == RelevanceSource::Creg && opts.creg.contrastive) {
        o.tie = resolve_contrast(s.logits, opts.mode, s.gt_class).tie;
      }
    } catch (const Error& e) {
      o.error = e.what();
    }
  }
  return out;
}

std::vector<SampleMetrics> collect(const Manifest& m, const std::vector<Outcome>& outcomes, RunSummary& summary,
                                   const std::string& label) {
  std::vector<SampleMetrics> metrics;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].result) {
      metrics.push_back(outcomes[i].result->metrics);
      ++summary.processed;
    } else {
      summary.skipped.push_back(label + m.samples[i].sample_id + ": " + outcomes[i].error);
    }
  }
  return metrics;
}

std::optional<std::vector<CosEntry>> manifest_cos(const Manifest& m, const OcclusionConfig& occ,
                                                  std::size_t& skipped) {
  std::vector<CosEntry> entries;
  bool any = false;
  for (const auto& s : m.samples) {
    if (!s.occlusion) {
      ++skipped;
      continue;
    }
    any = true;
    try {
      const auto plan = build_plan(s, occ).plan;
      const auto& o = *s.occlusion;
      entries.push_back({s.sample_id, evaluate_cos(plan, o.base, o.true_occluded, o.opposite_occluded, s.gt_class)});
    } catch (const Error&) {
      ++skipped;
    }
  }
  if (!any) return std::nullopt;
  return entries;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

MethodOptions ablation(const MethodOptions& base, const std::string& name, PolarConfig& polar) {
  MethodOptions o = base;
  o.method = RelevanceSource::Creg;
  if (name == "creg_k4") polar.sectors = 4;
  if (name == "creg_single_layer") o.creg.layers = {base.baseline_layer};
  if (name == "creg_no_contrastive") o.creg.contrastive = false;
  return o;
}

const std::vector<std::string> kAblations = {"creg", "creg_k4", "creg_single_layer", "creg_no_contrastive"};

std::vector<RelevanceSource> all_methods() {
  return {RelevanceSource::Creg,        RelevanceSource::GradCam, RelevanceSource::GradNorm,
          RelevanceSource::Ig,          RelevanceSource::Rollout, RelevanceSource::SingleLayer,
          RelevanceSource::Random,      RelevanceSource::Oracle};
}

void require_nonempty(const Manifest& m) {
  if (m.samples.empty()) throw Error(ErrorCode::EmptyInput, "manifest has no samples");
}

fs::path plan_path(const RunConfig& c) { return c.out_dir / "occlusion_plan.json"; }

}  // namespace

int env_workers() {
  const char* v = std::getenv("CREG_WORKERS");
  if (!v || !*v) return 0;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  return (*end == '\0' && n > 0 && n < 4096) ? static_cast<int>(n) : 0;
}

std::string file_stem(const std::string& id) {
  std::string s = id;
  for (char& ch : s) {
    const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9') || ch == '-' ||
                    ch == '_' || ch == '.';
    if (!ok) ch = '_';
  }
  if (s.empty() || s == "." || s == "..") s = "_" + s;
  return s;
}

std::string config_echo(const RunConfig& c) {
  json j;
  j["subcommand"] = c.subcommand;
  j["manifest"] = c.manifest.generic_string();
  json methods = json::array();
  for (auto m : c.methods) methods.push_back(std::string(to_string(m)));
  j["methods"] = methods;
  j["mode"] = std::string(to_string(c.method.mode));
  j["layers"] = c.method.creg.layers;
  j["contrastive"] = c.method.creg.contrastive;
  j["baseline_layer"] = c.method.baseline_layer;
  j["seed"] = c.method.seed;
  j["polar"] = polar_json(c.polar);
  j["bootstrap"] = json{{"resamples", c.bootstrap.resamples}, {"level", c.bootstrap.level}, {"seed", c.bootstrap.seed}};
  j["out_dir"] = c.out_dir.generic_string();
  j["exclude_degenerate"] = c.exclude_degenerate;
  j["occlusion"] = json{{"bounded", c.bounded_occlusion}, {"fill_rgb", {128, 128, 128}}};
  j["responses"] = c.responses ? json(c.responses->generic_string()) : json(nullptr);
  if (c.subcommand == "synth") {
    j["synth"] = json{{"n", c.synth.n},
                      {"family", std::string(synth::to_string(c.synth.family))},
                      {"cardinal", c.synth.cardinal},
                      {"noise", c.synth.noise},
                      {"accuracy", c.synth.accuracy},
                      {"with_tensors", c.synth.with_tensors},
                      {"with_baselines", c.synth.with_baselines},
                      {"validate", c.synth.validate}};
  }
  return dump(j);
}

void validate_run(const RunConfig& c, const Manifest& m) {
  c.polar.validate();
  if (c.bootstrap.resamples == 0) throw Error(ErrorCode::InvalidArgument, "bootstrap resamples must be positive");
  if (!(c.bootstrap.level > 0.0 && c.bootstrap.level < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "bootstrap level must lie in (0, 1)");
  }
  if (c.method.creg.layers.empty()) throw Error(ErrorCode::InvalidArgument, "layer set is empty");
  for (auto method : c.methods) {
    MethodOptions o = c.method;
    o.method = method;
    std::ostringstream missing;
    std::size_t bad = 0;
    for (const auto& s : m.samples) {
      const auto need = missing_inputs(s, o);
      if (need.empty()) continue;
      if (bad++ < 5) {
        missing << "\n  " << s.sample_id << ":";
        for (const auto& n : need) missing << ' ' << n;
      }
    }
    if (bad > 0) {
      if (bad > 5) missing << "\n  ... and " << (bad - 5) << " more samples";
      throw Error(ErrorCode::MissingTarget, "method '" + std::string(to_string(method)) + "' (mode " +
                                                std::string(to_string(o.mode)) + ") lacks blobs in " +
                                                std::to_string(bad) + " samples:" + missing.str());
    }
  }
}

std::string method_table_csv(const std::vector<MethodRow>& rows) {
  std::string out = "method,n,dae_mean,dae_ci_lo,dae_ci_hi,ea,ea_ci_lo,ea_ci_hi\n";
  for (const auto& r : rows) {
    const auto& o = r.report.overall;
    out += r.method + "," + std::to_string(o.n) + "," + fmt(o.mean_dae) + "," + fmt(o.dae_ci.lower) + "," +
           fmt(o.dae_ci.upper) + "," + fmt(o.ea_rate) + "," + fmt(o.ea_ci.lower) + "," + fmt(o.ea_ci.upper) + "\n";
  }
  return out;
}

RunSummary cmd_attr(const RunConfig& c) {
  RunSummary summary;
  apply_workers(c);
  const Manifest m = load(c, summary);
  if (c.methods.size() != 1) throw Error(ErrorCode::InvalidArgument, "attr takes exactly one method");
  validate_run(c, m);

  MethodOptions opts = c.method;
  opts.method = c.methods.front();
  const auto outcomes = run_method(m, opts, c.polar);

  const fs::path dir = c.out_dir / "compass";
  fs::create_directories(dir);
  std::vector<std::string> records(m.samples.size());
  for (std::size_t i = 0; i < m.samples.size(); ++i) {
    const auto& s = m.samples[i];
    const auto& o = outcomes[i];
    if (!o.result) {
      summary.skipped.push_back(s.sample_id + ": " + o.error);
      continue;
    }
    const auto& r = *o.result;
    json j;
    j["sample_id"] = s.sample_id;
    j["method"] = std::string(to_string(opts.method));
    j["mode"] = std::string(to_string(opts.mode));
    j["K"] = r.compass.sectors();
    j["probs"] = r.compass.probs;
    j["peak_index"] = r.compass.peak_index;
    j["peak_angle"] = r.compass.peak_angle;
    j["true_angle"] = r.true_angle;
    j["dae"] = r.metrics.dae;
    j["ea"] = r.metrics.ea;
    j["degenerate"] = r.compass.degenerate;
    j["gt_class"] = std::string(to_string(s.gt_class));
    j["pred_class"] = std::string(to_string(s.predicted_class()));
    j["flags"] = json{{"field_degenerate", r.field_degenerate},
                      {"contrast_tie", o.tie},
                      {"target_outside_r_max", r.d_ab > c.polar.r_max(r.d_ab)}};
    records[i] = dump(j);
    ++summary.processed;
  }
  const auto n = static_cast<std::int64_t>(records.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (!records[k].empty()) write_text_atomic(dir / (file_stem(m.samples[k].sample_id) + ".json"), records[k]);
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].empty()) summary.written.push_back(dir / (file_stem(m.samples[i].sample_id) + ".json"));
  }

  json run = json::parse(config_echo(c));
  run["processed"] = summary.processed;
  run["skipped"] = summary.skipped;
  run["notices"] = summary.notices;
  write_json(c.out_dir / "run.json", run, summary);
  return summary;
}

namespace {

RunSummary eval_rows(const RunConfig& c, const Manifest& m, const std::vector<std::pair<std::string, MethodOptions>>& jobs,
                     const std::vector<PolarConfig>& polars, std::vector<std::string> unavailable,
                     const std::string& stem) {
  RunSummary summary;
  AggregateOptions agg{c.bootstrap, c.exclude_degenerate};
  OcclusionConfig occ{c.polar, c.bounded_occlusion, {128, 128, 128}};
  std::size_t cos_skipped = 0;
  const auto cos_entries = manifest_cos(m, occ, cos_skipped);

  std::vector<MethodRow> rows;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const auto outcomes = run_method(m, jobs[j].second, polars[j]);
    const auto metrics = collect(m, outcomes, summary, jobs[j].first + "/");
    if (metrics.empty()) {
      unavailable.push_back(jobs[j].first);
      continue;
    }
    const bool with_cos = cos_entries && jobs[j].first == "creg";
    rows.push_back({jobs[j].first,
                    with_cos ? aggregate(metrics, agg, std::span<const CosEntry>(*cos_entries), cos_skipped)
                             : aggregate(metrics, agg)});
  }
  if (rows.empty()) throw Error(ErrorCode::EmptyInput, "no method produced a scored sample");

  fs::create_directories(c.out_dir);
  json report = json::parse(config_echo(c));
  json methods = json::object();
  for (const auto& r : rows) methods[r.method] = report_json(r.report);
  report["results"] = methods;
  report["unavailable"] = unavailable;
  report["skipped"] = summary.skipped;
  report["notices"] = summary.notices;
  write_json(c.out_dir / (stem + ".json"), report, summary);
  write_text_atomic(c.out_dir / (stem + ".csv"), method_table_csv(rows));
  summary.written.push_back(c.out_dir / (stem + ".csv"));
  return summary;
}

}  // namespace

RunSummary cmd_eval(const RunConfig& c) {
  RunSummary pre;
  apply_workers(c);
  const Manifest m = load(c, pre);
  require_nonempty(m);
  validate_run(c, m);
  std::vector<std::pair<std::string, MethodOptions>> jobs;
  std::vector<PolarConfig> polars;
  for (auto method : c.methods) {
    MethodOptions o = c.method;
    o.method = method;
    jobs.emplace_back(std::string(to_string(method)), o);
    polars.push_back(c.polar);
  }
  auto summary = eval_rows(c, m, jobs, polars, {}, "report");
  summary.notices.insert(summary.notices.begin(), pre.notices.begin(), pre.notices.end());
  return summary;
}

RunSummary cmd_baseline_sweep(const RunConfig& c) {
  RunSummary pre;
  apply_workers(c);
  const Manifest m = load(c, pre);
  require_nonempty(m);
  RunConfig base = c;
  base.methods.clear();
  validate_run(base, m);

  std::vector<std::pair<std::string, MethodOptions>> jobs;
  std::vector<PolarConfig> polars;
  std::vector<std::string> unavailable;
  auto runnable = [&](const MethodOptions& o) {
    return std::all_of(m.samples.begin(), m.samples.end(),
                       [&](const SampleRecord& s) { return missing_inputs(s, o).empty(); });
  };
  for (const auto& name : kAblations) {
    PolarConfig p = c.polar;
    auto o = ablation(c.method, name, p);
    if (name == "creg_k4") p.validate();
    if (!runnable(o)) {
      unavailable.push_back(name);
      continue;
    }
    jobs.emplace_back(name, o);
    polars.push_back(p);
  }
  for (auto method : all_methods()) {
    if (method == RelevanceSource::Creg) continue;
    MethodOptions o = c.method;
    o.method = method;
    const std::string name(to_string(method));
    if (!runnable(o)) {
      unavailable.push_back(name);
      continue;
    }
    jobs.emplace_back(name, o);
    polars.push_back(c.polar);
  }
  auto summary = eval_rows(c, m, jobs, polars, unavailable, "sweep");
  summary.notices.insert(summary.notices.begin(), pre.notices.begin(), pre.notices.end());
  return summary;
}

RunSummary cmd_occlude(const RunConfig& c) {
  RunSummary summary;
  apply_workers(c);
  const Manifest m = load(c, summary);
  c.polar.validate();
  if (c.polar.sectors % 2 != 0) throw Error(ErrorCode::InvalidArgument, "occlusion needs an even sector count");
  const OcclusionConfig occ{c.polar, c.bounded_occlusion, {128, 128, 128}};
  const fs::path mask_dir = c.out_dir / "masks";
  fs::create_directories(mask_dir);

  std::vector<std::optional<OcclusionPlan>> plans(m.samples.size());
  std::vector<std::string> errors(m.samples.size());
  const auto n = static_cast<std::int64_t>(m.samples.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const auto& s = m.samples[k];
    try {
      auto planned = build_plan(s, occ);
      const std::string stem = file_stem(s.sample_id);
      planned.plan.true_mask = fs::path("masks") / (stem + "_true.bin");
      planned.plan.opposite_mask = fs::path("masks") / (stem + "_opp.bin");
      write_blob(planned.true_mask.to_blob(), c.out_dir / planned.plan.true_mask);
      write_blob(planned.opposite_mask.to_blob(), c.out_dir / planned.plan.opposite_mask);
      plans[k] = std::move(planned.plan);
    } catch (const Error& e) {
      errors[k] = e.what();
    }
  }

  json entries = json::array();
  for (std::size_t k = 0; k < plans.size(); ++k) {
    if (!plans[k]) {
      summary.skipped.push_back(m.samples[k].sample_id + ": " + errors[k]);
      continue;
    }
    const auto& p = *plans[k];
    entries.push_back(json{{"sample_id", p.sample_id},
                           {"true_angle", p.true_angle},
                           {"true_sector", p.true_sector},
                           {"opposite_sector", p.opposite_sector},
                           {"true_mask", p.true_mask.generic_string()},
                           {"opposite_mask", p.opposite_mask.generic_string()},
                           {"status", std::string(to_string(p.status))}});
    summary.written.push_back(c.out_dir / p.true_mask);
    summary.written.push_back(c.out_dir / p.opposite_mask);
    ++summary.processed;
  }
  json plan{{"format", "creg-occlusion-plan"},
            {"version", 1},
            {"polar", polar_json(c.polar)},
            {"bounded", c.bounded_occlusion},
            {"fill_rgb", {128, 128, 128}},
            {"plans", entries},
            {"skipped", summary.skipped}};
  write_json(plan_path(c), plan, summary);
  return summary;
}

namespace {

Logits logits_from(const json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 4) throw Error(ErrorCode::BadLogits, what + " must be an array of 4 numbers");
  Logits l{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!j[i].is_number()) throw Error(ErrorCode::BadLogits, what + " must be an array of 4 numbers");
    l[i] = j[i].get<double>();
    if (!std::isfinite(l[i])) throw Error(ErrorCode::NonFinite, what + " holds a non-finite value");
  }
  return l;
}

std::map<std::string, OcclusionLogits> read_responses(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedManifest, path.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("responses") || !j["responses"].is_array()) {
    throw Error(ErrorCode::MalformedManifest, path.string() + ": expected {\"responses\": [...]}");
  }
  std::map<std::string, OcclusionLogits> out;
  for (const auto& r : j["responses"]) {
    if (!r.is_object() || !r.contains("sample_id") || !r["sample_id"].is_string()) {
      throw Error(ErrorCode::MalformedManifest, path.string() + ": response without sample_id");
    }
    const auto id = r["sample_id"].get<std::string>();
    auto field = [&](const char* key) {
      if (!r.contains(key)) throw Error(ErrorCode::MalformedManifest, "response '" + id + "' lacks " + key);
      return logits_from(r[key], "response '" + id + "' " + key);
    };
    OcclusionLogits o{field("logits_base"), field("logits_true_occ"), field("logits_opp_occ")};
    if (!out.emplace(id, o).second) throw Error(ErrorCode::DuplicateSampleId, "response '" + id + "' appears twice");
  }
  return out;
}

}  // namespace

RunSummary cmd_cos(const RunConfig& c) {
  RunSummary summary;
  const Manifest m = load(c, summary);
  c.polar.validate();
  std::map<std::string, OcclusionLogits> responses;
  if (c.responses) responses = read_responses(*c.responses);
  const OcclusionConfig occ{c.polar, c.bounded_occlusion, {128, 128, 128}};

  std::vector<CosEntry> entries;
  for (const auto& s : m.samples) {
    const OcclusionLogits* o = nullptr;
    if (auto it = responses.find(s.sample_id); it != responses.end()) {
      o = &it->second;
    } else if (!c.responses && s.occlusion) {
      o = &*s.occlusion;
    }
    if (!o) {
      summary.skipped.push_back(s.sample_id + ": no occlusion response");
      continue;
    }
    try {
      const auto plan = build_plan(s, occ).plan;
      entries.push_back({s.sample_id, evaluate_cos(plan, o->base, o->true_occluded, o->opposite_occluded, s.gt_class)});
      ++summary.processed;
    } catch (const Error& e) {
      summary.skipped.push_back(s.sample_id + ": " + e.detail());
    }
  }

  double dt = 0.0, dopp = 0.0;
  json rows = json::array();
  std::string csv = "sample_id,delta_s_true,delta_s_opp,cos\n";
  for (const auto& e : entries) {
    dt += e.triple.delta_true;
    dopp += e.triple.delta_opp;
    rows.push_back(json{{"sample_id", e.sample_id},
                        {"delta_s_true", e.triple.delta_true},
                        {"delta_s_opp", e.triple.delta_opp},
                        {"cos", e.triple.cos}});
    csv += e.sample_id + "," + fmt(e.triple.delta_true) + "," + fmt(e.triple.delta_opp) + "," + fmt(e.triple.cos) + "\n";
  }
  const double n = static_cast<double>(entries.size());
  const CosTriple mean = entries.empty() ? CosTriple{} : CosTriple{dt / n, dopp / n, dopp / n - dt / n};
  if (!entries.empty()) {
    csv += "mean," + fmt(mean.delta_true) + "," + fmt(mean.delta_opp) + "," + fmt(mean.cos) + "\n";
  }
  fs::create_directories(c.out_dir);
  json out = json::parse(config_echo(c));
  out["samples"] = rows;
  out["mean"] = json{{"n", entries.size()},
                     {"delta_s_true", mean.delta_true},
                     {"delta_s_opp", mean.delta_opp},
                     {"cos", mean.cos}};
  out["skipped"] = summary.skipped;
  write_json(c.out_dir / "cos.json", out, summary);
  write_text_atomic(c.out_dir / "cos.csv", csv);
  summary.written.push_back(c.out_dir / "cos.csv");
  return summary;
}

RunSummary cmd_synth(const RunConfig& c) {
  RunSummary summary;
  apply_workers(c);
  c.polar.validate();
  fs::create_directories(c.out_dir);
  const auto& sc = c.synth;
  if (sc.validate) {
    synth::ValidationOptions vo;
    vo.polar = c.polar;
    vo.bootstrap = c.bootstrap;
    vo.family_samples = std::max<std::size_t>(sc.n / 10, 40);
    const auto report = synth::run_validation_suite(sc.n, c.method.seed, vo);
    json rows = json::array();
    for (const auto& r : report.rows) {
      rows.push_back(json{{"name", r.name},
                          {"n", r.n},
                          {"dae_mean", r.mean_dae},
                          {"dae_ci", ci_json(r.dae_ci)},
                          {"ea", r.ea_rate},
                          {"ea_ci", ci_json(r.ea_ci)},
                          {"dae_max", r.max_dae},
                          {"degenerate", r.degenerate},
                          {"expectation", r.expectation},
                          {"pass", r.pass}});
      summary.notices.push_back(std::string(r.pass ? "pass " : "FAIL ") + r.name + ": " + r.expectation);
    }
    json out = json::parse(config_echo(c));
    out["rows"] = rows;
    out["all_pass"] = report.all_pass();
    write_json(c.out_dir / "validation.json", out, summary);
    summary.processed = report.rows.size();
    return summary;
  }

  if (!(sc.accuracy >= 0.0 && sc.accuracy <= 1.0)) throw Error(ErrorCode::InvalidArgument, "accuracy must lie in [0, 1]");
  synth::SynthSpec base;
  base.family = sc.family;
  base.plain_family = sc.family;
  base.cardinal = sc.cardinal;
  base.noise = sc.noise;
  base.layers = c.method.creg.layers;
  base.with_attention = base.with_ig = base.with_gradcam = sc.with_baselines;
  base.validate();

  std::vector<SampleRecord> samples(sc.n);
  const auto n = static_cast<std::int64_t>(sc.n);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    synth::SynthSpec spec = base;
    const auto idx = static_cast<std::uint64_t>(i);
    spec.seed = derive_seed(c.method.seed, idx);
    spec.direction = kAllClasses[idx % 4];
    Rng rng(derive_seed(spec.seed, 0x5052454455ULL));
    if (uniform01(rng) >= sc.accuracy) spec.predicted = kAllClasses[(idx + 1 + uniform_index(rng, 3)) % 4];
    char id[32];
    std::snprintf(id, sizeof id, "synth-%06lld", static_cast<long long>(i));
    spec.sample_id = id;
    samples[idx] = sc.with_tensors ? synth::generate_sample(spec) : synth::generate_scene(spec);
  }
  summary.processed = samples.size();
  const auto manifest = synth::make_manifest(std::move(samples), base);
  const fs::path path = c.out_dir / "manifest.json";
  save_manifest(manifest, path);
  summary.written.push_back(path);
  return summary;
}

namespace {

CompassRecord record_from(const json& j, const fs::path& path) {
  try {
    CompassRecord r;
    r.sample_id = j.at("sample_id").get<std::string>();
    r.method = j.value("method", std::string("creg"));
    r.probs = j.at("probs").get<std::vector<double>>();
    r.peak_index = j.at("peak_index").get<int>();
    r.peak_angle = j.at("peak_angle").get<double>();
    r.true_angle = j.at("true_angle").get<double>();
    r.dae = j.contains("dae") ? j["dae"].get<double>() : dae(r.peak_angle, r.true_angle);
    r.degenerate = j.value("degenerate", false);
    if (r.probs.empty()) throw Error(ErrorCode::MalformedManifest, path.string() + ": empty probs");
    if (r.peak_index < 0 || static_cast<std::size_t>(r.peak_index) >= r.probs.size()) {
      throw Error(ErrorCode::MalformedManifest, path.string() + ": peak_index out of range");
    }
    for (double p : r.probs) {
      if (!std::isfinite(p) || p < 0.0) throw Error(ErrorCode::MalformedManifest, path.string() + ": bad probability");
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedManifest, path.string() + ": " + e.what());
  }
}

}  // namespace

CompassRecord read_compass_record(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedManifest, path.string() + ": " + e.what());
  }
  return record_from(j, path);
}

RunSummary cmd_plot(const RunConfig& c) {
  RunSummary summary;
  std::vector<fs::path> files;
  for (const auto& in : c.inputs) {
    if (fs::is_directory(in)) {
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
      }
    } else if (fs::exists(in)) {
      files.push_back(in);
    } else {
      throw Error(ErrorCode::Io, in.string() + ": no such file or directory");
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorCode::EmptyInput, "no compass records to plot");
  std::vector<CompassRecord> records;
  for (const auto& f : files) records.push_back(read_compass_record(f));
  fs::create_directories(c.out_dir);
  for (const auto& r : records) {
    const fs::path out = c.out_dir / (file_stem(r.sample_id) + ".svg");
    write_text_atomic(out, compass_svg(r));
    summary.written.push_back(out);
    ++summary.processed;
  }
  return summary;
}

RunSummary run(const RunConfig& c) {
  if (c.subcommand == "attr") return cmd_attr(c);
  if (c.subcommand == "eval") return cmd_eval(c);
  if (c.subcommand == "baseline-sweep") return cmd_baseline_sweep(c);
  if (c.subcommand == "occlude") return cmd_occlude(c);
  if (c.subcommand == "cos") return cmd_cos(c);
  if (c.subcommand == "synth") return cmd_synth(c);
  if (c.subcommand == "plot") return cmd_plot(c);
  throw Error(ErrorCode::InvalidArgument, "unknown subcommand '" + c.subcommand + "'");
}

}  // namespace creg::cli
