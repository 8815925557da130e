#include "creg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "creg/error.hpp"
#include "creg/rng.hpp"

namespace creg {

double dae(double peak_angle, double true_angle) noexcept {
  double d = std::fmod(peak_angle - true_angle + 180.0, 360.0);
  if (d < 0.0) d += 360.0;
  return std::abs(d - 180.0);
}

double log_softmax_gt(const Logits& logits, DirectionClass gt) {
  const double top = *std::max_element(logits.begin(), logits.end());
  if (!std::isfinite(top)) throw Error(ErrorCode::NonFinite, "logits must be finite");
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - top);
  return logits[static_cast<std::size_t>(index_of(gt))] - top - std::log(sum);
}

CosTriple cos_score(double logp_base, double logp_true_occluded, double logp_opp_occluded) noexcept {
  CosTriple t;
  t.delta_true = logp_true_occluded - logp_base;
  t.delta_opp = logp_opp_occluded - logp_base;
  t.cos = t.delta_opp - t.delta_true;
  return t;
}

double expected_random_dae(int sectors) {
  if (sectors < 1) throw Error(ErrorCode::InvalidArgument, "sector count must be positive");
  const double w = 360.0 / sectors;
  double total = 0.0;
  for (int i = 0; i < sectors; ++i) total += std::min(i * w, 360.0 - i * w);
  return total / sectors;
}

namespace {

// Linear interpolation between order statistics (type 7).
double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

}  // namespace

ConfidenceInterval bootstrap_ci(std::span<const double> values, Statistic stat, const BootstrapOptions& options) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "bootstrap over zero observations");
  if (!(options.level > 0.0 && options.level < 1.0)) throw Error(ErrorCode::InvalidArgument, "CI level must be in (0,1)");
  if (options.resamples == 0) throw Error(ErrorCode::InvalidArgument, "bootstrap needs at least one resample");
  if (stat == Statistic::Rate) {
    for (double v : values) {
      if (v != 0.0 && v != 1.0) throw Error(ErrorCode::InvalidArgument, "rate statistic expects 0/1 observations");
    }
  }
  ConfidenceInterval ci;
  ci.level = options.level;
  if (values.size() == 1) {
    ci.lower = ci.upper = values[0];
    ci.degenerate = true;
    return ci;
  }
  const auto n = values.size();
  const auto B = static_cast<std::int64_t>(options.resamples);
  std::vector<double> stats(static_cast<std::size_t>(B));
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < B; ++b) {
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(b)));
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += values[uniform_index(rng, n)];
    stats[static_cast<std::size_t>(b)] = acc / static_cast<double>(n);
  }
  std::sort(stats.begin(), stats.end());
  const double alpha = 1.0 - options.level;
  ci.lower = quantile_sorted(stats, 0.5 * alpha);
  ci.upper = quantile_sorted(stats, 1.0 - 0.5 * alpha);
  return ci;
}

SampleMetrics score_sample(std::string sample_id, const CompassDistribution& compass, double true_angle,
                           DirectionClass gt, DirectionClass predicted) {
  SampleMetrics m;
  m.sample_id = std::move(sample_id);
  m.dae = dae(compass.peak_angle, true_angle);
  m.ea = ea(m.dae);
  m.gt = gt;
  m.predicted = predicted;
  m.correct = gt == predicted;
  m.degenerate = compass.degenerate;
  return m;
}

namespace {

std::uint64_t group_seed(std::uint64_t master, std::span<const SampleMetrics* const> group) {
  std::uint64_t h = hash_string("creg-bootstrap");
  for (const auto* m : group) {
    h = hash_string(m->sample_id, h);
    h = hash_string("\x1f", h);
  }
  return derive_seed(master, h);
}

SubReport summarize(std::span<const SampleMetrics* const> group, const BootstrapOptions& base) {
  SubReport r;
  r.n = group.size();
  std::vector<double> daes;
  std::vector<double> hits;
  for (const auto* m : group) {
    daes.push_back(m->dae);
    hits.push_back(m->ea ? 1.0 : 0.0);
  }
  r.mean_dae = mean_of(daes);
  r.ea_rate = mean_of(hits);
  BootstrapOptions opts = base;
  opts.seed = group_seed(base.seed, group);
  r.dae_ci = bootstrap_ci(daes, Statistic::Mean, opts);
  r.ea_ci = bootstrap_ci(hits, Statistic::Rate, opts);
  // Percentile intervals can miss the point estimate on very small or very
  // skewed samples; report the interval as covering it.
  r.dae_ci.lower = std::min(r.dae_ci.lower, r.mean_dae);
  r.dae_ci.upper = std::max(r.dae_ci.upper, r.mean_dae);
  r.ea_ci.lower = std::min(r.ea_ci.lower, r.ea_rate);
  r.ea_ci.upper = std::max(r.ea_ci.upper, r.ea_rate);
  return r;
}

std::optional<SubReport> summarize_if_any(const std::vector<const SampleMetrics*>& group, const BootstrapOptions& b) {
  if (group.empty()) return std::nullopt;
  return summarize(group, b);
}

}  // namespace

AggregateReport aggregate(std::span<const SampleMetrics> samples, const AggregateOptions& options,
                          std::optional<std::span<const CosEntry>> cos, std::size_t cos_skipped) {
  std::vector<const SampleMetrics*> ordered;
  AggregateReport report;
  for (const auto& m : samples) {
    if (m.degenerate) ++report.degenerate_count;
    if (m.degenerate && options.exclude_degenerate) {
      ++report.excluded_count;
      continue;
    }
    ordered.push_back(&m);
  }
  if (ordered.empty()) throw Error(ErrorCode::EmptyInput, "no samples to aggregate");
  std::sort(ordered.begin(), ordered.end(),
            [](const SampleMetrics* a, const SampleMetrics* b) { return a->sample_id < b->sample_id; });

  report.overall = summarize(ordered, options.bootstrap);
  std::array<std::vector<const SampleMetrics*>, 4> by_class;
  std::vector<const SampleMetrics*> right;
  std::vector<const SampleMetrics*> wrong;
  for (const auto* m : ordered) {
    by_class[static_cast<std::size_t>(index_of(m->gt))].push_back(m);
    (m->correct ? right : wrong).push_back(m);
  }
  for (std::size_t c = 0; c < 4; ++c) report.per_class[c] = summarize_if_any(by_class[c], options.bootstrap);
  report.correct = summarize_if_any(right, options.bootstrap);
  report.incorrect = summarize_if_any(wrong, options.bootstrap);

  if (cos) {
    CosSummary s;
    s.skipped = cos_skipped;
    std::vector<CosEntry> entries(cos->begin(), cos->end());
    std::sort(entries.begin(), entries.end(), [](const CosEntry& a, const CosEntry& b) { return a.sample_id < b.sample_id; });
    s.n = entries.size();
    for (const auto& e : entries) {
      s.mean_delta_true += e.triple.delta_true;
      s.mean_delta_opp += e.triple.delta_opp;
    }
    if (s.n > 0) {
      s.mean_delta_true /= static_cast<double>(s.n);
      s.mean_delta_opp /= static_cast<double>(s.n);
    }
    s.cos = s.mean_delta_opp - s.mean_delta_true;
    report.cos = s;
  }
  return report;
}

Correlation pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw Error(ErrorCode::ShapeMismatch, "pearson: vectors differ in length");
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  auto constant = [](std::span<const double> v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *lo == *hi;
  };
  if (constant(a) || constant(b) || saa == 0.0 || sbb == 0.0) return {0.0, false};
  return {std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0), true};
}

Correlation flip_correlation(const CompassDistribution& original, const CompassDistribution& flipped_run) {
  const CompassDistribution mirrored = flip_compass(flipped_run);
  return pearson(original.probs, mirrored.probs);
}

}  // namespace creg
