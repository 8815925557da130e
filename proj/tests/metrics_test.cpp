#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "creg/metrics.hpp"
#include "creg/reference/serial.hpp"
#include "support.hpp"

using namespace creg;
using testing::error_of;

namespace {

SampleMetrics metric(std::string id, double d, DirectionClass gt, DirectionClass pred, bool degenerate = false) {
  SampleMetrics m;
  m.sample_id = std::move(id);
  m.dae = d;
  m.ea = ea(d);
  m.gt = gt;
  m.predicted = pred;
  m.correct = gt == pred;
  m.degenerate = degenerate;
  return m;
}

std::vector<SampleMetrics> random_metrics(Rng& rng, std::size_t n) {
  std::vector<SampleMetrics> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto gt = class_from_index(static_cast<int>(uniform_index(rng, 4)));
    const auto pred = class_from_index(static_cast<int>(uniform_index(rng, 4)));
    out.push_back(metric("s" + std::to_string(i), 180.0 * uniform01(rng), gt, pred, uniform_index(rng, 10) == 0));
  }
  return out;
}

bool same_ci(const ConfidenceInterval& a, const ConfidenceInterval& b) {
  return a.lower == b.lower && a.upper == b.upper && a.degenerate == b.degenerate;
}

bool same_sub(const SubReport& a, const SubReport& b) {
  return a.n == b.n && a.mean_dae == b.mean_dae && a.ea_rate == b.ea_rate && same_ci(a.dae_ci, b.dae_ci) &&
         same_ci(a.ea_ci, b.ea_ci);
}

}  // namespace

TEST_CASE("dae examples") {
  CHECK(dae(0, 0) == 0.0);
  CHECK(dae(350, 10) == doctest::Approx(20.0));
  CHECK(dae(10, 350) == doctest::Approx(20.0));
  CHECK(dae(0, 180) == 180.0);
  CHECK(dae(270, 0) == doctest::Approx(90.0));
}

TEST_CASE("dae is symmetric and bounded") {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double a = 720.0 * uniform01(rng) - 360.0;
    const double b = 720.0 * uniform01(rng) - 360.0;
    const double d = dae(a, b);
    CHECK(d >= 0.0);
    CHECK(d <= 180.0);
    CHECK(d == doctest::Approx(dae(b, a)).epsilon(1e-12));
    CHECK(dae(a, a) == 0.0);
  }
}

TEST_CASE("ea threshold is inclusive") {
  CHECK(ea(45.0));
  CHECK_FALSE(ea(45.000001));
  CHECK(ea(0.0));
}

TEST_CASE("log softmax at the ground truth") {
  CHECK(log_softmax_gt({1, 1, 1, 1}, DirectionClass::Above) == doctest::Approx(std::log(0.25)).epsilon(1e-14));
  const long double exact = -std::log1p(3.0L * std::exp(-10.0L));
  CHECK(std::abs(log_softmax_gt({10, 0, 0, 0}, DirectionClass::Left) - static_cast<double>(exact)) < 1e-15);
  CHECK(log_softmax_gt({10, 0, 0, 0}, DirectionClass::Left) == doctest::Approx(-0.000136).epsilon(1e-3));
  const Logits z = {0.3, -1.2, 2.5, 0.0};
  for (double c : {-1000.0, 7.5, 1e4}) {
    const Logits s = {z[0] + c, z[1] + c, z[2] + c, z[3] + c};
    CHECK(log_softmax_gt(s, DirectionClass::Right) == doctest::Approx(log_softmax_gt(z, DirectionClass::Right)));
  }
  CHECK(std::isfinite(log_softmax_gt({1000, -1000, 0, 0}, DirectionClass::Right)));
}

TEST_CASE("cos score assembly") {
  const auto t = cos_score(0.0, -0.47, -0.06);
  CHECK(t.delta_true == doctest::Approx(-0.47));
  CHECK(t.delta_opp == doctest::Approx(-0.06));
  CHECK(std::abs(t.cos - 0.41) < 1e-12);
  CHECK(cos_score(-1.0, -1.5, -1.5).cos == 0.0);
  const auto row = cos_score(0.0, -0.476, -0.060);
  CHECK(row.cos == doctest::Approx(0.416));
  CHECK(std::abs(row.cos - 0.417) <= 0.0015);

  Rng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const double b = -3.0 * uniform01(rng), x = -3.0 * uniform01(rng), y = -3.0 * uniform01(rng);
    CHECK(cos_score(b, x, y).cos == doctest::Approx(-cos_score(b, y, x).cos));
  }
}

TEST_CASE("expected random dae") {
  CHECK(expected_random_dae(8) == 90.0);
  CHECK(expected_random_dae(4) == 90.0);
  CHECK(expected_random_dae(2) == 90.0);
  CHECK(expected_random_dae(16) == doctest::Approx(90.0));
  CHECK(error_of([] { expected_random_dae(0); }) == ErrorCode::InvalidArgument);

  Rng rng(21);
  double sum = 0.0;
  const int trials = 100000;
  for (int i = 0; i < trials; ++i) sum += dae(45.0 * static_cast<double>(uniform_index(rng, 8)), 0.0);
  CHECK(std::abs(sum / trials - 90.0) < 1.0);
}

TEST_CASE("random-peak edge accuracy is 2/K") {
  Rng rng(5);
  const int trials = 100000;
  int cont = 0;
  for (int i = 0; i < trials; ++i) {
    const double truth = 360.0 * uniform01(rng);
    const double peak = 45.0 * static_cast<double>(uniform_index(rng, 8));
    cont += ea(dae(peak, truth));
  }
  CHECK(std::abs(static_cast<double>(cont) / trials - 0.25) < 0.01);
}

TEST_CASE("bootstrap basics") {
  BootstrapOptions opt;
  opt.resamples = 2000;
  const std::vector<double> constant(50, 3.25);
  const auto c = bootstrap_ci(constant, Statistic::Mean, opt);
  CHECK(c.lower == 3.25);
  CHECK(c.upper == 3.25);

  Rng rng(1);
  const auto v = testing::uniform_values(rng, 100);
  const auto a = bootstrap_ci(v, Statistic::Mean, opt);
  const auto b = bootstrap_ci(v, Statistic::Mean, opt);
  CHECK(same_ci(a, b));
  CHECK(a.lower < a.upper);
  CHECK(a.level == 0.95);

  const std::vector<double> one = {7.0};
  const auto d = bootstrap_ci(one, Statistic::Mean, opt);
  CHECK(d.degenerate);
  CHECK(d.lower == 7.0);
  CHECK(d.upper == 7.0);

  CHECK(error_of([&] { bootstrap_ci(std::span<const double>{}, Statistic::Mean, opt); }) == ErrorCode::EmptyInput);
}

TEST_CASE("parallel bootstrap equals the serial reference") {
  Rng rng(44);
  for (int trial = 0; trial < 5; ++trial) {
    const auto v = testing::uniform_values(rng, 20 + 40 * trial, -5, 5);
    BootstrapOptions opt;
    opt.resamples = 3000;
    opt.seed = static_cast<std::uint64_t>(trial);
    CHECK(same_ci(bootstrap_ci(v, Statistic::Mean, opt), serial::bootstrap(v, opt)));
  }
}

TEST_CASE("bootstrap coverage on normal data") {
  std::mt19937_64 gen(2024);
  std::normal_distribution<double> normal(1.5, 2.0);
  BootstrapOptions opt;
  opt.resamples = 1000;
  int covered = 0;
  const int outer = 200;
  for (int t = 0; t < outer; ++t) {
    std::vector<double> v(200);
    for (auto& x : v) x = normal(gen);
    opt.seed = static_cast<std::uint64_t>(t);
    const auto ci = bootstrap_ci(v, Statistic::Mean, opt);
    covered += ci.lower <= 1.5 && 1.5 <= ci.upper;
  }
  CHECK(static_cast<double>(covered) / outer >= 0.90);
}

TEST_CASE("aggregate of perfect samples") {
  std::vector<SampleMetrics> s;
  for (int i = 0; i < 12; ++i) s.push_back(metric("p" + std::to_string(i), 0.0, class_from_index(i % 4), class_from_index(i % 4)));
  AggregateOptions opt;
  opt.bootstrap.resamples = 500;
  const auto r = aggregate(s, opt);
  CHECK(r.overall.n == 12);
  CHECK(r.overall.mean_dae == 0.0);
  CHECK(r.overall.ea_rate == 1.0);
  for (const auto& pc : r.per_class) {
    REQUIRE(pc.has_value());
    CHECK(pc->ea_rate == 1.0);
  }
  REQUIRE(r.correct.has_value());
  CHECK(r.correct->n == 12);
  CHECK_FALSE(r.incorrect.has_value());
}

TEST_CASE("one peak per sector against a zero truth averages 90") {
  std::vector<SampleMetrics> s;
  for (int k = 0; k < 8; ++k) s.push_back(metric("k" + std::to_string(k), dae(45.0 * k, 0.0), DirectionClass::Right, DirectionClass::Right));
  AggregateOptions opt;
  opt.bootstrap.resamples = 500;
  const auto r = aggregate(s, opt);
  CHECK(r.overall.mean_dae == doctest::Approx(90.0).epsilon(1e-14));
  CHECK(r.overall.ea_rate == doctest::Approx(3.0 / 8.0));
}

TEST_CASE("aggregate invariants") {
  Rng rng(17);
  auto s = random_metrics(rng, 150);
  AggregateOptions opt;
  opt.bootstrap.resamples = 800;
  const auto r = aggregate(s, opt);

  std::size_t per_class = 0;
  for (const auto& pc : r.per_class) per_class += pc ? pc->n : 0;
  CHECK(per_class == r.overall.n);
  CHECK((r.correct ? r.correct->n : 0) + (r.incorrect ? r.incorrect->n : 0) == r.overall.n);
  CHECK(r.degenerate_count == static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](auto& m) { return m.degenerate; })));

  auto within = [](const SubReport& sub) {
    return sub.dae_ci.lower <= sub.mean_dae && sub.mean_dae <= sub.dae_ci.upper && sub.ea_ci.lower <= sub.ea_rate &&
           sub.ea_rate <= sub.ea_ci.upper;
  };
  CHECK(within(r.overall));
  for (const auto& pc : r.per_class)
    if (pc) CHECK(within(*pc));

  std::shuffle(s.begin(), s.end(), rng);
  const auto p = aggregate(s, opt);
  CHECK(same_sub(r.overall, p.overall));
  for (int c = 0; c < 4; ++c) CHECK(same_sub(*r.per_class[c], *p.per_class[c]));
  CHECK(same_sub(*r.correct, *p.correct));

  opt.exclude_degenerate = true;
  const auto e = aggregate(s, opt);
  CHECK(e.excluded_count == r.degenerate_count);
  CHECK(e.overall.n == r.overall.n - r.degenerate_count);
}

TEST_CASE("correct subset is the same under either targeting mode") {
  Rng rng(8);
  auto gt_run = random_metrics(rng, 60);
  auto pred_run = gt_run;
  for (auto& m : pred_run)
    if (!m.correct) m.dae = 180.0 - m.dae;
  AggregateOptions opt;
  opt.bootstrap.resamples = 500;
  const auto a = aggregate(gt_run, opt);
  const auto b = aggregate(pred_run, opt);
  CHECK(same_sub(*a.correct, *b.correct));
}

TEST_CASE("aggregate attaches a cos summary") {
  std::vector<SampleMetrics> s = {metric("a", 10, DirectionClass::Left, DirectionClass::Left),
                                  metric("b", 20, DirectionClass::Right, DirectionClass::Left)};
  std::vector<CosEntry> c = {{"a", cos_score(0, -0.5, -0.1)}, {"b", cos_score(0, -0.3, -0.1)}};
  AggregateOptions opt;
  opt.bootstrap.resamples = 200;
  const auto r = aggregate(s, opt, std::span<const CosEntry>(c), 3);
  REQUIRE(r.cos.has_value());
  CHECK(r.cos->n == 2);
  CHECK(r.cos->skipped == 3);
  CHECK(r.cos->cos == doctest::Approx(0.3));
  CHECK(r.cos->mean_delta_true == doctest::Approx(-0.4));
  CHECK(error_of([] { aggregate(std::span<const SampleMetrics>{}); }) == ErrorCode::EmptyInput);
}

TEST_CASE("score_sample derives flags from the compass") {
  const auto d = make_distribution({0.1, 0.5, 0.2, 0.1, 0.0, 0.0, 0.0, 0.1});
  const auto m = score_sample("x", d, 30.0, DirectionClass::Right, DirectionClass::Above);
  CHECK(m.dae == doctest::Approx(15.0));
  CHECK(m.ea);
  CHECK_FALSE(m.correct);
  CHECK_FALSE(m.degenerate);
}

TEST_CASE("pearson and flip correlation") {
  const std::vector<double> a = {1, 2, 3, 4}, b = {2, 4, 6, 8}, c = {4, 3, 2, 1}, flat = {1, 1, 1, 1};
  CHECK(pearson(a, b).r == doctest::Approx(1.0));
  CHECK(pearson(a, c).r == doctest::Approx(-1.0));
  CHECK_FALSE(pearson(a, flat).defined);

  const auto orig = make_distribution({0.4, 0.1, 0.1, 0.05, 0.05, 0.1, 0.1, 0.1});
  CHECK(flip_correlation(orig, flip_compass(orig)).r == doctest::Approx(1.0));
  CHECK_FALSE(flip_correlation(orig, make_distribution(std::vector<double>(8, 1.0))).defined);

  Rng rng(12);
  double sum = 0.0;
  int defined = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto r = flip_correlation(make_distribution(testing::uniform_values(rng, 8)),
                                    make_distribution(testing::uniform_values(rng, 8)));
    if (!r.defined) continue;
    sum += r.r;
    ++defined;
  }
  CHECK(std::abs(sum / defined) < 0.1);
}
