#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "creg/attribution.hpp"
#include "creg/reference/serial.hpp"
#include "support.hpp"

using namespace creg;
using testing::error_of;

namespace {

constexpr auto L = DirectionClass::Left;
constexpr auto R = DirectionClass::Right;
constexpr auto A = DirectionClass::Above;
constexpr auto B = DirectionClass::Below;

TensorBlob matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return TensorBlob(DType::F64, {rows, cols}, std::move(v));
}

BlobRef resident(const std::string& name, TensorBlob t) {
  return BlobRef(name, std::make_shared<const TensorBlob>(std::move(t)));
}

// Per-token relevance r_j realized as h = g = sqrt(r_j) in one channel.
TensorBlob root_matrix(const std::vector<double>& r, std::size_t d = 2) {
  std::vector<double> v(r.size() * d, 0.0);
  for (std::size_t j = 0; j < r.size(); ++j) v[j * d] = std::sqrt(r[j]);
  return matrix(r.size(), d, v);
}

SampleRecord grid_sample(std::size_t gh, std::size_t gw, Logits logits, DirectionClass gt) {
  SampleRecord s;
  s.sample_id = "s";
  s.image_w = 64;
  s.image_h = 64;
  s.ref_box = {24, 24, 16, 16};
  s.tgt_box = {48, 24, 8, 16};
  s.gt_class = gt;
  s.logits = logits;
  s.grid_h = gh;
  s.grid_w = gw;
  return s;
}

void add_layer(SampleRecord& s, int layer, const std::vector<double>& r, GradTarget target) {
  const auto m = root_matrix(r);
  s.hidden[layer] = resident("h" + std::to_string(layer), m);
  s.grads[target][layer] = resident("g" + std::to_string(layer), m);
}

}  // namespace

TEST_CASE("contrast pairs follow the case split") {
  auto p = resolve_contrast({2, 5, 1, 0}, TargetMode::GtTargeted, L);
  CHECK(p.tgt == L);
  CHECK(p.neg == R);
  p = resolve_contrast({5, 2, 1, 0}, TargetMode::GtTargeted, L);
  CHECK(p.tgt == L);
  CHECK(p.neg == R);
  const auto q = resolve_contrast({5, 2, 1, 0}, TargetMode::PredTargeted, L);
  CHECK(q.tgt == p.tgt);
  CHECK(q.neg == p.neg);
  CHECK_FALSE(q.tie);
  const auto w = resolve_contrast({2, 5, 1, 0}, TargetMode::PredTargeted, L);
  CHECK(w.tgt == R);
  CHECK(w.neg == L);
}

TEST_CASE("ties break toward the lower index and are flagged") {
  auto p = resolve_contrast({3, 3, 0, 0}, TargetMode::PredTargeted, B);
  CHECK(p.tgt == L);
  CHECK(p.neg == R);
  CHECK(p.tie);
  p = resolve_contrast({5, 1, 1, 0}, TargetMode::PredTargeted, L);
  CHECK(p.neg == R);
  CHECK(p.tie);
  p = resolve_contrast({0, 0, 0, 0}, TargetMode::GtTargeted, A);
  CHECK(p.tgt == A);
  CHECK(p.neg == L);
  CHECK(p.tie);
}

TEST_CASE("contrast never pairs a class with itself over all orderings") {
  std::array<double, 4> base = {0.0, 1.0, 2.0, 3.0};
  std::sort(base.begin(), base.end());
  int checked = 0;
  do {
    for (auto gt : kAllClasses) {
      for (auto mode : {TargetMode::GtTargeted, TargetMode::PredTargeted}) {
        const auto p = resolve_contrast(base, mode, gt);
        CHECK(p.tgt != p.neg);
        CHECK_FALSE(p.tie);
        if (mode == TargetMode::GtTargeted) CHECK(p.tgt == gt);
        const int top = static_cast<int>(std::max_element(base.begin(), base.end()) - base.begin());
        if (mode == TargetMode::PredTargeted) CHECK(index_of(p.tgt) == top);
        ++checked;
      }
    }
  } while (std::next_permutation(base.begin(), base.end()));
  CHECK(checked == 24 * 8);
}

TEST_CASE("contrast rejects non-finite logits") {
  CHECK(error_of([] { resolve_contrast({0, NAN, 0, 0}, TargetMode::GtTargeted, L); }) == ErrorCode::NonFinite);
}

TEST_CASE("grad x act of ones") {
  const auto ones = matrix(3, 4, std::vector<double>(12, 1.0));
  const auto raw = gradxact_raw(ones, ones);
  CHECK(raw == std::vector<double>{4, 4, 4});
  const auto constant = gradxact_layer(ones, ones);
  CHECK(constant.degenerate);
  CHECK(constant.values == std::vector<double>{0, 0, 0});

  std::vector<double> v(12, 1.0);
  std::fill(v.begin() + 8, v.end(), 0.0);
  const auto with_zero = matrix(3, 4, v);
  const auto r = gradxact_layer(with_zero, ones);
  CHECK_FALSE(r.degenerate);
  CHECK(r.values == std::vector<double>{1, 1, 0});
}

TEST_CASE("zero gradient is degenerate") {
  const auto h = matrix(2, 2, {1, 2, 3, 4});
  const auto r = gradxact_layer(h, TensorBlob::zeros(DType::F64, {2, 2}));
  CHECK(r.degenerate);
  CHECK(r.values == std::vector<double>{0, 0});
}

TEST_CASE("grad x act takes the absolute value") {
  const auto h = matrix(3, 1, {1, 0, 0});
  const auto g = matrix(3, 1, {-3, 0, 0});
  const auto r = gradxact_layer(h, g);
  CHECK(r.values == std::vector<double>{1, 0, 0});
}

TEST_CASE("grad x act matches the serial loop on random inputs") {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 1 + uniform_index(rng, 300);
    const std::size_t d = 1 + uniform_index(rng, 17);
    const auto h = matrix(n, d, testing::uniform_values(rng, n * d, -2, 2));
    const auto g = matrix(n, d, testing::uniform_values(rng, n * d, -2, 2));
    CHECK(gradxact_raw(h, g) == serial::gradxact(h, g));
  }
  CHECK(error_of([] { gradxact_raw(matrix(2, 2, {1, 2, 3, 4}), matrix(1, 4, {1, 2, 3, 4})); }) ==
        ErrorCode::ShapeMismatch);
}

TEST_CASE("layer weights are a softmax of layer maxima") {
  std::vector<TokenScores> two = {{{1.0, 0.0}, false}, {{0.5, 0.0}, false}};
  const auto agg = aggregate_layers(two);
  const long double e1 = std::exp(1.0L), e05 = std::exp(0.5L);
  CHECK(agg.weights.weights[0] == doctest::Approx(static_cast<double>(e1 / (e1 + e05))).epsilon(1e-15));
  CHECK(agg.weights.weights[1] == doctest::Approx(static_cast<double>(e05 / (e1 + e05))).epsilon(1e-15));
  CHECK(agg.weights.weights[0] == doctest::Approx(0.622).epsilon(1e-3));

  std::vector<TokenScores> same = {{{1.0, 0.2}, false}, {{0.3, 1.0}, false}};
  const auto eq = aggregate_layers(same);
  CHECK(eq.weights.weights[0] == 0.5);
  CHECK(eq.weights.weights[1] == 0.5);

  std::vector<TokenScores> one = {{{0.25, 1.0, 0.0}, false}};
  const auto single = aggregate_layers(one, std::vector<int>{-2});
  CHECK(single.weights.weights == std::vector<double>{1.0});
  CHECK(single.scores.values == one[0].values);
  CHECK(single.weights.layers == std::vector<int>{-2});
}

TEST_CASE("aggregation is a convex combination") {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const std::size_t layers = 1 + uniform_index(rng, 5);
    const std::size_t n = 1 + uniform_index(rng, 40);
    std::vector<TokenScores> fields;
    for (std::size_t l = 0; l < layers; ++l) fields.push_back({testing::uniform_values(rng, n), false});
    const auto agg = aggregate_layers(fields);
    const double wsum = std::accumulate(agg.weights.weights.begin(), agg.weights.weights.end(), 0.0);
    CHECK(wsum == doctest::Approx(1.0).epsilon(1e-12));
    for (double w : agg.weights.weights) {
      CHECK(w > 0.0);
      CHECK(w <= 1.0);
    }
    for (std::size_t j = 0; j < n; ++j) {
      double lo = 1e300, hi = -1e300;
      for (const auto& f : fields) {
        lo = std::min(lo, f.values[j]);
        hi = std::max(hi, f.values[j]);
      }
      CHECK(agg.scores.values[j] >= lo - 1e-12);
      CHECK(agg.scores.values[j] <= hi + 1e-12);
    }
  }
  std::vector<TokenScores> ragged = {{{1.0, 0.0}, false}, {{1.0}, false}};
  CHECK(error_of([&] { aggregate_layers(ragged); }) == ErrorCode::ShapeMismatch);
  CHECK(error_of([] { aggregate_layers({}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("creg follows the only layer carrying signal") {
  auto s = grid_sample(2, 2, {0, 3, 0, 1}, R);
  const std::vector<double> signal = {0.0, 0.2, 1.0, 0.4};
  const std::vector<double> flat = {0.0, 0.0, 0.0, 0.0};
  add_layer(s, -2, signal, GradTarget::Pred);
  for (int l : {-3, -4, -5}) add_layer(s, l, flat, GradTarget::Pred);
  LayerWeights w;
  const auto f = creg_relevance(s, TargetMode::PredTargeted, {}, &w);
  const long double e = std::exp(1.0L);
  const double w0 = static_cast<double>(e / (e + 3.0L));
  CHECK(w.weights[0] == doctest::Approx(w0).epsilon(1e-14));
  CHECK(w.weights[0] == *std::max_element(w.weights.begin(), w.weights.end()));
  CHECK(w.weights[1] == w.weights[3]);
  for (std::size_t j = 0; j < 4; ++j) CHECK(f.values[j] == doctest::Approx(w0 * signal[j]).epsilon(1e-14));
  CHECK(f.source == RelevanceSource::Creg);
  CHECK_FALSE(f.degenerate);
}

TEST_CASE("creg over all-zero layers is degenerate") {
  auto s = grid_sample(2, 2, {0, 3, 0, 1}, R);
  for (int l : {-2, -3, -4, -5}) add_layer(s, l, {0, 0, 0, 0}, GradTarget::Pred);
  const auto f = creg_relevance(s, TargetMode::PredTargeted);
  CHECK(f.degenerate);
  CHECK(f.values == std::vector<double>{0, 0, 0, 0});
}

TEST_CASE("one-layer creg reduces to contrastive grad x act") {
  auto s = grid_sample(2, 2, {0, 3, 0, 1}, R);
  add_layer(s, -2, {0.1, 0.5, 0.9, 0.3}, GradTarget::Pred);
  CregOptions o;
  o.layers = {-2};
  const auto f = creg_relevance(s, TargetMode::PredTargeted, o);
  const auto direct = gradxact_layer(*s.hidden.at(-2).load(), *s.grads.at(GradTarget::Pred).at(-2).load());
  CHECK(f.values == direct.values);
}

TEST_CASE("both modes agree bitwise when the prediction is right") {
  Rng rng(9);
  for (int t = 0; t < 50; ++t) {
    const auto gt = kAllClasses[uniform_index(rng, 4)];
    Logits lg{};
    for (auto& z : lg) z = uniform01(rng);
    lg[index_of(gt)] = 2.0;
    auto s = grid_sample(3, 3, lg, gt);
    for (int l : {-2, -3, -4, -5}) {
      const auto r = testing::uniform_values(rng, 9);
      add_layer(s, l, r, GradTarget::Gt);
      // A differing pred stack must not be consulted: both modes share one target.
      add_layer(s, l, testing::uniform_values(rng, 9), GradTarget::Pred);
      s.hidden[l] = resident("h", root_matrix(r));
    }
    const auto a = creg_relevance(s, TargetMode::GtTargeted);
    const auto b = creg_relevance(s, TargetMode::PredTargeted);
    REQUIRE(a.values.size() == b.values.size());
    CHECK(std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("creg reports missing or mismatched gradients") {
  auto s = grid_sample(2, 2, {0, 3, 0, 1}, L);
  add_layer(s, -2, {0, 1, 0, 0}, GradTarget::Plain);
  CHECK(error_of([&] { creg_relevance(s, TargetMode::GtTargeted); }) == ErrorCode::MissingTarget);
  add_layer(s, -2, {0, 1, 0, 0}, GradTarget::Gt);
  CregOptions o;
  o.layers = {-2, -3};
  CHECK(error_of([&] { creg_relevance(s, TargetMode::GtTargeted, o); }) == ErrorCode::MissingTarget);
  o.layers = {-2};
  s.contrast[GradTarget::Gt] = {L, B};
  CHECK(error_of([&] { creg_relevance(s, TargetMode::GtTargeted, o); }) == ErrorCode::MissingTarget);
  s.contrast[GradTarget::Gt] = {L, R};
  CHECK_NOTHROW(creg_relevance(s, TargetMode::GtTargeted, o));
  o.contrastive = false;
  CHECK_NOTHROW(creg_relevance(s, TargetMode::GtTargeted, o));
}

TEST_CASE("random baseline is seeded and uniform") {
  CHECK(baseline_random(8, 8, 0).values == baseline_random(8, 8, 0).values);
  CHECK(baseline_random(8, 8, 0).values != baseline_random(8, 8, 1).values);
  const auto big = baseline_random(100, 1000, 42);
  const double mean = std::accumulate(big.values.begin(), big.values.end(), 0.0) / 1e5;
  CHECK(mean >= 0.49);
  CHECK(mean <= 0.51);
  CHECK(*std::min_element(big.values.begin(), big.values.end()) >= 0.0);
  CHECK(*std::max_element(big.values.begin(), big.values.end()) < 1.0);
}

TEST_CASE("gradient norm baseline") {
  const auto r = baseline_gradnorm(matrix(2, 2, {3, 4, 0, 0}));
  CHECK(r.values == std::vector<double>{1, 0});
  CHECK(baseline_gradnorm(TensorBlob::zeros(DType::F64, {3, 2})).degenerate);
  const auto one = baseline_gradnorm(matrix(1, 2, {3, 4}));
  CHECK(one.values == std::vector<double>{0});
  CHECK(one.degenerate);
}

TEST_CASE("IG recovers the linear-function attribution") {
  // tau = sum h has gradient 1 everywhere, so attribution_j = sum_d h_{j,d}.
  Rng rng(13);
  const std::size_t n = 12, d = 5;
  const auto hv = testing::uniform_values(rng, n * d, -1, 1);
  const auto h = matrix(n, d, hv);
  const TensorBlob g1(DType::F64, {1, n, d}, std::vector<double>(n * d, 1.0));
  const auto raw = ig_raw(h, g1);
  for (std::size_t j = 0; j < n; ++j) {
    double sum = 0.0;
    for (std::size_t k = 0; k < d; ++k) sum += hv[j * d + k];
    CHECK(raw[j] == doctest::Approx(std::fabs(sum)).epsilon(1e-14));
  }

  const auto gv = testing::uniform_values(rng, n * d, -1, 1);
  std::vector<double> twice(gv);
  twice.insert(twice.end(), gv.begin(), gv.end());
  const auto a = baseline_ig(h, TensorBlob(DType::F64, {1, n, d}, gv));
  const auto b = baseline_ig(h, TensorBlob(DType::F64, {2, n, d}, twice));
  for (std::size_t j = 0; j < n; ++j) CHECK(a.values[j] == doctest::Approx(b.values[j]).epsilon(1e-14));

  CHECK(baseline_ig(h, TensorBlob::zeros(DType::F64, {3, n, d})).degenerate);
  CHECK(error_of([&] { ig_raw(h, TensorBlob::zeros(DType::F64, {0, n, d})); }) == ErrorCode::ShapeMismatch);
}

namespace {

TensorBlob attention_stack(std::size_t layers, std::size_t heads, std::size_t T, Rng& rng) {
  std::vector<double> v(layers * heads * T * T);
  for (std::size_t row = 0; row < layers * heads * T; ++row) {
    double sum = 0.0;
    for (std::size_t j = 0; j < T; ++j) sum += (v[row * T + j] = uniform01(rng) + 1e-3);
    for (std::size_t j = 0; j < T; ++j) v[row * T + j] /= sum;
  }
  return TensorBlob(DType::F64, {layers, heads, T, T}, v);
}

}  // namespace

TEST_CASE("rollout of identity attention is zero") {
  const std::size_t T = 5;
  std::vector<double> v(2 * T * T, 0.0);
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t i = 0; i < T; ++i) v[l * T * T + i * T + i] = 1.0;
  const auto r = baseline_rollout(TensorBlob(DType::F64, {2, 1, T, T}, v), 0, 4, 4);
  CHECK(r.degenerate);
  CHECK(r.values == std::vector<double>(4, 0.0));
  CHECK(rollout_raw(TensorBlob(DType::F64, {2, 1, T, T}, v), 0, 4, 4) == std::vector<double>(4, 0.0));
}

TEST_CASE("uniform last-token row gives uniform vision relevance") {
  const std::size_t T = 6;
  Rng rng(1);
  auto stack = attention_stack(1, 1, T, rng);
  for (std::size_t j = 0; j < T; ++j) stack[(T - 1) * T + j] = 1.0 / T;
  const auto raw = rollout_raw(stack, 1, 5, T - 1);
  for (double x : raw) CHECK(x == doctest::Approx(raw[0]).epsilon(1e-15));
  CHECK(raw[0] == doctest::Approx(0.5 / T).epsilon(1e-12));
  const auto r = baseline_rollout(stack, 1, 5, T - 1);
  CHECK(r.degenerate);
}

TEST_CASE("rollout matches the chained matrix product") {
  Rng rng(17);
  for (int t = 0; t < 50; ++t) {
    const std::size_t layers = 1 + uniform_index(rng, 3);
    const std::size_t heads = 1 + uniform_index(rng, 4);
    const std::size_t T = 2 + uniform_index(rng, 7);
    const auto stack = attention_stack(layers, heads, T, rng);
    const std::size_t vb = uniform_index(rng, T - 1);
    const std::size_t ve = vb + 1 + uniform_index(rng, T - vb - 1);
    const std::size_t last = uniform_index(rng, T);
    const auto fast = rollout_raw(stack, vb, ve, last);
    const auto slow = serial::rollout(stack, vb, ve, last);
    REQUIRE(fast.size() == slow.size());
    for (std::size_t j = 0; j < fast.size(); ++j) CHECK(fast[j] == doctest::Approx(slow[j]).epsilon(1e-12));
  }
}

TEST_CASE("rollout rejects rows that are not stochastic") {
  Rng rng(2);
  auto stack = attention_stack(1, 2, 4, rng);
  stack[0] += 1e-3;
  stack[16] += 1e-3;
  CHECK(error_of([&] { rollout_raw(stack, 0, 3, 3); }) == ErrorCode::MalformedAttention);
  auto ok = attention_stack(1, 2, 4, rng);
  ok[0] += 5e-5;
  ok[16] += 5e-5;
  CHECK_NOTHROW(rollout_raw(ok, 0, 3, 3));
  CHECK(error_of([&] { rollout_raw(ok, 0, 5, 3); }) == ErrorCode::MalformedAttention);
}

TEST_CASE("bilinear upsampling matches a separable corner-aligned oracle") {
  const std::vector<double> src = {1.0, 2.0, 3.0, 5.0};
  const auto out = bilinear_resize(src, 2, 2, 4, 4);
  auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
  for (std::size_t i = 0; i < 4; ++i) {
    const double ty = i / 3.0;
    const double left = lerp(src[0], src[2], ty);
    const double right = lerp(src[1], src[3], ty);
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(out[i * 4 + j] == doctest::Approx(lerp(left, right, j / 3.0)).epsilon(1e-12));
    }
  }
  CHECK(out[0] == 1.0);
  CHECK(out[3] == 2.0);
  CHECK(out[12] == 3.0);
  CHECK(out[15] == 5.0);

  Rng rng(4);
  const auto img = testing::uniform_values(rng, 5 * 7);
  CHECK(bilinear_resize(img, 5, 7, 5, 7) == img);
  const auto mid = bilinear_resize(src, 2, 2, 1, 1);
  CHECK(mid[0] == doctest::Approx(2.75));
}

TEST_CASE("GradCAM rectifies and normalizes by the maximum") {
  const auto ones = TensorBlob(DType::F64, {1, 2, 2}, {1, 1, 1, 1});
  const auto uniform = baseline_gradcam(ones, ones, 4, 4);
  CHECK_FALSE(uniform.degenerate);
  for (double v : uniform.values) CHECK(v == 1.0);

  const auto neg = TensorBlob(DType::F64, {1, 2, 2}, {-1, -2, -1, -3});
  const auto zero = baseline_gradcam(neg, ones, 4, 4);
  CHECK(zero.degenerate);
  for (double v : zero.values) CHECK(v == 0.0);

  const auto act = TensorBlob(DType::F64, {2, 2, 2}, {1, 2, 3, 4, 4, 0, 0, 0});
  const auto grad = TensorBlob(DType::F64, {2, 2, 2}, {1, 1, 1, 1, -1, -1, -1, -1});
  // alpha = (1, -1): map = (1-4, 2, 3, 4) -> relu (0, 2, 3, 4)
  const auto m = baseline_gradcam(act, grad, 2, 2);
  CHECK(m.values == std::vector<double>{0.0, 0.5, 0.75, 1.0});
}

TEST_CASE("single-layer baseline uses the plain gradient at one layer") {
  auto s = grid_sample(2, 2, {0, 3, 0, 1}, R);
  add_layer(s, -2, {0.0, 0.4, 0.2, 0.1}, GradTarget::Plain);
  add_layer(s, -2, {1.0, 0.0, 0.0, 0.0}, GradTarget::Pred);
  s.hidden[-2] = resident("h", root_matrix({0.0, 0.4, 0.2, 0.1}));
  const auto f = baseline_single_layer(s);
  CHECK(f.source == RelevanceSource::SingleLayer);
  CHECK(f.values[0] == 0.0);
  CHECK(f.values[1] == doctest::Approx(1.0));
  CHECK(f.values[2] == doctest::Approx(0.5));
  CHECK(error_of([&] { baseline_single_layer(s, -3); }) == ErrorCode::MissingTarget);
}

TEST_CASE("geometry oracle marks target cells") {
  auto s = grid_sample(4, 4, {0, 1, 0, 0}, R);
  s.tgt_box = {32, 0, 32, 64};
  const auto f = baseline_geometry_oracle(s);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) CHECK(f.at(r, c) == (c >= 2 ? 1.0 : 0.0));

  s.tgt_box = {18, 18, 2, 2};  // no cell center (8, 24, 40, 56) inside
  const auto tiny = baseline_geometry_oracle(s);
  CHECK(std::accumulate(tiny.values.begin(), tiny.values.end(), 0.0) == 1.0);
  CHECK(tiny.at(1, 1) == 1.0);
}

TEST_CASE("every source stays within [0, 1]") {
  Rng rng(21);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 2 + uniform_index(rng, 30);
    const auto h = matrix(n, 3, testing::uniform_values(rng, n * 3, -5, 5));
    const auto g = matrix(n, 3, testing::uniform_values(rng, n * 3, -5, 5));
    for (const auto& scores : {gradxact_layer(h, g), baseline_gradnorm(g),
                               baseline_ig(h, TensorBlob(DType::F64, {1, n, 3}, std::vector<double>(g.values().begin(),
                                                                                                     g.values().end())))}) {
      for (double v : scores.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
}
