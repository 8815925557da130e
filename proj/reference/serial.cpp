#include "creg/reference/serial.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "creg/rng.hpp"

namespace creg::serial {

std::vector<double> gradxact(const TensorBlob& hidden, const TensorBlob& grad) {
  const auto tokens = hidden.dim(0);
  const auto dims = hidden.dim(1);
  std::vector<double> out(tokens);
  for (std::uint64_t j = 0; j < tokens; ++j) {
    double acc = 0.0;
    for (std::uint64_t d = 0; d < dims; ++d) acc += grad[j * dims + d] * hidden[j * dims + d];
    out[j] = std::fabs(acc);
  }
  return out;
}

namespace {

bool in_sector(double theta, int k, const PolarConfig& cfg) {
  const double w = 360.0 / cfg.sectors;
  double lo = k * w - w / 2.0;
  double hi = k * w + w / 2.0;
  if (lo < 0.0) return theta >= lo + 360.0 || theta < hi;
  return theta >= lo && theta < hi;
}

}  // namespace

NaiveCompass compass(std::span<const double> field, std::size_t grid_h, std::size_t grid_w, double image_w,
                     double image_h, Point ref_center, double d_ab, const PolarConfig& cfg) {
  const double r_max = cfg.rho_r * d_ab;
  double sigma = cfg.sigma_r * r_max;
  if (cfg.sigma_rule == SigmaRule::DistanceScaled) sigma *= d_ab;

  std::vector<double> mass(static_cast<std::size_t>(cfg.sectors), 0.0);
  for (std::size_t u = 0; u < grid_h; ++u) {
    for (std::size_t v = 0; v < grid_w; ++v) {
      const double x = (static_cast<double>(v) + 0.5) * image_w / static_cast<double>(grid_w);
      const double y = (static_cast<double>(u) + 0.5) * image_h / static_cast<double>(grid_h);
      const double dx = x - ref_center.x;
      const double dy = y - ref_center.y;
      const double rho = std::sqrt(dx * dx + dy * dy);
      if (rho > r_max || rho == 0.0) continue;
      double theta = std::atan2(-dy, dx) * 180.0 / std::numbers::pi;
      if (theta < 0.0) theta += 360.0;
      if (theta >= 360.0) theta -= 360.0;
      const double wgt = field[u * grid_w + v] * std::exp(-rho * rho / (2.0 * sigma * sigma));
      for (int k = 0; k < cfg.sectors; ++k) {
        if (in_sector(theta, k, cfg)) {
          mass[static_cast<std::size_t>(k)] += wgt;
          break;
        }
      }
    }
  }
  NaiveCompass out;
  double total = 0.0;
  for (double m : mass) total += m;
  out.probs.resize(mass.size());
  if (total <= 0.0) {
    std::fill(out.probs.begin(), out.probs.end(), 1.0 / cfg.sectors);
    out.degenerate = true;
    return out;
  }
  for (std::size_t k = 0; k < mass.size(); ++k) out.probs[k] = mass[k] / total;
  for (std::size_t k = 1; k < mass.size(); ++k) {
    if (out.probs[k] > out.probs[static_cast<std::size_t>(out.peak)]) out.peak = static_cast<int>(k);
  }
  return out;
}

std::vector<double> rollout(const TensorBlob& attention, std::uint64_t vision_begin, std::uint64_t vision_end,
                            std::uint64_t last_token) {
  const auto L = attention.dim(0);
  const auto H = attention.dim(1);
  const auto T = attention.dim(2);
  using Matrix = std::vector<std::vector<double>>;
  Matrix R(T, std::vector<double>(T, 0.0));
  for (std::uint64_t i = 0; i < T; ++i) R[i][i] = 1.0;

  for (std::uint64_t l = 0; l < L; ++l) {
    Matrix A(T, std::vector<double>(T, 0.0));
    for (std::uint64_t i = 0; i < T; ++i) {
      double row_sum = 0.0;
      for (std::uint64_t j = 0; j < T; ++j) {
        double mean = 0.0;
        for (std::uint64_t h = 0; h < H; ++h) mean += attention[((l * H + h) * T + i) * T + j];
        mean /= static_cast<double>(H);
        A[i][j] = 0.5 * mean + (i == j ? 0.5 : 0.0);
        row_sum += A[i][j];
      }
      for (std::uint64_t j = 0; j < T; ++j) A[i][j] /= row_sum;
    }
    Matrix next(T, std::vector<double>(T, 0.0));
    for (std::uint64_t i = 0; i < T; ++i) {
      for (std::uint64_t k = 0; k < T; ++k) {
        for (std::uint64_t j = 0; j < T; ++j) next[i][j] += A[i][k] * R[k][j];
      }
    }
    R = std::move(next);
  }
  return {R[last_token].begin() + static_cast<std::ptrdiff_t>(vision_begin),
          R[last_token].begin() + static_cast<std::ptrdiff_t>(vision_end)};
}

ConfidenceInterval bootstrap(std::span<const double> values, const BootstrapOptions& options) {
  ConfidenceInterval ci;
  ci.level = options.level;
  const std::size_t n = values.size();
  if (n == 1) {
    ci.lower = ci.upper = values[0];
    ci.degenerate = true;
    return ci;
  }
  std::vector<double> stats;
  stats.reserve(options.resamples);
  for (std::size_t b = 0; b < options.resamples; ++b) {
    Rng rng(derive_seed(options.seed, b));
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += values[uniform_index(rng, n)];
    stats.push_back(acc / static_cast<double>(n));
  }
  std::sort(stats.begin(), stats.end());
  auto q = [&](double p) {
    const double pos = p * static_cast<double>(stats.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(lo + 1, stats.size() - 1);
    return stats[lo] + (stats[hi] - stats[lo]) * (pos - static_cast<double>(lo));
  };
  const double alpha = 1.0 - options.level;
  ci.lower = q(alpha / 2.0);
  ci.upper = q(1.0 - alpha / 2.0);
  return ci;
}

}  // namespace creg::serial
