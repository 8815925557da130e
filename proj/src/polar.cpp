#include "creg/polar.hpp"

#include <algorithm>
#include <cmath>

#include "creg/error.hpp"

namespace creg {

std::string_view to_string(SigmaRule r) noexcept {
  return r == SigmaRule::RadiusScaled ? "radius_scaled" : "distance_scaled";
}

void PolarConfig::validate() const {
  if (sectors < 2) throw Error(ErrorCode::InvalidArgument, "sector count must be >= 2");
  if (!(sigma_r > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma_r must be positive");
  if (!(rho_r > 0.0)) throw Error(ErrorCode::InvalidArgument, "rho_r must be positive");
}

int PolarConfig::sector_of(double angle_deg) const noexcept {
  const double w = sector_width();
  const auto k = static_cast<long>(std::floor((angle_deg + 0.5 * w) / w));
  return static_cast<int>(((k % sectors) + sectors) % sectors);
}

double PolarConfig::sigma(double d_ab) const noexcept {
  const double base = sigma_r * r_max(d_ab);
  return sigma_rule == SigmaRule::RadiusScaled ? base : base * d_ab;
}

namespace {

void fill_polar(GridGeometry& g) {
  const std::size_t n = g.cells();
  g.theta_deg.resize(n);
  g.rho.resize(n);
  g.zero_radius.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    g.rho[i] = std::hypot(g.dx[i], g.dy[i]);
    if (g.rho[i] == 0.0) {
      g.theta_deg[i] = 0.0;
      g.zero_radius[i] = 1;
    } else {
      g.theta_deg[i] = polar_angle_deg(g.dx[i], g.dy[i]);
    }
  }
}

}  // namespace

GridGeometry build_grid_geometry(std::size_t grid_h, std::size_t grid_w, double image_w, double image_h,
                                 Point ref_center) {
  if (grid_h == 0 || grid_w == 0 || !(image_w > 0.0) || !(image_h > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "grid and image dims must be positive");
  }
  if (ref_center.x < 0.0 || ref_center.x > image_w || ref_center.y < 0.0 || ref_center.y > image_h) {
    throw Error(ErrorCode::OutOfImage, "reference center lies outside the image");
  }
  GridGeometry g;
  g.grid_h = grid_h;
  g.grid_w = grid_w;
  g.image_w = image_w;
  g.image_h = image_h;
  g.ref_center = ref_center;
  g.dx.resize(grid_h * grid_w);
  g.dy.resize(grid_h * grid_w);
  const double gw = static_cast<double>(grid_w);
  const double gh = static_cast<double>(grid_h);
  // Offsets as ((2v+1) * W - 2 * G * x_A) / (2 * G): for dyadic box coordinates
  // every step is exact, so a mirrored image yields exactly negated offsets.
  for (std::size_t u = 0; u < grid_h; ++u) {
    const double ny = (2.0 * static_cast<double>(u) + 1.0) * image_h - 2.0 * gh * ref_center.y;
    for (std::size_t v = 0; v < grid_w; ++v) {
      const double nx = (2.0 * static_cast<double>(v) + 1.0) * image_w - 2.0 * gw * ref_center.x;
      g.dx[u * grid_w + v] = nx / (2.0 * gw);
      g.dy[u * grid_w + v] = ny / (2.0 * gh);
    }
  }
  fill_polar(g);
  return g;
}

GridGeometry mirror_geometry(const GridGeometry& geom) {
  GridGeometry g = geom;
  g.ref_center.x = geom.image_w - geom.ref_center.x;
  for (std::size_t u = 0; u < geom.grid_h; ++u) {
    for (std::size_t v = 0; v < geom.grid_w; ++v) {
      const std::size_t src = u * geom.grid_w + (geom.grid_w - 1 - v);
      g.dx[u * geom.grid_w + v] = -geom.dx[src];
      g.dy[u * geom.grid_w + v] = geom.dy[src];
    }
  }
  fill_polar(g);
  return g;
}

CompassDistribution make_distribution(std::vector<double> masses) {
  CompassDistribution out;
  const int K = static_cast<int>(masses.size());
  if (K < 2) throw Error(ErrorCode::InvalidArgument, "a compass needs at least two sectors");
  // Sum in ascending order so the total does not depend on sector labelling.
  std::vector<double> sorted = masses;
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  for (double m : sorted) total += m;

  if (!(total > 0.0)) {
    out.probs.assign(K, 1.0 / K);
    out.degenerate = true;
    out.peak_index = 0;
  } else {
    out.probs.resize(K);
    for (int k = 0; k < K; ++k) out.probs[k] = masses[k] / total;
    out.peak_index = static_cast<int>(std::max_element(out.probs.begin(), out.probs.end()) - out.probs.begin());
  }
  out.peak_angle = out.peak_index * (360.0 / K);
  return out;
}

CompassDistribution compass_bin(const RelevanceField& field, const GridGeometry& geom, double d_ab,
                                const PolarConfig& cfg) {
  cfg.validate();
  if (!(d_ab > 0.0)) throw Error(ErrorCode::CoincidentCenters, "reference and target centers coincide");
  if (field.grid_h != geom.grid_h || field.grid_w != geom.grid_w || field.values.size() != geom.cells()) {
    throw Error(ErrorCode::GridMismatch, "relevance field and grid geometry disagree on grid size");
  }
  const double r_max = cfg.r_max(d_ab);
  const double sigma = cfg.sigma(d_ab);
  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
  const auto n = static_cast<std::int64_t>(geom.cells());

  std::vector<double> weight(static_cast<std::size_t>(n));
  std::vector<int> sector(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(i);
    const double rho = geom.rho[c];
    const double r = field.values[c];
    weight[c] = (rho > r_max || r == 0.0 || geom.zero_radius[c]) ? 0.0 : r * std::exp(-(rho * rho) * inv_two_sigma_sq);
    sector[c] = cfg.sector_of(geom.theta_deg[c]);
  }

  // Per-sector sums over sorted contributions: order-independent, so a
  // relabelled (mirrored) grid produces bit-identical sector masses.
  std::vector<std::vector<double>> buckets(static_cast<std::size_t>(cfg.sectors));
  for (std::size_t c = 0; c < weight.size(); ++c) {
    if (weight[c] > 0.0) buckets[static_cast<std::size_t>(sector[c])].push_back(weight[c]);
  }
  std::vector<double> masses(static_cast<std::size_t>(cfg.sectors), 0.0);
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < cfg.sectors; ++k) {
    auto& b = buckets[static_cast<std::size_t>(k)];
    std::sort(b.begin(), b.end());
    double acc = 0.0;
    for (double w : b) acc += w;
    masses[static_cast<std::size_t>(k)] = acc;
  }
  return make_distribution(std::move(masses));
}

double true_direction(const BBox& ref_box, const BBox& tgt_box) {
  const Point a = ref_box.center();
  const Point b = tgt_box.center();
  if (a == b) throw Error(ErrorCode::CoincidentCenters, "reference and target centers coincide");
  return polar_angle_deg(b.x - a.x, b.y - a.y);
}

CompassDistribution flip_compass(const CompassDistribution& dist) {
  const int K = dist.sectors();
  if (K % 2 != 0) throw Error(ErrorCode::InvalidArgument, "mirror relabelling needs an even sector count");
  std::vector<double> probs(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) probs[static_cast<std::size_t>(((K / 2 - k) % K + K) % K)] = dist.probs[static_cast<std::size_t>(k)];
  CompassDistribution out;
  out.probs = std::move(probs);
  out.degenerate = dist.degenerate;
  out.peak_index = static_cast<int>(std::max_element(out.probs.begin(), out.probs.end()) - out.probs.begin());
  out.peak_angle = out.peak_index * (360.0 / K);
  return out;
}

}  // namespace creg
