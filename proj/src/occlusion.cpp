#include "creg/occlusion.hpp"

#include <cmath>
#include <limits>

#include "creg/error.hpp"

namespace creg {

std::string_view to_string(PlanStatus s) noexcept {
  switch (s) {
    case PlanStatus::Ok: return "ok";
    case PlanStatus::EmptyTrueMask: return "empty_true_mask";
    case PlanStatus::EmptyOppositeMask: return "empty_opposite_mask";
  }
  return "?";
}

TensorBlob SectorMask::to_blob() const {
  std::vector<double> v(pixels.begin(), pixels.end());
  return TensorBlob(DType::F32, {image_h, image_w}, std::move(v));
}

SectorMask build_sector_mask(std::size_t image_w, std::size_t image_h, Point ref_center, double d_ab, int sector,
                             const OcclusionConfig& cfg) {
  cfg.polar.validate();
  if (sector < 0 || sector >= cfg.polar.sectors) {
    throw Error(ErrorCode::InvalidArgument, "sector index " + std::to_string(sector) + " out of range");
  }
  if (!(d_ab > 0.0)) throw Error(ErrorCode::CoincidentCenters, "reference and target centers coincide");
  if (image_w == 0 || image_h == 0) throw Error(ErrorCode::InvalidArgument, "image dims must be positive");

  SectorMask m;
  m.sector = sector;
  m.image_w = image_w;
  m.image_h = image_h;
  m.center = ref_center;
  const double w = cfg.polar.sector_width();
  m.start_deg = cfg.polar.sector_center(sector) - 0.5 * w;
  m.end_deg = cfg.polar.sector_center(sector) + 0.5 * w;
  m.radius = cfg.bounded ? cfg.polar.r_max(d_ab) : std::numeric_limits<double>::infinity();
  m.pixels.assign(image_w * image_h, 0);

  const auto rows = static_cast<std::int64_t>(image_h);
  std::size_t count = 0;
#pragma omp parallel for schedule(static) reduction(+ : count)
  for (std::int64_t r = 0; r < rows; ++r) {
    const double dy = (static_cast<double>(r) + 0.5) - ref_center.y;
    for (std::size_t c = 0; c < image_w; ++c) {
      const double dx = (static_cast<double>(c) + 0.5) - ref_center.x;
      const double rho = std::hypot(dx, dy);
      if (rho > m.radius) continue;
      const double theta = rho == 0.0 ? 0.0 : polar_angle_deg(dx, dy);
      if (cfg.polar.sector_of(theta) == sector) {
        m.pixels[static_cast<std::size_t>(r) * image_w + c] = 1;
        ++count;
      }
    }
  }
  m.count = count;
  m.empty = count == 0;
  return m;
}

namespace {
std::size_t pixel_dim(double v) { return static_cast<std::size_t>(std::llround(v)); }
}  // namespace

SectorMask build_sector_mask(const SampleRecord& sample, int sector, const OcclusionConfig& cfg) {
  const Point a = sample.ref_box.center();
  const double d_ab = distance(a, sample.tgt_box.center());
  return build_sector_mask(pixel_dim(sample.image_w), pixel_dim(sample.image_h), a, d_ab, sector, cfg);
}

PlannedOcclusion build_plan(const SampleRecord& sample, const OcclusionConfig& cfg) {
  cfg.polar.validate();
  if (cfg.polar.sectors % 2 != 0) {
    throw Error(ErrorCode::InvalidArgument, "opposite-sector occlusion needs an even sector count");
  }
  PlannedOcclusion out;
  auto& plan = out.plan;
  plan.sample_id = sample.sample_id;
  plan.true_angle = true_direction(sample.ref_box, sample.tgt_box);
  plan.true_sector = cfg.polar.sector_of(plan.true_angle);
  plan.opposite_sector = (plan.true_sector + cfg.polar.sectors / 2) % cfg.polar.sectors;
  out.true_mask = build_sector_mask(sample, plan.true_sector, cfg);
  out.opposite_mask = build_sector_mask(sample, plan.opposite_sector, cfg);
  if (out.true_mask.empty) plan.status = PlanStatus::EmptyTrueMask;
  else if (out.opposite_mask.empty) plan.status = PlanStatus::EmptyOppositeMask;
  return out;
}

CosTriple evaluate_cos(const OcclusionPlan& plan, const Logits& base, const Logits& true_occluded,
                       const Logits& opposite_occluded, DirectionClass gt) {
  if (plan.status != PlanStatus::Ok) {
    throw Error(ErrorCode::InvalidArgument, "sample '" + plan.sample_id + "': plan status " +
                                                std::string(to_string(plan.status)));
  }
  return cos_score(log_softmax_gt(base, gt), log_softmax_gt(true_occluded, gt), log_softmax_gt(opposite_occluded, gt));
}

}  // namespace creg
