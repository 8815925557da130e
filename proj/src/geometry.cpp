#include "creg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "creg/error.hpp"

namespace creg {

DirectionClass class_from_index(int i) {
  if (i < 0 || i > 3) throw Error(ErrorCode::InvalidArgument, "class index " + std::to_string(i));
  return static_cast<DirectionClass>(i);
}

std::string_view to_string(DirectionClass c) noexcept {
  switch (c) {
    case DirectionClass::Left: return "left";
    case DirectionClass::Right: return "right";
    case DirectionClass::Above: return "above";
    case DirectionClass::Below: return "below";
  }
  return "?";
}

std::optional<DirectionClass> parse_direction(std::string_view name) noexcept {
  for (auto c : kAllClasses) {
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

ClampResult clamp_box(const BBox& box, double image_w, double image_h) {
  if (!(box.w > 0.0) || !(box.h > 0.0)) {
    throw Error(ErrorCode::InvalidBox, "box extents must be positive");
  }
  const double x0 = std::clamp(box.x, 0.0, image_w);
  const double y0 = std::clamp(box.y, 0.0, image_h);
  const double x1 = std::clamp(box.x + box.w, 0.0, image_w);
  const double y1 = std::clamp(box.y + box.h, 0.0, image_h);
  if (!(x1 > x0) || !(y1 > y0)) {
    throw Error(ErrorCode::InvalidBox, "box lies outside the image");
  }
  ClampResult r;
  r.box = {x0, y0, x1 - x0, y1 - y0};
  r.clamped = !(r.box == box);
  return r;
}

double distance(Point a, Point b) noexcept { return std::hypot(b.x - a.x, b.y - a.y); }

double polar_angle_deg(double dx, double dy) noexcept {
  double deg = std::atan2(-dy, dx) * (180.0 / std::numbers::pi);
  if (deg < 0.0) deg += 360.0;
  if (deg >= 360.0) deg -= 360.0;
  return deg + 0.0;  // no negative zero
}

Point cell_center(std::size_t row, std::size_t col, std::size_t grid_h, std::size_t grid_w, double image_w,
                  double image_h) noexcept {
  return {(static_cast<double>(col) + 0.5) * image_w / static_cast<double>(grid_w),
          (static_cast<double>(row) + 0.5) * image_h / static_cast<double>(grid_h)};
}

}  // namespace creg
