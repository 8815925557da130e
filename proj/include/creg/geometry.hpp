#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace creg {

// Index order matches the prompt's answer options 1..4.
enum class DirectionClass : int { Left = 0, Right = 1, Above = 2, Below = 3 };

inline constexpr std::array<DirectionClass, 4> kAllClasses = {
    DirectionClass::Left, DirectionClass::Right, DirectionClass::Above, DirectionClass::Below};

using Logits = std::array<double, 4>;

constexpr int index_of(DirectionClass c) noexcept { return static_cast<int>(c); }
DirectionClass class_from_index(int i);

std::string_view to_string(DirectionClass c) noexcept;
std::optional<DirectionClass> parse_direction(std::string_view name) noexcept;

// 0 = right, 90 = up (screen y inverted), 180 = left, 270 = down.
constexpr double canonical_angle(DirectionClass c) noexcept {
  switch (c) {
    case DirectionClass::Left: return 180.0;
    case DirectionClass::Right: return 0.0;
    case DirectionClass::Above: return 90.0;
    case DirectionClass::Below: return 270.0;
  }
  return 0.0;
}

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Pixel box with top-left origin.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  Point center() const noexcept { return {x + 0.5 * w, y + 0.5 * h}; }
  bool contains(Point p) const noexcept { return p.x >= x && p.x <= x + w && p.y >= y && p.y <= y + h; }
  friend bool operator==(const BBox&, const BBox&) = default;
};

struct ClampResult {
  BBox box;
  bool clamped = false;
};

/// Throws InvalidBox for non-positive extents or a box entirely outside the image.
ClampResult clamp_box(const BBox& box, double image_w, double image_h);

/// Horizontal mirror of a box within an image of the given width.
constexpr BBox mirror_box(const BBox& b, double image_w) noexcept { return {image_w - b.x - b.w, b.y, b.w, b.h}; }

double distance(Point a, Point b) noexcept;

/// Angle of the screen-space offset (dx, dy) in degrees, [0, 360), with y pointing down.
double polar_angle_deg(double dx, double dy) noexcept;

/// Pixel center of grid cell (row, col), 0-based.
Point cell_center(std::size_t row, std::size_t col, std::size_t grid_h, std::size_t grid_w, double image_w,
                  double image_h) noexcept;

}  // namespace creg
