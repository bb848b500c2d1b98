#pragma once

// Integer-pixel geometry for region proposal, clamping, zoom and coordinate
// rebasing. Origin is top-left; x grows right, y grows down.

#include <algorithm>
#include <cmath>
#include <compare>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace regionfocus {

class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Point {
  int x = 0;
  int y = 0;

  friend bool operator==(const Point&, const Point&) = default;
  std::string str() const { return "(" + std::to_string(x) + "," + std::to_string(y) + ")"; }
};

struct Dims {
  int width = 0;
  int height = 0;

  friend bool operator==(const Dims&, const Dims&) = default;
  bool valid() const { return width > 0 && height > 0; }
  // Pixel containment: 0 <= x < width, 0 <= y < height.
  bool contains(Point p) const { return p.x >= 0 && p.y >= 0 && p.x < width && p.y < height; }
  std::string str() const { return std::to_string(width) + "x" + std::to_string(height); }
};

struct Ratio {
  double rw = 1.0;
  double rh = 1.0;

  friend bool operator==(const Ratio&, const Ratio&) = default;
  bool valid() const { return rw > 0.0 && rw <= 1.0 && rh > 0.0 && rh <= 1.0; }
};

/// Axis-aligned rectangle in full-image pixels. x1/y1 are one past the last
/// covered pixel, so width = x1 - x0.
struct RegionBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
  std::optional<Ratio> source_ratio;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  Dims dims() const { return {width(), height()}; }
  bool inside(Dims image) const {
    return x0 >= 0 && y0 >= 0 && x0 < x1 && y0 < y1 && x1 <= image.width && y1 <= image.height;
  }
  bool same_rect(const RegionBox& o) const {
    return x0 == o.x0 && y0 == o.y0 && x1 == o.x1 && y1 == o.y1;
  }
  std::string str() const { return Point{x0, y0}.str() + "-" + Point{x1, y1}.str(); }

  friend bool operator==(const RegionBox&, const RegionBox&) = default;
};

struct ZoomSpec {
  RegionBox box;
  double scale = 1.0;
  Dims output;
};

/// Round half away from zero.
inline int round_px(double v) { return static_cast<int>(std::lround(v)); }

inline std::vector<Ratio> default_ratios() {
  return {{0.5, 0.5}, {0.3, 0.3}, {0.4, 0.8}, {0.8, 0.4}};
}

namespace detail {

// Fit [lo, lo+size) into [0, extent) by translation; spans the full axis when
// the requested size does not fit.
inline void clamp_axis(int& lo, int& hi, int extent) {
  const int size = hi - lo;
  if (size >= extent) {
    lo = 0;
    hi = extent;
    return;
  }
  if (lo < 0) {
    hi -= lo;
    lo = 0;
  }
  if (hi > extent) {
    lo -= hi - extent;
    hi = extent;
  }
}

}  // namespace detail

inline RegionBox clamp_box(RegionBox box, Dims image) {
  if (box.width() <= 0 || box.height() <= 0) throw DomainError("clamp_box: box must have positive size");
  if (!image.valid()) throw DomainError("clamp_box: image dims must be positive");
  detail::clamp_axis(box.x0, box.x1, image.width);
  detail::clamp_axis(box.y0, box.y1, image.height);
  return box;
}

inline std::vector<RegionBox> propose_regions(Point focal, Dims image, const std::vector<Ratio>& ratios) {
  if (!image.valid()) throw DomainError("propose_regions: image dims must be positive");
  if (!image.contains(focal)) throw DomainError("propose_regions: focal " + focal.str() + " outside image " + image.str());
  if (ratios.empty()) throw DomainError("propose_regions: empty ratio list");

  std::vector<RegionBox> boxes;
  boxes.reserve(ratios.size());
  for (const auto& r : ratios) {
    if (!r.valid()) throw DomainError("propose_regions: ratio sides must lie in (0, 1]");
    const int w = std::clamp(round_px(r.rw * image.width), 1, image.width);
    const int h = std::clamp(round_px(r.rh * image.height), 1, image.height);
    RegionBox box{focal.x - w / 2, focal.y - h / 2, 0, 0, r};
    box.x1 = box.x0 + w;
    box.y1 = box.y0 + h;
    boxes.push_back(clamp_box(box, image));
  }
  return boxes;
}

inline ZoomSpec zoom_spec(const RegionBox& box, Dims image) {
  if (!box.inside(image)) throw DomainError("zoom_spec: box " + box.str() + " not inside image " + image.str());
  const double sx = static_cast<double>(image.width) / box.width();
  const double sy = static_cast<double>(image.height) / box.height();
  ZoomSpec spec{box, std::min(sx, sy), {}};
  if (sx <= sy) {
    spec.output.width = image.width;
    spec.output.height = std::clamp(round_px(spec.scale * box.height()), 1, image.height);
  } else {
    spec.output.height = image.height;
    spec.output.width = std::clamp(round_px(spec.scale * box.width()), 1, image.width);
  }
  return spec;
}

/// Zoomed-canvas pixel -> full-image pixel.
inline Point to_full_coords(Point p, const ZoomSpec& spec) {
  if (!spec.output.contains(p)) throw DomainError("to_full_coords: " + p.str() + " outside zoomed canvas " + spec.output.str());
  const auto& b = spec.box;
  return {std::clamp(b.x0 + round_px(p.x / spec.scale), b.x0, b.x1 - 1),
          std::clamp(b.y0 + round_px(p.y / spec.scale), b.y0, b.y1 - 1)};
}

/// Full-image pixel -> zoomed-canvas pixel.
inline Point to_region_coords(Point p, const ZoomSpec& spec) {
  const auto& b = spec.box;
  if (p.x < b.x0 || p.y < b.y0 || p.x >= b.x1 || p.y >= b.y1)
    throw DomainError("to_region_coords: " + p.str() + " outside box " + b.str());
  return {std::clamp(round_px((p.x - b.x0) * spec.scale), 0, spec.output.width - 1),
          std::clamp(round_px((p.y - b.y0) * spec.scale), 0, spec.output.height - 1)};
}

/// Boundary-inclusive on all four edges.
inline bool point_in_box(Point p, const RegionBox& box) {
  return box.x0 <= p.x && p.x <= box.x1 && box.y0 <= p.y && p.y <= box.y1;
}

inline double distance(Point a, Point b) { return std::hypot(double(a.x - b.x), double(a.y - b.y)); }

}  // namespace regionfocus
