#pragma once

// Crop, resize, landmark overlays and change detection on Screenshots.
// Every function returns a new image; inputs are never modified.

#include <array>
#include <cmath>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "regionfocus/geometry.hpp"
#include "regionfocus/image.hpp"

namespace regionfocus {

enum class LandmarkKind { History, Candidate, Judge };

inline const char* to_string(LandmarkKind k) {
  switch (k) {
    case LandmarkKind::History: return "history";
    case LandmarkKind::Candidate: return "candidate";
    case LandmarkKind::Judge: return "judge";
  }
  return "history";
}

inline LandmarkKind landmark_kind_from_string(const std::string& s) {
  if (s == "history") return LandmarkKind::History;
  if (s == "candidate") return LandmarkKind::Candidate;
  if (s == "judge") return LandmarkKind::Judge;
  throw DomainError("unknown landmark kind '" + s + "'");
}

struct Landmark {
  Point at;
  int label = 1;
  LandmarkKind kind = LandmarkKind::History;
  friend bool operator==(const Landmark&, const Landmark&) = default;
};

struct StyleConfig {
  int min_radius = 12;
  double radius_fraction = 0.015;  // of the shorter image side
  Rgb fill{255, 105, 180};
  Rgb outline{40, 20, 30};
  Rgb disc{255, 255, 255};
  Rgb text{0, 0, 0};
};

struct DiffReport {
  double changed_fraction = 0.0;
  bool identical = true;
};

inline constexpr int kChannelChangeThreshold = 8;  // out of 255
inline constexpr double kDefaultDiffTolerance = 0.001;

inline Screenshot crop(const Screenshot& img, const RegionBox& box) {
  if (!box.inside(img.dims())) throw DomainError("crop: box " + box.str() + " outside image " + img.dims().str());
  Raster out(box.dims(), Rgb{});
  const auto& src = img.pixels();
  auto& dst = out.data();
  const std::size_t row_bytes = static_cast<std::size_t>(box.width()) * 3;
  for (int v = 0; v < box.height(); ++v) {
    const auto src_off = (static_cast<std::size_t>(box.y0 + v) * img.width() + box.x0) * 3;
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(src_off), row_bytes,
                dst.begin() + static_cast<std::ptrdiff_t>(v * row_bytes));
  }
  return Screenshot(std::move(out));
}

namespace detail {

struct AxisTap {
  int lo;
  int hi;
  int weight;  // of `hi`, in [0, 256]
};

// Half-pixel-center sampling; weights quantized to 1/256 so results are
// bit-exact across platforms.
inline std::vector<AxisTap> axis_taps(int src, int dst) {
  std::vector<AxisTap> taps(static_cast<std::size_t>(dst));
  for (int i = 0; i < dst; ++i) {
    double s = (2.0 * i + 1.0) * src / (2.0 * dst) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int lo = static_cast<int>(std::floor(s));
    const int hi = std::min(lo + 1, src - 1);
    taps[static_cast<std::size_t>(i)] = {lo, hi, static_cast<int>(std::lround((s - lo) * 256.0))};
  }
  return taps;
}

}  // namespace detail

/// Bilinear resize.
inline Screenshot resize(const Screenshot& img, Dims out) {
  if (!out.valid()) throw DomainError("resize: output dims must be positive");
  if (out == img.dims()) return img;
  const auto xs = detail::axis_taps(img.width(), out.width);
  const auto ys = detail::axis_taps(img.height(), out.height);
  Raster dst(out, Rgb{});
  const auto& src = img.pixels();
  auto& d = dst.data();
  const auto px = [&](int x, int y, int c) -> std::uint32_t {
    return src[(static_cast<std::size_t>(y) * img.width() + x) * 3 + c];
  };
  std::size_t o = 0;
  for (const auto& ty : ys) {
    const std::uint32_t wy = static_cast<std::uint32_t>(ty.weight);
    for (const auto& tx : xs) {
      const std::uint32_t wx = static_cast<std::uint32_t>(tx.weight);
      for (int c = 0; c < 3; ++c) {
        const std::uint32_t top = px(tx.lo, ty.lo, c) * (256 - wx) + px(tx.hi, ty.lo, c) * wx;
        const std::uint32_t bot = px(tx.lo, ty.hi, c) * (256 - wx) + px(tx.hi, ty.hi, c) * wx;
        d[o++] = static_cast<std::uint8_t>((top * (256 - wy) + bot * wy + 32768) >> 16);
      }
    }
  }
  return Screenshot(std::move(dst));
}

inline DiffReport diff(const Screenshot& a, const Screenshot& b, double tolerance = kDefaultDiffTolerance) {
  if (a.dims() != b.dims()) return {1.0, false};
  if (a.digest() == b.digest() && a.pixels() == b.pixels()) return {0.0, true};
  const auto& pa = a.pixels();
  const auto& pb = b.pixels();
  std::size_t changed = 0;
  for (std::size_t i = 0; i < pa.size(); i += 3) {
    int delta = 0;
    for (int c = 0; c < 3; ++c) delta = std::max(delta, std::abs(int(pa[i + c]) - int(pb[i + c])));
    if (delta > kChannelChangeThreshold) ++changed;
  }
  const double total = static_cast<double>(pa.size() / 3);
  const double fraction = changed / total;
  return {fraction, fraction <= tolerance};
}

// ---------------------------------------------------------------------------
// Glyphs

namespace detail {

// 3x5 digit font, rows top to bottom, bit 2 = leftmost column.
inline constexpr std::array<std::array<std::uint8_t, 5>, 10> kDigits = {{
    {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
    {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7},
}};

inline std::array<std::uint8_t, 5> glyph_rows(char ch) {
  if (ch >= '0' && ch <= '9') return kDigits[static_cast<std::size_t>(ch - '0')];
  if (ch == ' ') return {0, 0, 0, 0, 0};
  // Non-digits render as a stable 3x5 block pattern derived from the code point.
  std::uint32_t bits = static_cast<std::uint8_t>(ch) * 2654435761u;
  std::array<std::uint8_t, 5> rows{};
  for (auto& r : rows) {
    r = static_cast<std::uint8_t>((bits & 7u) | 2u);
    bits >>= 3;
  }
  return rows;
}

inline void draw_glyph(Raster& r, char ch, int left, int top, int scale, Rgb color) {
  const auto rows = glyph_rows(ch);
  for (int row = 0; row < 5; ++row)
    for (int col = 0; col < 3; ++col)
      if (rows[static_cast<std::size_t>(row)] & (4 >> col))
        for (int dy = 0; dy < scale; ++dy)
          for (int dx = 0; dx < scale; ++dx) r.put(left + col * scale + dx, top + row * scale + dy, color);
}

struct Vec2 {
  double x;
  double y;
};

inline bool inside_polygon(const std::vector<Vec2>& poly, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

inline std::vector<Vec2> star_polygon(Point c, double outer) {
  const double inner = outer * 0.45;
  std::vector<Vec2> poly;
  for (int i = 0; i < 10; ++i) {
    const double angle = -std::numbers::pi / 2 + i * std::numbers::pi / 5;
    const double rad = (i % 2 == 0) ? outer : inner;
    poly.push_back({c.x + 0.5 + rad * std::cos(angle), c.y + 0.5 + rad * std::sin(angle)});
  }
  return poly;
}

}  // namespace detail

/// Renders text left-to-right starting at (left, top), 3x5 cells scaled by
/// `scale` with a one-cell gap.
inline void draw_text(Raster& r, const std::string& text, Point top_left, int scale, Rgb color) {
  int x = top_left.x;
  for (char ch : text) {
    detail::draw_glyph(r, ch, x, top_left.y, scale, color);
    x += 4 * scale;
  }
}

inline int star_radius(Dims image, const StyleConfig& style = {}) {
  return std::max(style.min_radius,
                  round_px(style.radius_fraction * std::min(image.width, image.height)));
}

/// Draws a numbered five-pointed star per landmark.
inline Screenshot draw_landmarks(const Screenshot& img, const std::vector<Landmark>& marks,
                                 const StyleConfig& style = {}) {
  if (marks.empty()) return img;
  std::set<int> labels;
  for (const auto& m : marks) {
    if (!img.dims().contains(m.at))
      throw DomainError("draw_landmarks: mark " + m.at.str() + " outside image " + img.dims().str());
    if (m.label <= 0) throw DomainError("draw_landmarks: labels must be positive");
    if (!labels.insert(m.label).second)
      throw DomainError("draw_landmarks: duplicate label " + std::to_string(m.label));
  }

  Raster r = img.raster();
  const int radius = star_radius(img.dims(), style);
  for (const auto& m : marks) {
    const auto poly = detail::star_polygon(m.at, radius);
    const RegionBox bounds{m.at.x - radius - 1, m.at.y - radius - 1, m.at.x + radius + 2, m.at.y + radius + 2, std::nullopt};
    const auto inside = [&](int x, int y) { return detail::inside_polygon(poly, x + 0.5, y + 0.5); };
    for (int y = bounds.y0; y < bounds.y1; ++y) {
      for (int x = bounds.x0; x < bounds.x1; ++x) {
        if (!inside(x, y)) continue;
        const bool edge = !inside(x - 1, y) || !inside(x + 1, y) || !inside(x, y - 1) || !inside(x, y + 1);
        r.put(x, y, edge ? style.outline : style.fill);
      }
    }

    const std::string text = std::to_string(m.label);
    const int disc_r = std::max(4, radius * 45 / 100);
    for (int y = -disc_r; y <= disc_r; ++y)
      for (int x = -disc_r; x <= disc_r; ++x)
        if (x * x + y * y <= disc_r * disc_r) r.put(m.at.x + x, m.at.y + y, style.disc);

    const int text_cells_w = static_cast<int>(text.size()) * 4 - 1;
    const int scale = std::max(1, (2 * disc_r * 3 / 4) / std::max(5, text_cells_w));
    const int tw = text_cells_w * scale;
    const int th = 5 * scale;
    draw_text(r, text, {m.at.x - tw / 2, m.at.y - th / 2}, scale, style.text);
  }
  return Screenshot(std::move(r));
}

}  // namespace regionfocus
