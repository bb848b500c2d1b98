#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "regionfocus/geometry.hpp"
#include "regionfocus/hash.hpp"

namespace regionfocus {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Mutable RGB8 pixel buffer. Freeze into a Screenshot once drawing is done.
class Raster {
 public:
  Raster() = default;
  Raster(Dims dims, Rgb fill) : dims_(dims) {
    if (!dims.valid()) throw DomainError("Raster: dims must be positive, got " + dims.str());
    pixels_.resize(static_cast<std::size_t>(dims.width) * dims.height * 3);
    for (std::size_t i = 0; i < pixels_.size(); i += 3) {
      pixels_[i] = fill.r;
      pixels_[i + 1] = fill.g;
      pixels_[i + 2] = fill.b;
    }
  }
  Raster(Dims dims, std::vector<std::uint8_t> rgb) : dims_(dims), pixels_(std::move(rgb)) {
    if (!dims.valid()) throw DomainError("Raster: dims must be positive, got " + dims.str());
    if (pixels_.size() != static_cast<std::size_t>(dims.width) * dims.height * 3)
      throw DomainError("Raster: buffer size does not match " + dims.str());
  }

  Dims dims() const { return dims_; }
  int width() const { return dims_.width; }
  int height() const { return dims_.height; }

  Rgb at(int x, int y) const {
    const auto i = index(x, y);
    return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
  }
  void set(int x, int y, Rgb c) {
    const auto i = index(x, y);
    pixels_[i] = c.r;
    pixels_[i + 1] = c.g;
    pixels_[i + 2] = c.b;
  }
  // Silently clips.
  void put(int x, int y, Rgb c) {
    if (dims_.contains({x, y})) set(x, y, c);
  }
  void fill_rect(const RegionBox& box, Rgb c) {
    for (int y = std::max(0, box.y0); y < std::min(dims_.height, box.y1); ++y)
      for (int x = std::max(0, box.x0); x < std::min(dims_.width, box.x1); ++x) set(x, y, c);
  }

  std::vector<std::uint8_t>& data() { return pixels_; }
  const std::vector<std::uint8_t>& data() const { return pixels_; }

 private:
  std::size_t index(int x, int y) const {
    return (static_cast<std::size_t>(y) * dims_.width + x) * 3;
  }

  Dims dims_{};
  std::vector<std::uint8_t> pixels_;
};

/// Immutable decoded screenshot with a content digest over dims and pixels.
class Screenshot {
 public:
  Screenshot() = default;
  explicit Screenshot(Raster raster) : raster_(std::move(raster)) {
    Fnv1a64 h;
    h.update_u64(static_cast<std::uint64_t>(raster_.width()));
    h.update_u64(static_cast<std::uint64_t>(raster_.height()));
    h.update(std::span<const std::uint8_t>(raster_.data()));
    digest_ = h.value();
  }

  static Screenshot filled(Dims dims, Rgb color) { return Screenshot(Raster(dims, color)); }

  bool empty() const { return raster_.data().empty(); }
  Dims dims() const { return raster_.dims(); }
  int width() const { return raster_.width(); }
  int height() const { return raster_.height(); }
  Rgb at(int x, int y) const { return raster_.at(x, y); }
  const std::vector<std::uint8_t>& pixels() const { return raster_.data(); }
  const Raster& raster() const { return raster_; }
  std::uint64_t digest() const { return digest_; }
  std::string digest_hex() const { return to_hex(digest_); }

  friend bool operator==(const Screenshot& a, const Screenshot& b) {
    return a.digest_ == b.digest_ && a.dims() == b.dims() && a.pixels() == b.pixels();
  }

 private:
  Raster raster_;
  std::uint64_t digest_ = 0;
};

}  // namespace regionfocus
