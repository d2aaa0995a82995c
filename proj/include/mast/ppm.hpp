#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace mast {

/// Minimal binary (P6) image buffer. Pixel channels are 8-bit.
class PpmImage {
 public:
  PpmImage(int width, int height) : width_(width), height_(height), data_(3u * width * height) {}

  int width() const { return width_; }
  int height() const { return height_; }

  void set(int x, int y, std::array<double, 3> rgb);  // channels in [0,1]
  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b);
  /// Paint the scale x scale block whose top-left cell is (cx*scale, cy*scale).
  void fill_block(int cx, int cy, int scale, std::array<double, 3> rgb);

  std::string bytes() const;
  void write(const std::string& path) const;

 private:
  int width_, height_;
  std::vector<std::uint8_t> data_;
};

}  // namespace mast
