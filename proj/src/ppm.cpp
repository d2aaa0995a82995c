#include "mast/ppm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mast/common.hpp"

namespace mast {

namespace {
std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}
}  // namespace

void PpmImage::set(int x, int y, std::array<double, 3> rgb) {
  set(x, y, to_byte(rgb[0]), to_byte(rgb[1]), to_byte(rgb[2]));
}

void PpmImage::set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  if (x < 0 || x >= width_ || y < 0 || y >= height_) return;
  const std::size_t i = 3u * (static_cast<std::size_t>(y) * width_ + x);
  data_[i] = r;
  data_[i + 1] = g;
  data_[i + 2] = b;
}

void PpmImage::fill_block(int cx, int cy, int scale, std::array<double, 3> rgb) {
  for (int dy = 0; dy < scale; ++dy)
    for (int dx = 0; dx < scale; ++dx) set(cx * scale + dx, cy * scale + dy, rgb);
}

std::string PpmImage::bytes() const {
  std::ostringstream os;
  os << "P6\n" << width_ << ' ' << height_ << "\n255\n";
  os.write(reinterpret_cast<const char*>(data_.data()), static_cast<std::streamsize>(data_.size()));
  return os.str();
}

void PpmImage::write(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  const std::string b = bytes();
  os.write(b.data(), static_cast<std::streamsize>(b.size()));
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace mast
