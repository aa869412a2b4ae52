#pragma once

#include "nsod/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace nsod {

/// Interleaved 8-bit RGB raster.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // 3 * width * height, row-major

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h),
        rgb(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::uint8_t& at(int x, int y, int c) {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Float RGB raster used as the featurizer's working representation.
struct ImageF {
  int width = 0;
  int height = 0;
  std::vector<float> rgb;

  float at(int x, int y, int c) const {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
};

/// Lossless 8-bit RGB PNG codec. Identical pixels yield identical files.
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);

/// Extracts the half-open window [x1,x2) x [y1,y2). The box must be valid
/// and lie within image bounds.
Image crop(const Image& img, const Box& box);

/// Bilinear resample to w x h using pixel-center sampling with edge clamp.
ImageF resize_bilinear(const Image& img, int w, int h);

}  // namespace nsod
