#include "nsod/image.hpp"

#include "nsod/access_log.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

namespace nsod {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image read_png(const std::string& path) {
  AccessLog::instance().record_read(path);
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open PNG: " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("failed to decode PNG: " + path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  // Normalize everything to 8-bit RGB.
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  Image img(static_cast<int>(w), static_cast<int>(h));
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) {
    rows[y] = img.rgb.data() + static_cast<std::size_t>(y) * w * 3;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::string& path, const Image& img) {
  if (img.width <= 0 || img.height <= 0)
    throw ValidationError("cannot write empty image: " + path);
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot create PNG: " + path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed to encode PNG: " + path);
  }

  png_init_io(png, fp.get());
  // Fixed settings keep the byte stream a pure function of the pixels.
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_const_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y) {
    rows[y] = img.rgb.data() + static_cast<std::size_t>(y) * img.width * 3;
  }
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image crop(const Image& img, const Box& box) {
  if (!box.valid())
    throw ValidationError("degenerate box in crop");
  if (box.x2 > img.width || box.y2 > img.height)
    throw ValidationError("crop box exceeds image bounds");
  Image out(static_cast<int>(box.width()), static_cast<int>(box.height()));
  for (int y = 0; y < out.height; ++y) {
    const std::uint8_t* src =
        img.rgb.data() +
        ((static_cast<std::size_t>(box.y1) + y) * img.width + box.x1) * 3;
    std::uint8_t* dst =
        out.rgb.data() + static_cast<std::size_t>(y) * out.width * 3;
    std::copy(src, src + static_cast<std::size_t>(out.width) * 3, dst);
  }
  return out;
}

ImageF resize_bilinear(const Image& img, int w, int h) {
  ImageF out;
  out.width = w;
  out.height = h;
  out.rgb.resize(static_cast<std::size_t>(w) * h * 3);
  const float sx = static_cast<float>(img.width) / static_cast<float>(w);
  const float sy = static_cast<float>(img.height) / static_cast<float>(h);
  for (int y = 0; y < h; ++y) {
    float fy = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
    if (fy < 0.0f) fy = 0.0f;
    int y0 = static_cast<int>(fy);
    if (y0 > img.height - 1) y0 = img.height - 1;
    const int y1 = std::min(y0 + 1, img.height - 1);
    const float wy = fy - static_cast<float>(y0);
    for (int x = 0; x < w; ++x) {
      float fx = (static_cast<float>(x) + 0.5f) * sx - 0.5f;
      if (fx < 0.0f) fx = 0.0f;
      int x0 = static_cast<int>(fx);
      if (x0 > img.width - 1) x0 = img.width - 1;
      const int x1 = std::min(x0 + 1, img.width - 1);
      const float wx = fx - static_cast<float>(x0);
      for (int c = 0; c < 3; ++c) {
        const float top = (1.0f - wx) * img.at(x0, y0, c) + wx * img.at(x1, y0, c);
        const float bot = (1.0f - wx) * img.at(x0, y1, c) + wx * img.at(x1, y1, c);
        out.rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c] =
            (1.0f - wy) * top + wy * bot;
      }
    }
  }
  return out;
}

}  // namespace nsod
