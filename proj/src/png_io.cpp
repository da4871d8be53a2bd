#include "nalu/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

#include "nalu/error.hpp"

namespace nalu::png {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void on_error(png_structp p, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(p));
  *what = msg;
  png_longjmp(p, 1);
}

void on_warning(png_structp, png_const_charp) {}

}  // namespace

Tensor read(const std::filesystem::path& path) {
  File f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open image " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IoError(path.string() + ": not a PNG file");
  }
  std::string err;
  png_structp p = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, on_error, on_warning);
  png_infop info = p ? png_create_info_struct(p) : nullptr;
  if (!info) {
    png_destroy_read_struct(&p, nullptr, nullptr);
    throw IoError("libpng initialization failed");
  }
  // Declared before setjmp so a longjmp back here unwinds them normally; the
  // scalars below are not read on the error path.
  std::vector<png_byte> raw;
  std::vector<png_bytep> rows;
  png_uint_32 w = 0, h = 0;
  int depth = 0;
  if (setjmp(png_jmpbuf(p))) {
    png_destroy_read_struct(&p, &info, nullptr);
    throw IoError(path.string() + ": " + err);
  }
  png_init_io(p, f.get());
  png_set_sig_bytes(p, 8);
  png_read_info(p, info);
  const int color = png_get_color_type(p, info);
  depth = png_get_bit_depth(p, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(p);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(p);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(p);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(p, 1, -1, -1);
  }
  if (depth == 16) png_set_swap(p);  // host little-endian 16-bit samples
  png_read_update_info(p, info);
  w = png_get_image_width(p, info);
  h = png_get_image_height(p, info);
  depth = png_get_bit_depth(p, info);
  const std::size_t stride = png_get_rowbytes(p, info);
  raw.resize(stride * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + y * stride;
  png_read_image(p, rows.data());
  png_read_end(p, nullptr);
  png_destroy_read_struct(&p, &info, nullptr);

  Tensor out({1, h, w});
  for (png_uint_32 y = 0; y < h; ++y) {
    for (png_uint_32 x = 0; x < w; ++x) {
      float v;
      if (depth == 16) {
        std::uint16_t s;
        std::memcpy(&s, rows[y] + 2 * x, 2);
        v = static_cast<float>(s) / 65535.0f;
      } else {
        v = static_cast<float>(rows[y][x]) / 255.0f;
      }
      out[static_cast<std::size_t>(y) * w + x] = v;
    }
  }
  return out;
}

void write(const std::filesystem::path& path, const Tensor& image, int bit_depth) {
  if (image.rank() != 3 || image.dim(0) != 1) {
    throw DimensionError("png::write expects [1,H,W], got " + shape_str(image.shape()));
  }
  if (bit_depth != 8 && bit_depth != 16) throw ConfigError("PNG bit depth must be 8 or 16");
  const auto h = static_cast<png_uint_32>(image.dim(1));
  const auto w = static_cast<png_uint_32>(image.dim(2));
  const std::size_t bytes = bit_depth / 8;
  std::vector<png_byte> raw(static_cast<std::size_t>(w) * h * bytes);
  const double top = bit_depth == 16 ? 65535.0 : 255.0;
  for (std::size_t i = 0; i < image.numel(); ++i) {
    const double v = std::clamp(static_cast<double>(image[i]), 0.0, 1.0);
    const auto q = static_cast<std::uint32_t>(std::lround(v * top));
    if (bit_depth == 16) {
      raw[2 * i] = static_cast<png_byte>(q >> 8);  // PNG samples are big-endian
      raw[2 * i + 1] = static_cast<png_byte>(q & 0xFF);
    } else {
      raw[i] = static_cast<png_byte>(q);
    }
  }
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + static_cast<std::size_t>(y) * w * bytes;

  File f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot write image " + path.string());
  std::string err;
  png_structp p = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, on_error, on_warning);
  png_infop info = p ? png_create_info_struct(p) : nullptr;
  if (!info) {
    png_destroy_write_struct(&p, nullptr);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(p))) {
    png_destroy_write_struct(&p, &info);
    throw IoError(path.string() + ": " + err);
  }
  png_init_io(p, f.get());
  png_set_IHDR(p, info, w, h, bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(p, info);
  png_write_image(p, rows.data());
  png_write_end(p, nullptr);
  png_destroy_write_struct(&p, &info);
  if (std::fflush(f.get()) != 0) throw IoError("write failed for " + path.string());
}

}  // namespace nalu::png
