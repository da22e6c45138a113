#include "futurist/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <memory>

#include "futurist/errors.hpp"

namespace futurist {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png(const std::filesystem::path& path, int width, int height, int color_type, int bit_depth,
               const std::vector<std::uint8_t>& rows_bytes, std::size_t row_stride) {
  FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw LoadError(path.string(), "cannot open PNG for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw LoadError(path.string(), "cannot initialise PNG writer");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw LoadError(path.string(), "PNG write failed");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(rows_bytes.data() + static_cast<std::size_t>(y) * row_stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

struct RawPng {
  int width = 0;
  int height = 0;
  int color_type = 0;
  int bit_depth = 0;
  std::size_t stride = 0;
  std::vector<png_byte> bytes;
};

RawPng read_raw(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw LoadError(path.string(), "missing frame file");
  png_byte header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw LoadError(path.string(), "not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw LoadError(path.string(), "cannot initialise PNG reader");
  }
  RawPng raw;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw LoadError(path.string(), "corrupt PNG file");
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  raw.color_type = png_get_color_type(png, info);
  raw.bit_depth = png_get_bit_depth(png, info);
  raw.width = static_cast<int>(png_get_image_width(png, info));
  raw.height = static_cast<int>(png_get_image_height(png, info));
  if (png_get_interlace_type(png, info) != PNG_INTERLACE_NONE) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw LoadError(path.string(), "interlaced PNGs are not supported");
  }
  raw.stride = png_get_rowbytes(png, info);
  raw.bytes.resize(raw.stride * raw.height);
  for (int y = 0; y < raw.height; ++y) png_read_row(png, raw.bytes.data() + raw.stride * y, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return raw;
}

}  // namespace

GrayImage read_png_gray(const std::filesystem::path& path) {
  const RawPng raw = read_raw(path);
  if (raw.color_type != PNG_COLOR_TYPE_GRAY || (raw.bit_depth != 8 && raw.bit_depth != 16)) {
    throw LoadError(path.string(), "label PNG must be 8- or 16-bit grayscale");
  }
  GrayImage image;
  image.width = raw.width;
  image.height = raw.height;
  image.bit_depth = raw.bit_depth;
  image.pixels.resize(static_cast<std::size_t>(image.width) * image.height);
  for (int y = 0; y < image.height; ++y) {
    const png_byte* row = raw.bytes.data() + raw.stride * y;
    for (int x = 0; x < image.width; ++x) {
      image.pixels[static_cast<std::size_t>(y) * image.width + x] =
          raw.bit_depth == 8 ? row[x] : static_cast<std::uint16_t>((row[2 * x] << 8) | row[2 * x + 1]);
    }
  }
  return image;
}

std::vector<std::uint8_t> read_png_rgb(const std::filesystem::path& path, int& width, int& height) {
  const RawPng raw = read_raw(path);
  if (raw.color_type != PNG_COLOR_TYPE_RGB || raw.bit_depth != 8) {
    throw LoadError(path.string(), "expected an 8-bit RGB PNG");
  }
  width = raw.width;
  height = raw.height;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(width) * height * 3);
  for (int y = 0; y < height; ++y) {
    std::copy_n(raw.bytes.data() + raw.stride * y, static_cast<std::size_t>(width) * 3,
                rgb.data() + static_cast<std::size_t>(y) * width * 3);
  }
  return rgb;
}

void write_png_gray(const std::filesystem::path& path, const GrayImage& image) {
  if (image.bit_depth != 8 && image.bit_depth != 16) throw ShapeError("bit depth must be 8 or 16");
  const std::size_t bpp = image.bit_depth / 8;
  const std::size_t stride = bpp * image.width;
  std::vector<std::uint8_t> bytes(stride * image.height);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const std::uint16_t v = image.pixels[i];
    if (bpp == 1) {
      if (v > 0xFF) throw RangeError("value does not fit an 8-bit PNG");
      bytes[i] = static_cast<std::uint8_t>(v);
    } else {
      bytes[2 * i] = static_cast<std::uint8_t>(v >> 8);
      bytes[2 * i + 1] = static_cast<std::uint8_t>(v & 0xFF);
    }
  }
  write_png(path, image.width, image.height, PNG_COLOR_TYPE_GRAY, image.bit_depth, bytes, stride);
}

void write_png_rgb(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3) throw ShapeError("RGB buffer size mismatch");
  write_png(path, width, height, PNG_COLOR_TYPE_RGB, 8, rgb, static_cast<std::size_t>(width) * 3);
}

}  // namespace futurist
