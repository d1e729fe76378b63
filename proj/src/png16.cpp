#include "seedgrow/png16.hpp"

#include "seedgrow/errors.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

namespace seedgrow {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_handler(png_structp png, png_const_charp msg) {
  auto* buf = static_cast<std::string*>(png_get_error_ptr(png));
  if (buf) *buf = msg;
  png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

}  // namespace

LabelRaster read_png16(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw ParseError(path.string() + ": byte 0: not a PNG file");

  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_handler,
                                           png_warning_handler);
  png_infop info = png_create_info_struct(png);
  LabelRaster raster;
  std::vector<png_bytep> rows;
  std::vector<std::uint8_t> bytes;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError(path.string() + ": " + message);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const auto width = png_get_image_width(png, info);
  const auto height = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color != PNG_COLOR_TYPE_GRAY || depth != 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError(path.string() + ": expected a 16-bit grayscale label raster");
  }
  raster.width = static_cast<int>(width);
  raster.height = static_cast<int>(height);
  bytes.resize(static_cast<std::size_t>(width) * height * 2);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = bytes.data() + static_cast<std::size_t>(y) * width * 2;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  // PNG stores 16-bit samples big-endian.
  raster.values.resize(static_cast<std::size_t>(width) * height);
  for (std::size_t k = 0; k < raster.values.size(); ++k)
    raster.values[k] = static_cast<std::uint16_t>((bytes[2 * k] << 8) | bytes[2 * k + 1]);
  return raster;
}

void write_png16(const std::filesystem::path& path, const LabelRaster& raster) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot write " + path.string());
  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_handler,
                                            png_warning_handler);
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> bytes(raster.values.size() * 2);
  for (std::size_t k = 0; k < raster.values.size(); ++k) {
    bytes[2 * k] = static_cast<std::uint8_t>(raster.values[k] >> 8);
    bytes[2 * k + 1] = static_cast<std::uint8_t>(raster.values[k] & 0xff);
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(raster.height));
  for (int y = 0; y < raster.height; ++y)
    rows[static_cast<std::size_t>(y)] = bytes.data() + static_cast<std::size_t>(y) * raster.width * 2;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path.string() + ": " + message);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(raster.width), static_cast<png_uint_32>(raster.height), 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace seedgrow
