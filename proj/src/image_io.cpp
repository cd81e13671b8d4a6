#include "tma/image_io.hpp"

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

#include <jpeglib.h>
#include <png.h>

#include "tma/error.hpp"

namespace tma {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open(const std::filesystem::path& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  if (!f) fail(ErrorKind::Io, "cannot open " + path.string());
  return f;
}

Image read_png(const std::filesystem::path& path) {
  File file = open(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) fail(ErrorKind::Io, "libpng initialization failed");
  std::vector<png_bytep> rows;
  std::vector<unsigned char> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::Io, "corrupt PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (bit_depth < 8) png_set_expand(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  if (bit_depth == 16) png_set_swap(png);  // host little-endian samples
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const std::size_t stride = png_get_rowbytes(png, info);
  const bool wide = png_get_bit_depth(png, info) == 16;
  buffer.resize(stride * height);
  rows.resize(height);
  for (int y = 0; y < height; ++y) rows[y] = buffer.data() + y * stride;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor t(Shape{3, height, width});
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        if (wide) {
          std::uint16_t v;
          std::memcpy(&v, rows[y] + (x * 3 + c) * 2, 2);
          t(c, y, x) = v / 65535.0;
        } else {
          t(c, y, x) = rows[y][x * 3 + c] / 255.0;
        }
      }
    }
  }
  return Image(std::move(t), path.stem().string());
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr info) {
  auto* err = reinterpret_cast<JpegError*>(info->err);
  std::longjmp(err->jump, 1);
}

Image read_jpeg(const std::filesystem::path& path) {
  File file = open(path, "rb");
  jpeg_decompress_struct info;
  JpegError err;
  // Declared before setjmp so a decoder error never skips their destructors.
  std::vector<unsigned char> row;
  Tensor t;
  info.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&info);
    fail(ErrorKind::Io, "corrupt JPEG " + path.string());
  }
  jpeg_create_decompress(&info);
  jpeg_stdio_src(&info, file.get());
  jpeg_read_header(&info, TRUE);
  info.out_color_space = JCS_RGB;
  jpeg_start_decompress(&info);
  const int width = static_cast<int>(info.output_width);
  const int height = static_cast<int>(info.output_height);
  row.resize(static_cast<std::size_t>(width) * 3);
  t = Tensor(Shape{3, height, width});
  while (info.output_scanline < info.output_height) {
    const int y = static_cast<int>(info.output_scanline);
    JSAMPROW ptr = row.data();
    jpeg_read_scanlines(&info, &ptr, 1);
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) t(c, y, x) = row[x * 3 + c] / 255.0;
  }
  jpeg_finish_decompress(&info);
  jpeg_destroy_decompress(&info);
  return Image(std::move(t), path.stem().string());
}

void write_png(const Image& image, const std::filesystem::path& path, int bits,
               const PngText& text) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    File file = open(tmp, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) fail(ErrorKind::Io, "libpng initialization failed");
    const int width = image.width();
    const int height = image.height();
    const int bytes = bits / 8;
    std::vector<unsigned char> buffer(static_cast<std::size_t>(width) * height * 3 * bytes);
    const double top = bits == 16 ? 65535.0 : 255.0;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        for (int c = 0; c < 3; ++c) {
          const auto v = static_cast<unsigned>(std::lround(image.pixels()(c, y, x) * top));
          unsigned char* dst = &buffer[((static_cast<std::size_t>(y) * width + x) * 3 + c) * bytes];
          if (bits == 16) {
            dst[0] = static_cast<unsigned char>(v >> 8);  // PNG is big-endian
            dst[1] = static_cast<unsigned char>(v & 0xff);
          } else {
            dst[0] = static_cast<unsigned char>(v);
          }
        }
    std::vector<png_text> chunks(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
      chunks[i].compression = PNG_TEXT_COMPRESSION_NONE;
      chunks[i].key = const_cast<char*>(text[i].first.c_str());
      chunks[i].text = const_cast<char*>(text[i].second.c_str());
    }
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y)
      rows[y] = buffer.data() + static_cast<std::size_t>(y) * width * 3 * bytes;
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      fail(ErrorKind::Io, "failed writing PNG " + tmp.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, width, height, bits, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    if (!chunks.empty()) png_set_text(png, info, chunks.data(), static_cast<int>(chunks.size()));
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::Io, "cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::Io, "image not found: " + path.string());
  unsigned char magic[8] = {};
  {
    File f = open(path, "rb");
    if (std::fread(magic, 1, sizeof magic, f.get()) < 3)
      fail(ErrorKind::Io, "unreadable image " + path.string());
  }
  if (png_sig_cmp(magic, 0, 8) == 0) return read_png(path);
  if (magic[0] == 0xFF && magic[1] == 0xD8) return read_jpeg(path);
  fail(ErrorKind::Io, "unsupported image format: " + path.string());
}

void write_png16(const Image& image, const std::filesystem::path& path, const PngText& text) {
  write_png(image, path, 16, text);
}

void write_png8(const Image& image, const std::filesystem::path& path, const PngText& text) {
  write_png(image, path, 8, text);
}

Image quantize(const Image& image, int bits) {
  if (bits < 1 || bits > 16) fail(ErrorKind::InvalidArgument, "quantization bits must be in [1,16]");
  const double top = std::ldexp(1.0, bits) - 1.0;
  Tensor t = image.pixels();
  for (double& v : t.values()) v = std::lround(v * top) / top;
  return Image(std::move(t), image.id(), image.frame_extent());
}

}  // namespace tma
