#include "recal/image_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>

namespace recal {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// libpng reports errors through longjmp; the message and the byte offset are
// stashed here so a proper exception can be thrown after cleanup.
struct PngCtx {
  std::FILE* file = nullptr;
  uint64_t offset = 0;
  std::string error;
};

void on_png_error(png_structp png, png_const_charp msg) {
  auto* ctx = static_cast<PngCtx*>(png_get_error_ptr(png));
  ctx->error = msg;
  longjmp(png_jmpbuf(png), 1);
}

void on_png_warning(png_structp, png_const_charp) {}

void read_bytes(png_structp png, png_bytep out, png_size_t count) {
  auto* ctx = static_cast<PngCtx*>(png_get_io_ptr(png));
  const size_t got = std::fread(out, 1, count, ctx->file);
  ctx->offset += got;
  if (got != count) png_error(png, "unexpected end of file");
}

void write_bytes(png_structp png, png_bytep data, png_size_t count) {
  auto* ctx = static_cast<PngCtx*>(png_get_io_ptr(png));
  if (std::fwrite(data, 1, count, ctx->file) != count) {
    png_error(png, "write failed");
  }
  ctx->offset += count;
}

void flush_bytes(png_structp) {}

void validate(const ImageU8& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3) {
    throw UsageError(str_cat("png '", path, "': only 1- or 3-channel images, got ",
                             img.channels));
  }
  if (img.height < 1 || img.width < 1 ||
      static_cast<int64_t>(img.pixels.size()) != img.height * img.width * img.channels) {
    throw UsageError(str_cat("png '", path, "': pixel buffer does not match ",
                             img.height, "x", img.width, "x", img.channels));
  }
}

}  // namespace

void write_png(const std::string& path, const ImageU8& img) {
  validate(img, path);
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError(str_cat("png '", path, "': cannot open for writing"));

  PngCtx ctx;
  ctx.file = file.get();
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &ctx, on_png_error, on_png_warning);
  if (!png) throw IoError("png: failed to allocate write state");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png: failed to allocate info state");
  }

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(str_cat("png '", path, "': ", ctx.error, " at byte offset ",
                          ctx.offset));
  }

  png_set_write_fn(png, &ctx, write_bytes, flush_bytes);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const int64_t stride = img.width * img.channels;
  for (int64_t y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(img.pixels.data() + y * stride));
  }
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
}

ImageU8 read_png(const std::string& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError(str_cat("png '", path, "': cannot open for reading"));

  PngCtx ctx;
  ctx.file = file.get();
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &ctx, on_png_error, on_png_warning);
  if (!png) throw IoError("png: failed to allocate read state");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png: failed to allocate info state");
  }

  ImageU8 img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(str_cat("png '", path, "': ", ctx.error, " at byte offset ",
                          ctx.offset));
  }

  png_set_read_fn(png, &ctx, read_bytes);
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth != 8 || (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB)) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(str_cat("png '", path, "': unsupported format (bit depth ", depth,
                          ", color type ", color, "); expected 8-bit gray or RGB"));
  }

  img.height = h;
  img.width = w;
  img.channels = color == PNG_COLOR_TYPE_GRAY ? 1 : 3;
  img.pixels.resize(static_cast<size_t>(img.height * img.width * img.channels));
  rows.resize(h);
  const int64_t stride = img.width * img.channels;
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = img.pixels.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace recal
