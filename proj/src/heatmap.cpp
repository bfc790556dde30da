// SPDX-License-Identifier: Apache-2.0
#include "mdunet/heatmap.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "mdunet/error.hpp"

namespace mdunet {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};

void ramp(double t, unsigned char* rgb) {
  t = std::clamp(t, 0.0, 1.0);
  const double r = std::min(1.0, 3.0 * t);
  const double g = std::clamp(3.0 * t - 1.0, 0.0, 1.0);
  const double b = std::clamp(3.0 * t - 2.0, 0.0, 1.0);
  rgb[0] = static_cast<unsigned char>(std::lround(255.0 * r));
  rgb[1] = static_cast<unsigned char>(std::lround(255.0 * g));
  rgb[2] = static_cast<unsigned char>(std::lround(255.0 * b));
}

}  // namespace

void write_difference_png(const std::filesystem::path& path, const SoftMap& pred,
                          const SoftMap& gt, int scale) {
  require(pred.shape == gt.shape, ErrorKind::ShapeMismatch,
          "heatmap: prediction " + to_string(pred.shape) + " vs ground truth " + to_string(gt.shape));
  require(scale >= 1, ErrorKind::InvalidArgument, "heatmap scale must be >= 1");
  const int w = pred.shape.width * scale, h = pred.shape.height * scale;
  std::vector<unsigned char> rows(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int sy = y / scale, sx = x / scale;
      ramp(std::fabs(static_cast<double>(pred(sy, sx)) - gt(sy, sx)),
           &rows[(static_cast<std::size_t>(y) * w + x) * 3]);
    }
  }

  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) fail(ErrorKind::Io, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::Internal, "libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::Io, "libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y) png_write_row(png, &rows[static_cast<std::size_t>(y) * w * 3]);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace mdunet
