#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pocketgs/core/image.hpp"

namespace pocketgs {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double srgb_to_linear(double v) {
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

inline double linear_to_srgb(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return v <= 0.0031308 ? v * 12.92 : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

namespace detail {

inline std::string lower_ext(const std::filesystem::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

inline std::string next_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return tok;
  }
  return {};
}

inline RgbImage read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open image: " + path.string());
  std::string magic;
  in >> magic;
  int w = 0, h = 0;
  double scale = 0;
  in >> w >> h >> scale;
  in.get();
  if ((magic != "PF" && magic != "Pf") || w <= 0 || h <= 0 || !in)
    throw ImageIoError("malformed PFM header: " + path.string());
  const int c = magic == "PF" ? 3 : 1;
  std::vector<float> buf(static_cast<std::size_t>(w) * h * c);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw ImageIoError("truncated PFM data: " + path.string());
  // Only little-endian hosts are supported; scale < 0 marks little-endian data.
  if (scale > 0) throw ImageIoError("big-endian PFM is not supported: " + path.string());
  RgbImage img(w, h);
  for (int y = 0; y < h; ++y) {
    const int src_row = h - 1 - y;  // PFM rows run bottom to top
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < 3; ++k)
        img(x, y, k) = buf[(static_cast<std::size_t>(src_row) * w + x) * c + (c == 3 ? k : 0)];
  }
  return img;
}

template <int C>
void write_pfm(const std::filesystem::path& path, const ImageT<C>& img) {
  static_assert(C == 1 || C == 3);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError("cannot write image: " + path.string());
  out << (C == 3 ? "PF" : "Pf") << "\n" << img.width << " " << img.height << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(img.width) * C);
  for (int y = img.height - 1; y >= 0; --y) {
    for (int x = 0; x < img.width; ++x)
      for (int k = 0; k < C; ++k) row[static_cast<std::size_t>(x) * C + k] = static_cast<float>(img(x, y, k));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
}

inline RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open image: " + path.string());
  const std::string magic = next_token(in);
  const int w = std::stoi(next_token(in));
  const int h = std::stoi(next_token(in));
  const int maxv = std::stoi(next_token(in));
  in.get();
  if (magic != "P6" || w <= 0 || h <= 0 || maxv != 255) throw ImageIoError("unsupported PPM: " + path.string());
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!in) throw ImageIoError("truncated PPM data: " + path.string());
  RgbImage img(w, h);
  for (std::size_t i = 0; i < buf.size(); ++i) img.data[i] = srgb_to_linear(buf[i] / 255.0);
  return img;
}

struct PngFile {
  FILE* fp = nullptr;
  ~PngFile() {
    if (fp) std::fclose(fp);
  }
};

inline RgbImage read_png(const std::filesystem::path& path) {
  PngFile f;
  f.fp = std::fopen(path.string().c_str(), "rb");
  if (!f.fp) throw ImageIoError("cannot open image: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("libpng init failed: " + path.string());
  }
  std::vector<unsigned char> pixels;
  std::vector<png_bytep> rows;
  int w = 0, h = 0, bit_depth = 8;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageIoError("cannot decode PNG: " + path.string());
  }
  png_init_io(png, f.fp);
  png_read_info(png, info);
  w = static_cast<int>(png_get_image_width(png, info));
  h = static_cast<int>(png_get_image_height(png, info));
  bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (bit_depth == 16) png_set_swap(png);
  png_read_update_info(png, info);
  bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  pixels.resize(rowbytes * h);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = pixels.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  RgbImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < 3; ++k) {
        double v;
        if (bit_depth == 16) {
          std::uint16_t s;
          std::memcpy(&s, rows[y] + (x * 3 + k) * 2, 2);
          v = s / 65535.0;
        } else {
          v = rows[y][x * 3 + k] / 255.0;
        }
        img(x, y, k) = srgb_to_linear(v);
      }
  return img;
}

inline void write_png(const std::filesystem::path& path, const RgbImage& img) {
  PngFile f;
  f.fp = std::fopen(path.string().c_str(), "wb");
  if (!f.fp) throw ImageIoError("cannot write image: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("libpng init failed: " + path.string());
  }
  std::vector<unsigned char> buf(img.pixel_count() * 3);
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<unsigned char>(std::lround(linear_to_srgb(img.data[i]) * 255.0));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageIoError("cannot encode PNG: " + path.string());
  }
  png_init_io(png, f.fp);
  png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) png_write_row(png, buf.data() + static_cast<std::size_t>(y) * img.width * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace detail

/// Reads .pfm (linear float), .png or .ppm (sRGB-encoded) into linear RGB.
inline RgbImage read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ImageIoError("missing image: " + path.string());
  const std::string ext = detail::lower_ext(path);
  if (ext == ".pfm") return detail::read_pfm(path);
  if (ext == ".png") return detail::read_png(path);
  if (ext == ".ppm") return detail::read_ppm(path);
  throw ImageIoError("unsupported image format: " + path.string());
}

/// Writes .pfm losslessly (float32) or .png as 8-bit sRGB.
inline void write_image(const std::filesystem::path& path, const RgbImage& img) {
  const std::string ext = detail::lower_ext(path);
  if (ext == ".pfm") return detail::write_pfm(path, img);
  if (ext == ".png") return detail::write_png(path, img);
  throw ImageIoError("unsupported output format: " + path.string());
}

}  // namespace pocketgs
