/*
 * Copyright 2026 The ovseg Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ovseg/png_io.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>

namespace ovseg {

namespace {

void append_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void flush_nothing(png_structp) {}

// rows: one pointer per image row into `pixels`. Returns false on a libpng
// error. Kept free of non-trivial locals because libpng reports errors via
// longjmp.
bool encode_rows(std::vector<std::uint8_t>* out, int width, int height, int bit_depth,
                 int color_type, png_bytep* rows) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, out, append_bytes, flush_nothing);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

struct Decoded {
  int width = 0;
  int height = 0;
  int bit_depth = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;  // big-endian samples as stored in the file
};

bool decode_file(FILE* fp, Decoded* out) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) return false;
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  out->width = static_cast<int>(png_get_image_width(png, info));
  out->height = static_cast<int>(png_get_image_height(png, info));
  out->bit_depth = png_get_bit_depth(png, info);
  out->channels = png_get_channels(png, info);
  const png_size_t stride = png_get_rowbytes(png, info);
  out->data.resize(stride * static_cast<std::size_t>(out->height));
  for (int y = 0; y < out->height; ++y) {
    png_read_row(png, out->data.data() + stride * static_cast<std::size_t>(y), nullptr);
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

Decoded decode_path(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!fp) throw IoError("cannot open " + path.string());
  Decoded d;
  if (!decode_file(fp.get(), &d)) throw IoError("failed to decode PNG " + path.string());
  return d;
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::vector<std::uint8_t> encode_png_rgb8(const Image& image) {
  validate_image(image);
  std::vector<std::uint8_t> pixels(image.pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    pixels[i] = static_cast<std::uint8_t>(std::lround(image.pixels[i] * 255.0));
  }
  std::vector<png_bytep> rows(image.height);
  for (int y = 0; y < image.height; ++y) {
    rows[y] = pixels.data() + static_cast<std::size_t>(y) * image.width * 3;
  }
  std::vector<std::uint8_t> out;
  if (!encode_rows(&out, image.width, image.height, 8, PNG_COLOR_TYPE_RGB, rows.data())) {
    throw IoError("PNG encoding failed");
  }
  return out;
}

std::vector<std::uint8_t> encode_png_gray16(const LabelMap& labels) {
  if (labels.height <= 0 || labels.width <= 0) throw ShapeError("PNG: empty label map");
  std::vector<std::uint8_t> pixels(labels.labels.size() * 2);
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    pixels[2 * i] = static_cast<std::uint8_t>(labels.labels[i] >> 8);
    pixels[2 * i + 1] = static_cast<std::uint8_t>(labels.labels[i] & 0xff);
  }
  std::vector<png_bytep> rows(labels.height);
  for (int y = 0; y < labels.height; ++y) {
    rows[y] = pixels.data() + static_cast<std::size_t>(y) * labels.width * 2;
  }
  std::vector<std::uint8_t> out;
  if (!encode_rows(&out, labels.width, labels.height, 16, PNG_COLOR_TYPE_GRAY, rows.data())) {
    throw IoError("PNG encoding failed");
  }
  return out;
}

void write_png_rgb8(const std::filesystem::path& path, const Image& image) {
  const auto bytes = encode_png_rgb8(image);
  write_file_atomic(path, {reinterpret_cast<const char*>(bytes.data()), bytes.size()});
}

void write_png_gray16(const std::filesystem::path& path, const LabelMap& labels) {
  const auto bytes = encode_png_gray16(labels);
  write_file_atomic(path, {reinterpret_cast<const char*>(bytes.data()), bytes.size()});
}

LabelMap read_png_labels(const std::filesystem::path& path) {
  const Decoded d = decode_path(path);
  if (d.channels != 1) throw IoError(path.string() + ": label maps must be single-channel");
  LabelMap out(d.height, d.width);
  for (std::size_t i = 0; i < out.labels.size(); ++i) {
    out.labels[i] = d.bit_depth == 16
                        ? static_cast<std::uint16_t>((d.data[2 * i] << 8) | d.data[2 * i + 1])
                        : d.data[i];
  }
  return out;
}

Image read_png_rgb(const std::filesystem::path& path) {
  const Decoded d = decode_path(path);
  if (d.channels != 3 || d.bit_depth != 8) throw IoError(path.string() + ": expected 8-bit RGB");
  Image out(d.height, d.width);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = d.data[i] / 255.0;
  return out;
}

}  // namespace ovseg
