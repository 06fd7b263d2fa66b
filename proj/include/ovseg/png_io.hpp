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

#ifndef OVSEG_PNG_IO_HPP_
#define OVSEG_PNG_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "ovseg/types.hpp"

namespace ovseg {

class IoError : public Error {
 public:
  using Error::Error;
};

// Writes to a sibling temporary file, then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// 8-bit RGB.
std::vector<std::uint8_t> encode_png_rgb8(const Image& image);
// Single-channel 16-bit; pixel value = class id, 65535 = ignore.
std::vector<std::uint8_t> encode_png_gray16(const LabelMap& labels);

void write_png_rgb8(const std::filesystem::path& path, const Image& image);
void write_png_gray16(const std::filesystem::path& path, const LabelMap& labels);

// Accepts 8- or 16-bit single-channel PNGs.
LabelMap read_png_labels(const std::filesystem::path& path);
Image read_png_rgb(const std::filesystem::path& path);

}  // namespace ovseg

#endif  // OVSEG_PNG_IO_HPP_
