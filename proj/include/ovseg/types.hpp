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

#ifndef OVSEG_TYPES_HPP_
#define OVSEG_TYPES_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ovseg {

// Token sequences and feature grids are stored one token per row.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::RowVectorXd;
using Vec = Eigen::VectorXd;

inline constexpr std::uint16_t kIgnoreLabel = 65535;

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A caller handed in data that violates an input contract (e.g. a
// probability vector that does not sum to one).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class EmptyProposalError : public Error {
 public:
  using Error::Error;
};

class DegenerateEmbeddingError : public Error {
 public:
  using Error::Error;
};

// RGB image, interleaved HWC, values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

  double& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  double at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
};

// Throws DomainError if any pixel is non-finite or outside [0, 1].
void validate_image(const Image& image);

// Binary mask, row-major, values in {0, 1}.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), bits(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
};

// Per-pixel class ids; kIgnoreLabel marks unlabeled pixels.
struct LabelMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint16_t> labels;

  LabelMap() = default;
  LabelMap(int h, int w, std::uint16_t fill = kIgnoreLabel)
      : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}

  std::uint16_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint16_t at(int y, int x) const {
    return labels[static_cast<std::size_t>(y) * width + x];
  }

  bool operator==(const LabelMap&) const = default;
};

// h x w grid of C-dimensional tokens; row y * w + x of `tokens` is cell (y, x).
struct TokenGrid {
  int h = 0;
  int w = 0;
  Mat tokens;

  int channels() const { return static_cast<int>(tokens.cols()); }
};

}  // namespace ovseg

#endif  // OVSEG_TYPES_HPP_
