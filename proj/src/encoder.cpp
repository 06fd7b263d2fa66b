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

#include "ovseg/encoder.hpp"

#include <cmath>
#include <string>

#include "ovseg/rng.hpp"

namespace ovseg {

namespace {

constexpr std::uint64_t kPatchStream = 1;
constexpr std::uint64_t kClsStream = 2;
constexpr std::uint64_t kBlockStream = 3;

}  // namespace

void EncoderConfig::validate() const {
  if (num_layers < 2) throw ConfigError("encoder: num_layers must be >= 2");
  if (embed_dim <= 0) throw ConfigError("encoder: embed_dim must be positive");
  if (num_heads <= 0 || embed_dim % num_heads != 0) {
    throw ConfigError("encoder: num_heads must divide embed_dim");
  }
  if (patch_size <= 0) throw ConfigError("encoder: patch_size must be positive");
}

Mat position_codes(int grid_h, int grid_w, int dim) {
  // Half the channels encode the row, half the column.
  Mat codes = Mat::Zero(static_cast<Eigen::Index>(grid_h) * grid_w, dim);
  const int half = dim / 2;
  for (int y = 0; y < grid_h; ++y) {
    for (int x = 0; x < grid_w; ++x) {
      const Eigen::Index row = static_cast<Eigen::Index>(y) * grid_w + x;
      for (int c = 0; c < dim; ++c) {
        const int axis_dim = c < half ? half : dim - half;
        const int k = c < half ? c : c - half;
        const double pos = c < half ? y : x;
        const double freq = std::pow(100.0, -2.0 * (k / 2) / std::max(axis_dim, 1));
        codes(row, c) = (k % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
      }
    }
  }
  return codes;
}

ToyEncoder::ToyEncoder(const EncoderConfig& config) : config_(config) {
  config_.validate();
  const int c = config_.embed_dim;
  const int patch_dim = 3 * config_.patch_size * config_.patch_size;

  Rng patch_rng = make_rng(config_.seed, {kPatchStream});
  patch_proj_ = nn::Linear::orthogonal(patch_dim, c, patch_rng);

  Rng cls_rng = make_rng(config_.seed, {kClsStream});
  cls_token_ = gaussian_matrix(1, c, cls_rng).row(0);

  blocks_.reserve(config_.num_layers);
  const double residual_gain = 1.0 / std::sqrt(static_cast<double>(config_.num_layers));
  for (int i = 0; i < config_.num_layers; ++i) {
    Rng block_rng = make_rng(config_.seed, {kBlockStream, static_cast<std::uint64_t>(i)});
    blocks_.push_back(
        nn::TransformerBlock::random(c, config_.num_heads, block_rng, residual_gain));
  }
}

Mat ToyEncoder::patch_embed(const Image& image) const {
  validate_image(image);
  const int p = config_.patch_size;
  if (image.height % p != 0 || image.width % p != 0) {
    throw ShapeError("patch_embed: image " + std::to_string(image.height) + "x" +
                     std::to_string(image.width) + " not divisible by patch size " +
                     std::to_string(p));
  }
  const int gh = image.height / p;
  const int gw = image.width / p;
  Mat patches(static_cast<Eigen::Index>(gh) * gw, 3 * p * p);
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      const Eigen::Index row = static_cast<Eigen::Index>(gy) * gw + gx;
      int col = 0;
      for (int dy = 0; dy < p; ++dy) {
        for (int dx = 0; dx < p; ++dx) {
          for (int ch = 0; ch < 3; ++ch) {
            // Centre pixels around zero with roughly unit spread.
            patches(row, col++) = (image.at(gy * p + dy, gx * p + dx, ch) - 0.5) * 4.0;
          }
        }
      }
    }
  }
  Mat tokens(patches.rows() + 1, config_.embed_dim);
  tokens.row(0) = cls_token_;
  tokens.bottomRows(patches.rows()) =
      patch_proj_(patches) + position_codes(gh, gw, config_.embed_dim);
  return tokens;
}

std::vector<LayerFeatures> ToyEncoder::forward(const Image& image, const Interceptor& interceptor,
                                               ForwardTrace* trace) const {
  Mat tokens = patch_embed(image);
  return forward_tokens(std::move(tokens), image.height / config_.patch_size,
                        image.width / config_.patch_size, interceptor, trace);
}

std::vector<LayerFeatures> ToyEncoder::forward_tokens(Mat tokens, int grid_h, int grid_w,
                                                      const Interceptor& interceptor,
                                                      ForwardTrace* trace) const {
  if (tokens.rows() != 1 + static_cast<Eigen::Index>(grid_h) * grid_w ||
      tokens.cols() != config_.embed_dim) {
    throw ShapeError("encoder: token sequence does not match the patch grid");
  }
  std::vector<LayerFeatures> out;
  out.reserve(config_.num_layers);
  if (trace != nullptr) {
    trace->layer_inputs.clear();
    trace->blocks.clear();
  }
  for (int i = 0; i < config_.num_layers; ++i) {
    const int layer_index = i + 1;
    if (interceptor) {
      Mat rewritten = interceptor(layer_index, tokens);
      if (rewritten.rows() != tokens.rows() || rewritten.cols() != tokens.cols()) {
        throw ShapeError("encoder: interceptor changed the token shape at layer " +
                         std::to_string(layer_index));
      }
      tokens = std::move(rewritten);
    }
    nn::BlockTrace* block_trace = nullptr;
    if (trace != nullptr) {
      trace->layer_inputs.push_back(tokens);
      block_trace = &trace->blocks.emplace_back();
    }
    tokens = blocks_[i].forward(tokens, block_trace);

    LayerFeatures f;
    f.layer_index = layer_index;
    f.cls = tokens.row(0);
    f.spatial.h = grid_h;
    f.spatial.w = grid_w;
    f.spatial.tokens = tokens.bottomRows(tokens.rows() - 1);
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace ovseg
