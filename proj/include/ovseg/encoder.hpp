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

#ifndef OVSEG_ENCODER_HPP_
#define OVSEG_ENCODER_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include "ovseg/nn.hpp"
#include "ovseg/types.hpp"

namespace ovseg {

struct EncoderConfig {
  int num_layers = 12;
  int embed_dim = 64;
  int num_heads = 4;
  int patch_size = 14;
  std::uint64_t seed = 0;

  void validate() const;
};

// Output of encoder layer `layer_index` (1-based).
struct LayerFeatures {
  int layer_index = 0;
  TokenGrid spatial;
  RowVec cls;
};

// Rewrites the token sequence (row 0 = [CLS], rows 1.. = spatial tokens in
// row-major grid order) entering layer `layer_index`. The returned
// sequence must keep the input shape.
using Interceptor = std::function<Mat(int layer_index, const Mat& tokens)>;

struct ForwardTrace {
  std::vector<Mat> layer_inputs;  // after interception, one per layer
  std::vector<nn::BlockTrace> blocks;
};

// A small randomly initialised ViT: patch embedding, a learned [CLS] vector,
// fixed 2-D sinusoidal position codes and `num_layers` pre-norm blocks.
// Weights are a pure function of the config; instances are immutable and
// safe to share between threads.
class ToyEncoder {
 public:
  explicit ToyEncoder(const EncoderConfig& config);

  const EncoderConfig& config() const { return config_; }

  // 1 + (H/p)(W/p) tokens of width C; row 0 is the [CLS] token.
  Mat patch_embed(const Image& image) const;

  std::vector<LayerFeatures> forward(const Image& image, const Interceptor& interceptor = {},
                                     ForwardTrace* trace = nullptr) const;

  // Same as forward() but starting from an already embedded sequence.
  std::vector<LayerFeatures> forward_tokens(Mat tokens, int grid_h, int grid_w,
                                            const Interceptor& interceptor = {},
                                            ForwardTrace* trace = nullptr) const;

 private:
  EncoderConfig config_;
  nn::Linear patch_proj_;
  RowVec cls_token_;
  std::vector<nn::TransformerBlock> blocks_;
};

// Fixed sinusoidal position code for a grid_h x grid_w patch grid.
Mat position_codes(int grid_h, int grid_w, int dim);

}  // namespace ovseg

#endif  // OVSEG_ENCODER_HPP_
