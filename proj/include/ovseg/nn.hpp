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

#ifndef OVSEG_NN_HPP_
#define OVSEG_NN_HPP_

#include <vector>

#include "ovseg/rng.hpp"
#include "ovseg/types.hpp"

namespace ovseg::nn {

// y = x * weight + bias, weight is (in x out).
struct Linear {
  Mat weight;
  RowVec bias;

  Mat operator()(const Mat& x) const;
  int in_features() const { return static_cast<int>(weight.rows()); }
  int out_features() const { return static_cast<int>(weight.cols()); }

  static Linear orthogonal(int in, int out, Rng& rng, double gain = 1.0);
  static Linear zeros(int in, int out);
};

struct LayerNorm {
  RowVec gain;
  RowVec shift;
  double eps = 1e-6;

  explicit LayerNorm(int dim = 0);
  Mat operator()(const Mat& x) const;
};

Mat gelu(const Mat& x);

// Numerically stable row-wise softmax.
Mat softmax_rows(const Mat& logits);

struct AttentionWeights {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  int heads = 1;

  int dim() const { return query.in_features(); }

  // Q/K/V orthogonal; the output projection is scaled by `output_gain`.
  static AttentionWeights random(int dim, int heads, Rng& rng, double output_gain = 1.0);
};

struct AttentionResult {
  Mat output;                // after the output projection, Nq x C
  Mat context;               // concatenated head outputs before the output projection
  std::vector<Mat> weights;  // one Nq x Nk row-stochastic matrix per head
};

// Multi-head scaled dot-product attention.
AttentionResult multi_head_attention(const Mat& queries, const Mat& keys, const Mat& values,
                                     const AttentionWeights& w);

struct BlockTrace {
  AttentionResult attention;
  Mat attention_norm_out;
};

// Pre-norm transformer encoder block:
//   x = x + Attn(LN1(x));  x = x + MLP(LN2(x)),  MLP hidden width 4C, GELU.
class TransformerBlock {
 public:
  TransformerBlock() = default;

  static TransformerBlock random(int dim, int heads, Rng& rng, double residual_gain);

  Mat forward(const Mat& x, BlockTrace* trace = nullptr) const;

  int dim() const { return attention_.dim(); }
  const AttentionWeights& attention() const { return attention_; }

 private:
  LayerNorm norm1_;
  AttentionWeights attention_;
  LayerNorm norm2_;
  Linear fc1_;
  Linear fc2_;
};

}  // namespace ovseg::nn

#endif  // OVSEG_NN_HPP_
