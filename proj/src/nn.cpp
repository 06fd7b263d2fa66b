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

#include "ovseg/nn.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace ovseg::nn {

Mat Linear::operator()(const Mat& x) const {
  if (x.cols() != weight.rows()) {
    throw ShapeError("linear: input width " + std::to_string(x.cols()) + " != " +
                     std::to_string(weight.rows()));
  }
  Mat y = x * weight;
  y.rowwise() += bias;
  return y;
}

Linear Linear::orthogonal(int in, int out, Rng& rng, double gain) {
  Linear l;
  l.weight = orthogonal_matrix(in, out, rng) * gain;
  l.bias = RowVec::Zero(out);
  return l;
}

Linear Linear::zeros(int in, int out) {
  Linear l;
  l.weight = Mat::Zero(in, out);
  l.bias = RowVec::Zero(out);
  return l;
}

LayerNorm::LayerNorm(int dim) : gain(RowVec::Ones(dim)), shift(RowVec::Zero(dim)) {}

Mat LayerNorm::operator()(const Mat& x) const {
  if (x.cols() != gain.size()) throw ShapeError("layer norm: width mismatch");
  Mat y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const RowVec centered = x.row(r).array() - mean;
    const double var = centered.squaredNorm() / static_cast<double>(x.cols());
    y.row(r) = (centered / std::sqrt(var + eps)).cwiseProduct(gain) + shift;
  }
  return y;
}

Mat gelu(const Mat& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); });
}

Mat softmax_rows(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    const RowVec e = (logits.row(r).array() - m).exp();
    out.row(r) = e / e.sum();
  }
  return out;
}

AttentionWeights AttentionWeights::random(int dim, int heads, Rng& rng, double output_gain) {
  if (heads <= 0 || dim % heads != 0) {
    throw ConfigError("attention: heads must divide the embedding dimension");
  }
  AttentionWeights w;
  w.query = Linear::orthogonal(dim, dim, rng);
  w.key = Linear::orthogonal(dim, dim, rng);
  w.value = Linear::orthogonal(dim, dim, rng);
  w.output = Linear::orthogonal(dim, dim, rng, output_gain);
  w.heads = heads;
  return w;
}

AttentionResult multi_head_attention(const Mat& queries, const Mat& keys, const Mat& values,
                                     const AttentionWeights& w) {
  const int dim = w.dim();
  if (queries.cols() != dim || keys.cols() != dim || values.cols() != dim) {
    throw ShapeError("attention: channel mismatch between queries and keys/values");
  }
  if (keys.rows() != values.rows() || keys.rows() == 0) {
    throw ShapeError("attention: keys and values must be non-empty and equally long");
  }
  const Mat q = w.query(queries);
  const Mat k = w.key(keys);
  const Mat v = w.value(values);
  const int head_dim = dim / w.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  AttentionResult result;
  result.context.resize(queries.rows(), dim);
  result.weights.reserve(w.heads);
  for (int h = 0; h < w.heads; ++h) {
    const auto qh = q.middleCols(h * head_dim, head_dim);
    const auto kh = k.middleCols(h * head_dim, head_dim);
    const auto vh = v.middleCols(h * head_dim, head_dim);
    Mat attn = softmax_rows((qh * kh.transpose()) * scale);
    result.context.middleCols(h * head_dim, head_dim) = attn * vh;
    result.weights.push_back(std::move(attn));
  }
  result.output = w.output(result.context);
  return result;
}

TransformerBlock TransformerBlock::random(int dim, int heads, Rng& rng, double residual_gain) {
  TransformerBlock b;
  b.norm1_ = LayerNorm(dim);
  b.attention_ = AttentionWeights::random(dim, heads, rng, residual_gain);
  b.norm2_ = LayerNorm(dim);
  b.fc1_ = Linear::orthogonal(dim, 4 * dim, rng, 2.0);
  b.fc2_ = Linear::orthogonal(4 * dim, dim, rng, residual_gain);
  return b;
}

Mat TransformerBlock::forward(const Mat& x, BlockTrace* trace) const {
  const Mat normed = norm1_(x);
  AttentionResult attn = multi_head_attention(normed, normed, normed, attention_);
  Mat h = x + attn.output;
  h += fc2_(gelu(fc1_(norm2_(h))));
  if (trace != nullptr) {
    trace->attention_norm_out = normed;
    trace->attention = std::move(attn);
  }
  return h;
}

}  // namespace ovseg::nn
