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

#include "ovseg/sim.hpp"

#include <fftw3.h>

#include <cmath>
#include <memory>
#include <mutex>
#include <string>

#include "ovseg/rng.hpp"

namespace ovseg {

namespace {

// FFTW planning is not thread-safe; execution on fresh arrays is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t n)
      : data(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))) {
    if (data == nullptr) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(data); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;

  fftw_complex* data;
};

// In-place 2-D transform of `channels` interleaved h x w planes.
void transform_planes(fftw_complex* data, int h, int w, int channels, int sign) {
  const int n[2] = {h, w};
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    plan = fftw_plan_many_dft(2, n, channels, data, nullptr, channels, 1, data, nullptr, channels,
                              1, sign, FFTW_ESTIMATE);
  }
  if (plan == nullptr) throw Error("fftw: failed to create plan");
  fftw_execute(plan);
  std::lock_guard<std::mutex> lock(fftw_planner_mutex());
  fftw_destroy_plan(plan);
}

constexpr std::uint64_t kCrossStream = 11;
constexpr std::uint64_t kFusionStream = 12;

}  // namespace

FrequencyKernel make_frequency_kernel(int h, int w, double sigma) {
  if (h < 1 || w < 1) throw DomainError("frequency kernel: h and w must be >= 1");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw DomainError("frequency kernel: sigma must be positive");
  }
  FrequencyKernel k;
  k.h = h;
  k.w = w;
  k.sigma = sigma;
  k.coeffs.resize(static_cast<std::size_t>(h) * w);
  const int cu = h / 2;
  const int cv = w / 2;
  for (int u = 0; u < h; ++u) {
    for (int v = 0; v < w; ++v) {
      const double d2 = static_cast<double>((u - cu) * (u - cu) + (v - cv) * (v - cv));
      k.coeffs[static_cast<std::size_t>(u) * w + v] = 1.0 - std::exp(-d2 / (2.0 * sigma * sigma));
    }
  }
  return k;
}

TokenGrid low_frequency_enhance(const TokenGrid& spatial, const FrequencyKernel& kernel,
                                const SpectralConv& conv) {
  const int h = spatial.h;
  const int w = spatial.w;
  const int c = spatial.channels();
  if (spatial.tokens.rows() != static_cast<Eigen::Index>(h) * w) {
    throw ShapeError("low_frequency_enhance: token count does not match the grid");
  }
  if (kernel.h != h || kernel.w != w) {
    throw ShapeError("low_frequency_enhance: kernel " + std::to_string(kernel.h) + "x" +
                     std::to_string(kernel.w) + " does not match grid " + std::to_string(h) +
                     "x" + std::to_string(w));
  }
  const std::size_t cells = static_cast<std::size_t>(h) * w;
  FftwBuffer buf(cells * c);
  for (std::size_t pos = 0; pos < cells; ++pos) {
    for (int ch = 0; ch < c; ++ch) {
      buf.data[pos * c + ch][0] = spatial.tokens(static_cast<Eigen::Index>(pos), ch);
      buf.data[pos * c + ch][1] = 0.0;
    }
  }
  transform_planes(buf.data, h, w, c, FFTW_FORWARD);

  for (std::size_t pos = 0; pos < cells; ++pos) {
    const double g = kernel.coeffs[pos];
    for (int ch = 0; ch < c; ++ch) {
      double re = buf.data[pos * c + ch][0] * g;
      double im = buf.data[pos * c + ch][1] * g;
      if (!conv.bypass) {
        const double r2 = conv.weight(0, 0) * re + conv.weight(0, 1) * im;
        const double i2 = conv.weight(1, 0) * re + conv.weight(1, 1) * im;
        re = std::max(r2, 0.0);
        im = std::max(i2, 0.0);
      }
      buf.data[pos * c + ch][0] = re;
      buf.data[pos * c + ch][1] = im;
    }
  }
  transform_planes(buf.data, h, w, c, FFTW_BACKWARD);

  TokenGrid out = spatial;
  const double norm = 1.0 / static_cast<double>(cells);
  for (std::size_t pos = 0; pos < cells; ++pos) {
    for (int ch = 0; ch < c; ++ch) {
      out.tokens(static_cast<Eigen::Index>(pos), ch) += buf.data[pos * c + ch][0] * norm;
    }
  }
  return out;
}

void SIMConfig::validate(int num_layers) const {
  if (selected_layers.empty()) throw ConfigError("sim: at least one layer must be selected");
  if (selected_layers.size() != sigmas.size()) {
    throw ConfigError("sim: selected_layers and sigmas must have equal length");
  }
  for (int l : selected_layers) {
    if (l < 1 || l > num_layers) {
      throw ConfigError("sim: selected layer " + std::to_string(l) + " outside [1, " +
                        std::to_string(num_layers) + "]");
    }
  }
  for (double s : sigmas) {
    if (!(s > 0.0)) throw ConfigError("sim: sigmas must be positive");
  }
  if (heads <= 0) throw ConfigError("sim: heads must be positive");
  if (!std::isfinite(gamma)) throw ConfigError("sim: gamma must be finite");
}

Mat integrate_semantics(const Mat& proposals, std::span<const TokenGrid> enhanced,
                        const nn::AttentionWeights& weights, nn::AttentionResult* trace) {
  if (enhanced.empty()) throw ShapeError("integrate_semantics: no enhanced layers");
  const Eigen::Index c = proposals.cols();
  Eigen::Index total = 0;
  for (const TokenGrid& g : enhanced) {
    if (g.tokens.cols() != c) {
      throw ShapeError("integrate_semantics: channel mismatch between proposals and layers");
    }
    total += g.tokens.rows();
  }
  Mat keys(total, c);
  Eigen::Index offset = 0;
  for (const TokenGrid& g : enhanced) {
    keys.middleRows(offset, g.tokens.rows()) = g.tokens;
    offset += g.tokens.rows();
  }
  nn::AttentionResult attn = nn::multi_head_attention(proposals, keys, keys, weights);
  Mat out = proposals + attn.output;
  if (trace != nullptr) *trace = std::move(attn);
  return out;
}

Mat fuse_cls(const Mat& proposals, const RowVec& cls_final, double gamma,
             const nn::TransformerBlock& block, nn::BlockTrace* trace) {
  if (cls_final.size() != proposals.cols()) {
    throw ShapeError("fuse_cls: [CLS] width does not match proposal embeddings");
  }
  Mat fused = proposals;
  fused.rowwise() += gamma * cls_final;
  return block.forward(fused, trace);
}

SemanticIntegrationModule::SemanticIntegrationModule(const SIMConfig& config, int embed_dim,
                                                     int num_layers)
    : config_(config), embed_dim_(embed_dim) {
  config_.validate(num_layers);
  if (embed_dim % config_.heads != 0) {
    throw ConfigError("sim: heads must divide the embedding dimension");
  }
  Rng cross_rng = make_rng(config_.seed, {kCrossStream});
  cross_ = nn::AttentionWeights::random(embed_dim, config_.heads, cross_rng, config_.output_gain);
  Rng fusion_rng = make_rng(config_.seed, {kFusionStream});
  fusion_ = nn::TransformerBlock::random(embed_dim, config_.heads, fusion_rng, config_.output_gain);
}

Mat SemanticIntegrationModule::calibrate(const Mat& proposals,
                                         std::span<const LayerFeatures> layers,
                                         Trace* trace) const {
  if (proposals.cols() != embed_dim_) {
    throw ShapeError("sim: proposal embeddings have the wrong width");
  }
  if (layers.empty()) throw ShapeError("sim: no encoder features");
  std::vector<TokenGrid> enhanced;
  enhanced.reserve(config_.selected_layers.size());
  for (std::size_t i = 0; i < config_.selected_layers.size(); ++i) {
    const int layer = config_.selected_layers[i];
    if (layer > static_cast<int>(layers.size())) {
      throw ShapeError("sim: selected layer missing from encoder features");
    }
    const TokenGrid& grid = layers[layer - 1].spatial;
    const FrequencyKernel kernel = make_frequency_kernel(grid.h, grid.w, config_.sigmas[i]);
    enhanced.push_back(low_frequency_enhance(grid, kernel, config_.conv));
  }
  nn::AttentionResult* cross_trace = trace != nullptr ? &trace->cross : nullptr;
  nn::BlockTrace* fusion_trace = trace != nullptr ? &trace->fusion : nullptr;
  const Mat integrated = integrate_semantics(proposals, enhanced, cross_, cross_trace);
  Mat out = fuse_cls(integrated, layers.back().cls, config_.gamma, fusion_, fusion_trace);
  if (trace != nullptr) trace->enhanced = std::move(enhanced);
  return out;
}

}  // namespace ovseg
