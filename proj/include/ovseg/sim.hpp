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

#ifndef OVSEG_SIM_HPP_
#define OVSEG_SIM_HPP_

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "ovseg/encoder.hpp"
#include "ovseg/nn.hpp"
#include "ovseg/types.hpp"

namespace ovseg {

// Spectral filter coefficients for an unshifted h x w spectrum. The grid
// centre (h/2, w/2) holds the highest frequencies and is fully suppressed;
// coefficients rise towards 1 as a Gaussian of the distance from it:
//   g(u, v) = 1 - exp(-d(u, v)^2 / (2 sigma^2)).
struct FrequencyKernel {
  int h = 0;
  int w = 0;
  double sigma = 0.0;
  std::vector<double> coeffs;

  double at(int u, int v) const { return coeffs[static_cast<std::size_t>(u) * w + v]; }
  std::pair<int, int> center() const { return {h / 2, w / 2}; }
};

FrequencyKernel make_frequency_kernel(int h, int w, double sigma);

// The 1x1 convolution applied in the frequency domain to the stacked
// (real, imaginary) channels, followed by an elementwise ReLU. The same 2x2
// map is used at every frequency and feature channel. `bypass` skips both
// the map and the ReLU.
struct SpectralConv {
  Eigen::Matrix2d weight = Eigen::Matrix2d::Zero();
  bool bypass = false;

  static SpectralConv zeros() { return {}; }
  static SpectralConv identity_bypass() {
    SpectralConv c;
    c.weight.setIdentity();
    c.bypass = true;
    return c;
  }
};

// Per channel: Re(IDFT(ReLU(Conv(DFT(x) * g)))) + x.
TokenGrid low_frequency_enhance(const TokenGrid& spatial, const FrequencyKernel& kernel,
                                const SpectralConv& conv);

struct SIMConfig {
  std::vector<int> selected_layers{6, 9, 12};
  std::vector<double> sigmas{9.0, 7.0, 3.0};
  double gamma = 0.1;
  int heads = 4;
  SpectralConv conv;
  // Scale of the output projections on the residual branches (cross
  // attention and fusion block). Zero makes the untrained module the
  // identity map when gamma = 0.
  double output_gain = 0.0;
  std::uint64_t seed = 0;

  void validate(int num_layers) const;
};

// F_N + MHA(F_N, F_s, F_s) where F_s is the layer-major concatenation of
// all enhanced grids.
Mat integrate_semantics(const Mat& proposals, std::span<const TokenGrid> enhanced,
                        const nn::AttentionWeights& weights,
                        nn::AttentionResult* trace = nullptr);

// Block(F_N' + gamma * cls) with the [CLS] row broadcast over proposals.
Mat fuse_cls(const Mat& proposals, const RowVec& cls_final, double gamma,
             const nn::TransformerBlock& block, nn::BlockTrace* trace = nullptr);

class SemanticIntegrationModule {
 public:
  SemanticIntegrationModule(const SIMConfig& config, int embed_dim, int num_layers);

  struct Trace {
    std::vector<TokenGrid> enhanced;
    nn::AttentionResult cross;
    nn::BlockTrace fusion;
  };

  // `layers` is the full per-layer output of the encoder on the image.
  Mat calibrate(const Mat& proposals, std::span<const LayerFeatures> layers,
                Trace* trace = nullptr) const;

  const SIMConfig& config() const { return config_; }
  const nn::AttentionWeights& cross_attention() const { return cross_; }
  const nn::TransformerBlock& fusion_block() const { return fusion_; }

 private:
  SIMConfig config_;
  int embed_dim_;
  nn::AttentionWeights cross_;
  nn::TransformerBlock fusion_;
};

}  // namespace ovseg

#endif  // OVSEG_SIM_HPP_
