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

#ifndef OVSEG_CONTEXTUAL_SHIFT_HPP_
#define OVSEG_CONTEXTUAL_SHIFT_HPP_

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "ovseg/encoder.hpp"
#include "ovseg/types.hpp"

namespace ovseg {

struct CSConfig {
  std::vector<int> idx{1, 3, 5, 7, 9};  // 1-based layers whose input is rewritten
  double alpha = 0.30;                  // fraction of background tokens replaced
  double bg_threshold = 0.5;            // patch is background iff fg fraction < threshold
  int sub_image_size = 56;
  double fill_value = 0.0;
  std::uint64_t seed = 0;

  void validate(int num_layers, int patch_size) const;
};

// Half-open pixel box [y0, y1) x [x0, x1).
struct BoundingBox {
  int y0 = 0;
  int x0 = 0;
  int y1 = 0;
  int x1 = 0;

  bool operator==(const BoundingBox&) const = default;
};

struct SubImage {
  Image image;       // sub_image_size x sub_image_size
  Mask mask;         // foreground at sub-image resolution
  BoundingBox bbox;  // tight foreground box in the source image
};

// Masks out background pixels with the fill value, crops the tight bounding
// box of the foreground, pads it to a centred square and resizes
// bilinearly (half-pixel centres). The resized mask is the bilinearly
// resampled mask thresholded at 0.5; every output pixel outside it is set
// to the fill value. Throws EmptyProposalError for an empty mask.
SubImage crop_and_mask(const Image& image, const Mask& mask, const CSConfig& config);

// Row-major indices of patches whose foreground fraction is < tau.
std::vector<int> background_patches(const Mask& mask, int patch_size, double tau);

// round_half_up(alpha * n), clamped to [0, n].
std::size_t replacement_count(std::size_t n, double alpha);

// Uniform draw of replacement_count(|background|, alpha) indices without
// replacement, from a stream keyed by (seed, proposal, layer). Sorted.
std::vector<int> replacement_plan(std::span<const int> background, double alpha, int layer,
                                  std::uint64_t seed, int proposal_id);

// Per-layer [CLS] embeddings of the unmodified full image.
// cls_per_layer[0] is the [CLS] token after patch embedding;
// cls_per_layer[i] is the [CLS] output of layer i, for i in [1, L).
struct CleanContext {
  std::vector<RowVec> cls_per_layer;
};

CleanContext make_clean_context(const ToyEncoder& encoder, const Image& image);
CleanContext clean_context_from(const ToyEncoder& encoder, const Image& image,
                                std::span<const LayerFeatures> layers);

struct CSResult {
  RowVec embedding;  // final-layer [CLS]
  std::vector<LayerFeatures> layers;
  std::vector<int> background;
  std::map<int, std::vector<int>> plans;  // layer -> replaced spatial token indices
};

// Runs the encoder on the sub-image, replacing the planned background
// tokens of each selected layer's input with the clean [CLS] of the
// preceding layer. Empty idx or alpha = 0 reduces to a plain forward.
CSResult cs_forward(const ToyEncoder& encoder, const SubImage& sub, const CleanContext& clean,
                    const CSConfig& config, int proposal_id, ForwardTrace* trace = nullptr);

}  // namespace ovseg

#endif  // OVSEG_CONTEXTUAL_SHIFT_HPP_
